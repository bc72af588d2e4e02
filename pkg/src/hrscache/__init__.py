"""Hybrid point-process request-rate model and edge-cache simulator."""

from .model import (
    Hyperparams,
    HrsParams,
    KernelState,
    hat_lambda,
    kernel_k0,
    kernel_k1,
    softplus,
    softplus_prime,
    tilde_lambda,
)
from .trace import (
    FoldSplit,
    NegativeEvent,
    RequestEvent,
    TraceDataset,
    generate_negatives,
    parse_trace,
    split_forward_chaining,
)
from .likelihood import (
    LossAndGrad,
    WindowedLikelihoodInput,
    event_term,
    mc_integral_term,
    penalized_loss_and_grad,
)
from .fit import FitConfig, FitReport, fit
from .online import OnlineState, online_update_params, refresh_kernels
from .cache import CacheConfig, SimReport, simulate, weighted_hit_rate
from .synth import SynthSpec, generate

__all__ = [name for name in dir() if not name.startswith("_")]
