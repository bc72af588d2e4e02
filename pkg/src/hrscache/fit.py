"""Offline trainer: bounded limited-memory quasi-Newton on the penalized loss.

The Monte-Carlo sample set is drawn once per fit and frozen, so the
objective is deterministic and line searches compare like with like.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .likelihood import LikelihoodWindow, draw_samples, window_loss_and_grad
from .model import Hyperparams, HrsParams
from .trace import TraceDataset

__all__ = ["FitConfig", "FitReport", "ValidationProbe", "fit",
           "minimize_window"]

log = logging.getLogger("hrscache.fit")

PARAM_NAMES = ("beta", "omega", "alpha", "gamma")


@dataclass
class ValidationProbe:
    """Optional early stopping on validation cache hit rate."""

    dataset: TraceDataset
    capacities: list
    warm_dataset: TraceDataset  # history used to warm kernel state
    interval: int = 10          # iterations between probes
    min_improvement: float = 0.001  # absolute hit-rate gain to keep going


@dataclass
class FitConfig:
    max_iters: int = 200
    loss_rel_tol: float = 1e-6
    param_lower_bound: float = 1e-6
    history_size: int = 10
    rng_seed: int = 0
    num_samples: int | None = None  # overrides hp.M when set
    freeze: frozenset = field(default_factory=frozenset)  # parameter names
    validation: ValidationProbe | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.loss_rel_tol <= 0 or self.param_lower_bound <= 0:
            raise ValueError("loss_rel_tol and param_lower_bound must be > 0")
        bad = set(self.freeze) - set(PARAM_NAMES)
        if bad:
            raise ValueError(f"unknown parameters to freeze: {sorted(bad)}")


@dataclass
class FitReport:
    final_params: HrsParams
    loss_trajectory: list
    iterations: int
    stop_reason: str  # tolerance | max_iters | validation_plateau | line_search_failure


class _Plateau(Exception):
    pass


def minimize_window(win: LikelihoodWindow, hp: Hyperparams, init: HrsParams,
                    cfg: FitConfig, samples: np.ndarray) -> FitReport:
    """Run bounded L-BFGS on a prepared likelihood window."""
    C = win.catalog_size
    lb = cfg.param_lower_bound
    x0 = np.maximum(init.as_vector(), lb)

    bounds = []
    for j, name in enumerate(PARAM_NAMES):
        seg = x0[j * C:(j + 1) * C]
        if name in cfg.freeze:
            bounds.extend((v, v) for v in seg)
        else:
            bounds.extend((lb, None) for _ in seg)

    def objective(x):
        p = HrsParams.from_vector(np.maximum(x, lb), C)
        lg = window_loss_and_grad(win, p, hp, samples)
        return lg.loss, lg.flat()

    f0, _ = objective(x0)
    if not np.isfinite(f0):
        raise FloatingPointError("non-finite loss at the initial point")

    trajectory = [f0]
    probe_state = {"best": -np.inf, "plateau": False}

    def probe_validation(x):
        from .cache import CacheConfig, simulate
        from .online import OnlineState
        vp = cfg.validation
        p = HrsParams.from_vector(np.maximum(x, lb), C)
        os_ = OnlineState.from_history(vp.warm_dataset, p, hp,
                                       t0=vp.dataset.t_start)
        rates = []
        for s in vp.capacities:
            rep = simulate(vp.dataset, CacheConfig(capacity=s, policy="HRS"),
                           params=p, kernel_state=os_.kernels.copy(), hp=hp)
            rates.append(rep.hit_rate)
        return float(np.mean(rates))

    def callback(intermediate_result):
        trajectory.append(float(intermediate_result.fun))
        it = len(trajectory) - 1
        if cfg.validation is not None and it % cfg.validation.interval == 0:
            rate = probe_validation(intermediate_result.x)
            if rate < probe_state["best"] + cfg.validation.min_improvement:
                probe_state["plateau"] = True
                raise StopIteration
            probe_state["best"] = rate

    res = minimize(
        objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
        callback=callback,
        options={"maxiter": cfg.max_iters, "ftol": cfg.loss_rel_tol,
                 "maxcor": cfg.history_size},
    )

    if probe_state["plateau"]:
        stop_reason = "validation_plateau"
    elif res.status == 1:
        stop_reason = "max_iters"
    elif res.status == 0:
        stop_reason = "tolerance"
    else:
        stop_reason = "line_search_failure"
        log.warning("optimizer stopped abnormally: %s", res.message)

    final = HrsParams.from_vector(np.maximum(res.x, lb), C)
    log.info("fit finished after %d iterations (%s), loss %.6g",
             res.nit, stop_reason, res.fun)
    return FitReport(final_params=final, loss_trajectory=trajectory,
                     iterations=int(res.nit), stop_reason=stop_reason)


def fit(ds: TraceDataset, hp: Hyperparams, init: HrsParams,
        cfg: FitConfig | None = None) -> FitReport:
    """Train parameters on a dataset window with a frozen sample set."""
    cfg = cfg or FitConfig()
    win = LikelihoodWindow.from_dataset(ds)
    m = cfg.num_samples if cfg.num_samples is not None else hp.M
    samples = draw_samples(win.t_start, win.t_end, m, cfg.rng_seed)
    return minimize_window(win, hp, init, cfg, samples)
