"""Ground-truth synthetic traces sampled exactly from the hybrid intensity.

Per-video adaptive thinning: between events the excitation accumulator only
decays and the restraint term only subtracts, so softplus(beta + omega*Phi)
at the current time dominates the intensity until the next accepted event.
The bound is refreshed at every candidate, accepted or rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Hyperparams, HrsParams, softplus
from .trace import NegativeEvent, RequestEvent, TraceDataset, generate_negatives

__all__ = ["SynthSpec", "generate"]


@dataclass
class SynthSpec:
    true_params: HrsParams
    hp: Hyperparams
    horizon: float
    # explicit list of NegativeEvent, or "cold" to derive them afterwards
    # from the generated trace via the 12-hour cold rule
    negative_schedule: object = "cold"
    cold_period: float = 12.0
    seed: int = 0

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


def _negatives_for_video(spec: SynthSpec, i: int) -> np.ndarray:
    if isinstance(spec.negative_schedule, str):
        return np.empty(0)
    ts = sorted(n.time for n in spec.negative_schedule if n.video_id == i)
    return np.asarray(ts, dtype=float)


def _psi_checkpoints(neg: np.ndarray, delta1: float) -> np.ndarray:
    psi = np.empty(len(neg))
    v = 0.0
    for k in range(len(neg)):
        if k:
            v *= math.exp(-delta1 * (neg[k] - neg[k - 1]))
        v += 1.0
        psi[k] = v
    return psi


def _thin_video(i: int, spec: SynthSpec) -> list:
    p, hp = spec.true_params, spec.hp
    beta, omega, alpha, gamma = (p.beta[i], p.omega[i], p.alpha[i], p.gamma[i])
    neg = _negatives_for_video(spec, i)
    psi_ck = _psi_checkpoints(neg, hp.delta1)

    def psi_at(t: float) -> float:
        j = int(np.searchsorted(neg, t, side="left")) - 1
        if j < 0:
            return 0.0
        return psi_ck[j] * math.exp(-hp.delta1 * (t - neg[j]))

    rng = np.random.Generator(np.random.Philox(spec.seed ^ i))
    times: list[float] = []
    t = 0.0
    phi = 0.0       # value at time t
    n = 0
    while True:
        bound = float(softplus(beta + omega * phi, hp.s))
        if bound <= 0.0:
            break
        t_cand = t + rng.exponential(1.0 / bound)
        if t_cand > spec.horizon:
            break
        phi_cand = phi * math.exp(-hp.delta0 * (t_cand - t))
        lam = float(softplus(
            beta + omega * phi_cand - gamma * psi_at(t_cand), hp.s))
        if lam > bound * (1.0 + 1e-9):
            raise RuntimeError(
                f"thinning bound violated for video {i}: {lam} > {bound}")
        u = rng.uniform()
        # advance to the candidate either way; the bound is then refreshed
        t = t_cand
        phi = phi_cand
        if u * bound < lam:
            n += 1
            times.append(t)
            phi += math.exp(-alpha * n)
    return times


def generate(spec: SynthSpec) -> TraceDataset:
    """Sample a trace over (0, horizon] from the true parameters."""
    C = spec.true_params.catalog_size
    events = []
    for i in range(C):
        for t in _thin_video(i, spec):
            events.append(RequestEvent(video_id=i, user_id="synthetic",
                                       time=t, city="synthetic"))
    events.sort(key=lambda e: (e.time, e.video_id))
    if isinstance(spec.negative_schedule, str):
        negatives: list[NegativeEvent] = []
    else:
        negatives = sorted(spec.negative_schedule,
                           key=lambda n: (n.time, n.video_id))
    ds = TraceDataset(events=events, negatives=negatives, catalog_size=C,
                      horizon=spec.horizon, epoch=0.0,
                      id_map={str(i): i for i in range(C)})
    if spec.negative_schedule == "cold":
        ds = generate_negatives(ds, cold_period=spec.cold_period)
    return ds
