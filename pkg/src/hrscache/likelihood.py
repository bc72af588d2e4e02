"""Penalized Monte-Carlo log-likelihood of the hybrid intensity model.

The objective over a window (t_start, t_end] is

    L(theta) = -( sum_events log hat_lambda(tau)
                  - (W/M) * sum_samples sum_videos hat_lambda(t_m) )
               + 0.5 * sum_theta rho_theta * ||theta||^2

with W the window length and t_m ~ Uniform(t_start, t_end) shared across
videos.  Gradients are analytic: with sp = sigmoid(tilde/s),

    d hat/d beta  =  sp
    d hat/d omega =  sp * Phi
    d hat/d alpha = -sp * omega * Gamma
    d hat/d gamma = -sp * Psi

where Phi, Psi, Gamma are the per-video kernel accumulators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    Hyperparams,
    HrsParams,
    log_softplus,
    softplus,
    softplus_prime,
)
from .trace import TraceDataset

__all__ = [
    "WindowedLikelihoodInput",
    "LossAndGrad",
    "LikelihoodWindow",
    "draw_samples",
    "event_term",
    "mc_integral_term",
    "penalized_loss_and_grad",
]


@dataclass(frozen=True)
class WindowedLikelihoodInput:
    ds: TraceDataset
    p: HrsParams
    hp: Hyperparams
    rng_seed: int = 0
    num_samples: int | None = None  # defaults to hp.M


@dataclass
class LossAndGrad:
    loss: float
    grad_beta: np.ndarray
    grad_omega: np.ndarray
    grad_alpha: np.ndarray
    grad_gamma: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.grad_beta, self.grad_omega,
                               self.grad_alpha, self.grad_gamma])


@dataclass
class LikelihoodWindow:
    """Per-video event data prepared for repeated likelihood evaluation.

    ``hist_*`` are excitation-only events before t_start (they shape Phi and
    Gamma but contribute no log term); ``ev_*`` are the window's own events.
    ``*_counts`` hold the cumulative request count N at each event.
    ``psi_start`` is the restraint accumulator carried into the window;
    ``neg_times`` are negatives inside the window.
    """

    catalog_size: int
    t_start: float
    t_end: float
    hist_times: list
    hist_counts: list
    ev_times: list
    ev_counts: list
    neg_times: list
    psi_start: np.ndarray

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @classmethod
    def from_dataset(cls, ds: TraceDataset) -> "LikelihoodWindow":
        C = ds.catalog_size
        ev_times = [[] for _ in range(C)]
        ev_counts = [[] for _ in range(C)]
        for e in ds.events:
            if e.video_id >= C:
                raise ValueError(f"event video_id {e.video_id} >= catalog size {C}")
            ev_times[e.video_id].append(e.time)
            ev_counts[e.video_id].append(len(ev_times[e.video_id]))
        neg_times = [[] for _ in range(C)]
        for n in ds.negatives:
            neg_times[n.video_id].append(n.time)
        empty = np.empty(0)
        return cls(
            catalog_size=C,
            t_start=ds.t_start,
            t_end=ds.horizon,
            hist_times=[empty] * C,
            hist_counts=[np.empty(0, dtype=np.int64)] * C,
            ev_times=[np.asarray(t, dtype=float) for t in ev_times],
            ev_counts=[np.asarray(c, dtype=np.int64) for c in ev_counts],
            neg_times=[np.asarray(t, dtype=float) for t in neg_times],
            psi_start=np.zeros(C),
        )


def draw_samples(t_start: float, t_end: float, m: int, seed) -> np.ndarray:
    """``m`` sorted uniform sample times from a counter-based generator."""
    rng = np.random.Generator(np.random.Philox(seed))
    return np.sort(rng.uniform(t_start, t_end, size=m))


# --- per-video curves -------------------------------------------------------


class _VideoCurves:
    """Checkpointed Phi/Gamma/Psi for one video under fixed parameters.

    Checkpoints hold accumulator values at each event time including that
    event; queries decay the latest checkpoint at or before the query time.
    """

    def __init__(self, win: LikelihoodWindow, i: int, alpha_i: float,
                 hp: Hyperparams):
        self.hp = hp
        self.all_times = np.concatenate([win.hist_times[i], win.ev_times[i]])
        self.all_counts = np.concatenate([win.hist_counts[i], win.ev_counts[i]])
        self.n_hist = len(win.hist_times[i])
        self.phi_ck, self.gam_ck = _decay_accumulate(
            self.all_times, np.exp(-alpha_i * self.all_counts),
            self.all_counts, hp.delta0)
        # restraint: checkpoints over window negatives; the carried-in
        # psi_start decays independently from t_start
        neg = win.neg_times[i]
        self.t_start = win.t_start
        self.psi_start = win.psi_start[i]
        self.psi_times = neg
        psi = np.empty(len(neg))
        v = 0.0
        for k, t in enumerate(neg):
            if k:
                v *= math.exp(-hp.delta1 * (t - neg[k - 1]))
            v += 1.0
            psi[k] = v
        self.psi_ck = psi

    # excitation accumulators at sorted times; events at exactly t included
    def phi_gamma_at(self, ts: np.ndarray):
        j = np.searchsorted(self.all_times, ts, side="right") - 1
        phi = np.zeros(len(ts))
        gam = np.zeros(len(ts))
        mask = j >= 0
        if mask.any():
            jj = j[mask]
            d = np.exp(-self.hp.delta0 * (ts[mask] - self.all_times[jj]))
            phi[mask] = self.phi_ck[jj] * d
            gam[mask] = self.gam_ck[jj] * d
        return phi, gam

    # restraint accumulator; negatives at exactly t excluded (history [0, t))
    def psi_at(self, ts: np.ndarray) -> np.ndarray:
        psi = self.psi_start * np.exp(-self.hp.delta1 * (ts - self.t_start))
        j = np.searchsorted(self.psi_times, ts, side="left") - 1
        mask = j >= 0
        if mask.any():
            jj = j[mask]
            psi[mask] += self.psi_ck[jj] * np.exp(
                -self.hp.delta1 * (ts[mask] - self.psi_times[jj]))
        return psi

    def before_events(self):
        """Phi, Gamma, Psi just before each window event (prior history
        advanced to the event time, event itself not yet absorbed)."""
        h = self.n_hist
        ts = self.all_times[h:]
        k = len(ts)
        phi = np.zeros(k)
        gam = np.zeros(k)
        idx = np.arange(h, h + k)
        prev = idx - 1
        mask = prev >= 0
        if mask.any():
            d = np.exp(-self.hp.delta0 * (ts[mask] - self.all_times[prev[mask]]))
            phi[mask] = self.phi_ck[prev[mask]] * d
            gam[mask] = self.gam_ck[prev[mask]] * d
        return ts, phi, gam, self.psi_at(ts)


def _decay_accumulate(times: np.ndarray, weights: np.ndarray,
                      counts: np.ndarray, delta: float):
    """phi_k = sum_{j<=k} w_j e^{-delta (t_k - t_j)} and the count-weighted
    analogue, by sequential recurrence (stable for long horizons)."""
    k = len(times)
    phi = np.empty(k)
    gam = np.empty(k)
    p = g = 0.0
    for j in range(k):
        if j:
            d = math.exp(-delta * (times[j] - times[j - 1]))
            p *= d
            g *= d
        p += weights[j]
        g += counts[j] * weights[j]
        phi[j] = p
        gam[j] = g
    return phi, gam


def _accumulate_grads(out, i, sp, w, phi, gam, psi, omega_i):
    out[0][i] += np.sum(sp * w)
    out[1][i] += np.sum(sp * w * phi)
    out[2][i] += -omega_i * np.sum(sp * w * gam)
    out[3][i] += -np.sum(sp * w * psi)


def _event_term(win: LikelihoodWindow, p: HrsParams, hp: Hyperparams,
                curves: list):
    C = win.catalog_size
    grads = [np.zeros(C) for _ in range(4)]
    value = 0.0
    for i in range(C):
        if len(win.ev_times[i]) == 0:
            continue
        ts, phi, gam, psi = curves[i].before_events()
        tilde = p.beta[i] + p.omega[i] * phi - p.gamma[i] * psi
        value += float(np.sum(log_softplus(tilde, hp.s)))
        hat = np.maximum(softplus(tilde, hp.s), 5e-324)
        sp = softplus_prime(tilde, hp.s)
        _accumulate_grads(grads, i, sp, 1.0 / hat, phi, gam, psi, p.omega[i])
    return value, grads


def _mc_term(win: LikelihoodWindow, p: HrsParams, hp: Hyperparams,
             curves: list, samples: np.ndarray):
    C = win.catalog_size
    grads = [np.zeros(C) for _ in range(4)]
    scale = win.duration / len(samples)
    value = 0.0
    for i in range(C):
        phi, gam = curves[i].phi_gamma_at(samples)
        psi = curves[i].psi_at(samples)
        tilde = p.beta[i] + p.omega[i] * phi - p.gamma[i] * psi
        value += scale * float(np.sum(softplus(tilde, hp.s)))
        sp = softplus_prime(tilde, hp.s)
        _accumulate_grads(grads, i, sp, scale, phi, gam, psi, p.omega[i])
    return value, grads


def _build_curves(win: LikelihoodWindow, p: HrsParams, hp: Hyperparams):
    return [_VideoCurves(win, i, p.alpha[i], hp)
            for i in range(win.catalog_size)]


def window_loss_and_grad(win: LikelihoodWindow, p: HrsParams,
                         hp: Hyperparams, samples: np.ndarray) -> LossAndGrad:
    """Penalized negative log-likelihood over a prepared window."""
    curves = _build_curves(win, p, hp)
    ev_val, ev_g = _event_term(win, p, hp, curves)
    mc_val, mc_g = _mc_term(win, p, hp, curves, samples)
    rho = hp.rho
    theta = [p.beta, p.omega, p.alpha, p.gamma]
    loss = -(ev_val - mc_val)
    loss += 0.5 * sum(r * float(v @ v) for r, v in zip(rho, theta))
    grads = [-(e - m) + r * v
             for e, m, r, v in zip(ev_g, mc_g, rho, theta)]
    if not np.isfinite(loss):
        bad = [i for i in range(win.catalog_size)
               if not np.all(np.isfinite([g[i] for g in grads]))]
        raise FloatingPointError(
            f"non-finite loss (suspect video ids {bad[:5]})")
    return LossAndGrad(loss, *grads)


# --- spec-level operations on datasets ---------------------------------------


def event_term(ds: TraceDataset, p: HrsParams, hp: Hyperparams):
    """Sum of log hat_lambda over events, plus its gradient contribution."""
    win = LikelihoodWindow.from_dataset(ds)
    curves = _build_curves(win, p, hp)
    return _event_term(win, p, hp, curves)


def mc_integral_term(ds: TraceDataset, p: HrsParams, hp: Hyperparams,
                     rng_seed: int, num_samples: int | None = None):
    """Monte-Carlo estimate of the intensity integral over the window,
    plus its gradient contribution."""
    m = num_samples if num_samples is not None else hp.M
    win = LikelihoodWindow.from_dataset(ds)
    curves = _build_curves(win, p, hp)
    samples = draw_samples(win.t_start, win.t_end, m, rng_seed)
    return _mc_term(win, p, hp, curves, samples)


def penalized_loss_and_grad(inp: WindowedLikelihoodInput) -> LossAndGrad:
    win = LikelihoodWindow.from_dataset(inp.ds)
    m = inp.num_samples if inp.num_samples is not None else inp.hp.M
    samples = draw_samples(win.t_start, win.t_end, m, inp.rng_seed)
    return window_loss_and_grad(win, inp.p, inp.hp, samples)
