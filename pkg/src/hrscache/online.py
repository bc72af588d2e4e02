"""Incremental maintenance: streaming kernel refresh and windowed refits.

The kernel refresh folds new events into the per-video accumulators with
one decay multiply per touched video (lazy decay for the rest).  The
windowed refit re-learns all four parameter vectors on the latest window,
rebuilding the alpha-dependent accumulators from a truncated look-back
buffer: events whose excitation kernel factor has fallen below k_th are
dropped, which bounds both memory and per-iteration cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fit import FitConfig, FitReport, minimize_window
from .likelihood import LikelihoodWindow, draw_samples
from .model import Hyperparams, HrsParams, KernelState
from .trace import NegativeEvent, RequestEvent, TraceDataset

__all__ = ["OnlineState", "refresh_kernels", "online_update_params",
           "save_state", "load_state"]


def refresh_kernels(state: KernelState, new_events, new_negatives,
                    hp: Hyperparams, p: HrsParams,
                    t_new: float | None = None) -> KernelState:
    """Fold events in (t, t_new] into the accumulators; t_new defaults to
    t + hp.dt.  Videos without news are left to lazy decay-on-read."""
    t = state.last_update_time
    if t_new is None:
        t_new = t + hp.dt
    if t_new < t:
        raise ValueError("refresh target time precedes current state time")
    for e in new_events:
        if not (t < e.time <= t_new):
            raise ValueError(
                f"event at {e.time} outside refresh interval ({t}, {t_new}]")
    for n in new_negatives:
        if not (t < n.time <= t_new):
            raise ValueError(
                f"negative at {n.time} outside refresh interval ({t}, {t_new}]")

    touched = {e.video_id for e in new_events} | {n.video_id for n in new_negatives}
    for i in touched:
        age = t_new - state.vid_time[i]
        state.phi[i] *= math.exp(-hp.delta0 * age)
        state.gamma_acc[i] *= math.exp(-hp.delta0 * age)
        state.psi[i] *= math.exp(-hp.delta1 * age)
        state.vid_time[i] = t_new
    for e in sorted(new_events, key=lambda e: e.time):
        i = e.video_id
        state.n[i] += 1
        w = math.exp(-p.alpha[i] * state.n[i])
        k0 = math.exp(-hp.delta0 * (t_new - e.time))
        state.phi[i] += k0 * w
        state.gamma_acc[i] += k0 * state.n[i] * w
    for n in new_negatives:
        state.psi[n.video_id] += math.exp(-hp.delta1 * (t_new - n.time))
    state.last_update_time = t_new
    return state


@dataclass
class OnlineState:
    """Single-writer state for the windowed parameter updater.

    The retained buffer holds events from the truncation look-back
    (|ln k_th| / delta0 hours before window_start) onward, with the request
    count each event carried, so Phi and Gamma can be rebuilt under any
    alpha."""

    kernels: KernelState
    params: HrsParams
    hp: Hyperparams
    window_start: float
    retained_times: np.ndarray
    retained_vids: np.ndarray
    retained_counts: np.ndarray
    master_seed: int = 0
    window_index: int = 0

    @classmethod
    def from_history(cls, ds: TraceDataset, params: HrsParams,
                     hp: Hyperparams, t0: float | None = None,
                     master_seed: int = 0) -> "OnlineState":
        """Replay a history dataset up to t0 (default: its horizon)."""
        if t0 is None:
            t0 = ds.horizon
        C = ds.catalog_size
        state = KernelState.zeros(C, t0=t0)

        cutoff = t0 - hp.lookback
        counts: dict[int, int] = {}
        rt, rv, rc = [], [], []
        for e in sorted(ds.events, key=lambda e: e.time):
            if e.time > t0:
                break
            counts[e.video_id] = counts.get(e.video_id, 0) + 1
            i = e.video_id
            state.n[i] += 1
            w = math.exp(-params.alpha[i] * counts[i])
            k0 = math.exp(-hp.delta0 * (t0 - e.time))
            state.phi[i] += k0 * w
            state.gamma_acc[i] += k0 * counts[i] * w
            if e.time >= cutoff:
                rt.append(e.time)
                rv.append(e.video_id)
                rc.append(counts[e.video_id])
        for n in ds.negatives:
            if n.time <= t0:
                state.psi[n.video_id] += math.exp(-hp.delta1 * (t0 - n.time))
        return cls(kernels=state, params=params, hp=hp, window_start=t0,
                   retained_times=np.asarray(rt, dtype=float),
                   retained_vids=np.asarray(rv, dtype=np.int64),
                   retained_counts=np.asarray(rc, dtype=np.int64),
                   master_seed=master_seed)


def _window_seed(os_: OnlineState) -> np.random.SeedSequence:
    return np.random.SeedSequence([os_.master_seed, os_.window_index])


def online_update_params(os_: OnlineState, events, negatives,
                         cfg: FitConfig | None = None
                         ) -> tuple[HrsParams, OnlineState]:
    """Refit parameters on [T, T+dT) and advance the window.

    Events and negatives must lie in [T, T+dT).  With no events the
    parameters are returned unchanged but the state still advances."""
    cfg = cfg or FitConfig()
    hp = os_.hp
    T = os_.window_start
    T2 = T + hp.dT
    C = os_.kernels.catalog_size

    events = sorted(events, key=lambda e: e.time)
    negatives = sorted(negatives, key=lambda n: n.time)
    for e in events:
        if not (T <= e.time < T2):
            raise ValueError(f"event at {e.time} outside window [{T}, {T2})")
    for n in negatives:
        if not (T <= n.time < T2):
            raise ValueError(f"negative at {n.time} outside window [{T}, {T2})")

    # per-video window events with absolute request counts
    ev_times = [[] for _ in range(C)]
    ev_counts = [[] for _ in range(C)]
    n_at_T = os_.kernels.n.copy()
    running = n_at_T.copy()
    for e in events:
        running[e.video_id] += 1
        ev_times[e.video_id].append(e.time)
        ev_counts[e.video_id].append(int(running[e.video_id]))
    neg_times = [[] for _ in range(C)]
    for n in negatives:
        neg_times[n.video_id].append(n.time)

    # truncated look-back history (Phi/Gamma rebuilt per iteration)
    cutoff = T - hp.lookback
    keep = os_.retained_times >= cutoff
    hist_times = [[] for _ in range(C)]
    hist_counts = [[] for _ in range(C)]
    for t, v, c in zip(os_.retained_times[keep], os_.retained_vids[keep],
                       os_.retained_counts[keep]):
        hist_times[int(v)].append(float(t))
        hist_counts[int(v)].append(int(c))

    _, psi_T, _ = os_.kernels.decayed(hp, T)

    if events:
        win = LikelihoodWindow(
            catalog_size=C, t_start=T, t_end=T2,
            hist_times=[np.asarray(t) for t in hist_times],
            hist_counts=[np.asarray(c, dtype=np.int64) for c in hist_counts],
            ev_times=[np.asarray(t) for t in ev_times],
            ev_counts=[np.asarray(c, dtype=np.int64) for c in ev_counts],
            neg_times=[np.asarray(t) for t in neg_times],
            psi_start=psi_T,
        )
        samples = draw_samples(T, T2, hp.dM, _window_seed(os_))
        report: FitReport = minimize_window(win, hp, os_.params, cfg, samples)
        new_params = report.final_params
    else:
        new_params = os_.params.copy()

    # rebuild kernel state at T2 under the refreshed alpha
    per_vid_seen = n_at_T.copy()
    ec = []
    for e in events:
        per_vid_seen[e.video_id] += 1
        ec.append(int(per_vid_seen[e.video_id]))
    all_t = np.concatenate([os_.retained_times[keep],
                            np.array([e.time for e in events])])
    all_v = np.concatenate([os_.retained_vids[keep],
                            np.array([e.video_id for e in events],
                                     dtype=np.int64)])
    all_c = np.concatenate([os_.retained_counts[keep],
                            np.asarray(ec, dtype=np.int64)])
    order = np.argsort(all_t, kind="stable")
    all_t, all_v, all_c = all_t[order], all_v[order], all_c[order]

    keep2 = all_t >= T2 - hp.lookback
    phi = np.zeros(C)
    gam = np.zeros(C)
    ages = T2 - all_t[keep2]
    k0 = np.exp(-hp.delta0 * ages)
    w = np.exp(-new_params.alpha[all_v[keep2]] * all_c[keep2])
    np.add.at(phi, all_v[keep2], k0 * w)
    np.add.at(gam, all_v[keep2], k0 * all_c[keep2] * w)

    psi = psi_T * math.exp(-hp.delta1 * (T2 - T))
    psi = psi.copy()
    for n in negatives:
        psi[n.video_id] += math.exp(-hp.delta1 * (T2 - n.time))

    new_n = running
    new_state = KernelState(phi=phi, psi=psi, gamma_acc=gam, n=new_n,
                            vid_time=np.full(C, T2), last_update_time=T2)
    new_os = OnlineState(kernels=new_state, params=new_params, hp=hp,
                         window_start=T2,
                         retained_times=all_t[keep2],
                         retained_vids=all_v[keep2],
                         retained_counts=all_c[keep2],
                         master_seed=os_.master_seed,
                         window_index=os_.window_index + 1)
    return new_params, new_os


# --- checkpointing ----------------------------------------------------------

STATE_CSV = "state.csv"


def save_state(path: str, state: KernelState) -> None:
    with open(path, "w") as f:
        f.write("video_id,phi,psi,gamma_acc,n,last_time\n")
        for i in range(state.catalog_size):
            f.write("%d,%.17g,%.17g,%.17g,%d,%.17g\n" % (
                i, state.phi[i], state.psi[i], state.gamma_acc[i],
                state.n[i], state.vid_time[i]))


def load_state(path: str, last_update_time: float | None = None) -> KernelState:
    rows = []
    with open(path) as f:
        header = f.readline()
        if header.strip() != "video_id,phi,psi,gamma_acc,n,last_time":
            raise ValueError("unexpected state.csv header")
        for line in f:
            parts = line.strip().split(",")
            rows.append((int(parts[0]), float(parts[1]), float(parts[2]),
                         float(parts[3]), int(parts[4]), float(parts[5])))
    rows.sort()
    arr = np.array([r[1:] for r in rows])
    vt = arr[:, 4]
    return KernelState(
        phi=arr[:, 0].copy(), psi=arr[:, 1].copy(), gamma_acc=arr[:, 2].copy(),
        n=arr[:, 3].astype(np.int64), vid_time=vt.copy(),
        last_update_time=float(vt.max()) if last_update_time is None
        else last_update_time)
