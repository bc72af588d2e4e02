"""Trace-replay cache simulator and hit-rate metrics.

Proactive policies (HRS, WLFU) prefill: at every refresh they rank the
catalog and cache the top-S, so a cached video hits on its first request
after caching.  LRU is the classic reactive policy; OPT is Belady's MIN
(on a miss with a full cache, evict the cached video whose next request is
farthest in the future, never-requested-again preferred).
"""

from __future__ import annotations

import math
import time as _time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .model import Hyperparams, HrsParams, KernelState, hat_lambda_all
from .online import refresh_kernels
from .trace import TraceDataset

__all__ = ["CacheConfig", "SimReport", "simulate", "weighted_hit_rate",
           "POLICIES"]

POLICIES = ("HRS", "LRU", "WLFU", "OPT")

DAY_HOURS = 24.0


@dataclass
class CacheConfig:
    capacity: int
    policy: str = "LRU"
    refresh_interval: float = 1.0  # hours, proactive policies only
    wlfu_window: float = 24.0      # trailing window for WLFU ranking

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")
        if self.refresh_interval <= 0:
            raise ValueError("refresh_interval must be positive")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")


@dataclass
class SimReport:
    policy: str
    capacity: int
    hits: int
    total: int
    hit_rate: float
    per_day: list
    wall_time: float

    def to_json_dict(self, include_wall_time: bool = True) -> dict:
        return {
            "policy": self.policy,
            "capacity": self.capacity,
            "hits": self.hits,
            "total": self.total,
            "hit_rate": self.hit_rate,
            "per_day": self.per_day,
            "wall_time_s": self.wall_time if include_wall_time else None,
        }


def _top_s(scores: np.ndarray, s: int) -> set:
    """Indices of the S largest scores, ties broken by lower index."""
    if s <= 0:
        return set()
    if s >= len(scores):
        return set(range(len(scores)))
    # sort by (-score, index): stable total order
    order = np.lexsort((np.arange(len(scores)), -scores))
    return set(int(i) for i in order[:s])


def _replay_lru(ds: TraceDataset, s: int):
    cache: OrderedDict = OrderedDict()
    hits = []
    for e in ds.events:
        if e.video_id in cache:
            cache.move_to_end(e.video_id)
            hits.append(True)
        else:
            hits.append(False)
            if s > 0:
                if len(cache) >= s:
                    cache.popitem(last=False)
                cache[e.video_id] = None
    return hits


def _replay_opt(ds: TraceDataset, s: int):
    # next_use[k]: index of the next request of the same video after k
    events = ds.events
    k_count = len(events)
    next_use = [math.inf] * k_count
    last_pos: dict[int, int] = {}
    for k in range(k_count - 1, -1, -1):
        v = events[k].video_id
        if v in last_pos:
            next_use[k] = last_pos[v]
        last_pos[v] = k

    cache: dict[int, float] = {}  # video -> its next use position
    hits = []
    for k, e in enumerate(events):
        v = e.video_id
        if v in cache:
            hits.append(True)
            cache[v] = next_use[k]
        else:
            hits.append(False)
            if s > 0:
                if len(cache) >= s:
                    victim = max(cache, key=lambda x: (cache[x], x))
                    del cache[victim]
                cache[v] = next_use[k]
    return hits


def _replay_proactive(ds: TraceDataset, cfg: CacheConfig,
                      params: HrsParams | None,
                      kernel_state: KernelState | None,
                      hp: Hyperparams | None):
    """HRS / WLFU replay: the cache is recomputed at every refresh tick;
    requests before the first tick miss (the cache starts empty)."""
    is_hrs = cfg.policy == "HRS"
    if is_hrs:
        if params is None or kernel_state is None or hp is None:
            raise ValueError("HRS simulation requires params, kernel_state and hp")
        state = kernel_state
        if abs(state.last_update_time - ds.t_start) > 1e-9:
            raise ValueError(
                "HRS kernel state must be warmed to the start of the window")

    events = ds.events
    negatives = ds.negatives
    n_ev = len(events)
    cached: set = set()
    hits = []
    ev_i = 0       # next event to replay
    ref_i = 0      # events already folded into the state
    neg_i = 0
    recent: list = []  # (time, vid) within the WLFU trailing window
    wlfu_counts: dict[int, int] = {}

    tick = ds.t_start + cfg.refresh_interval
    while ev_i < n_ev or tick <= ds.horizon + 1e-12:
        # replay requests strictly before the next tick
        while ev_i < n_ev and (events[ev_i].time <= tick or tick > ds.horizon):
            e = events[ev_i]
            hits.append(e.video_id in cached)
            if not is_hrs:
                recent.append((e.time, e.video_id))
                wlfu_counts[e.video_id] = wlfu_counts.get(e.video_id, 0) + 1
            ev_i += 1
        if tick > ds.horizon and ev_i >= n_ev:
            break
        # refresh at the tick
        if is_hrs:
            new_ev = []
            while ref_i < ev_i:
                new_ev.append(events[ref_i])
                ref_i += 1
            new_neg = []
            while neg_i < len(negatives) and negatives[neg_i].time <= tick:
                if negatives[neg_i].time > state.last_update_time:
                    new_neg.append(negatives[neg_i])
                neg_i += 1
            refresh_kernels(state, new_ev, new_neg, hp, params, t_new=tick)
            scores = hat_lambda_all(state, params, hp)
            cached = _top_s(scores, cfg.capacity)
        else:
            lo = tick - cfg.wlfu_window
            while recent and recent[0][0] < lo:
                _, v = recent.pop(0)
                wlfu_counts[v] -= 1
                if wlfu_counts[v] == 0:
                    del wlfu_counts[v]
            if wlfu_counts:  # empty window leaves the cache unchanged
                scores = np.zeros(ds.catalog_size)
                for v, c in wlfu_counts.items():
                    scores[v] = c
                cached = _top_s(scores, cfg.capacity)
        tick += cfg.refresh_interval
    return hits


def simulate(ds: TraceDataset, cfg: CacheConfig, *,
             params: HrsParams | None = None,
             kernel_state: KernelState | None = None,
             hp: Hyperparams | None = None) -> SimReport:
    """Chronological replay of the dataset under one policy."""
    if cfg.capacity > ds.catalog_size:
        raise ValueError("capacity exceeds catalog size")
    t0 = _time.perf_counter()
    if cfg.policy == "LRU":
        hits = _replay_lru(ds, cfg.capacity)
    elif cfg.policy == "OPT":
        hits = _replay_opt(ds, cfg.capacity)
    else:
        hits = _replay_proactive(ds, cfg, params, kernel_state, hp)
    wall = _time.perf_counter() - t0

    total = len(hits)
    n_hits = sum(hits)
    n_days = max(1, math.ceil((ds.horizon - ds.t_start) / DAY_HOURS - 1e-12))
    day_hits = [0] * n_days
    day_tot = [0] * n_days
    for e, h in zip(ds.events, hits):
        d = min(n_days - 1, int((e.time - ds.t_start) // DAY_HOURS))
        day_tot[d] += 1
        day_hits[d] += int(h)
    per_day = [dh / dt if dt else 0.0 for dh, dt in zip(day_hits, day_tot)]
    return SimReport(policy=cfg.policy, capacity=cfg.capacity, hits=n_hits,
                     total=total,
                     hit_rate=n_hits / total if total else 0.0,
                     per_day=per_day, wall_time=wall)


def weighted_hit_rate(reports) -> float:
    """Request-weighted average hit rate across servers/cities."""
    reports = list(reports)
    if not reports:
        raise ValueError("weighted_hit_rate needs at least one report")
    hits = sum(r.hits for r in reports)
    total = sum(r.total for r in reports)
    return hits / total if total else 0.0
