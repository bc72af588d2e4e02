#!/usr/bin/env python3
"""Windowed online refits over a long synthetic trace.

Trains once on an initial segment, then walks forward in fixed windows:
each window refreshes the kernel state, refits the parameters on the
look-back-truncated history, and reports the next-window HRS hit rate.

    python3 scripts/online_replay.py --days 21 --window-hours 48
"""

import argparse
import sys
import time

import numpy as np

from hrscache import FitConfig, HrsParams, Hyperparams, SynthSpec, fit, generate
from hrscache.cache import CacheConfig, simulate
from hrscache.online import OnlineState, online_update_params


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--videos", type=int, default=50)
    ap.add_argument("--days", type=float, default=21.0)
    ap.add_argument("--window-hours", type=float, default=48.0)
    ap.add_argument("--capacity", type=int, default=5)
    ap.add_argument("--seed", type=int, default=23)
    ap.add_argument("--max-iters", type=int, default=40)
    args = ap.parse_args(argv)

    c = args.videos
    horizon = 24.0 * args.days
    rng = np.random.Generator(np.random.Philox(args.seed))
    true = HrsParams(beta=np.exp(rng.uniform(np.log(0.05), np.log(1.0), c)),
                     omega=rng.uniform(0.1, 0.6, c),
                     alpha=np.full(c, 0.01), gamma=np.full(c, 0.1))
    hp = Hyperparams(s=0.05, dT=args.window_hours, dM=6000).with_rho(0.01)
    ds = generate(SynthSpec(true_params=true, hp=hp, horizon=horizon,
                            negative_schedule="cold", seed=args.seed + 1))
    print(f"{len(ds.events)} events, {len(ds.negatives)} negatives")

    warmup_end = 2.0 * args.window_hours
    warmup = ds.restrict(0.0, warmup_end)
    init = HrsParams.default(c)
    params = fit(warmup, hp, init,
                 FitConfig(max_iters=100, rng_seed=args.seed % 89,
                           num_samples=20_000,
                           freeze=frozenset({"alpha", "gamma"}))).final_params
    state = OnlineState.from_history(warmup, params, hp, t0=warmup_end,
                                     master_seed=args.seed)

    t = warmup_end
    print(f"{'window':>16} {'events':>7} {'hit_rate':>9} {'refit_s':>8}")
    while t + hp.dT <= horizon + 1e-9:
        window = ds.restrict(t, t + hp.dT)
        rep = simulate(window.restrict(t, t + hp.dT, closed_right=False),
                       CacheConfig(capacity=args.capacity, policy="HRS",
                                   refresh_interval=1.0),
                       params=state.params,
                       kernel_state=state.kernels.copy(), hp=hp)
        t0 = time.perf_counter()
        params, state = online_update_params(
            state, window.events, window.negatives,
            FitConfig(max_iters=args.max_iters, rng_seed=args.seed % 89,
                      freeze=frozenset({"alpha", "gamma"})))
        dt_fit = time.perf_counter() - t0
        print(f"{t:>7.0f}-{t + hp.dT:<8.0f} {len(window.events):>7d} "
              f"{rep.hit_rate:>9.4f} {dt_fit:>8.2f}")
        t += hp.dT
    return 0


if __name__ == "__main__":
    sys.exit(main())
