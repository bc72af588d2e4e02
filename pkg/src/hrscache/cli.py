"""Command-line entry point: ingest, gen, fit, simulate, sweep, report.

Config precedence: built-in defaults < ``--config`` key=value file < flags.
Every output embeds the resolved config and seed.  Exit codes: 0 success,
2 usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import cache, model, online, synth, trace
from .fit import FitConfig, fit as run_fit

log = logging.getLogger("hrscache")

HP_FIELDS = {f.name: f.type for f in dataclasses.fields(model.Hyperparams)}

DEFAULT_CAPACITY_PCTS = [0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 25.0]
SAMPLES_PER_DAY = 144_000


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("HRS_CACHE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _read_config_file(path: str) -> dict:
    cfg = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            cfg[k.strip()] = v.strip()
    return cfg


def _hyperparams_from(cfg: dict, duration_hours: float | None = None
                      ) -> model.Hyperparams:
    kwargs = {}
    for k, v in cfg.items():
        if k in HP_FIELDS:
            kwargs[k] = int(float(v)) if k in ("M", "dM") else float(v)
    if "M" not in kwargs and duration_hours is not None:
        kwargs["M"] = max(1, round(SAMPLES_PER_DAY * duration_hours / 24.0))
    if "dM" not in kwargs and "M" in kwargs and duration_hours:
        dT = kwargs.get("dT", model.Hyperparams().dT)
        kwargs["dM"] = max(1, round(kwargs["M"] * dT / duration_hours))
    return model.Hyperparams(**kwargs)


def _resolved_config(args, extra: dict | None = None) -> dict:
    # "out" and "threads" are excluded: they do not affect the results, and
    # embedding them would break byte-for-byte reproducibility across
    # output locations and thread counts
    cfg = {k: v for k, v in vars(args).items()
           if k not in ("func", "config", "out", "threads") and v is not None}
    if getattr(args, "config", None):
        cfg["config_file"] = dict(_read_config_file(args.config))
    if extra:
        cfg.update(extra)
    return cfg


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _require_path(path: str, what: str) -> str:
    if not path or not os.path.exists(path):
        raise UsageError(f"{what} not found: {path}")
    return path


# --- commands ----------------------------------------------------------------


def cmd_ingest(args) -> int:
    _require_path(args.trace, "trace file")
    ds = trace.parse_trace(args.trace)
    ds = trace.generate_negatives(ds, cold_period=args.cold_period)
    trace.serialize_dataset(ds, args.out)
    _write_json(os.path.join(args.out, "ingest_config.json"),
                {"config": _resolved_config(args)})
    if args.fold:
        split = trace.split_forward_chaining(ds, fold=args.fold)
        for name, part in (("train", split.train),
                           ("validation", split.validation),
                           ("test", split.test)):
            trace.serialize_dataset(part, os.path.join(args.out, name))
    log.info("ingested %d events, %d negatives, %d videos",
             len(ds.events), len(ds.negatives), ds.catalog_size)
    return 0


def cmd_gen(args) -> int:
    file_cfg = _read_config_file(args.config) if args.config else {}
    hp = _hyperparams_from(file_cfg)
    rng = np.random.Generator(np.random.Philox(args.seed))
    c = args.videos
    true = model.HrsParams(
        beta=np.exp(rng.uniform(np.log(0.02), np.log(2.0), size=c)),
        omega=rng.uniform(0.05, 0.8, size=c),
        alpha=rng.uniform(0.005, 0.05, size=c),
        gamma=rng.uniform(0.05, 0.3, size=c),
    )
    spec = synth.SynthSpec(true_params=true, hp=hp, horizon=args.horizon,
                           seed=args.seed)
    ds = synth.generate(spec)
    trace.serialize_dataset(ds, args.out)
    model.save_params(os.path.join(args.out, "true_params"), true, hp,
                      extra={"config": _resolved_config(args)})
    log.info("generated %d events over %d videos", len(ds.events), c)
    return 0


def cmd_fit(args) -> int:
    _require_path(args.trace, "trace directory")
    ds = trace.load_dataset(args.trace)
    file_cfg = _read_config_file(args.config) if args.config else {}
    hp = _hyperparams_from(file_cfg, duration_hours=ds.duration)
    cfg = FitConfig(
        max_iters=int(file_cfg.get("max_iters", 200)),
        loss_rel_tol=float(file_cfg.get("loss_rel_tol", 1e-6)),
        rng_seed=args.seed,
    )
    init = model.HrsParams.default(ds.catalog_size)
    report = run_fit(ds, hp, init, cfg)
    model.save_params(args.out, report.final_params, hp, extra={
        "config": _resolved_config(args),
        "seed": args.seed,
        "stop_reason": report.stop_reason,
        "iterations": report.iterations,
        "final_loss": report.loss_trajectory[-1],
    })
    with open(os.path.join(args.out, "fit_log.csv"), "w") as f:
        f.write("# config: %s\n" % json.dumps(_resolved_config(args), sort_keys=True))
        f.write("iteration,loss\n")
        for i, v in enumerate(report.loss_trajectory):
            f.write("%d,%.17g\n" % (i, v))
    return 0


def _simulate_cell(test_ds, policy, capacity, params, hp, warm_state,
                   refresh_interval):
    cfg = cache.CacheConfig(capacity=capacity, policy=policy,
                            refresh_interval=refresh_interval)
    state = warm_state.copy() if warm_state is not None else None
    return cache.simulate(test_ds, cfg, params=params,
                          kernel_state=state, hp=hp)


def cmd_simulate(args) -> int:
    _require_path(args.trace, "trace directory")
    test_ds = trace.load_dataset(args.trace)
    params = hp = warm_state = None
    if args.policy == "HRS":
        _require_path(args.params, "params directory")
        params, hp = model.load_params(args.params)
        _require_path(args.warm, "warm history directory")
        warm_ds = trace.load_dataset(args.warm)
        os_ = online.OnlineState.from_history(warm_ds, params, hp,
                                              t0=test_ds.t_start)
        warm_state = os_.kernels
    rep = _simulate_cell(test_ds, args.policy, args.capacity, params, hp,
                         warm_state, args.refresh_interval)
    payload = rep.to_json_dict()
    payload["config"] = _resolved_config(args)
    payload["seed"] = args.seed
    _write_json(args.out, payload)
    return 0


def cmd_sweep(args) -> int:
    _require_path(args.trace, "trace directory")
    ds = trace.load_dataset(args.trace)
    policies = [p.strip().upper() for p in args.policies.split(",")]
    for p in policies:
        if p not in cache.POLICIES:
            raise UsageError(f"unknown policy {p!r}")
    pcts = [float(x) for x in args.capacity_pcts.split(",")]
    capacities = sorted({max(1, round(ds.catalog_size * pct / 100.0))
                         for pct in pcts})

    split = trace.split_forward_chaining(ds, fold=args.fold)
    test_ds = split.test
    file_cfg = _read_config_file(args.config) if args.config else {}

    params = hp = warm_state = None
    if "HRS" in policies:
        train = split.train
        hp = _hyperparams_from(file_cfg, duration_hours=train.duration)
        cfg = FitConfig(
            max_iters=int(file_cfg.get("max_iters", 60)),
            rng_seed=args.seed)
        init = model.HrsParams.default(ds.catalog_size)
        params = run_fit(train, hp, init, cfg).final_params
        history = ds.restrict(ds.t_start, test_ds.t_start)
        warm_state = online.OnlineState.from_history(
            history, params, hp, t0=test_ds.t_start).kernels

    cells = [(p, s) for p in policies for s in capacities]
    reports = {}

    def run(cell):
        p, s = cell
        reports[cell] = _simulate_cell(test_ds, p, s, params, hp,
                                       warm_state, args.refresh_interval)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as ex:
            list(ex.map(run, cells))
    else:
        for cell in cells:
            run(cell)

    os.makedirs(args.out, exist_ok=True)
    resolved = _resolved_config(args, {"capacities": capacities})
    rows = []
    for (p, s) in sorted(cells):
        rep = reports[(p, s)]
        payload = rep.to_json_dict(include_wall_time=False)
        payload["config"] = resolved
        payload["seed"] = args.seed
        _write_json(os.path.join(args.out, f"sweep_{p}_{s}.json"), payload)
        rows.append((p, s, rep.hits, rep.total, rep.hit_rate))
    with open(os.path.join(args.out, "sweep.csv"), "w") as f:
        f.write("# config: %s\n" % json.dumps(resolved, sort_keys=True))
        f.write("policy,capacity,hits,total,hit_rate\n")
        for p, s, h, t, r in rows:
            f.write("%s,%d,%d,%d,%.17g\n" % (p, s, h, t, r))
    if params is not None:
        model.save_params(os.path.join(args.out, "fitted_params"), params, hp,
                          extra={"config": resolved, "seed": args.seed})
    return 0


def cmd_report(args) -> int:
    reports = []
    for path in args.inputs:
        _require_path(path, "report file")
        with open(path) as f:
            d = json.load(f)
        reports.append(cache.SimReport(
            policy=d["policy"], capacity=d["capacity"], hits=d["hits"],
            total=d["total"], hit_rate=d["hit_rate"],
            per_day=d.get("per_day", []), wall_time=d.get("wall_time_s") or 0.0))
    rate = cache.weighted_hit_rate(reports)
    payload = {
        "weighted_hit_rate": rate,
        "total_hits": sum(r.hits for r in reports),
        "total_requests": sum(r.total for r in reports),
        "inputs": list(args.inputs),
        "config": _resolved_config(args),
    }
    _write_json(args.out, payload)
    print("weighted_hit_rate %.6f" % rate)
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hrs-cache",
        description="Hybrid point-process request-rate prediction and "
                    "edge-cache simulation")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="flat key=value config file")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ingest", help="parse a raw CSV, add negatives, split folds")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cold-period", type=float, default=12.0)
    p.add_argument("--fold", type=int, choices=(1, 2, 3))
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen", help="generate a synthetic trace")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=50)
    p.add_argument("--horizon", type=float, default=168.0)
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="train parameters on a dataset directory")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="replay one policy on a test dataset")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--policy", default="LRU")
    p.add_argument("--capacity", type=int, required=True)
    p.add_argument("--params", help="fitted params directory (HRS)")
    p.add_argument("--warm", help="history dataset directory (HRS)")
    p.add_argument("--refresh-interval", type=float, default=1.0)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="capacity x policy grid on one fold")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fold", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--capacity-pcts",
                   default=",".join(str(x) for x in DEFAULT_CAPACITY_PCTS))
    p.add_argument("--policies", default="HRS,LRU,OPT")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--refresh-interval", type=float, default=1.0)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="weighted average across city reports")
    p.add_argument("--out", required=True)
    p.add_argument("inputs", nargs="+")
    common(p)
    p.set_defaults(func=cmd_report)

    return ap


def run(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except trace.TraceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failures map to exit 1
        log.exception("command failed")
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
