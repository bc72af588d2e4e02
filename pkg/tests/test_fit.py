"""Offline trainer behavior: oracles, constraints and stopping rules."""

import math

import numpy as np
import pytest

from hrscache.fit import FitConfig, ValidationProbe, fit
from hrscache.model import HrsParams, Hyperparams, softplus
from hrscache.synth import SynthSpec, generate
from hrscache.trace import RequestEvent, TraceDataset

LB = 1e-6


def _poisson_ds(rate, horizon, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    count = rng.poisson(rate * horizon)
    times = np.sort(rng.uniform(0, horizon, count))
    return TraceDataset(
        events=[RequestEvent(0, "u", float(t)) for t in times],
        negatives=[], catalog_size=1, horizon=horizon)


def test_empty_dataset_drives_beta_to_bound():
    """With no events and rho=0 the loss is T * sum softplus(beta)."""
    ds = TraceDataset(events=[], negatives=[], catalog_size=3, horizon=24.0)
    hp = Hyperparams(s=0.05).with_rho(0.0)
    init = HrsParams(beta=np.ones(3), omega=np.full(3, LB),
                     alpha=np.full(3, LB), gamma=np.full(3, LB))
    rep = fit(ds, hp, init,
              FitConfig(rng_seed=1, num_samples=500, param_lower_bound=LB,
                        freeze=frozenset({"omega", "alpha", "gamma"})))
    assert np.all(rep.final_params.beta <= 10 * LB)


def test_poisson_rate_mle():
    ds = _poisson_ds(rate=5.0, horizon=240.0, seed=3)
    hp = Hyperparams(s=0.05).with_rho(0.0)
    init = HrsParams(beta=np.array([1.0]), omega=np.array([LB]),
                     alpha=np.array([LB]), gamma=np.array([LB]))
    rep = fit(ds, hp, init,
              FitConfig(rng_seed=2, num_samples=20000, param_lower_bound=LB,
                        freeze=frozenset({"omega", "alpha", "gamma"})))
    fitted = float(softplus(rep.final_params.beta[0], hp.s))
    oracle = len(ds.events) / ds.horizon
    assert abs(fitted - oracle) / oracle < 0.05


def test_trajectory_monotone_within_slack():
    ds = _poisson_ds(rate=3.0, horizon=100.0, seed=7)
    hp = Hyperparams(s=0.05).with_rho(0.1)
    rep = fit(ds, hp, HrsParams.default(1),
              FitConfig(rng_seed=5, num_samples=5000))
    traj = np.asarray(rep.loss_trajectory)
    assert len(traj) >= 2
    assert np.all(np.diff(traj) <= 1e-9 * np.abs(traj[:-1]))


def test_fit_is_deterministic():
    ds = _poisson_ds(rate=3.0, horizon=60.0, seed=9)
    hp = Hyperparams(s=0.05).with_rho(0.1)
    cfg = FitConfig(rng_seed=5, num_samples=3000)
    a = fit(ds, hp, HrsParams.default(1), cfg)
    b = fit(ds, hp, HrsParams.default(1), cfg)
    assert np.array_equal(a.final_params.as_vector(),
                          b.final_params.as_vector())
    assert a.loss_trajectory == b.loss_trajectory


def test_bounds_respected_and_freeze_exact():
    ds = _poisson_ds(rate=2.0, horizon=60.0, seed=11)
    hp = Hyperparams(s=0.05).with_rho(0.0)
    init = HrsParams(beta=np.array([0.5]), omega=np.array([0.123]),
                     alpha=np.array([0.456]), gamma=np.array([0.1]))
    rep = fit(ds, hp, init,
              FitConfig(rng_seed=1, num_samples=3000,
                        freeze=frozenset({"omega", "alpha"})))
    p = rep.final_params
    assert p.omega[0] == 0.123 and p.alpha[0] == 0.456  # frozen in place
    assert np.all(p.as_vector() >= LB)


def test_identical_videos_get_identical_parameters():
    """Two videos with the same event times must fit to the same values."""
    rng = np.random.Generator(np.random.Philox(13))
    times = np.sort(rng.uniform(0, 120.0, 300))
    events = sorted(
        [RequestEvent(0, "u", float(t)) for t in times]
        + [RequestEvent(1, "u", float(t)) for t in times],
        key=lambda e: e.time)
    ds = TraceDataset(events=events, negatives=[], catalog_size=2,
                      horizon=120.0)
    hp = Hyperparams(s=0.05).with_rho(0.01)
    rep = fit(ds, hp, HrsParams.default(2),
              FitConfig(rng_seed=1, num_samples=5000))
    p = rep.final_params
    for name in ("beta", "omega", "alpha", "gamma"):
        v = getattr(p, name)
        assert math.isclose(v[0], v[1], rel_tol=1e-6, abs_tol=1e-9)


def test_non_finite_initial_loss_raises():
    ds = _poisson_ds(rate=2.0, horizon=24.0, seed=15)
    hp = Hyperparams(s=0.05)
    init = HrsParams(beta=np.array([1e300]), omega=np.array([1e300]),
                     alpha=np.array([1.0]), gamma=np.array([1.0]))
    with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
        fit(ds, hp, init, FitConfig(rng_seed=1, num_samples=100))


def test_validation_plateau_stops_early():
    c = 5
    rng = np.random.Generator(np.random.Philox(17))
    true = HrsParams(beta=rng.uniform(0.2, 1.0, c),
                     omega=rng.uniform(0.1, 0.4, c),
                     alpha=np.full(c, 0.05), gamma=np.full(c, 0.1))
    hp = Hyperparams(s=0.05).with_rho(0.0)
    ds = generate(SynthSpec(true_params=true, hp=hp, horizon=96.0,
                            negative_schedule=[], seed=19))
    train = ds.restrict(0.0, 72.0)
    val = ds.restrict(72.0, 96.0, closed_right=True)
    probe = ValidationProbe(dataset=val, capacities=[1, 2],
                            warm_dataset=train, interval=1,
                            min_improvement=1.0)  # unattainable gain
    rep = fit(train, hp, HrsParams.default(c),
              FitConfig(rng_seed=1, num_samples=3000, max_iters=50,
                        validation=probe))
    assert rep.stop_reason == "validation_plateau"
    assert rep.iterations < 50


def test_max_iters_stop_reason():
    ds = _poisson_ds(rate=4.0, horizon=100.0, seed=21)
    hp = Hyperparams(s=0.05).with_rho(0.1)
    rep = fit(ds, hp, HrsParams.default(1),
              FitConfig(rng_seed=1, num_samples=3000, max_iters=2))
    assert rep.stop_reason == "max_iters"


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(max_iters=0)
    with pytest.raises(ValueError):
        FitConfig(freeze=frozenset({"delta"}))
