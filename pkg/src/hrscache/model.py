"""Model parameters, hyperparameters and per-video kernel accumulators.

The per-video request rate is a sum of a base rate, a self-exciting term
driven by past requests (each damped by exp(-alpha*N) where N is the
request count at that event), and a self-restraining term driven by
negative events.  The raw rate can go negative, so a softplus with
sharpness ``s`` makes it strictly positive for likelihood work.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

__all__ = [
    "Hyperparams",
    "HrsParams",
    "KernelState",
    "kernel_k0",
    "kernel_k1",
    "softplus",
    "softplus_prime",
    "log_softplus",
    "tilde_lambda",
    "hat_lambda",
    "tilde_lambda_all",
    "hat_lambda_all",
    "save_params",
    "load_params",
]

# smallest positive double; used as a floor so hat_lambda never underflows to 0
_TINY = 5e-324


@dataclass(frozen=True)
class Hyperparams:
    """Fixed model knobs.

    Time quantities are in hours; decays delta0/delta1 in 1/hours.
    ``M`` is the Monte-Carlo sample count for an offline training window,
    ``dM`` for one online window of length ``dT``.  ``dt`` is the kernel
    refresh cadence, ``k_th`` the kernel truncation threshold, ``eta``
    a base learning-rate scale.
    """

    delta0: float = 0.5
    delta1: float = 1.5
    s: float = 0.01
    rho_beta: float = math.exp(5.0)
    rho_omega: float = math.exp(5.0)
    rho_alpha: float = math.exp(5.0)
    rho_gamma: float = math.exp(5.0)
    M: int = 144_000
    dt: float = 1.0
    dT: float = 48.0
    dM: int = 12_000
    k_th: float = math.exp(-9.0)
    eta: float = 1.0

    def __post_init__(self):
        if not (self.delta0 > 0 and self.delta1 > 0 and self.s > 0 and self.eta > 0):
            raise ValueError("delta0, delta1, s and eta must be positive")
        for name in ("rho_beta", "rho_omega", "rho_alpha", "rho_gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.M < 1 or self.dM < 1:
            raise ValueError("M and dM must be >= 1")
        if not (0.0 < self.k_th < 1.0):
            raise ValueError("k_th must lie in (0, 1)")
        if self.dt <= 0 or self.dT <= 0:
            raise ValueError("dt and dT must be positive")

    @property
    def rho(self) -> np.ndarray:
        """Regularization weights in (beta, omega, alpha, gamma) order."""
        return np.array(
            [self.rho_beta, self.rho_omega, self.rho_alpha, self.rho_gamma]
        )

    @property
    def lookback(self) -> float:
        """Hours of history whose excitation kernel factor is >= k_th."""
        return -math.log(self.k_th) / self.delta0

    def with_rho(self, rho: float) -> "Hyperparams":
        return replace(
            self, rho_beta=rho, rho_omega=rho, rho_alpha=rho, rho_gamma=rho
        )


def kernel_k0(dt_elapsed: float, hp: Hyperparams) -> float:
    """Excitation kernel exp(-delta0 * age)."""
    if np.any(np.asarray(dt_elapsed) < 0):
        raise ValueError("kernel evaluated at negative elapsed time")
    return np.exp(-hp.delta0 * np.asarray(dt_elapsed, dtype=float))


def kernel_k1(dt_elapsed: float, hp: Hyperparams) -> float:
    """Restraint kernel exp(-delta1 * age)."""
    if np.any(np.asarray(dt_elapsed) < 0):
        raise ValueError("kernel evaluated at negative elapsed time")
    return np.exp(-hp.delta1 * np.asarray(dt_elapsed, dtype=float))


def softplus(x, s: float):
    """s * ln(1 + exp(x/s)); overflow-safe via logaddexp."""
    return s * np.logaddexp(0.0, np.asarray(x, dtype=float) / s)


def softplus_prime(x, s: float):
    """d softplus / dx = sigmoid(x/s), in (0, 1)."""
    return expit(np.asarray(x, dtype=float) / s)


def log_softplus(x, s: float):
    """log(softplus(x, s)), stable for very negative x.

    For x/s << 0, softplus ~ s*exp(x/s) underflows while its log is finite.
    """
    u = np.asarray(x, dtype=float) / s
    inner = np.logaddexp(0.0, u)
    # where inner underflows toward 0, log(inner) ~ u (since log1p(e^u) ~ e^u)
    small = u < -30.0
    out = np.where(small, math.log(s) + u, math.log(s) + np.log(np.where(small, 1.0, inner)))
    return out


@dataclass
class HrsParams:
    """Per-video learned parameters: base rate, excitation weight,
    audience-saturation rate, restraint weight.  All strictly positive."""

    beta: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for name in ("beta", "omega", "alpha", "gamma"):
            v = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, v)
            if v.ndim != 1:
                raise ValueError(f"{name} must be a vector")
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ValueError(f"{name} entries must be positive and finite")
        n = len(self.beta)
        if any(len(getattr(self, k)) != n for k in ("omega", "alpha", "gamma")):
            raise ValueError("parameter vectors must share a length")

    @property
    def catalog_size(self) -> int:
        return len(self.beta)

    @classmethod
    def default(cls, catalog_size: int, gamma0: float = 0.1) -> "HrsParams":
        ones = np.ones(catalog_size)
        return cls(beta=ones.copy(), omega=ones.copy(), alpha=ones.copy(),
                   gamma=np.full(catalog_size, gamma0))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.omega, self.alpha, self.gamma])

    @classmethod
    def from_vector(cls, x: np.ndarray, catalog_size: int) -> "HrsParams":
        x = np.asarray(x, dtype=float)
        c = catalog_size
        return cls(beta=x[:c].copy(), omega=x[c:2 * c].copy(),
                   alpha=x[2 * c:3 * c].copy(), gamma=x[3 * c:].copy())

    def copy(self) -> "HrsParams":
        return HrsParams(self.beta.copy(), self.omega.copy(),
                         self.alpha.copy(), self.gamma.copy())


@dataclass
class KernelState:
    """Per-video sufficient statistics of past events.

    phi:       excitation accumulator (each event adds exp(-alpha*N) and
               decays at rate delta0)
    psi:       restraint accumulator (each negative event adds 1, decays
               at rate delta1)
    gamma_acc: alpha-gradient accumulator (each event adds N*exp(-alpha*N),
               decays at rate delta0)
    n:         request counter
    vid_time:  per-video time the stored values refer to (lazy decay:
               videos without news keep stale values, decayed on read)
    """

    phi: np.ndarray
    psi: np.ndarray
    gamma_acc: np.ndarray
    n: np.ndarray
    vid_time: np.ndarray
    last_update_time: float

    @classmethod
    def zeros(cls, catalog_size: int, t0: float = 0.0) -> "KernelState":
        return cls(
            phi=np.zeros(catalog_size),
            psi=np.zeros(catalog_size),
            gamma_acc=np.zeros(catalog_size),
            n=np.zeros(catalog_size, dtype=np.int64),
            vid_time=np.full(catalog_size, t0),
            last_update_time=t0,
        )

    @property
    def catalog_size(self) -> int:
        return len(self.phi)

    def copy(self) -> "KernelState":
        return KernelState(self.phi.copy(), self.psi.copy(),
                           self.gamma_acc.copy(), self.n.copy(),
                           self.vid_time.copy(), self.last_update_time)

    def decayed(self, hp: Hyperparams, t: float | None = None):
        """(phi, psi, gamma_acc) brought forward to time ``t`` without
        mutating the stored values.  ``t`` defaults to last_update_time."""
        if t is None:
            t = self.last_update_time
        age = t - self.vid_time
        if np.any(age < 0):
            raise ValueError("kernel state read at a time before vid_time")
        d0 = np.exp(-hp.delta0 * age)
        d1 = np.exp(-hp.delta1 * age)
        return self.phi * d0, self.psi * d1, self.gamma_acc * d0

    def materialize(self, hp: Hyperparams, t: float) -> None:
        """Decay every video to time ``t`` in place."""
        phi, psi, gam = self.decayed(hp, t)
        self.phi[:] = phi
        self.psi[:] = psi
        self.gamma_acc[:] = gam
        self.vid_time[:] = t
        self.last_update_time = t


def tilde_lambda(i: int, state: KernelState, p: HrsParams,
                 hp: Hyperparams) -> float:
    """Raw (possibly negative) intensity of video i at state.last_update_time."""
    t = state.last_update_time
    age = t - state.vid_time[i]
    if age < 0:
        raise ValueError("state read before its per-video timestamp")
    phi = state.phi[i] * math.exp(-hp.delta0 * age)
    psi = state.psi[i] * math.exp(-hp.delta1 * age)
    return float(p.beta[i] + p.omega[i] * phi - p.gamma[i] * psi)


def hat_lambda(i: int, state: KernelState, p: HrsParams,
               hp: Hyperparams) -> float:
    """Softplus-positive intensity of video i; always > 0."""
    val = float(softplus(tilde_lambda(i, state, p, hp), hp.s))
    return max(val, _TINY)


def tilde_lambda_all(state: KernelState, p: HrsParams,
                     hp: Hyperparams) -> np.ndarray:
    phi, psi, _ = state.decayed(hp)
    return p.beta + p.omega * phi - p.gamma * psi


def hat_lambda_all(state: KernelState, p: HrsParams,
                   hp: Hyperparams) -> np.ndarray:
    return np.maximum(softplus(tilde_lambda_all(state, p, hp), hp.s), _TINY)


# --- serialization ----------------------------------------------------------

PARAMS_CSV = "params.csv"
PARAMS_MANIFEST = "params_manifest.json"


def save_params(outdir: str, p: HrsParams, hp: Hyperparams,
                extra: dict | None = None) -> None:
    """Write params.csv (17 significant digits) and a manifest with the
    hyperparameters; round-trips bit-faithfully through load_params."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, PARAMS_CSV), "w") as f:
        f.write("video_id,beta,omega,alpha,gamma\n")
        for i in range(p.catalog_size):
            f.write("%d,%.17g,%.17g,%.17g,%.17g\n"
                    % (i, p.beta[i], p.omega[i], p.alpha[i], p.gamma[i]))
    manifest = {"hyperparams": {k: getattr(hp, k) for k in (
        "delta0", "delta1", "s", "rho_beta", "rho_omega", "rho_alpha",
        "rho_gamma", "M", "dt", "dT", "dM", "k_th", "eta")}}
    if extra:
        manifest.update(extra)
    with open(os.path.join(outdir, PARAMS_MANIFEST), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_params(outdir: str) -> tuple[HrsParams, Hyperparams]:
    with open(os.path.join(outdir, PARAMS_MANIFEST)) as f:
        manifest = json.load(f)
    hp = Hyperparams(**manifest["hyperparams"])
    rows = []
    with open(os.path.join(outdir, PARAMS_CSV)) as f:
        header = f.readline()
        if header.strip() != "video_id,beta,omega,alpha,gamma":
            raise ValueError("unexpected params.csv header")
        for line in f:
            vid, *vals = line.strip().split(",")
            rows.append((int(vid), [float(v) for v in vals]))
    rows.sort()
    arr = np.array([v for _, v in rows])
    return HrsParams(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]), hp
