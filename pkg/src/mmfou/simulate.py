"""Sample paths of fBm, fOU and mmfOU on an equidistant grid.

Random streams
--------------
Every generator draws from ``numpy.random.default_rng(SeedSequence(seed,
spawn_key=(replication, component)))``.  The spawn key is a counter pair, so
stream ``(r, k)`` is fixed by the base seed alone and independent of how many
other streams exist or in which order they are consumed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import NumericError, ValidationError
from .model import ParameterVector

log = logging.getLogger(__name__)

STATIONARY = "stationary_gaussian"
BURN_IN = "burn_in"
ZERO = "zero"
INIT_MODES = (STATIONARY, BURN_IN, ZERO)


def derive_rng(seed: int, replication: int = 0, component: int = 0) -> np.random.Generator:
    """Independent stream for (base seed, replication index, component index)."""
    if seed is None or int(seed) < 0 or int(seed) >= 2**64:
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication), int(component)))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class SamplePath:
    t0: float
    alpha: float
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("a sample path needs a non-empty 1-d array of values")
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("sample path contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def N(self) -> int:
        """Number of steps; the path holds N+1 points."""
        return self.values.size - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.alpha * np.arange(self.values.size)


@dataclass(frozen=True)
class SimulationConfig:
    N: int
    T: float = 1.0
    seed: int = 0
    init_mode: str = STATIONARY
    burn_in: float | None = None  # time units; None means 10/lambda for burn_in mode
    replication: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError(f"N must be a positive integer, got {self.N}")
        if not self.T > 0:
            raise ValidationError(f"T must be > 0, got {self.T}")
        if self.init_mode not in INIT_MODES:
            raise ValidationError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValidationError(f"burn_in must be >= 0, got {self.burn_in}")
        derive_rng(self.seed)  # validates the seed

    @property
    def alpha(self) -> float:
        return self.T / self.N


# --------------------------------------------------------------------------
# fractional Gaussian noise
# --------------------------------------------------------------------------


def fgn_autocovariance(H: float, k) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at integer lags k."""
    k = np.abs(np.asarray(k, dtype=float))
    h2 = 2.0 * H
    return 0.5 * ((k + 1.0) ** h2 - 2.0 * k**h2 + np.abs(k - 1.0) ** h2)


def _circulant_eigenvalues(H: float, n: int) -> np.ndarray:
    gamma = fgn_autocovariance(H, np.arange(n + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    return np.fft.fft(row).real


def fgn(H: float, n: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """n increments B^H_{(i+1)alpha} - B^H_{i alpha}, exact Gaussian law.

    Circulant embedding of size 2n (Davies-Harte); Cholesky of the Toeplitz
    covariance if the embedding has a negative eigenvalue.
    """
    if not 0.0 < H < 1.0:
        raise ValidationError(f"H must lie in (0,1), got {H}")
    if n < 1:
        raise ValidationError("need at least one increment")
    scale = alpha**H
    if n == 1:
        return scale * rng.standard_normal(1)
    ev = _circulant_eigenvalues(H, n)
    m = ev.size
    if ev.min() >= -1e-10 * ev.max():
        ev = np.clip(ev, 0.0, None)
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        y = np.fft.fft(np.sqrt(ev / m) * z)
        return scale * y[:n].real
    log.info("circulant embedding not nonnegative (H=%g, n=%d); using Cholesky", H, n)
    from scipy.linalg import cholesky, toeplitz

    cov = toeplitz(fgn_autocovariance(H, np.arange(n)))
    try:
        chol = cholesky(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"fGn synthesis failed for H={H}, n={n}") from exc
    return scale * chol @ rng.standard_normal(n)


def fbm_path(H: float, N: int, T: float = 1.0, seed: int = 0) -> SamplePath:
    """B^H at 0, alpha, ..., N alpha with alpha = T/N and B^H_0 = 0."""
    alpha = T / N
    inc = fgn(H, N, alpha, derive_rng(seed))
    values = np.concatenate([[0.0], np.cumsum(inc)])
    return SamplePath(0.0, alpha, values, {"H": H, "seed": seed})


# --------------------------------------------------------------------------
# fOU and mixture
# --------------------------------------------------------------------------


def stationary_variance(lam: float, H: float) -> float:
    """Var U^{lambda,H} = H Gamma(2H) / lambda^{2H}."""
    return H * math.gamma(2.0 * H) * lam ** (-2.0 * H)


def fou_path(lam: float, H: float, cfg: SimulationConfig, component: int = 0) -> SamplePath:
    """Euler iteration U_{i+1} = U_i - lam U_i alpha + dB^H_i on [0, T]."""
    if not lam > 0:
        raise ValidationError(f"lambda must be > 0, got {lam}")
    alpha = cfg.alpha
    rng = derive_rng(cfg.seed, cfg.replication, component)
    if cfg.init_mode == BURN_IN:
        burn = 10.0 / lam if cfg.burn_in is None else cfg.burn_in
        n_burn = int(round(burn / alpha))
    else:
        burn, n_burn = 0.0, 0

    if cfg.init_mode == STATIONARY:
        u0 = math.sqrt(stationary_variance(lam, H)) * rng.standard_normal()
    else:
        u0 = 0.0
    inc = fgn(H, n_burn + cfg.N, alpha, rng)

    phi = 1.0 - lam * alpha
    body = lfilter([1.0], [1.0, -phi], inc, zi=[phi * u0])[0]
    values = np.concatenate([[u0], body])[n_burn:]

    meta = {
        "lambda": lam,
        "H": H,
        "alpha": alpha,
        "lambda_alpha": lam * alpha,
        "init_mode": cfg.init_mode,
        "burn_in": burn,
        "burn_in_steps": n_burn,
        "seed": cfg.seed,
        "replication": cfg.replication,
        "component": component,
        "warnings": [],
    }
    if lam * alpha >= 1.0:
        msg = f"explicit Euler step unstable: lambda*alpha = {lam * alpha:.3g} >= 1"
        meta["warnings"].append(msg)
        log.warning(msg)
    return SamplePath(0.0, alpha, values, meta)


def mmfou_components(theta: ParameterVector, cfg: SimulationConfig) -> list[SamplePath]:
    """Unweighted fOU component paths, one stream per component."""
    return [fou_path(theta.lam, h, cfg, component=k) for k, h in enumerate(theta.H)]


def mmfou_path(theta: ParameterVector, cfg: SimulationConfig) -> SamplePath:
    """U^n = sum_k sigma_k U^{lambda, H_k} from independent components."""
    comps = mmfou_components(theta, cfg)
    values = theta.sigma[0] * comps[0].values
    for s, c in zip(theta.sigma[1:], comps[1:]):
        values = values + s * c.values
    meta = dict(comps[0].meta)
    meta.update(
        theta=theta.to_dict(),
        H=list(theta.H),
        warnings=[w for c in comps for w in c.meta["warnings"]],
    )
    meta.pop("component")
    return SamplePath(0.0, cfg.alpha, values, meta)
