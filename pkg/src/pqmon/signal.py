"""Residual-stream synthesis for power-quality monitoring.

A meter observes ``a0 sin(2 pi f0 t + phi0)`` plus noise.  After subtracting the
known nominal waveform the residual is white Gaussian noise until the change
tick ``t0`` and disturbance-plus-noise afterwards.  Disturbances are either an
AR(p) process or one of two parametric shapes (amplitude sag, damped ring).

Time is an integer sample index throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import lfilter

Seed = Union[int, Tuple[int, ...]]


@dataclass(frozen=True)
class NominalParams:
    a0: float = 1.0
    f0: float = 60.0
    phi0: float = 0.0
    samples_per_cycle: int = 64

    def __post_init__(self):
        if not self.a0 > 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if not self.f0 > 0:
            raise ValueError(f"f0 must be positive, got {self.f0}")
        if self.samples_per_cycle < 2:
            raise ValueError("samples_per_cycle must be >= 2")

    @property
    def fs(self) -> float:
        return self.f0 * self.samples_per_cycle


@dataclass(frozen=True)
class ArParams:
    """AR(p) disturbance ``x_t = mean + sum_j a_j (x_{t-j} - mean) + w_t``."""

    coeffs: Tuple[float, ...]
    mean_tilde: float = 0.0
    sigma_w: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(a) for a in self.coeffs))
        if len(self.coeffs) < 1:
            raise ValueError("AR order must be >= 1")
        if self.sigma_w < 0:
            raise ValueError("sigma_w must be nonnegative")
        if not is_stationary(self.coeffs):
            raise ValueError(f"AR coefficients {self.coeffs} are not stationary")

    @property
    def p(self) -> int:
        return len(self.coeffs)

    @property
    def mu(self) -> float:
        """Intercept of the observation-level recursion."""
        return self.mean_tilde * (1.0 - sum(self.coeffs))


@dataclass(frozen=True)
class NoiseParams:
    sigma_nu: float = 1.0

    def __post_init__(self):
        if not self.sigma_nu > 0:
            raise ValueError(f"sigma_nu must be positive, got {self.sigma_nu}")


@dataclass(frozen=True)
class ArProcess:
    ar: ArParams


@dataclass(frozen=True)
class AmplitudeSag:
    scale: float

    def __post_init__(self):
        if not 0 < self.scale < 1:
            raise ValueError(f"sag scale must lie in (0, 1), got {self.scale}")


@dataclass(frozen=True)
class TransientRing:
    amplitude: float
    freq_hz: float
    damping: float

    def __post_init__(self):
        if not self.damping > 0:
            raise ValueError("ring damping rate must be positive")


DisturbanceKind = Union[ArProcess, AmplitudeSag, TransientRing]


@dataclass(frozen=True)
class ScenarioConfig:
    nominal: NominalParams
    noise: NoiseParams
    per_meter: Tuple[DisturbanceKind, ...]
    t0: int
    horizon: int
    t1: Optional[int] = None
    seed: Seed = 0

    def __post_init__(self):
        object.__setattr__(self, "per_meter", tuple(self.per_meter))
        if len(self.per_meter) < 1:
            raise ValueError("scenario needs at least one meter")
        if not 0 <= self.t0 <= self.horizon:
            raise ValueError(f"need 0 <= t0 <= horizon, got t0={self.t0}, horizon={self.horizon}")
        if self.t1 is not None and self.t1 <= self.t0:
            raise ValueError("t1 must be greater than t0")

    @property
    def num_meters(self) -> int:
        return len(self.per_meter)

    def with_seed(self, seed: Seed) -> "ScenarioConfig":
        return replace(self, seed=seed)


@dataclass
class MeterStream:
    samples: np.ndarray
    meter_id: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"meter {self.meter_id}: non-finite sample")

    def __len__(self):
        return len(self.samples)


def is_stationary(coeffs: Sequence[float]) -> bool:
    """All roots of ``z^p - a_1 z^{p-1} - ... - a_p`` strictly inside the unit circle."""
    poly = np.concatenate([[1.0], -np.asarray(coeffs, dtype=float)])
    roots = np.roots(poly)
    return bool(np.all(np.abs(roots) < 1.0))


def ar_autocovariance(coeffs: Sequence[float], sigma_w: float, maxlag: int) -> np.ndarray:
    """Autocovariances gamma(0..maxlag) of a stationary AR process.

    Solves the Yule-Walker relations for lags 0..p and extends the recursion
    beyond p.
    """
    a = np.asarray(coeffs, dtype=float)
    p = len(a)
    # gamma(m) - sum_j a_j gamma(|m-j|) = sigma_w^2 [m == 0],  m = 0..p
    A = np.eye(p + 1)
    for m in range(p + 1):
        for j in range(1, p + 1):
            A[m, abs(m - j)] -= a[j - 1]
    rhs = np.zeros(p + 1)
    rhs[0] = sigma_w**2
    gamma = list(np.linalg.solve(A, rhs))
    for m in range(p + 1, maxlag + 1):
        gamma.append(sum(a[j - 1] * gamma[m - j] for j in range(1, p + 1)))
    return np.asarray(gamma[: maxlag + 1])


def nominal_waveform(params: NominalParams, tick):
    """Nominal sinusoid at integer sample index ``tick`` (scalar or array)."""
    t = np.asarray(tick, dtype=float) / params.fs
    out = params.a0 * np.sin(2 * np.pi * params.f0 * t + params.phi0)
    return float(out) if np.ndim(out) == 0 else out


def _ar_path(ar: ArParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """n samples of the AR disturbance, warm-started from its stationary law."""
    p = ar.p
    a = np.asarray(ar.coeffs)
    if ar.sigma_w > 0:
        gamma = ar_autocovariance(a, ar.sigma_w, p - 1)
        idx = np.arange(p)
        cov = gamma[np.abs(idx[:, None] - idx[None, :])]
        past = np.linalg.cholesky(cov) @ rng.standard_normal(p)
    else:
        past = np.zeros(p)
    # past[k] is the centred value at lag k+1; build direct-form-II-transposed state
    zi = np.array([sum(a[m - 1] * past[m - i - 1] for m in range(i + 1, p + 1)) for i in range(p)])
    w = ar.sigma_w * rng.standard_normal(n)
    x, _ = lfilter([1.0], np.concatenate([[1.0], -a]), w, zi=zi)
    return x + ar.mean_tilde


def synthesize_ar(ar: ArParams, noise: NoiseParams, n: int, rng: np.random.Generator) -> MeterStream:
    """Post-change residual: stationary AR disturbance plus white measurement noise."""
    if n < 1:
        raise ValueError("n must be >= 1")
    nu = noise.sigma_nu * rng.standard_normal(n)
    return MeterStream(_ar_path(ar, n, rng) + nu)


def disturbance_segment(kind: DisturbanceKind, nominal: NominalParams, start: int, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Noiseless residual contributed by ``kind`` on ticks ``start .. start+n-1``."""
    if n <= 0:
        return np.zeros(0)
    ticks = np.arange(start, start + n)
    if isinstance(kind, ArProcess):
        return _ar_path(kind.ar, n, rng)
    if isinstance(kind, AmplitudeSag):
        return (kind.scale - 1.0) * nominal_waveform(nominal, ticks)
    if isinstance(kind, TransientRing):
        dt = (ticks - start) / nominal.fs
        return kind.amplitude * np.exp(-kind.damping * dt) * np.sin(2 * np.pi * kind.freq_hz * dt)
    raise TypeError(f"unknown disturbance kind {kind!r}")


def meter_rngs(seed: Seed, num_meters: int):
    entropy = list(seed) if isinstance(seed, (tuple, list)) else seed
    children = np.random.SeedSequence(entropy).spawn(num_meters)
    return [np.random.default_rng(c) for c in children]


def synthesize_scenario(cfg: ScenarioConfig) -> list:
    """One residual stream per meter.

    Each meter draws its measurement noise for the whole horizon first and the
    disturbance afterwards, from its own child generator, so pure-noise prefixes
    are identical regardless of what happens after ``t0``.
    """
    end = cfg.horizon if cfg.t1 is None else min(cfg.t1, cfg.horizon)
    streams = []
    for ell, (kind, rng) in enumerate(zip(cfg.per_meter, meter_rngs(cfg.seed, cfg.num_meters))):
        y = cfg.noise.sigma_nu * rng.standard_normal(cfg.horizon)
        y[cfg.t0:end] += disturbance_segment(kind, cfg.nominal, cfg.t0, end - cfg.t0, rng)
        streams.append(MeterStream(y, meter_id=ell))
    return streams
