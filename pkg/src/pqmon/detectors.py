"""Single-meter sequential detectors.

The GLLR detector replaces the unknown post-change AR parameters by the
maximiser of a second-order expansion of the log-likelihood ratio around the
noise-only parameter.  Its statistic over the current window of ``N`` samples
is ``b * ||sum z~|| - N b^2 / 2`` where ``z~`` is the whitened score vector.

States hold numpy arrays and broadcast over any leading batch shape, so one
state can drive many independent trials at once.  A state created with
``shape=()`` behaves as a plain scalar detector.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# known-parameter CUSUM (oracle)


@dataclass(frozen=True)
class Theta:
    """Parameter vector ``[a_1..a_p, mu, sigma]``."""

    coeffs: Tuple[float, ...]
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(a) for a in self.coeffs))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def p(self) -> int:
        return len(self.coeffs)

    @classmethod
    def nominal(cls, p: int, sigma_nu: float) -> "Theta":
        return cls((0.0,) * p, 0.0, sigma_nu)


def theta_from_ar(ar, sigma_nu: float) -> Theta:
    """Post-change parameter vector implied by an AR disturbance in white noise.

    The innovation variance is ``(1 + sum a_j^2) sigma_nu^2 + sigma_w^2``.
    """
    a = np.asarray(ar.coeffs)
    sigma_u2 = (1.0 + np.sum(a**2)) * sigma_nu**2 + ar.sigma_w**2
    return Theta(ar.coeffs, ar.mu, float(np.sqrt(sigma_u2)))


def epsilons(y, history, theta: Theta):
    """Prediction residuals under the nominal and the alternative parameter.

    ``history[j-1]`` holds ``y_{t-j}``.
    """
    history = np.asarray(history, dtype=float)
    eps1 = y - theta.mu - history[..., : theta.p] @ np.asarray(theta.coeffs)
    return y, eps1


def llr_term(y, history, theta0: Theta, theta1: Theta):
    """Per-sample log-likelihood ratio ``s_i`` of ``theta1`` against the nominal ``theta0``."""
    eps0, eps1 = epsilons(y, history, theta1)
    s0, s1 = theta0.sigma, theta1.sigma
    return 0.5 * np.log(s0**2 / s1**2) - eps1**2 / (2 * s1**2) + eps0**2 / (2 * s0**2)


@dataclass
class CusumOracleState:
    theta0: Theta
    theta1: Theta
    g: float = 0.0
    history: np.ndarray = None

    def __post_init__(self):
        if self.history is None:
            self.history = np.zeros(self.theta1.p)


def cusum_step(state: CusumOracleState, y: float) -> float:
    """``g <- max(g + s_k, 0)``; returns the new statistic."""
    s = llr_term(y, state.history, state.theta0, state.theta1)
    state.g = max(state.g + float(s), 0.0)
    state.history = np.concatenate([[y], state.history[:-1]])
    return state.g


def cusum_first_alarm(y, theta0: Theta, theta1: Theta, h: float) -> np.ndarray:
    """First tick with ``g >= h`` for each row of ``y`` (shape ``(..., T)``), -1 if none.

    Samples before the start of a row are taken as zero.
    """
    y = np.asarray(y, dtype=float)
    p = theta1.p
    pad = np.concatenate([np.zeros(y.shape[:-1] + (p,)), y], axis=-1)
    hist = sliding_window_view(pad[..., :-1], p, axis=-1)[..., ::-1]
    s = llr_term(y, hist, theta0, theta1)
    g = np.zeros(y.shape[:-1])
    alarm = np.full(y.shape[:-1], -1, dtype=np.int64)
    for t in range(y.shape[-1]):
        g = np.maximum(g + s[..., t], 0.0)
        alarm = np.where((g >= h) & (alarm < 0), t, alarm)
    return alarm


# ---------------------------------------------------------------------------
# GLLR


def score_vector(y, history, sigma_nu: float) -> np.ndarray:
    """Whitened score ``z~`` laid out as ``[y y_{-1}.. y y_{-p}, var term, mean term]``.

    ``history`` has trailing dimension p with ``history[..., j-1] = y_{t-j}``.
    """
    y = np.asarray(y, dtype=float)
    history = np.asarray(history, dtype=float)
    var = sigma_nu * sigma_nu
    ac = y[..., None] * history / var
    var_term = (y * y / var - 1.0) / SQRT2
    mean_term = y / sigma_nu
    return np.concatenate([ac, var_term[..., None], mean_term[..., None]], axis=-1)


def local_statistic(sum_z, N, b: float):
    """``b ||sum_z|| - N b^2 / 2``."""
    return b * np.linalg.norm(sum_z, axis=-1) - 0.5 * N * b * b


@dataclass
class GllrState:
    """Recursive GLLR tracker.

    ``restart`` marks that the next update opens a new window (N = 1).  It is
    set by the reset rule of whichever detector owns the state.
    """

    p: int
    sigma_nu: float
    b: float
    N: np.ndarray
    sum_z: np.ndarray
    stat: np.ndarray
    g: np.ndarray
    history: np.ndarray
    restart: np.ndarray

    @classmethod
    def fresh(cls, p: int, sigma_nu: float, b: float, shape=()) -> "GllrState":
        if p < 1:
            raise ValueError("p must be >= 1")
        if not sigma_nu > 0 or not b > 0:
            raise ValueError("sigma_nu and b must be positive")
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        return cls(
            p=p,
            sigma_nu=float(sigma_nu),
            b=float(b),
            N=np.zeros(shape, dtype=np.int64),
            sum_z=np.zeros(shape + (p + 2,)),
            stat=np.zeros(shape),
            g=np.zeros(shape),
            history=np.zeros(shape + (p,)),  # warm-up: missing lags are zero
            restart=np.ones(shape, dtype=bool),
        )

    @property
    def shape(self):
        return self.N.shape


def advance(state: GllrState, y, restart) -> np.ndarray:
    """Fold one sample into the window, opening a new one where ``restart`` is set.

    Returns the (unclamped) windowed statistic.  No reset decision is made here.
    """
    y = np.asarray(y, dtype=float)
    restart = np.asarray(restart, dtype=bool)
    z = score_vector(y, state.history, state.sigma_nu)
    state.sum_z = np.where(restart[..., None], z, state.sum_z + z)
    state.N = np.where(restart, 1, state.N + 1)
    if state.p > 1:
        state.history = np.concatenate([y[..., None], state.history[..., :-1]], axis=-1)
    else:
        state.history = y[..., None].copy()
    state.stat = local_statistic(state.sum_z, state.N, state.b)
    return state.stat


def advance_block(state: GllrState, ys) -> np.ndarray:
    """Fold a block of samples (last axis = time) into the open window without resets.

    Equivalent to calling :func:`advance` with ``restart=False`` for each sample;
    returns the statistic after every sample.
    """
    ys = np.asarray(ys, dtype=float)
    p = state.p
    n = ys.shape[-1]
    ext = np.concatenate([state.history[..., ::-1], ys], axis=-1)
    lags = np.stack([ext[..., p - j: p - j + n] for j in range(1, p + 1)], axis=-1)
    z = score_vector(ys, lags, state.sigma_nu)
    sums = state.sum_z[..., None, :] + np.cumsum(z, axis=-2)
    Ns = state.N[..., None] + np.arange(1, n + 1)
    stats = local_statistic(sums, Ns, state.b)
    state.sum_z = sums[..., -1, :]
    state.N = Ns[..., -1]
    state.history = ext[..., -1: -p - 1: -1]
    state.stat = stats[..., -1]
    return stats


def gllr_update(state: GllrState, y):
    """One GLLR step.  Returns ``(g, reset_flag)``.

    A nonpositive windowed statistic (ties included) resets the window at the
    next update.
    """
    stat = advance(state, y, state.restart)
    state.g = np.maximum(stat, 0.0)
    state.restart = stat <= 0.0
    return state.g, state.restart


def gllr_trace(samples, b: float, p: int = 1, sigma_nu: float = 1.0):
    """Run the GLLR recursion over a 1-D stream; returns ``(g, reset, N)`` arrays."""
    samples = np.asarray(samples, dtype=float)
    state = GllrState.fresh(p, sigma_nu, b)
    g = np.empty(len(samples))
    reset = np.empty(len(samples), dtype=bool)
    N = np.empty(len(samples), dtype=np.int64)
    for k, y in enumerate(samples):
        g[k], reset[k] = gllr_update(state, y)
        N[k] = state.N
    return g, reset, N


def first_alarm(statistic, h: float) -> Optional[int]:
    """Index of the first entry with ``statistic >= h``."""
    hits = np.flatnonzero(np.asarray(statistic) >= h)
    return int(hits[0]) if hits.size else None


def gllr_detect(stream, b: float, h: float, p: int = 1, sigma_nu: float = 1.0) -> Optional[int]:
    if not h > 0:
        raise ValueError("threshold h must be positive")
    samples = getattr(stream, "samples", stream)
    g, _, _ = gllr_trace(samples, b, p, sigma_nu)
    return first_alarm(g, h)


# ---------------------------------------------------------------------------
# block-processing baselines


@dataclass(frozen=True)
class RmsConfig:
    W: int = 64
    lower: float = 0.9
    upper: float = 1.1

    def __post_init__(self):
        if self.W < 2:
            raise ValueError("window must hold at least 2 samples")
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("RMS bounds must be finite")


@dataclass(frozen=True)
class StftConfig:
    W: int = 64
    fundamental_bin: int = 1
    threshold: float = 100.0

    def __post_init__(self):
        if self.W < 2 or self.W & (self.W - 1):
            raise ValueError("STFT window must be a power of two")
        if not 0 <= self.fundamental_bin < self.W // 2:
            raise ValueError("fundamental bin out of range")
        if not np.isfinite(self.threshold):
            raise ValueError("STFT threshold must be finite")


def rms_statistic(window, W: Optional[int] = None) -> float:
    window = np.asarray(window, dtype=float)
    if W is not None and len(window) != W:
        raise ValueError(f"window holds {len(window)} samples, expected {W}")
    return float(np.sqrt(np.mean(window**2)))


def stft_statistic(window, fundamental_bin: int, W: Optional[int] = None) -> float:
    """Largest off-fundamental bin energy of the window's DFT (DC excluded)."""
    window = np.asarray(window, dtype=float)
    if W is not None and len(window) != W:
        raise ValueError(f"window holds {len(window)} samples, expected {W}")
    return float(_band_energy(window[None, :], fundamental_bin)[0])


def _band_energy(windows, fundamental_bin: int):
    power = np.abs(np.fft.rfft(windows, axis=-1)) ** 2
    power[..., 0] = 0.0
    power[..., fundamental_bin] = 0.0
    return power.max(axis=-1)


def rms_trace(samples, W: int) -> np.ndarray:
    """RMS of every full sliding window; entry k covers samples ``k-W+1..k`` (NaN before)."""
    samples = np.asarray(samples, dtype=float)
    out = np.full(len(samples), np.nan)
    if len(samples) >= W:
        out[W - 1:] = np.sqrt(np.mean(sliding_window_view(samples**2, W), axis=-1))
    return out


def stft_trace(samples, W: int, fundamental_bin: int) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    out = np.full(len(samples), np.nan)
    if len(samples) >= W:
        out[W - 1:] = _band_energy(sliding_window_view(samples, W), fundamental_bin)
    return out


def rms_detect(samples, cfg: RmsConfig) -> Optional[int]:
    q = rms_trace(samples, cfg.W)
    hits = np.flatnonzero((q < cfg.lower) | (q > cfg.upper))
    return int(hits[0]) if hits.size else None


def stft_detect(samples, cfg: StftConfig) -> Optional[int]:
    return first_alarm(np.nan_to_num(stft_trace(samples, cfg.W, cfg.fundamental_bin), nan=-np.inf),
                       cfg.threshold)
