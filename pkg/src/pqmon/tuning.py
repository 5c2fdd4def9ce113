"""Choosing the drift parameter b, the threshold h and the LTS band."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .signal import AmplitudeSag, ArProcess, NoiseParams, ScenarioConfig, ar_autocovariance
from .simnet import DetectorSpec, arl_curve, noise_source, sweep


class DetectabilityWarning(UserWarning):
    """b lies outside (0, 2 min rho): some meter has nonpositive post-change drift."""


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TuningInputs:
    """Post-change second-order statistics of one meter's observations."""

    autocov: Tuple[float, ...]  # R(0..p)
    mean_shift: float
    sigma_nu: float

    def __post_init__(self):
        object.__setattr__(self, "autocov", tuple(float(r) for r in self.autocov))
        if len(self.autocov) < 2:
            raise ValueError("need R(0..p) with p >= 1")
        if self.autocov[0] < 0:
            raise ValueError("R(0) must be nonnegative")
        if not self.sigma_nu > 0:
            raise ValueError("sigma_nu must be positive")

    @property
    def p(self) -> int:
        return len(self.autocov) - 1


@dataclass
class TuningResult:
    rho: List[float]
    b: float
    h: float
    delta: Tuple[float, float]
    achieved_tau0: Optional[float] = None
    feasible: bool = True

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def rho_of_meter(inputs: TuningInputs) -> float:
    """Asymptotic growth rate of ``||sum z~|| / N`` under the post-change law."""
    R = np.asarray(inputs.autocov)
    m2 = inputs.mean_shift**2
    var = inputs.sigma_nu**2
    ac = np.sum(((R[1:] + m2) / var) ** 2)
    vt = ((R[0] + m2 - var) / (SQRT2 * var)) ** 2
    return float(np.sqrt(ac + vt + m2 / var))


SQRT2 = math.sqrt(2.0)


def choose_b(rho_min: Sequence[float]) -> float:
    """Mean of the per-meter worst-case rates; warns when detectability fails somewhere."""
    rho = np.asarray(rho_min, dtype=float)
    if rho.size == 0 or np.any(rho < 0):
        raise ValueError("rho values must be nonnegative")
    if not np.any(rho > 0):
        raise ValueError("all rho are zero: no meter can detect the disturbance")
    b = float(rho.mean())
    if b >= 2 * rho.min():
        warnings.warn(f"b={b:.4g} >= 2 min(rho)={2 * rho.min():.4g}; detectability fails at some meter",
                      DetectabilityWarning, stacklevel=2)
    return b


def is_detectable(b: float, rho: Sequence[float]) -> bool:
    return 0 < b < 2 * min(rho)


def threshold_for_gamma(gamma: float) -> float:
    if not gamma > 1:
        raise ValueError("target false-alarm period must exceed 1")
    return math.log(gamma)


def tuning_inputs_for(kind, noise: NoiseParams, p: int, samples_per_cycle: int = 64, a0: float = 1.0):
    """Analytic post-change statistics of one meter's residual.

    AR disturbances use their Yule-Walker autocovariances; a sag contributes a
    sinusoid of amplitude ``(1 - s) a0`` whose time-averaged autocovariance is
    ``A^2/2 cos(2 pi m / samples_per_cycle)``.
    """
    var = noise.sigma_nu**2
    if isinstance(kind, ArProcess):
        ar = kind.ar
        R = ar_autocovariance(ar.coeffs, ar.sigma_w, p)
        mean = ar.mean_tilde
    elif isinstance(kind, AmplitudeSag):
        A = (1.0 - kind.scale) * a0
        R = 0.5 * A * A * np.cos(2 * np.pi * np.arange(p + 1) / samples_per_cycle)
        mean = 0.0
    else:
        raise TypeError(f"no analytic statistics for {type(kind).__name__}; estimate them from data")
    R = np.array(R, dtype=float)
    R[0] += var
    return TuningInputs(tuple(R), mean, noise.sigma_nu)


def estimate_tuning_inputs(samples, p: int, sigma_nu: float) -> TuningInputs:
    """Sample autocovariances and mean of a labelled post-change segment."""
    x = np.asarray(samples, dtype=float)
    if len(x) <= p:
        raise ValueError("segment shorter than the model order")
    mean = x.mean()
    c = x - mean
    R = [float(np.dot(c[m:], c[: len(c) - m]) / len(c)) for m in range(p + 1)]
    return TuningInputs(tuple(R), float(mean), sigma_nu)


def scenario_rhos(scenario: ScenarioConfig, p: int) -> List[float]:
    return [rho_of_meter(tuning_inputs_for(k, scenario.noise, p, scenario.nominal.samples_per_cycle,
                                           scenario.nominal.a0))
            for k in scenario.per_meter]


# ---------------------------------------------------------------------------
# simulation-based calibration


def mean_comm_interval(delta: float, spec: DetectorSpec, L: int, seed, paths: int = 100,
                       length: int = 1000) -> float:
    """Mean gap between bits on pure noise with band ``[-delta, delta]`` (no alarms)."""
    s = spec.with_(kind="lts", delta_up=delta, delta_down=delta, h=1e300)
    res = sweep(s, L, noise_source(L, s.sigma_nu, seed, paths, phase=2), length, [s.h], paths)
    count = res.gap_count.sum()
    return float(res.gap_sum.sum() / count) if count else math.inf


def calibrate_delta(target_tau0: float, spec: DetectorSpec, L: int = 3, seed=0, paths: int = 100,
                    length: int = 1000, lo: float = 1e-3, hi: float = 1e3, iters: int = 60,
                    rtol: float = 0.05) -> Tuple[float, float, float]:
    """Symmetric band whose pure-noise mean bit interval hits ``target_tau0``.

    Bisection on common random numbers over ``paths x length`` samples.  Returns
    ``(delta_up, delta_down, achieved)``.
    """
    if target_tau0 < 1:
        raise ValueError("cannot transmit more often than once per sample")

    def f(d):
        return mean_comm_interval(d, spec, L, seed, paths, length)

    f_lo, f_hi = f(lo), f(hi)
    if abs(f_lo - target_tau0) <= rtol * target_tau0:
        return lo, lo, f_lo
    if not f_lo <= target_tau0 <= f_hi:
        raise CalibrationError(f"target {target_tau0} outside achievable range [{f_lo:.4g}, {f_hi:.4g}]")
    best = (math.inf, hi, f_hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        err = abs(val - target_tau0)
        if err < best[0]:
            best = (err, mid, val)
        if err <= 1e-3 * target_tau0 or hi - lo < 1e-6:
            break
        if val < target_tau0:
            lo = mid
        else:
            hi = mid
    err, delta, achieved = best
    if err > rtol * target_tau0:
        raise CalibrationError(f"best band {delta:.4g} gives {achieved:.4g}, not within {rtol:.0%} of target")
    return delta, delta, achieved


def threshold_bracket(spec: DetectorSpec, L: int, gamma: float, trials: int = 500, seed=0,
                      lo: float = 0.05, hi: Optional[float] = None, rounds: int = 5, points: int = 9,
                      horizon: Optional[int] = None, max_expand: int = 6):
    """Thresholds on either side of the first step where the pure-noise mean alarm time reaches ``gamma``.

    For a fixed seed the empirical mean first-alarm time is a nondecreasing
    step function of h, so the bracket is refined on a small grid each round.
    Returns ``((h_below, far_below), (h_above, far_above))``; the first pair is
    ``(None, None)`` when even the smallest threshold tried reaches ``gamma``.
    """
    if not gamma > 1:
        raise ValueError("target false-alarm period must exceed 1")
    hi = hi if hi is not None else math.log(gamma) + 4.0
    horizon = horizon or int(20 * gamma)
    below = (None, None)
    above_pt = None
    expand = 0
    refine = 0
    while refine < rounds:
        grid = np.linspace(lo, hi, points)
        arl, _, _ = arl_curve(spec, L, grid, trials, seed, horizon)
        above = np.flatnonzero(arl >= gamma)
        if above.size == 0:
            expand += 1
            if expand > max_expand:
                raise CalibrationError(f"mean alarm time {arl[-1]:.4g} at h={hi:.4g} is still below {gamma}")
            below = (float(grid[-1]), float(arl[-1]))
            lo, hi = hi, hi + 4.0 * expand
            continue
        j = above[0]
        above_pt = (float(grid[j]), float(arl[j]))
        if j == 0:
            break
        below = (float(grid[j - 1]), float(arl[j - 1]))
        lo, hi = grid[j - 1], grid[j]
        refine += 1
    return below, above_pt


def calibrate_threshold(spec: DetectorSpec, L: int, gamma: float, trials: int = 500, seed=0,
                        rule: str = "at_least", **kw) -> Tuple[float, float]:
    """Threshold whose measured pure-noise mean alarm time matches ``gamma``.

    ``rule="at_least"`` returns the smallest h reaching ``gamma``;
    ``rule="nearest"`` takes the step just below instead when its mean is
    closer to ``gamma`` on a log scale.  Returns ``(h, measured_far)``.
    """
    if rule not in ("nearest", "at_least"):
        raise ValueError(f"unknown rule {rule!r}")
    below, above = threshold_bracket(spec, L, gamma, trials, seed, **kw)
    if rule == "nearest" and below[0] is not None and below[1] > 0:
        if abs(math.log(below[1] / gamma)) < abs(math.log(above[1] / gamma)):
            return below
    return above
