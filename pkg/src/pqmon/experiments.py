"""Benchmark scenarios and the drivers behind the comparison curves."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .signal import AmplitudeSag, ArParams, ArProcess, NoiseParams, NominalParams, ScenarioConfig
from .simnet import DetectorSpec, arl_curve, mc_sweep
from .tuning import threshold_bracket, threshold_for_gamma


def ar1_benchmark(L: int = 1, a1: float = 0.9, sigma_w: float = 1.0, sigma_nu: float = 1.0,
                  t0: int = 100, horizon: int = 400, seed=0) -> ScenarioConfig:
    """Every meter sees the same AR(1) law after ``t0``."""
    ar = ArProcess(ArParams((a1,), 0.0, sigma_w))
    return ScenarioConfig(NominalParams(), NoiseParams(sigma_nu), (ar,) * L, t0=t0, horizon=horizon, seed=seed)


SAG_SCALES = (0.1, 0.2, 0.3)


def sag_benchmark(L: int = 3, sigma_nu2: float = 1.0, t0: int = 0, post: int = 3000,
                  scales: Sequence[float] = SAG_SCALES, seed=0) -> ScenarioConfig:
    """Amplitude sag seen with a different depth at each meter (depths cycle through ``scales``)."""
    kinds = tuple(AmplitudeSag(scales[i % len(scales)]) for i in range(L))
    return ScenarioConfig(NominalParams(), NoiseParams(math.sqrt(sigma_nu2)), kinds, t0=t0,
                          horizon=t0 + post, seed=seed)


def meters_for(spec: DetectorSpec, L: int) -> int:
    return 1 if spec.kind == "single" else L


# ---------------------------------------------------------------------------
# delay at a measured false-alarm period


@dataclass
class MatchedDelay:
    spec: str
    L: int
    gamma: float
    h_below: Optional[float]
    far_below: Optional[float]
    h_above: float
    far_above: float
    weight: float  # share of the upper bracket point in the interpolation
    delay_below: float
    delay_above: float
    mean_delay: float
    se_delay: float
    trials: int
    false_alarms: int
    mean_tau_pre: float
    mean_tau_post: float

    def to_dict(self) -> dict:
        return asdict(self)


def matched_delay(template: ScenarioConfig, spec: DetectorSpec, gamma: float, trials: int, seed,
                  cal_trials: Optional[int] = None, cal_seed=None, rounds: int = 4) -> MatchedDelay:
    """Mean delay at the threshold whose measured false-alarm period equals ``gamma``.

    The threshold is bracketed on pure noise.  Statistics that move on a
    lattice (level-triggered sampling) have a step-shaped false-alarm curve, so
    the delay is interpolated linearly in ``log(false-alarm period)`` between
    the two bracketing steps; for continuous statistics the bracket is tight
    and the interpolation is immaterial.  The reported standard error is the
    same convex combination of the two endpoint errors, which bounds the error
    of the interpolated mean since both use the same trials.
    """
    cal_trials = cal_trials or trials
    cal_seed = seed if cal_seed is None else cal_seed
    (h_lo, f_lo), (h_hi, f_hi) = threshold_bracket(spec, template.num_meters, gamma, cal_trials, cal_seed,
                                                   rounds=rounds)
    hs = [h_hi] if h_lo is None else [h_lo, h_hi]
    res = mc_sweep(template, spec, trials, seed, hs, measure_far=False)
    top = res[-1]
    if h_lo is None or f_hi <= f_lo:
        w = 1.0
    else:
        w = float(np.clip(math.log(gamma / f_lo) / math.log(f_hi / f_lo), 0.0, 1.0))
    bot = res[0]
    return MatchedDelay(
        spec=spec.name, L=template.num_meters, gamma=gamma,
        h_below=h_lo, far_below=f_lo, h_above=h_hi, far_above=f_hi, weight=w,
        delay_below=bot.mean_delay, delay_above=top.mean_delay,
        mean_delay=(1 - w) * bot.mean_delay + w * top.mean_delay,
        se_delay=(1 - w) * bot.se_delay + w * top.se_delay,
        trials=trials, false_alarms=top.false_alarms,
        mean_tau_pre=top.mean_tau_pre, mean_tau_post=top.mean_tau_post,
    )


ORDERING_SPECS = ("gllr", "cgllr", "elts", "lts", "ugllr")


def ordering_experiment(gamma: float = 2000.0, trials: int = 600, seed=0, L: int = 3,
                        cal_trials: int = 500, names: Sequence[str] = ORDERING_SPECS,
                        **spec_params) -> Dict[str, MatchedDelay]:
    """Delays of the single, centralized, level-triggered and uniform detectors at one false-alarm period."""
    out = {}
    for name in names:
        spec = DetectorSpec.from_name(name, **spec_params)
        template = ar1_benchmark(meters_for(spec, L), sigma_nu=spec.sigma_nu)
        out[name] = matched_delay(template, spec, gamma, trials, seed, cal_trials=cal_trials)
    return out


def significantly_less(a: MatchedDelay, b: MatchedDelay, k: float = 2.0) -> bool:
    return a.mean_delay - b.mean_delay < -k * math.hypot(a.se_delay, b.se_delay)


def not_significantly_greater(a: MatchedDelay, b: MatchedDelay, k: float = 2.0) -> bool:
    return a.mean_delay - b.mean_delay <= k * math.hypot(a.se_delay, b.se_delay)


# ---------------------------------------------------------------------------
# curves


CURVE_COLUMNS = ("spec", "gamma", "h", "L", "mean_delay", "mean_far", "mean_tau_pre", "mean_tau_post",
                 "trials", "censored")


def delay_vs_far_curve(scenario: ScenarioConfig, specs: Sequence[DetectorSpec], gammas: Sequence[float],
                       trials: int, seed, far_trials: Optional[int] = None,
                       measure_far: bool = True) -> List[dict]:
    """Mean delay and measured false-alarm period at ``h = ln gamma`` for every spec."""
    hs = [threshold_for_gamma(g) for g in gammas]
    rows = []
    for spec in specs:
        sc = scenario
        if spec.kind == "single" and scenario.num_meters > 1:
            sc = replace(scenario, per_meter=scenario.per_meter[:1])
        for g, r in zip(gammas, mc_sweep(sc, spec, trials, seed, hs, far_trials=far_trials,
                                         measure_far=measure_far)):
            rows.append(_row(r, g))
    return rows


def _row(r, gamma) -> dict:
    return dict(spec=r.spec, gamma=float(gamma), h=r.h, L=r.L, mean_delay=r.mean_delay, mean_far=r.mean_far,
                mean_tau_pre=r.mean_tau_pre, mean_tau_post=r.mean_tau_post, trials=r.trials,
                censored=r.censored, se_delay=r.se_delay)


def meters_scaling_curve(specs: Sequence[DetectorSpec], Ls: Sequence[int], sigma_nu2s: Sequence[float],
                         gamma: float, trials: int, seed,
                         scenario: Callable[..., ScenarioConfig] = sag_benchmark) -> List[dict]:
    """Mean delay per (spec, L, noise variance) at ``h = ln gamma``.

    ``scenario(L=..., sigma_nu2=...)`` builds the template for each grid point.
    """
    h = threshold_for_gamma(gamma)
    rows = []
    for spec in specs:
        for s2 in sigma_nu2s:
            s = spec.with_(sigma_nu=math.sqrt(s2), h=h)
            for L in Ls:
                sc = scenario(L=meters_for(s, L), sigma_nu2=s2)
                r = mc_sweep(sc, s, trials, seed, [h], measure_far=False)[0]
                row = _row(r, gamma)
                row.update(L=L, sigma_nu2=float(s2))
                rows.append(row)
    return rows


def far_rule_check(spec: DetectorSpec, L: int, gammas: Sequence[float], trials: int, seed,
                   horizon_factor: float = 20.0) -> List[dict]:
    """Measured false-alarm period at ``h = ln gamma`` on pure noise."""
    rows = []
    for g in gammas:
        h = threshold_for_gamma(g)
        arl, se, cens = arl_curve(spec.with_(h=h), meters_for(spec, L), [h], trials, seed,
                                  int(horizon_factor * g))
        rows.append(dict(spec=spec.name, gamma=float(g), h=h, mean_far=float(arl[0]), se_far=float(se[0]),
                         censored=cens))
    return rows
