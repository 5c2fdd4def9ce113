"""Tick-based orchestration of meters, fusion centre and the reset/alarm loop.

Per tick the order is fixed: every meter takes its sample, meters emit their
messages, the centre updates, and any reset it broadcasts takes effect at the
meters' next sample.

Trials are driven either one at a time (:func:`run_trial`) or as a batch with a
leading trial axis (:func:`sweep`).  The batch driver never stops on an alarm;
since a detector's trajectory before its first alarm does not depend on the
threshold, the first crossing of each threshold in a grid gives the exact
alarm tick a stopping run would have produced.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .detectors import GllrState, gllr_update
from .fusion import CentralizedState, UniformState, centralized_update, uniform_update
from .lts import LtsCentralState, LtsMeterState, Mode, lts_central_step, lts_meter_step
from .signal import ScenarioConfig, meter_rngs, synthesize_scenario

KINDS = ("single", "centralized", "uniform", "lts")
SPEC_NAMES = {
    "gllr": dict(kind="single"),
    "cgllr": dict(kind="centralized"),
    "ugllr": dict(kind="uniform"),
    "lts": dict(kind="lts", mode=Mode.ORIGINAL),
    "elts": dict(kind="lts", mode=Mode.ENHANCED),
}


@dataclass(frozen=True)
class DetectorSpec:
    kind: str
    b: float = 0.5
    h: float = math.log(2000.0)
    p: int = 1
    sigma_nu: float = 1.0
    tau: int = 14
    mode: Mode = Mode.ENHANCED
    delta_up: float = 1.6
    delta_down: float = 1.6

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        object.__setattr__(self, "mode", Mode(self.mode))
        if not (self.b > 0 and self.h > 0 and self.sigma_nu > 0):
            raise ValueError("b, h and sigma_nu must be positive")
        if self.p < 1 or self.tau < 1:
            raise ValueError("p and tau must be >= 1")
        if not (self.delta_up > 0 and self.delta_down > 0):
            raise ValueError("LTS band half-widths must be positive")

    @classmethod
    def from_name(cls, name: str, **params) -> "DetectorSpec":
        try:
            base = SPEC_NAMES[name]
        except KeyError:
            raise ValueError(f"unknown detector {name!r}; choose from {sorted(SPEC_NAMES)}") from None
        return cls(**{**base, **params})

    @property
    def name(self) -> str:
        if self.kind == "lts":
            return "elts" if self.mode is Mode.ENHANCED else "lts"
        return {"single": "gllr", "centralized": "cgllr", "uniform": "ugllr"}[self.kind]

    def with_(self, **changes) -> "DetectorSpec":
        return replace(self, **changes)


class Network:
    """Batched runtime for one detector spec over L meters."""

    def __init__(self, spec: DetectorSpec, L: int, batch=()):
        self.spec = spec
        self.L = L
        self.batch = (batch,) if isinstance(batch, (int, np.integer)) else tuple(batch)
        s = spec
        if s.kind == "single":
            self.state = GllrState.fresh(s.p, s.sigma_nu, s.b, self.batch)
        elif s.kind == "centralized":
            self.state = CentralizedState.fresh(L, s.p, s.sigma_nu, s.b, s.h, self.batch)
        elif s.kind == "uniform":
            self.state = UniformState.fresh(L, s.p, s.sigma_nu, s.b, s.h, s.tau, self.batch)
        else:
            self.meters = LtsMeterState.fresh(s.p, s.sigma_nu, s.b, s.delta_up, s.delta_down, s.mode,
                                              self.batch + (L,))
            self.central = LtsCentralState.fresh(s.h, s.delta_up, s.delta_down, self.batch)
            self.pending = np.zeros(self.batch, dtype=bool)
        self.tick = 0
        self.bits = np.zeros(self.batch + (L,), dtype=np.int8)

    def step(self, obs):
        """Advance one tick.  Returns ``(g, reset, sent)``; ``sent`` flags transmissions per meter."""
        kind = self.spec.kind
        t = self.tick
        self.tick += 1
        if kind == "single":
            g, reset = gllr_update(self.state, obs[..., 0])
            sent = np.zeros(self.batch + (self.L,), dtype=bool)
        elif kind == "centralized":
            g, reset, _ = centralized_update(self.state, obs)
            sent = np.ones(self.batch + (self.L,), dtype=bool)
        elif kind == "uniform":
            g, _ = uniform_update(self.state, obs)
            reset = self.state.restart
            sent = np.full(self.batch + (self.L,), self.state.is_refresh(t))
        else:
            self.bits = lts_meter_step(self.meters, obs, np.broadcast_to(self.pending[..., None],
                                                                        self.batch + (self.L,)))
            reset, _ = lts_central_step(self.central, self.bits)
            self.pending = reset
            g = self.central.s_global
            sent = self.bits != 0
        return g, reset, sent

    def local_statistics(self) -> np.ndarray:
        kind = self.spec.kind
        if kind == "single":
            return self.state.stat[..., None]
        if kind in ("centralized", "uniform"):
            return self.state.local
        return self.meters.inner.stat


# ---------------------------------------------------------------------------
# single trials


@dataclass
class Trace:
    kind: str
    ticks: List[int] = field(default_factory=list)
    statistic: List[float] = field(default_factory=list)
    reset: List[bool] = field(default_factory=list)
    alarm: List[bool] = field(default_factory=list)
    local: List[List[float]] = field(default_factory=list)
    messages: List[Tuple[int, int, int]] = field(default_factory=list)


@dataclass
class TrialOutcome:
    spec: str
    t0: int
    alarm_tick: Optional[int]
    delay: Optional[int]
    false_alarm: bool
    bits_sent: Tuple[int, ...]
    comm_intervals: Tuple[Tuple[int, ...], ...]
    ticks_run: int
    trace: Optional[Trace] = field(default=None, compare=False, repr=False)

    @property
    def censored(self) -> bool:
        return self.alarm_tick is None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        d["bits_sent"] = list(self.bits_sent)
        d["comm_intervals"] = [list(c) for c in self.comm_intervals]
        return d


def outcome_from_alarm(t0: int, alarm: Optional[int]):
    if alarm is None:
        return None, False
    if alarm < t0:
        return None, True
    return alarm - t0, False


def run_trial(scenario: ScenarioConfig, spec: DetectorSpec, record: bool = False) -> TrialOutcome:
    """Synthesize the scenario's streams and run ``spec`` until its first alarm or the horizon."""
    streams = synthesize_scenario(scenario)
    data = np.stack([s.samples for s in streams])
    return run_streams(data, spec, t0=scenario.t0, record=record)


def run_streams(data, spec: DetectorSpec, t0: int = 0, record: bool = False) -> TrialOutcome:
    """Drive ``spec`` over an (L, T) array of residual samples."""
    data = np.asarray(data, dtype=float)
    L, T = data.shape
    net = Network(spec, L)
    h = spec.h
    trace = Trace(spec.kind) if record else None
    last_tx = np.full(L, -1)
    intervals = [[] for _ in range(L)]
    counts = np.zeros(L, dtype=np.int64)
    alarm = None
    t = -1
    for t in range(T):
        g, reset, sent = net.step(data[:, t])
        g = float(g)
        for ell in np.flatnonzero(sent):
            if last_tx[ell] >= 0:
                intervals[ell].append(int(t - last_tx[ell]))
            last_tx[ell] = t
            counts[ell] += 1
        fired = g >= h
        if spec.kind == "uniform" and not net.state.is_refresh(t):
            fired = False
        if record:
            trace.ticks.append(t)
            trace.statistic.append(g)
            trace.reset.append(bool(reset))
            trace.alarm.append(bool(fired))
            trace.local.append([float(v) for v in np.atleast_1d(net.local_statistics())])
            if spec.kind == "lts":
                trace.messages.extend((t, int(m), int(net.bits[m])) for m in np.flatnonzero(net.bits))
        if fired:
            alarm = t
            break
    delay, false_alarm = outcome_from_alarm(t0, alarm)
    return TrialOutcome(
        spec=spec.name,
        t0=t0,
        alarm_tick=alarm,
        delay=delay,
        false_alarm=false_alarm,
        bits_sent=tuple(int(c) for c in counts),
        comm_intervals=tuple(tuple(i) for i in intervals),
        ticks_run=t + 1,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# batched sweeps


@dataclass
class SweepResult:
    thresholds: np.ndarray
    crossing: np.ndarray  # (B, H) first tick with g >= h, -1 if none
    ticks_run: int
    gap_sum: np.ndarray  # (2, B, L, H) pre/post-change sums of inter-transmission gaps
    gap_count: np.ndarray


def sweep(spec: DetectorSpec, L: int, source: Callable[[int, int], np.ndarray], n_ticks: int,
          thresholds: Sequence[float], batch: int, t_split: Optional[int] = None,
          chunk: int = 512) -> SweepResult:
    """Run ``batch`` trials in lockstep, recording the first crossing of every threshold.

    ``source(start, stop)`` returns observations of shape ``(batch, L, stop - start)``.
    Gaps between consecutive transmissions are accumulated per threshold only
    up to that threshold's alarm.
    Stops early once every trial has crossed every threshold.
    """
    hs = np.asarray(thresholds, dtype=float)
    H = len(hs)
    net = Network(spec, L, batch)
    crossing = np.full((batch, H), -1, dtype=np.int64)
    last_tx = np.full((batch, L), -1, dtype=np.int64)
    gap_sum = np.zeros((2, batch, L, H))
    gap_count = np.zeros((2, batch, L, H), dtype=np.int64)
    split = n_ticks if t_split is None else t_split
    t = 0
    while t < n_ticks:
        stop = min(t + chunk, n_ticks)
        block = source(t, stop)
        for i in range(stop - t):
            tick = t + i
            g, _, sent = net.step(block[:, :, i])
            if spec.kind == "uniform" and not net.state.is_refresh(tick):
                hit = np.zeros((batch, H), dtype=bool)
            else:
                hit = g[:, None] >= hs[None, :]
            active = crossing < 0
            if sent.any():
                gaps = np.where(sent, tick - last_tx, 0)
                phase = 0 if tick < split else 1
                w = (sent & (last_tx >= 0))[:, :, None] & active[:, None, :]
                gap_sum[phase] += np.where(w, gaps[:, :, None], 0)
                gap_count[phase] += w
                last_tx = np.where(sent, tick, last_tx)
            crossing = np.where(hit & active, tick, crossing)
        t = stop
        if (crossing >= 0).all():
            break
    return SweepResult(hs, crossing, t, gap_sum, gap_count)


def trial_seed(seed, phase: int, i: int) -> Tuple[int, ...]:
    base = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    return base + (phase, i)


def scenario_source(template: ScenarioConfig, seed, trials: int, phase: int = 0):
    data = np.stack([
        np.stack([s.samples for s in synthesize_scenario(template.with_seed(trial_seed(seed, phase, i)))])
        for i in range(trials)
    ])
    return lambda a, b: data[:, :, a:b]


def noise_source(L: int, sigma_nu: float, seed, trials: int, phase: int = 1):
    """Pure-noise observations drawn lazily, matching the pre-change draws of each trial's scenario."""
    rngs = [meter_rngs(trial_seed(seed, phase, i), L) for i in range(trials)]

    def source(a, b):
        return np.stack([[sigma_nu * r.standard_normal(b - a) for r in meters] for meters in rngs])

    return source


@dataclass
class MonteCarloResult:
    spec: str
    h: float
    L: int
    trials: int
    mean_delay: float
    se_delay: float
    delays: List[int]
    false_alarms: int
    censored: int
    mean_far: float
    se_far: float
    far_censored: int
    stopping_times: List[int]
    mean_tau_pre: float
    mean_tau_post: float

    @property
    def gamma_assumed(self) -> float:
        return math.exp(self.h)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("delays")
        d.pop("stopping_times")
        d["gamma_assumed"] = self.gamma_assumed
        return d


def _mean_se(values) -> Tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else math.nan
    return float(v.mean()), float(se)


def _ratio(num, den) -> float:
    return float(num / den) if den else math.nan


def mc_sweep(template: ScenarioConfig, spec: DetectorSpec, trials: int, seed, thresholds: Sequence[float],
             far_trials: Optional[int] = None, far_horizon: Optional[int] = None,
             measure_far: bool = True) -> List[MonteCarloResult]:
    """Monte Carlo delay and false-alarm period for each threshold in a grid."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hs = np.asarray(thresholds, dtype=float)
    L = template.num_meters
    spec_l = spec.with_(h=float(hs.max()))
    res = sweep(spec_l, L, scenario_source(template, seed, trials), template.horizon, hs, trials,
                t_split=template.t0)
    far = None
    if measure_far:
        far_trials = far_trials or trials
        far_horizon = far_horizon or int(min(max(20 * math.exp(hs.max()), 2000), 400_000))
        far = sweep(spec_l, L, noise_source(L, spec.sigma_nu, seed, far_trials), far_horizon, hs, far_trials)
    out = []
    for j, h in enumerate(hs):
        c = res.crossing[:, j]
        delays = [int(x - template.t0) for x in c if x >= template.t0]
        mean_delay, se_delay = _mean_se(delays)
        g_sum, g_cnt = res.gap_sum[..., j], res.gap_count[..., j]
        if far is not None:
            fc = far.crossing[:, j]
            stops = [int(x + 1) if x >= 0 else far.ticks_run for x in fc]
            mean_far, se_far = _mean_se(stops)
            far_cens = int(np.sum(fc < 0))
        else:
            stops, mean_far, se_far, far_cens = [], math.nan, math.nan, 0
        if far is not None:
            # pure-noise runs are the cleaner source of pre-change message gaps
            pre = _ratio(far.gap_sum[..., j].sum(), far.gap_count[..., j].sum())
        else:
            pre = _ratio(g_sum[0].sum(), g_cnt[0].sum())
        out.append(MonteCarloResult(
            spec=spec.name, h=float(h), L=L, trials=trials,
            mean_delay=mean_delay, se_delay=se_delay, delays=delays,
            false_alarms=int(np.sum((c >= 0) & (c < template.t0))),
            censored=int(np.sum(c < 0)),
            mean_far=mean_far, se_far=se_far, far_censored=far_cens, stopping_times=stops,
            mean_tau_pre=pre,
            mean_tau_post=_ratio(g_sum[1].sum(), g_cnt[1].sum()),
        ))
    return out


def run_monte_carlo(template: ScenarioConfig, spec: DetectorSpec, trials: int, seed,
                    **kwargs) -> MonteCarloResult:
    """Average delay, measured false-alarm period and message gaps over seeded trials.

    Trial ``i`` uses seed ``(seed, 0, i)`` for the change scenario and
    ``(seed, 1, i)`` for its pure-noise false-alarm run.
    """
    return mc_sweep(template, spec, trials, seed, [spec.h], **kwargs)[0]


def arl_curve(spec: DetectorSpec, L: int, thresholds: Sequence[float], trials: int, seed,
              horizon: int) -> Tuple[np.ndarray, np.ndarray, int]:
    """Mean first-alarm time on pure noise for each threshold (censored runs count as ``horizon``)."""
    hs = np.asarray(thresholds, dtype=float)
    res = sweep(spec.with_(h=float(hs.max())), L, noise_source(L, spec.sigma_nu, seed, trials), horizon, hs,
                trials)
    stops = np.where(res.crossing >= 0, res.crossing + 1, res.ticks_run)
    return stops.mean(axis=0), stops.std(axis=0, ddof=1) / math.sqrt(trials), int((res.crossing < 0).sum())
