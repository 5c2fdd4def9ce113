"""YAML run configuration.

A config file is a mapping with optional top-level keys ``seed``,
``scenario``, ``detector`` and ``experiment``::

    seed: 7
    scenario:
      nominal: {a0: 1.0, f0: 60.0, phi0: 0.0, samples_per_cycle: 64}
      noise: {sigma_nu: 1.0}
      t0: 100
      horizon: 400
      t1: null
      meters:
        - {kind: ar, coeffs: [0.9], mean_tilde: 0.0, sigma_w: 1.0, count: 3}
        - {kind: sag, scale: 0.2}
        - {kind: ring, amplitude: 0.5, freq_hz: 600.0, damping: 200.0}
    detector: {b: 0.5, h: 7.6, p: 1, sigma_nu: 1.0, tau: 14, delta_up: 1.6, delta_down: 1.6}
    experiment:
      trials: 500
      gammas: [100, 500, 2000]

``count`` repeats a meter entry.  Unknown keys are rejected.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .signal import AmplitudeSag, ArParams, ArProcess, NoiseParams, NominalParams, ScenarioConfig, TransientRing


class ConfigError(ValueError):
    pass


TOP_KEYS = {"seed", "scenario", "detector", "experiment"}
SCENARIO_KEYS = {"nominal", "noise", "t0", "horizon", "t1", "meters"}
DETECTOR_KEYS = {"b", "h", "p", "sigma_nu", "tau", "delta_up", "delta_down"}
EXPERIMENT_KEYS = {"trials", "far_trials", "gammas", "gamma", "specs", "Ls", "sigma_nu2s", "L",
                   "target_tau0", "paths", "length", "cal_trials"}
METER_KEYS = {
    "ar": {"coeffs", "mean_tilde", "sigma_w"},
    "sag": {"scale"},
    "ring": {"amplitude", "freq_hz", "damping"},
}


@dataclass
class RunConfig:
    raw: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    scenario: Optional[ScenarioConfig] = None
    detector: Dict[str, Any] = field(default_factory=dict)
    experiment: Dict[str, Any] = field(default_factory=dict)

    def digest(self) -> str:
        return config_hash(self.raw)


def config_hash(raw) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def _meter(entry, i):
    _check_keys(entry, {"kind", "count"} | set().union(*METER_KEYS.values()), f"scenario.meters[{i}]")
    kind = entry.get("kind")
    if kind not in METER_KEYS:
        raise ConfigError(f"scenario.meters[{i}]: kind must be one of {sorted(METER_KEYS)}")
    params = {k: v for k, v in entry.items() if k not in ("kind", "count")}
    _check_keys(params, METER_KEYS[kind], f"scenario.meters[{i}] ({kind})")
    if kind == "ar":
        return ArProcess(ArParams(tuple(params.get("coeffs", ())), params.get("mean_tilde", 0.0),
                                  params.get("sigma_w", 1.0)))
    if kind == "sag":
        return AmplitudeSag(params["scale"])
    return TransientRing(params["amplitude"], params["freq_hz"], params["damping"])


def scenario_from_dict(d: dict, seed=0) -> ScenarioConfig:
    _check_keys(d, SCENARIO_KEYS, "scenario")
    for key in ("t0", "horizon", "meters"):
        if key not in d:
            raise ConfigError(f"scenario.{key} is required")
    meters = []
    for i, entry in enumerate(d["meters"]):
        count = entry.get("count", 1) if isinstance(entry, dict) else 1
        if not isinstance(count, int) or count < 1:
            raise ConfigError(f"scenario.meters[{i}].count must be a positive integer")
        meters.extend([_meter(entry, i)] * count)
    nominal = d.get("nominal") or {}
    noise = d.get("noise") or {}
    _check_keys(nominal, {"a0", "f0", "phi0", "samples_per_cycle"}, "scenario.nominal")
    _check_keys(noise, {"sigma_nu"}, "scenario.noise")
    return ScenarioConfig(NominalParams(**nominal), NoiseParams(**noise), tuple(meters),
                          t0=int(d["t0"]), horizon=int(d["horizon"]),
                          t1=None if d.get("t1") is None else int(d["t1"]), seed=seed)


def from_dict(raw: dict) -> RunConfig:
    raw = raw or {}
    _check_keys(raw, TOP_KEYS, "config")
    seed = raw.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ConfigError("seed must be a nonnegative integer")
    try:
        scenario = scenario_from_dict(raw["scenario"], seed or 0) if raw.get("scenario") else None
        det = raw.get("detector") or {}
        _check_keys(det, DETECTOR_KEYS, "detector")
        exp = raw.get("experiment") or {}
        _check_keys(exp, EXPERIMENT_KEYS, "experiment")
    except (TypeError, KeyError) as e:
        raise ConfigError(f"malformed config: {e}") from None
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from None
    return RunConfig(raw=raw, seed=seed, scenario=scenario, detector=dict(det), experiment=dict(exp))


def load(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(raw or {})
