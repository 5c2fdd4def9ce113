"""Command-line interface: ``python -m pqmon <subcommand> ...``.

Exit status 0 on success, 2 on usage or validation errors, 1 on runtime
failures.  Every subcommand that writes files also writes ``manifest.json``;
``replay --manifest`` re-runs it and reproduces the outputs byte for byte.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from . import config as cfgmod
from . import experiments as ex
from . import io as pio
from .simnet import SPEC_NAMES, DetectorSpec, run_streams
from .signal import synthesize_scenario
from .tuning import (CalibrationError, TuningResult, calibrate_delta, choose_b, estimate_tuning_inputs,
                     is_detectable, rho_of_meter, scenario_rhos, threshold_for_gamma)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text: str) -> List[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = [n for n in names if n not in SPEC_NAMES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown detector(s) {bad}; choose from {sorted(SPEC_NAMES)}")
    return names


def _detector_flags(p):
    g = p.add_argument_group("detector")
    g.add_argument("--b", type=float)
    g.add_argument("--h", type=float)
    g.add_argument("--p", type=int)
    g.add_argument("--sigma-nu", type=float, dest="sigma_nu")
    g.add_argument("--tau", type=int)
    g.add_argument("--delta", type=float, help="symmetric LTS band half-width")
    g.add_argument("--delta-up", type=float, dest="delta_up")
    g.add_argument("--delta-down", type=float, dest="delta_down")


def _common(p, seed=True, config=True):
    if config:
        p.add_argument("--config", help="YAML run configuration")
    if seed:
        p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--json", action="store_true", help="write JSON instead of CSV where both exist")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pqmon", description="Sequential power-quality disturbance detection")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", help="synthesize one scenario and run a detector on it")
    _common(s)
    s.add_argument("--spec", required=True, choices=sorted(SPEC_NAMES))
    _detector_flags(s)

    d = sub.add_parser("detect", help="run a detector on a recorded stream CSV")
    _common(d, seed=False, config=True)
    d.add_argument("--input", required=True)
    d.add_argument("--spec", required=True, choices=sorted(SPEC_NAMES))
    d.add_argument("--t0", type=int, default=0, help="known change tick, for delay reporting")
    _detector_flags(d)

    t = sub.add_parser("tune", help="choose b, h and the LTS band")
    _common(t)
    t.add_argument("--gamma", type=float)
    t.add_argument("--target-tau0", type=float, dest="target_tau0")
    t.add_argument("--input", help="stream CSV to estimate post-change statistics from")
    t.add_argument("--post-start", type=int, dest="post_start", help="first post-change tick in --input")
    t.add_argument("--paths", type=int)
    t.add_argument("--length", type=int)
    t.add_argument("--L", type=int, help="meters used for band calibration")
    _detector_flags(t)

    e = sub.add_parser("evaluate", help="Monte Carlo curves")
    _common(e)
    e.add_argument("--curve", required=True, choices=["delay-vs-far", "meters-scaling", "far-rule"])
    e.add_argument("--specs", type=_names)
    e.add_argument("--gammas", type=_floats)
    e.add_argument("--gamma", type=float)
    e.add_argument("--trials", type=int)
    e.add_argument("--far-trials", type=int, dest="far_trials")
    e.add_argument("--L", type=int)
    e.add_argument("--Ls", type=_ints)
    e.add_argument("--sigma-nu2s", type=_floats, dest="sigma_nu2s")
    _detector_flags(e)

    c = sub.add_parser("compare", help="mean delays at a matched false-alarm period")
    _common(c)
    c.add_argument("--specs", type=_names)
    c.add_argument("--gamma", type=float)
    c.add_argument("--trials", type=int)
    c.add_argument("--cal-trials", type=int, dest="cal_trials")
    c.add_argument("--L", type=int)
    _detector_flags(c)

    r = sub.add_parser("replay", help="re-run a command from its manifest")
    r.add_argument("--manifest", required=True)
    r.add_argument("--out", help="output directory (default: alongside the manifest)")
    return ap


# ---------------------------------------------------------------------------
# helpers


def _load_config(args) -> cfgmod.RunConfig:
    raw = getattr(args, "_config_raw", None)
    if raw is not None:
        return cfgmod.from_dict(raw)
    if getattr(args, "config", None):
        return cfgmod.load(args.config)
    return cfgmod.RunConfig()


def _seed(args, cfg) -> int:
    seed = args.seed if getattr(args, "seed", None) is not None else cfg.seed
    if seed is None:
        raise UsageError(f"{args.command}: a seed is required (--seed or 'seed:' in the config)")
    if seed < 0:
        raise UsageError("seed must be nonnegative")
    return seed


def _detector_params(args, cfg, scenario=None) -> dict:
    params = dict(cfg.detector)
    if scenario is not None and "sigma_nu" not in params:
        params["sigma_nu"] = scenario.noise.sigma_nu
    for k in ("b", "h", "p", "sigma_nu", "tau", "delta_up", "delta_down"):
        v = getattr(args, k, None)
        if v is not None:
            params[k] = v
    if getattr(args, "delta", None) is not None:
        params["delta_up"] = params["delta_down"] = args.delta
    return params


def _spec(name, params) -> DetectorSpec:
    try:
        return DetectorSpec.from_name(name, **params)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid detector parameters: {e}") from None


def _need_scenario(cfg, args):
    if cfg.scenario is None:
        raise UsageError(f"{args.command}: config must define a scenario")
    return cfg.scenario


DEFAULTS = {
    "tune": dict(gamma=2000.0, target_tau0=14.0, paths=100, length=1000, L=3),
    "evaluate": dict(specs=list(ex.ORDERING_SPECS), gammas=[100.0, 500.0, 2000.0], gamma=2000.0, trials=500,
                     far_trials=None, L=3, Ls=[1, 2, 3, 4], sigma_nu2s=[0.5, 1.0]),
    "compare": dict(specs=list(ex.ORDERING_SPECS), gamma=2000.0, trials=600, cal_trials=500, L=3),
}


def _resolve(args, cfg):
    """Fill unset flags from the config's ``experiment`` section, then from built-in defaults."""
    for key, default in DEFAULTS.get(args.command, {}).items():
        if getattr(args, key, None) is None:
            val = cfg.experiment.get(key, default)
            if key == "specs" and val is not None:
                val = _names(",".join(val)) if not isinstance(val, str) else _names(val)
            setattr(args, key, val)


def _positive(name, value):
    if value is None or value < 1:
        raise UsageError(f"{name} must be >= 1")


# ---------------------------------------------------------------------------
# subcommands (each returns (files, console text))


def cmd_simulate(args, cfg):
    seed = _seed(args, cfg)
    scenario = _need_scenario(cfg, args).with_seed(seed)
    spec = _spec(args.spec, _detector_params(args, cfg, scenario))
    if spec.kind == "single" and scenario.num_meters > 1:
        scenario = replace(scenario, per_meter=scenario.per_meter[:1])
    data = np.stack([s.samples for s in synthesize_scenario(scenario)])
    out = run_streams(data, spec, t0=scenario.t0, record=True)
    files = {"outcome.json": pio.render_json(out.to_dict()), "stream.csv": pio.stream_csv(data)}
    if args.json:
        files["trace.json"] = pio.render_json(asdict(out.trace))
    else:
        files["trace.csv"] = pio.trace_csv(out.trace)
    if spec.kind == "lts":
        files["messages.csv"] = pio.messages_csv(out.trace.messages)
        files["central_trace.csv"] = pio.central_trace_csv(out.trace)
    return files, _outcome_text(out)


def _outcome_text(out) -> str:
    if out.alarm_tick is None:
        return f"{out.spec}: no alarm in {out.ticks_run} ticks"
    what = "false alarm" if out.false_alarm else f"delay {out.delay}"
    return f"{out.spec}: alarm at tick {out.alarm_tick} ({what})"


def cmd_detect(args, cfg):
    streams = pio.ingest_stream(args.input)
    data = pio.streams_to_array(streams)
    spec = _spec(args.spec, _detector_params(args, cfg))
    if spec.kind == "single":
        data = data[:1]
    out = run_streams(data, spec, t0=args.t0, record=True)
    files = {"outcome.json": pio.render_json(out.to_dict())}
    if args.json:
        files["trace.json"] = pio.render_json(asdict(out.trace))
    else:
        files["trace.csv"] = pio.trace_csv(out.trace)
    if spec.kind == "lts":
        files["messages.csv"] = pio.messages_csv(out.trace.messages)
    text = "alarm_tick=" + ("none" if out.alarm_tick is None else str(out.alarm_tick))
    return files, text


def cmd_tune(args, cfg):
    seed = _seed(args, cfg)
    params = _detector_params(args, cfg, cfg.scenario)
    p = params.get("p", 1)
    if args.input:
        if args.post_start is None:
            raise UsageError("tune --input needs --post-start")
        streams = pio.ingest_stream(args.input)
        sigma_nu = params.get("sigma_nu", 1.0)
        rho = [rho_of_meter(estimate_tuning_inputs(s.samples[args.post_start:], p, sigma_nu)) for s in streams]
    else:
        rho = scenario_rhos(_need_scenario(cfg, args), p)
    b = choose_b(rho)
    h = threshold_for_gamma(args.gamma)
    spec = _spec("elts", {**params, "b": b, "h": h})
    du, dd, achieved = calibrate_delta(args.target_tau0, spec, args.L, seed, args.paths, args.length)
    res = TuningResult(rho=[float(r) for r in rho], b=b, h=h, delta=(du, dd), achieved_tau0=achieved,
                       feasible=is_detectable(b, rho))
    return {"tuning.json": res.to_json() + "\n"}, res.to_json()


def cmd_evaluate(args, cfg):
    seed = _seed(args, cfg)
    _positive("--trials", args.trials)
    params = _detector_params(args, cfg, cfg.scenario)
    specs = [_spec(n, params) for n in args.specs]
    if args.curve == "delay-vs-far":
        scenario = cfg.scenario or ex.sag_benchmark(args.L, sigma_nu2=params.get("sigma_nu", 1.0) ** 2)
        rows = ex.delay_vs_far_curve(scenario, specs, args.gammas, args.trials, seed, far_trials=args.far_trials)
        cols = ex.CURVE_COLUMNS
    elif args.curve == "meters-scaling":
        rows = ex.meters_scaling_curve(specs, args.Ls, args.sigma_nu2s, args.gamma, args.trials, seed)
        cols = ex.CURVE_COLUMNS + ("sigma_nu2",)
    else:
        rows = []
        for s in specs:
            rows += ex.far_rule_check(s, args.L, args.gammas, args.trials, seed)
        cols = ("spec", "gamma", "h", "mean_far", "se_far", "censored")
    if args.json:
        files = {"results.json": pio.render_json(rows)}
    else:
        files = {"results.csv": pio.results_csv(rows, cols)}
    return files, pio.results_csv(rows, cols).rstrip()


COMPARE_COLUMNS = ("spec", "L", "gamma", "h_below", "far_below", "h_above", "far_above", "weight",
                   "mean_delay", "se_delay", "trials", "false_alarms", "mean_tau_pre", "mean_tau_post")


def cmd_compare(args, cfg):
    seed = _seed(args, cfg)
    _positive("--trials", args.trials)
    params = _detector_params(args, cfg)
    for n in args.specs:
        _spec(n, params)
    res = ex.ordering_experiment(args.gamma, args.trials, seed, args.L, args.cal_trials, args.specs, **params)
    rows = [m.to_dict() for m in res.values()]
    if args.json:
        files = {"compare.json": pio.render_json(rows)}
    else:
        files = {"compare.csv": pio.results_csv(rows, COMPARE_COLUMNS)}
    text = "\n".join(f"{m.spec:6s} L={m.L} delay={m.mean_delay:.3f} +- {m.se_delay:.3f}" for m in res.values())
    return files, text


COMMANDS = {"simulate": cmd_simulate, "detect": cmd_detect, "tune": cmd_tune,
            "evaluate": cmd_evaluate, "compare": cmd_compare}


def _manifest(argv, cfg, files) -> str:
    return pio.render_json({
        "version": __version__,
        "argv": list(argv),
        "config": cfg.raw,
        "config_hash": cfg.digest(),
        "files": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(files.items())},
    })


def _strip_out(argv: List[str]) -> List[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        out.append(a)
    return out


def run(argv: List[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        mpath = Path(args.manifest)
        if not mpath.exists():
            raise UsageError(f"manifest {mpath} not found")
        try:
            m = json.loads(mpath.read_text(encoding="utf-8"))
            stored = list(m["argv"])
            raw = m.get("config") or {}
        except (ValueError, KeyError, TypeError) as e:
            raise UsageError(f"malformed manifest {mpath}: {e}") from None
        out = args.out or str(mpath.parent)
        args = parser.parse_args(stored + ["--out", out])
        args._config_raw = raw
        argv = stored + ["--out", out]
    cfg = _load_config(args)
    try:
        _resolve(args, cfg)
    except argparse.ArgumentTypeError as e:
        raise UsageError(str(e)) from None
    files, text = COMMANDS[args.command](args, cfg)
    files["manifest.json"] = _manifest(_strip_out(argv), cfg, files)
    pio.write_all(args.out, files)
    if text:
        print(text)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(argv)
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except (UsageError, cfgmod.ConfigError, pio.SchemaError, pio.ParseError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
