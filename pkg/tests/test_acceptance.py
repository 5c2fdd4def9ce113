"""Acceptance criteria.  Each test records one PASS/FAIL line, printed in the terminal summary.

Run alone with ``pytest -m acceptance -s``.
"""
import math
import time

import numpy as np
import pytest
import yaml

from pqmon.cli import EXIT_OK, main
from pqmon.detectors import CusumOracleState, GllrState, Theta, advance, advance_block, cusum_step, gllr_trace
from pqmon.experiments import far_rule_check, not_significantly_greater, ordering_experiment, significantly_less
from pqmon.lts import LevelSampler, LtsCentralState, Mode, lts_central_step
from pqmon.simnet import DetectorSpec
from pqmon.tuning import calibrate_delta, mean_comm_interval

pytestmark = pytest.mark.acceptance


# 1 -------------------------------------------------------------------------


def cusum_max_form(s):
    """g_k = max(0, max_{j<=k} sum_{i=j}^{k} s_i), evaluated directly."""
    out = np.empty(len(s))
    for k in range(len(s)):
        tails = np.cumsum(s[k::-1])
        out[k] = max(0.0, tails.max())
    return out


def test_cusum_equivalence(record_criterion):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 301))
        p = int(rng.integers(1, 4))
        theta0 = Theta.nominal(p, float(rng.uniform(0.5, 2)))
        theta1 = Theta(tuple(rng.uniform(-0.4, 0.4, p)), float(rng.normal(0, 0.5)), float(rng.uniform(0.5, 2)))
        y = rng.normal(0, 1.5, n)
        state = CusumOracleState(theta0, theta1)
        rec = np.array([cusum_step(state, v) for v in y])
        # increments recomputed independently of the recursion's bookkeeping
        ext = np.r_[np.zeros(p), y]
        lags = np.stack([ext[p - j: p - j + n] for j in range(1, p + 1)], axis=1)
        e1 = y - theta1.mu - lags @ np.asarray(theta1.coeffs)
        s = (0.5 * np.log(theta0.sigma**2 / theta1.sigma**2) - e1**2 / (2 * theta1.sigma**2)
             + y**2 / (2 * theta0.sigma**2))
        worst = max(worst, float(np.abs(rec - cusum_max_form(s)).max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10
    record_criterion(1, ok, f"max |diff| {worst:.2e} over 1000 sequences, {elapsed:.1f}s")
    assert ok


# 2 -------------------------------------------------------------------------


def windowed(y, b, p, sigma):
    """Recompute the statistic from the raw samples of the current window at every step."""
    ext = np.r_[np.zeros(p), y]
    g, N = np.empty(len(y)), np.empty(len(y), dtype=np.int64)
    start = 0
    for k in range(len(y)):
        idx = np.arange(start, k + 1)
        yi = ext[p + idx]
        lags = np.stack([ext[p + idx - j] for j in range(1, p + 1)], axis=1)
        z = np.column_stack([yi[:, None] * lags / sigma**2, (yi**2 / sigma**2 - 1) / math.sqrt(2), yi / sigma])
        S = b * np.linalg.norm(z.sum(axis=0)) - 0.5 * len(idx) * b * b
        g[k], N[k] = max(S, 0.0), len(idx)
        if S <= 0:
            start = k + 1
    return g, N


def test_gllr_recursion_equivalence(record_criterion):
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst, n_mismatch = 0.0, 0
    for _ in range(1000):
        n = int(rng.integers(1, 301))
        p = int(rng.integers(1, 4))
        b = float(rng.uniform(0.1, 1.5))
        sigma = float(rng.uniform(0.5, 2.0))
        # mix noise and disturbed segments so that long windows occur
        y = rng.normal(0, sigma, n) * np.where(np.arange(n) > n // 2, rng.uniform(1, 3), 1.0)
        g, _, N = gllr_trace(y, b, p, sigma)
        g_ref, N_ref = windowed(y, b, p, sigma)
        worst = max(worst, float(np.abs(g - g_ref).max()))
        n_mismatch += int((N != N_ref).sum())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and n_mismatch == 0 and elapsed < 30
    record_criterion(2, ok, f"max |diff| {worst:.2e}, window mismatches {n_mismatch}, {elapsed:.1f}s")
    assert ok


# 3 -------------------------------------------------------------------------


def second_derivative_matrix(y, lag, sigma):
    """Per-sample matrix w_i, laid out as [a, sigma, mu], for p = 1."""
    v = sigma * sigma
    w = np.empty((len(y), 3, 3))
    w[:, 0, 0] = lag * lag
    w[:, 0, 1] = w[:, 1, 0] = 2 * y * lag / sigma
    w[:, 0, 2] = w[:, 2, 0] = lag
    w[:, 1, 1] = 3 * y * y / v - 1
    w[:, 1, 2] = w[:, 2, 1] = 2 * y / sigma
    w[:, 2, 2] = 1.0
    return w / v


def test_fisher_information(record_criterion):
    y = np.random.default_rng(303).standard_normal(100_001)
    J = second_derivative_matrix(y[1:], y[:-1], 1.0).mean(axis=0)
    target = np.diag([1.0, 2.0, 1.0])
    diag_ok = np.all(np.abs(np.diag(J) / np.diag(target) - 1) <= 0.03)
    off = J[~np.eye(3, dtype=bool)]
    ok = bool(diag_ok and np.all(np.abs(off) <= 0.03))
    record_criterion(3, ok, f"diag {np.round(np.diag(J), 4).tolist()}, max |off| {np.abs(off).max():.4f}")
    assert ok


# 4 -------------------------------------------------------------------------


def test_pre_change_drift(record_criterion):
    rng = np.random.default_rng(404)
    n = 1_000_000
    got = {}
    for b in (0.25, 0.5, 1.0):
        s = GllrState.fresh(1, 1.0, b)
        advance(s, rng.standard_normal(), True)
        s0 = float(s.stat)
        got[b] = (float(advance_block(s, rng.standard_normal(n))[-1]) - s0) / n
    errs = {b: abs(v / (-b * b / 2) - 1) for b, v in got.items()}
    ok = all(e <= 0.05 for e in errs.values())
    detail = ", ".join(f"b={b}: {got[b]:.5f} vs {-b * b / 2:.5f}" for b in got)
    record_criterion(4, ok, detail)
    assert ok


# 5 -------------------------------------------------------------------------


def trigger_oracle(path, du, dd, mode):
    """Scan a path for sampling instants and overshoots without the sampler's code."""
    ref, events = 0.0, []
    for k, v in enumerate(path):
        if v - ref >= du:
            eps = v - ref - du
            events.append((k, +1, eps))
            ref = v if mode == Mode.ORIGINAL else ref + du
        elif v - ref <= -dd:
            eps = v - ref + dd
            events.append((k, -1, eps))
            ref = v if mode == Mode.ORIGINAL else ref - dd
    return events


def test_lts_overshoot(record_criterion):
    rng = np.random.default_rng(505)
    du = dd = 1.5
    problems = []
    for trial in range(100):
        inc = rng.integers(-384, 385, size=500) / 256.0  # |step| <= 1.5, exact in binary
        path = np.cumsum(inc)
        max_step = float(np.abs(inc).max())
        for mode in Mode:
            s = LevelSampler.fresh(du, dd, mode)
            bits = np.array([int(s.sample(np.float64(v))) for v in path])
            events = trigger_oracle(path, du, dd, mode)
            if [(k, b) for k, b, _ in events] != [(k, int(bits[k])) for k in np.flatnonzero(bits)]:
                problems.append((trial, mode, "instants"))
                continue
            recon = np.cumsum(np.where(bits > 0, du, np.where(bits < 0, -dd, 0.0)))
            running = 0.0
            for k, _, eps in events:
                running += eps
                err = path[k] - recon[k]
                if mode == Mode.ORIGINAL and err != running:
                    problems.append((trial, mode, k))
                if mode == Mode.ENHANCED and (err != eps or abs(err) > max_step):
                    problems.append((trial, mode, k))
    ok = not problems
    record_criterion(5, ok, f"100 paths x 2 modes, {len(problems)} violations")
    assert ok


# 6 -------------------------------------------------------------------------


def test_exact_boundary_equivalence(record_criterion):
    rng = np.random.default_rng(606)
    D = 1.5  # dyadic, so repeated sums are exact in floating point
    L, T = 3, 400
    mismatches, triggers = 0, 0
    for _ in range(100):
        steps = rng.choice([-1, 0, 1], size=(T, L), p=[0.3, 0.3, 0.4])
        # centralized: sum of local statistics, all restarted when the sum falls to zero
        local_c = np.zeros(L)
        # decentralized: level samplers and the bit-counting central node
        samplers = [LevelSampler.fresh(D, D, Mode.ENHANCED) for _ in range(L)]
        local_d = np.zeros(L)
        central = LtsCentralState.fresh(math.inf, D, D)
        pending = False
        for t in range(T):
            if pending:
                local_d[:] = 0.0
                for s in samplers:
                    s.reset(True)
            local_c += steps[t] * D
            local_d += steps[t] * D
            g_c = float(local_c.sum())
            if g_c <= 0:
                local_c[:] = 0.0
                g_c = 0.0
            bits = np.array([s.sample(np.float64(v)) for s, v in zip(samplers, local_d)], dtype=np.int8)
            pending, _ = lts_central_step(central, bits)
            pending = bool(pending)
            if bits.any():
                triggers += 1
                mismatches += float(central.s_global) != g_c
    ok = mismatches == 0 and triggers > 0
    record_criterion(6, ok, f"{triggers} trigger ticks compared, {mismatches} mismatches")
    assert ok


# 7 -------------------------------------------------------------------------


def test_delta_calibration(record_criterion):
    spec = DetectorSpec.from_name("elts")
    du, _, achieved = calibrate_delta(14.0, spec, 3, seed=0)
    held_out = mean_comm_interval(du, spec, 3, seed=777, paths=1, length=100_000)
    ok = abs(held_out / 14.0 - 1) <= 0.05
    record_criterion(7, ok, f"delta={du:.4f} (calibration {achieved:.3f}), held-out interval {held_out:.3f}")
    assert ok


# 8 -------------------------------------------------------------------------


def test_qualitative_ordering(record_criterion):
    start = time.perf_counter()
    res = ordering_experiment(gamma=2000.0, trials=600, seed=5, L=3, cal_trials=500)
    elapsed = time.perf_counter() - start
    S, C, E, O, U = (res[n] for n in ("gllr", "cgllr", "elts", "lts", "ugllr"))
    checks = {
        "C<S": significantly_less(C, S),
        "C<=eLTS": not_significantly_greater(C, E),
        "eLTS<=LTS": not_significantly_greater(E, O),
        "eLTS<U": significantly_less(E, U),
    }
    ok = all(checks.values()) and elapsed < 600
    delays = ", ".join(f"{m.spec} {m.mean_delay:.3f}+-{m.se_delay:.3f}" for m in res.values())
    verdicts = " ".join(f"{k}:{'ok' if v else 'no'}" for k, v in checks.items())
    record_criterion(8, ok, f"{verdicts} | {delays} | {elapsed:.0f}s")
    assert ok


# 9 -------------------------------------------------------------------------


def test_threshold_rule(record_criterion):
    gammas = [100.0, 500.0, 2000.0]
    rows = far_rule_check(DetectorSpec.from_name("gllr"), 1, gammas, 500, seed=9)
    far = [r["mean_far"] for r in rows]
    ok = all(a <= b for a, b in zip(far, far[1:])) and all(g / 10 <= f <= 10 * g for g, f in zip(gammas, far))
    record_criterion(9, ok, ", ".join(f"gamma={g:g}: {f:.1f}" for g, f in zip(gammas, far)))
    assert ok


# 10 ------------------------------------------------------------------------


def test_manifest_replay(record_criterion, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(yaml.safe_dump({
        "seed": 11,
        "scenario": {"noise": {"sigma_nu": 1.0}, "t0": 100, "horizon": 400,
                     "meters": [{"kind": "ar", "coeffs": [0.9], "sigma_w": 1.0, "count": 3}]},
        "experiment": {"trials": 60, "gammas": [100, 500]},
    }), encoding="utf-8")
    runs = {
        "simulate": ["simulate", "--config", str(cfg), "--spec", "elts"],
        "simulate-json": ["simulate", "--config", str(cfg), "--spec", "ugllr", "--json"],
        "evaluate": ["evaluate", "--config", str(cfg), "--curve", "delay-vs-far"],
        "scaling": ["evaluate", "--config", str(cfg), "--curve", "meters-scaling", "--specs", "cgllr",
                    "--Ls", "1,2"],
        "tune": ["tune", "--config", str(cfg), "--paths", "20", "--length", "500"],
        "compare": ["compare", "--config", str(cfg), "--specs", "cgllr,lts", "--gamma", "200",
                    "--cal-trials", "40"],
    }
    bad = []
    for name, argv in runs.items():
        a, b = tmp_path / f"{name}-a", tmp_path / f"{name}-b"
        assert main(argv + ["--out", str(a)]) == EXIT_OK
        assert main(["replay", "--manifest", str(a / "manifest.json"), "--out", str(b)]) == EXIT_OK
        files = sorted(p.name for p in a.iterdir())
        if files != sorted(p.name for p in b.iterdir()):
            bad.append(name)
            continue
        bad += [f"{name}/{f}" for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    ok = not bad
    record_criterion(10, ok, f"{len(runs)} runs replayed, differing: {bad or 'none'}")
    assert ok
