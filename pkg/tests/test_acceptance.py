"""Acceptance checks 1-9; each records one PASS/FAIL line for the summary."""

import itertools
import math
import os
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import pytest

from mlrperm import _rng
from mlrperm.analysis import AnalysisConfig, run_analysis
from mlrperm.cluster import Scenario, enumerate_assignments, permutation_space_size, toy_structures
from mlrperm.core_lm import Dataset, fit_full
from mlrperm.inference import ols_p_value, permutation_p_value, proportion_ci
from mlrperm.schemes import Scheme, null_distribution
from mlrperm.simulation import ANTICONSERVATIVE, CONSERVATIVE, EXPECTED, run_scenario, table_configs
from mlrperm.theory import (
    correlated_dataset,
    monte_carlo_rho,
    rho_inputs_from_data,
    rho_ystar_x2,
    terbraak_moment_check,
)

from .oracles import exact_p_value, exhaustive_t_stars

HERE = Path(__file__).parent
SEED = 2024


def test_1_permutation_space_counts(record):
    start = time.perf_counter()
    toys = toy_structures()
    got = []
    for sc in (Scenario.INDEPENDENT, Scenario.HOMOGENEOUS, Scenario.HETEROGENEOUS):
        rows = enumerate_assignments(toys[sc])
        got.append((permutation_space_size(toys[sc]), len({a.key() for a in rows})))
    elapsed = time.perf_counter() - start
    ok = got == [(462, 462), (30, 30), (80, 80)] and elapsed < 1.0
    record(1, ok, f"sizes/distinct = {got}, {elapsed:.3f} s")
    assert ok


@pytest.mark.slow
def test_2_type1_classifications(record):
    lines, ok = [], True
    for cfg, expected in zip(table_configs(S=500, B=500, seed=SEED), EXPECTED):
        r = run_scenario(cfg, n_jobs=os.cpu_count() or 1)
        lo, hi = r.ci
        if expected == ANTICONSERVATIVE:
            row_ok = r.rejection_rate >= 0.065 and lo > 0.05
        elif expected == CONSERVATIVE:
            row_ok = r.rejection_rate <= 0.04 and hi < 0.05
        else:
            row_ok = lo <= 0.05 <= hi
        ok &= row_ok
        lines.append(f"{r.label}={r.rejection_rate:.3f} ({lo:.3f}-{hi:.3f}){'' if row_ok else ' MISS'}")
    record(2, ok, "; ".join(lines))
    assert ok, lines


def test_3_wilson_reproduction(record):
    lo, hi = proportion_ci(104, 2000, 0.95)
    got = (round(lo, 3), round(hi, 3))
    record(3, got == (0.043, 0.063), f"proportion_ci(104, 2000) -> {got}")
    assert got == (0.043, 0.063)


def test_4_scheme_agreement(record):
    start = time.perf_counter()
    worst = 0.0
    # latent correlation chosen so that corr(x1, binary x2) = 0.4
    latent = 0.4 / math.sqrt(2 / math.pi)
    for i in range(20):
        data = correlated_dataset(40, latent, _rng.child_seed(SEED, f"agree{i}"), binary_x2=True)
        ps = [ols_p_value(fit_full(data))]
        for k, scheme in enumerate(Scheme):
            null = null_distribution(scheme, data, 2000, _rng.child_seed(SEED, f"agree{i}/{k}"))
            ps.append(permutation_p_value(null.t_obs, null))
        worst = max(worst, max(abs(a - b) for a, b in itertools.combinations(ps, 2)))
    elapsed = time.perf_counter() - start
    ok = worst < 0.05 and elapsed < 60
    record(4, ok, f"max pairwise |p diff| over 20 datasets = {worst:.4f}, {elapsed:.1f} s")
    assert ok


def _bridges_path():
    env = os.environ.get("MLRPERM_BRIDGES_CSV")
    for p in ([env] if env else []) + [str(HERE / "data" / "bridges.csv")]:
        if p and Path(p).is_file():
            return p
    return None


def test_5_bridges_table(record):
    path = _bridges_path()
    if path is None:
        record(5, None, "bridges CSV not supplied; criterion 4 stands in")
        pytest.skip("bridges CSV not supplied; set MLRPERM_BRIDGES_CSV or add tests/data/bridges.csv")
    report = run_analysis(AnalysisConfig(path, "cost", "volume", "material", B=2000, seed=SEED))
    target = (0.14, 0.16, 0.13, 0.13, 0.15)
    ps = [r["p_value"] for r in report.rows]
    ok = all(p is not None and abs(p - t) <= 0.02 and p > 0.05 for p, t in zip(ps, target))
    record(5, ok, f"p-values {[round(p, 3) for p in ps]} vs {target}")
    assert ok


def test_6_correlation_formula(record):
    start = time.perf_counter()
    diffs, zero_ok = [], True
    for rho in (0.0, 0.3, -0.3, 0.8, -0.8):
        data = correlated_dataset(5000, rho, _rng.child_seed(SEED, f"rho{rho}"))
        inputs = rho_inputs_from_data(data)
        mc = monte_carlo_rho(data, 2000, _rng.child_seed(SEED, f"mc{rho}"))
        if rho == 0.0:
            zero_ok = rho_ystar_x2(replace(inputs, rho_x1x2=0.0)) == 0.0
        diffs.append(abs(rho_ystar_x2(inputs) - mc))
    elapsed = time.perf_counter() - start
    ok = max(diffs) <= 0.05 and zero_ok and elapsed < 60
    record(6, ok, f"max |formula - MC| = {max(diffs):.4f}, zero at rho=0: {zero_ok}, {elapsed:.1f} s")
    assert ok


def test_7_terbraak_moments(record):
    start = time.perf_counter()
    data = correlated_dataset(50, 0.4, _rng.child_seed(SEED, "moments"), beta=(1.0, 1.0, 0.5))
    m = terbraak_moment_check(data, 20000, _rng.child_seed(SEED, "moment-draws"))
    z_perm = (m.mean_perm - m.b_obs) / m.se_perm
    z_boot = (m.mean_boot - m.b_obs) / m.se_boot
    elapsed = time.perf_counter() - start
    ok = abs(z_perm) <= 4 and abs(z_boot) <= 4 and 0.93 <= m.ratio <= 1.03 and elapsed < 60
    record(7, ok, f"z_perm={z_perm:.2f}, z_boot={z_boot:.2f}, var ratio={m.ratio:.4f} (1-1/n=0.98), {elapsed:.1f} s")
    assert ok


def test_8_exhaustive_oracle(record):
    y = [2.25, 7.5, 3.0, 9.75, 8.5]
    x1 = [1, 2, 4, 5, 3]
    x2 = [0, 1, 0, 1, 1]
    data = Dataset(y=y, x1=x1, x2=x2)
    diffs = {}
    for scheme in Scheme:
        t_obs = fit_full(data).coefficients[2] / fit_full(data).standard_errors[2]
        exact = exact_p_value(exhaustive_t_stars(scheme.value, y, x1, x2), t_obs)
        null = null_distribution(scheme, data, 100_000, _rng.child_seed(SEED, scheme.value), mode="sample")
        diffs[scheme.cli_name] = abs(permutation_p_value(null.t_obs, null) - exact)
    ok = max(diffs.values()) <= 0.01
    record(8, ok, "|sampled - exact| " + ", ".join(f"{k}={v:.4f}" for k, v in diffs.items()))
    assert ok


PROPERTY_TESTS = [
    "tests/test_core_lm.py",
    "tests/test_schemes.py",
    "tests/test_inference.py",
    "tests/test_cluster.py",
    "tests/test_theory.py",
]


@pytest.mark.slow
def test_9_property_suites(record):
    root = HERE.parent
    cmd = [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "-m", "property",
           *PROPERTY_TESTS]
    proc = subprocess.run(cmd, cwd=root, capture_output=True, text=True)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    record(9, proc.returncode == 0, f"hypothesis property suites (200 examples each): {tail}")
    assert proc.returncode == 0, proc.stdout[-3000:]
