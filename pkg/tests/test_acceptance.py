"""Acceptance gate: one test per criterion, each at its stated tolerance and
runtime budget. Every test records a PASS/FAIL line that is printed in the
terminal summary.

Criteria 2, 7 and 9 (the DG rate fit) are expected to fail; they are
implemented literally and left red. The measured values are printed.
"""
import math
import time

import numpy as np

from delightpg import counterexample as cx
from delightpg.bandit import BanditInstance
from delightpg.discrete import dg_stepper, eg_stepper, run_to_convergence
from delightpg.dynamics import DG, EG, PG
from delightpg.flow import SWEEP_GAPS, SWEEP_THETA0, FlowConfig, gap_sweep, sweep_slopes
from delightpg.suites import (REF_BANDIT, bandit_monotonicity_check, logit_gap_identity_check,
                              mdp_monotonicity_check, mdp_rate_runs, pdl_residual_check)
from delightpg.verify import (check_escape_bound, fit_rate, map_bad_region, poly_suppression_sweep,
                              random_bandit, validated_sector_check)

SEED = 20240601


def ref_bandit():
    return BanditInstance(np.array(REF_BANDIT))


def test_criterion_01_counterexample_fixed_points(record_acceptance):
    t0 = time.perf_counter()
    eg = cx.find_fixed_points("eg")
    dg = cx.find_fixed_points("dg", 1.0)
    pg = cx.find_fixed_points("pg")
    grid = np.linspace(0.001, 0.999, 10_000)
    elapsed = time.perf_counter() - t0
    checks = {
        "eg_root": len(eg.roots) == 1 and abs(eg.roots[0] - 1 / 11) <= 1e-9,
        "eg_slope": len(eg.roots) == 1 and abs(eg.derivatives[0] - (-50 / 11)) <= 1e-6,
        "dg_root": len(dg.roots) == 1 and abs(dg.roots[0] - 0.116) <= 0.005,
        "pg_no_root": pg.roots == [] and bool(np.all(cx.f_pg(grid) < 0)),
        "runtime": elapsed < 1.0,
    }
    passed = all(checks.values())
    record_acceptance(1, "counterexample fixed points", passed, elapsed, 1,
                      f"EG root {eg.roots}, F' {eg.derivatives}, DG root {dg.roots}")
    assert passed, checks


def test_criterion_02_gap_sweep_scaling(record_acceptance):
    t0 = time.perf_counter()
    rows = gap_sweep(SWEEP_GAPS, SWEEP_THETA0, (PG, DG(1.0)), FlowConfig(dt=1.0, max_time=1e7), workers=4)
    elapsed = time.perf_counter() - t0
    pg = sorted((r for r in rows if r.method == "pg"), key=lambda r: r.inv_gap)
    dg = sorted((r for r in rows if r.method == "dg"), key=lambda r: r.inv_gap)
    all_escaped = all(r.escaped for r in rows)
    pg_t = [r.escape_time for r in pg]
    dg_t = [r.escape_time for r in dg]
    slopes_last4 = sweep_slopes(rows, last=4)
    slopes_all = sweep_slopes(rows)
    checks = {
        "all_escaped": all_escaped,
        "pg_increasing": all(a < b for a, b in zip(pg_t, pg_t[1:])),
        "pg_slope_last4_gt_1.5": slopes_last4.get("pg", 0.0) > 1.5,
        "dg_slope_le_1.3": slopes_all.get("dg", math.inf) <= 1.3,
        "dg_le_pg": all(d <= p for d, p in zip(dg_t, pg_t)),
        "runtime": elapsed < 600,
    }
    passed = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record_acceptance(2, "gap sweep scaling", passed, elapsed, 600,
                      f"PG slope(last4) {slopes_last4.get('pg'):.3f}, DG slope {slopes_all.get('dg'):.3f}"
                      f" (last4 {slopes_last4.get('dg'):.3f}); failed: {failed}")
    assert passed, checks


def test_criterion_03_sector_bounds(record_acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    instances = [ref_bandit()] + [random_bandit(rng, int(rng.integers(2, 9))) for _ in range(20)]
    n_points = n_viol = n_checks = 0
    min_shell = math.inf
    for i, b in enumerate(instances):
        for j in range(b.K):
            if j == b.optimal_arm:
                continue
            for g in (EG, DG(1.0)):
                rep = validated_sector_check(b, j, g, 10_000, seed=SEED + 1000 * i + 10 * j + (g.kind == "dg"))
                n_points += rep.n_points
                n_viol += rep.n_violations
                n_checks += 1
                shells = rep.details["shells"]
                min_shell = min(min_shell, rep.n_points / max(len(shells) - rep.n_skipped, 1))
    elapsed = time.perf_counter() - t0
    passed = n_viol == 0 and min_shell >= 10_000 and elapsed < 120
    record_acceptance(3, "EG/DG sector bounds", passed, elapsed, 120,
                      f"{n_checks} (instance, corner, gate) checks, {n_points} points, {n_viol} violations")
    assert passed


def test_criterion_04_poly_suppression(record_acceptance):
    t0 = time.perf_counter()
    rep = poly_suppression_sweep(100_000, seed=SEED)
    elapsed = time.perf_counter() - t0
    passed = rep.n_points == 100_000 and rep.n_violations == 0 and elapsed < 5
    record_acceptance(4, "polynomial suppression", passed, elapsed, 5,
                      f"{rep.n_violations} violations, worst log margin {rep.worst_margin:.3e}")
    assert passed


def test_criterion_05_monotonicity(record_acceptance):
    t0 = time.perf_counter()
    rb, rm = [np.random.default_rng(s) for s in np.random.SeedSequence(SEED).spawn(2)]
    bandit = bandit_monotonicity_check(10_000, rb)
    mdp = mdp_monotonicity_check(1_000, rm)
    elapsed = time.perf_counter() - t0
    passed = bandit["passed"] and mdp["passed"] and elapsed < 120
    record_acceptance(5, "discrete monotonicity", passed, elapsed, 120,
                      f"bandit min dV {bandit['min_value_delta']:.2e} formula err {bandit['max_formula_error']:.1e}; "
                      f"MDP min dV {mdp['min_value_delta']:.2e} formula err {mdp['max_formula_error']:.1e}")
    assert passed


def test_criterion_06_logit_gap_identity(record_acceptance):
    t0 = time.perf_counter()
    rep = logit_gap_identity_check(10_000, np.random.default_rng(SEED))
    elapsed = time.perf_counter() - t0
    passed = rep["passed"] and elapsed < 5
    record_acceptance(6, "logit-gap identity and PG S = 0", passed, elapsed, 5,
                      f"identity err {rep['max_identity_error']:.1e}, |S_PG| {rep['max_pg_S']:.1e}")
    assert passed


def test_criterion_07_bad_region_geometry(record_acceptance):
    t0 = time.perf_counter()
    b = ref_bandit()
    pg = map_bad_region(b, PG, 1, 400).shell_fractions
    eg = map_bad_region(b, EG, 1, 400).shell_fractions
    elapsed = time.perf_counter() - t0
    checks = {
        "pg_gt_0.05": pg[0.01] > 0.05,
        "eg_lt_0.005": eg[0.01] < 0.005,
        "eg_10x_decrease": eg[0.001] * 10 <= eg[0.1],
        "runtime": elapsed < 60,
    }
    passed = all(checks.values())
    record_acceptance(7, "bad-region geometry", passed, elapsed, 60,
                      f"PG {pg}, EG {eg}; failed: {[k for k, v in checks.items() if not v]}")
    assert passed, checks


def test_criterion_08_escape_time_bound(record_acceptance):
    t0 = time.perf_counter()
    b = ref_bandit()
    reports = [check_escape_bound(b, j, 50, seed=SEED + j) for j in (1, 2)]
    elapsed = time.perf_counter() - t0
    n = sum(r.n_trajectories for r in reports)
    viol = sum(r.n_violations for r in reports)
    passed = viol == 0 and all(r.n_trajectories >= 50 for r in reports) and elapsed < 120
    record_acceptance(8, "first-exit escape-time bound", passed, elapsed, 120,
                      f"{n} trajectories, {viol} violations, worst tau/bound "
                      f"{max(r.worst_ratio for r in reports):.3f}")
    assert passed


def _bandit_rate_runs(rng, n=20):
    rows = []
    for _ in range(n):
        b = random_bandit(rng, int(rng.integers(2, 9)), min_gap=0.01)
        while b.optimality_gap < 0.05:
            b = random_bandit(rng, int(rng.integers(2, 9)), min_gap=0.01)
        pi0 = np.full(b.K, 1.0 / b.K)
        tol = 1e-3 * b.optimality_gap
        for name, st in (("eg", eg_stepper(1.0)), ("dg", dg_stepper(1.0, 1.0))):
            rec = run_to_convergence(b, pi0, st, tol=tol, max_iters=500_000)
            tv = 1.0 - rec.final_pi[b.optimal_arm]
            fit = fit_rate(rec.deltas)
            rows.append({"method": name, "converged": rec.converged and tv < 1e-3,
                         "r_squared": fit.r_squared, "iterations": rec.iterations})
    return rows


def test_criterion_09_convergence_and_rate(record_acceptance):
    t0 = time.perf_counter()
    rb, rm = [np.random.default_rng(s) for s in np.random.SeedSequence(SEED).spawn(2)]
    rows = _bandit_rate_runs(rb)
    mdp_rows = mdp_rate_runs(10, rm)
    elapsed = time.perf_counter() - t0
    conv = all(r["converged"] for r in rows) and all(r["converged"] and r["max_tv"] < 1e-3 for r in mdp_rows)
    r2 = {}
    for kind, rs in (("bandit", rows), ("mdp", mdp_rows)):
        for m in ("eg", "dg"):
            r2[f"{kind}_{m}"] = min(r["r_squared"] for r in rs if r["method"] == m)
    passed = conv and all(v >= 0.99 for v in r2.values()) and elapsed < 300
    record_acceptance(9, "global convergence and O(1/t) fit", passed, elapsed, 300,
                      f"all converged: {conv}; min R^2 " + ", ".join(f"{k} {v:.4f}" for k, v in r2.items()))
    assert passed, r2


def test_criterion_10_pdl_oracle(record_acceptance):
    t0 = time.perf_counter()
    rep = pdl_residual_check(1_000, np.random.default_rng(SEED))
    elapsed = time.perf_counter() - t0
    passed = rep["passed"] and elapsed < 30
    record_acceptance(10, "performance-difference identity", passed, elapsed, 30,
                      f"max residual {rep['max_residual']:.2e}")
    assert passed
