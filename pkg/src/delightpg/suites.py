"""Verification batteries driven by the ``verify`` subcommand.

Each suite returns a JSON-ready dict with a list of checks. A check is
``gating`` when it is an inequality or identity whose failure falsifies a
claim; non-gating entries record measurements (fits, fractions) whose
thresholds are not part of the claim itself.
"""
from __future__ import annotations

import math

import numpy as np

from . import counterexample as cx
from .bandit import BanditInstance
from .discrete import dg_step, eg_step
from .dynamics import DG, EG, PG, drift_from_policy, drift_summed, logit_gap_from_policy, weighted_drift
from .mdp import (MdpPolicy, corner_policy, dg_mdp_step, dg_updater, eg_mdp_step, eg_updater,
                  local_escape_fractions, mdp_telescope_constant, mdp_telescope_violations,
                  optimal_policy, pdl_check, random_mdp, run_mdp_to_convergence)
from .verify import (SHELLS, _jsonable, check_escape_bound, check_sector_monotonicity, fit_rate,
                     map_bad_region, poly_suppression_sweep, random_bandit, validated_sector_check)
from .errors import InsufficientDataError

REF_BANDIT = (1.0, 0.9, 0.1)
SUITES = ("bandit", "mdp", "counterexample")


def _check(name, passed, gating=True, **data):
    return {"name": name, "passed": bool(passed), "gating": gating, **data}


def _rngs(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _sub_seed(rng) -> int:
    return int(rng.integers(2**63))


# ------------------------------------------------------------------ bandit

def logit_gap_identity_check(n: int, rng) -> dict:
    """Logit-gap identity against the drift difference, and S = 0 under PG."""
    worst_gap = worst_s = worst_route = 0.0
    for _ in range(n):
        K = int(rng.integers(2, 9))
        b = BanditInstance(rng.uniform(size=K))
        pi = rng.dirichlet(np.ones(K) * rng.choice([0.2, 1.0, 5.0]))
        g = [PG, EG, DG(float(10 ** rng.uniform(-2, 1)))][int(rng.integers(3))]
        a, c = rng.choice(K, size=2, replace=False)
        d = drift_from_policy(b, pi, g)
        dec = logit_gap_from_policy(b, pi, g, int(a), int(c))
        worst_gap = max(worst_gap, abs(dec.total - (d[a] - d[c])))
        worst_route = max(worst_route, float(np.max(np.abs(d - drift_summed(b, pi, g)))))
        worst_s = max(worst_s, abs(float(weighted_drift(b, pi, PG))))
    return _check("logit_gap_identity", worst_gap <= 1e-12 and worst_s <= 1e-12 and worst_route <= 1e-12,
                  n=n, max_identity_error=worst_gap, max_pg_S=worst_s, max_route_difference=worst_route)


def bandit_monotonicity_check(n: int, rng, etas=(0.1, 1.0, 5.0), alphas=(0.1, 1.0)) -> dict:
    worst_dv = math.inf
    worst_formula = 0.0
    for _ in range(n):
        K = int(rng.integers(2, 9))
        b = BanditInstance(rng.uniform(size=K))
        pi = rng.dirichlet(np.ones(K) * rng.choice([0.1, 1.0]))
        pi = np.maximum(pi, 1e-300)
        pi /= pi.sum()
        reps = [eg_step(b, pi, e) for e in etas]
        reps += [dg_step(b, pi, a, e) for a in alphas for e in etas]
        for r in reps:
            worst_dv = min(worst_dv, r.value_delta)
            worst_formula = max(worst_formula, abs(r.value_delta - r.progress_formula))
    return _check("bandit_monotonicity", worst_dv >= -1e-12 and worst_formula <= 1e-9, n=n,
                  min_value_delta=worst_dv, max_formula_error=worst_formula)


def sector_checks(b: BanditInstance, samples: int, seed: int, etas=(1.0,)) -> list:
    out = []
    opt = b.optimal_arm
    for j in range(b.K):
        if j == opt:
            continue
        for g in [EG] + [DG(e) for e in etas]:
            rep = validated_sector_check(b, j, g, samples, seed=seed + 7919 * j + (0 if g.kind == "eg" else 1 + int(1000 * g.eta)))
            out.append(rep)
    return out


def bad_region_checks(b: BanditInstance, corner: int, resolution: int) -> list:
    maps = {g.kind: map_bad_region(b, g, corner, resolution) for g in (PG, EG, DG(1.0))}
    pg, eg, dg = (maps[k].shell_fractions for k in ("pg", "eg", "dg"))
    return [
        _check("pg_bad_region_positive", pg[0.01] > 0.05, fractions=pg),
        _check("eg_bad_region_vanishes", eg[0.001] * 10 <= eg[0.1], fractions=eg),
        _check("eg_bad_fraction_below_0.005_at_eps_0.01", eg[0.01] < 0.005, gating=False, fractions=eg),
        _check("dg_bad_region_shrinks", dg[0.001] < dg[0.01] < dg[0.1], fractions=dg),
    ]


def bandit_suite(seed: int = 0, samples: int = 2000, n_random: int = 5, n_props: int = 1000,
                 resolution: int = 400, n_escape: int = 20) -> dict:
    r_inst, r_gap, r_mono, r_bad = _rngs(seed, 4)
    checks = []
    b = BanditInstance(np.array(REF_BANDIT))
    instances = [b] + [random_bandit(r_inst, int(r_inst.integers(2, 9))) for _ in range(n_random)]
    n_pts = n_viol = 0
    brackets = []
    for k, inst in enumerate(instances):
        for rep in sector_checks(inst, samples, seed + 104729 * k):
            n_pts += rep.n_points
            n_viol += rep.n_violations
            brackets.append({k2: rep.details[k2] for k2 in ("rewards", "corner", "gate", "eps0_bracket", "analytic_eps0")}
                            | {"violations": rep.n_violations, "worst_margin": rep.worst_margin})
    checks.append(_check("sector_bounds", n_viol == 0, n_points=n_pts, n_violations=n_viol, brackets=brackets))
    sup = poly_suppression_sweep(100_000, seed=_sub_seed(r_bad))
    checks.append(_check("poly_suppression", sup.passed, report=sup.to_dict()))
    checks.append(bandit_monotonicity_check(n_props, r_mono))
    checks.append(logit_gap_identity_check(n_props, r_gap))
    # sector monotonicity inside the EG bracket of the 3-arm instance
    mono_viol = mono_pts = 0
    for j in (1, 2):
        lo = validated_sector_check(b, j, EG, 200, seed).details["eps0_bracket"][0]
        rep = check_sector_monotonicity(b, j, [lo * 10.0 ** -k for k in range(4)], samples, seed)
        mono_viol += rep.n_violations
        mono_pts += rep.n_points
    checks.append(_check("sector_monotonicity_within_bracket", mono_viol == 0, gating=False,
                         n_points=mono_pts, n_violations=mono_viol))
    checks += bad_region_checks(b, 1, resolution)
    esc = check_escape_bound(b, 1, n_escape, seed=seed)
    checks.append(_check("escape_time_bound", esc.passed, n_trajectories=esc.n_trajectories,
                         n_violations=esc.n_violations, worst_ratio=esc.worst_ratio, eps_bar=esc.eps_bar))
    return _finish("bandit", seed, checks)


# --------------------------------------------------------------------- mdp

def random_policy(rng, m) -> MdpPolicy:
    return MdpPolicy(rng.normal(scale=float(rng.choice([0.5, 2.0, 5.0])), size=(m.n_states, m.n_actions)))


def _random_small_mdp(rng, unique=False):
    return random_mdp(rng, int(rng.integers(1, 9)), int(rng.integers(2, 6)), unique=unique)


def pdl_residual_check(n: int, rng) -> dict:
    worst = 0.0
    for _ in range(n):
        m = _random_small_mdp(rng)
        worst = max(worst, pdl_check(m, random_policy(rng, m), random_policy(rng, m)))
    return _check("pdl_identity", worst < 1e-9, n=n, max_residual=worst)


def mdp_monotonicity_check(n: int, rng, etas=(0.1, 1.0, 5.0), alphas=(0.1, 1.0)) -> dict:
    worst_dv = math.inf
    worst_formula = 0.0
    for _ in range(n):
        m = _random_small_mdp(rng)
        pol = random_policy(rng, m)
        steps = [eg_mdp_step(m, pol, e) for e in etas]
        steps += [dg_mdp_step(m, pol, a, e) for a in alphas for e in etas]
        for st in steps:
            worst_dv = min(worst_dv, st.value_delta)
            worst_formula = max(worst_formula, abs(st.value_delta - st.progress_formula))
    return _check("mdp_monotonicity", worst_dv >= -1e-12 and worst_formula <= 1e-9, n=n,
                  min_value_delta=worst_dv, max_formula_error=worst_formula)


def mdp_local_escape_check(n_mdps: int, samples: int, rng) -> dict:
    fr = {e: [0, 0] for e in SHELLS}
    for _ in range(n_mdps):
        m = random_mdp(rng, int(rng.integers(2, 7)), 3)
        j = (optimal_policy(m).actions + 1) % m.n_actions
        for e, (f, cnt) in local_escape_fractions(m, j, SHELLS, samples, rng).items():
            fr[e][0] += f * cnt
            fr[e][1] += cnt
    frac = {e: b / c for e, (b, c) in fr.items()}
    return _check("mdp_local_escape", frac[0.001] < frac[0.01] < frac[0.1] or frac[0.001] == 0.0,
                  fractions=frac)


def mdp_rate_runs(n_mdps: int, rng, eta: float = 1.0, alpha: float = 1.0, max_iters: int = 200_000) -> list:
    rows = []
    for _ in range(n_mdps):
        m = random_mdp(rng, int(rng.integers(2, 9)), int(rng.integers(2, 6)))
        opt = optimal_policy(m)
        pol0 = corner_policy(m, (opt.actions + 1) % m.n_actions)
        for name, upd in (("eg", eg_updater(eta)), ("dg", dg_updater(alpha, eta))):
            rec = run_mdp_to_convergence(m, pol0, upd, tol=math.inf, tv_tol=1e-3, max_iters=max_iters)
            try:
                fit = fit_rate(rec.deltas)
                r2, slope = fit.r_squared, fit.slope
            except InsufficientDataError:
                r2 = slope = math.nan
            c = mdp_telescope_constant(m, eta, float(rec.d_min.min())) if name == "eg" else None
            rows.append({"method": name, "n_states": m.n_states, "n_actions": m.n_actions,
                         "converged": rec.converged, "iterations": rec.iterations, "max_tv": rec.max_tv,
                         "r_squared": r2, "slope": slope, "d_min": float(rec.d_min.min()),
                         "telescope_violations": mdp_telescope_violations(rec, c) if c else None})
    return rows


def mdp_suite(seed: int = 0, n_props: int = 200, n_local: int = 3, local_samples: int = 1000,
              n_rate: int = 3) -> dict:
    r_pdl, r_mono, r_loc, r_rate = _rngs(seed, 4)
    checks = [pdl_residual_check(n_props, r_pdl), mdp_monotonicity_check(n_props, r_mono),
              mdp_local_escape_check(n_local, local_samples, r_loc)]
    rows = mdp_rate_runs(n_rate, r_rate)
    checks.append(_check("mdp_convergence", all(r["converged"] for r in rows), runs=rows))
    checks.append(_check("mdp_telescope", all(r["telescope_violations"] == 0 for r in rows if r["method"] == "eg"),
                         runs=[r for r in rows if r["method"] == "eg"]))
    checks.append(_check("mdp_rate_fit_r2", all(r["r_squared"] >= 0.99 for r in rows), gating=False))
    return _finish("mdp", seed, checks)


# ---------------------------------------------------------- counterexample

def counterexample_suite(seed: int = 0) -> dict:
    pg = cx.find_fixed_points("pg")
    eg = cx.find_fixed_points("eg")
    dg = cx.find_fixed_points("dg", 1.0)
    grid = np.linspace(0.001, 0.999, 10_000)
    checks = [
        _check("pg_no_interior_root", not pg.roots and bool(np.all(cx.f_pg(grid) < 0)), report=pg.to_dict()),
        _check("eg_root_one_eleventh", len(eg.roots) == 1 and abs(eg.roots[0] - 1 / 11) <= 1e-9
               and abs(eg.derivatives[0] + 50 / 11) <= 1e-6 and eg.stable[0], report=eg.to_dict()),
        _check("dg_root_near_0.116", len(dg.roots) == 1 and abs(dg.roots[0] - 0.116) <= 0.005 and dg.stable[0],
               report=dg.to_dict()),
        _check("closed_forms_match_state_sums",
               max(float(np.max(np.abs(cx.f_pg(grid) - cx.f_by_state(grid, "pg")))),
                   float(np.max(np.abs(cx.f_eg(grid) - cx.f_by_state(grid, "eg"))))) <= 1e-12),
        _check("ablation_no_eg_root", not cx.find_fixed_points(
            "eg", inst=cx.SharedParamInstance(r_s2_a1=100.0)).roots),
        _check("dg_eta_sweep", True, gating=False, roots=cx.eta_sweep()),
    ]
    return _finish("counterexample", seed, checks)


def _finish(name, seed, checks) -> dict:
    return _jsonable({"suite": name, "seed": seed,
                      "passed": all(c["passed"] for c in checks if c["gating"]), "checks": checks})


def run_suite(name: str, seed: int = 0, **kw) -> dict:
    if name == "bandit":
        return bandit_suite(seed, **kw)
    if name == "mdp":
        return mdp_suite(seed, **kw)
    if name == "counterexample":
        return counterexample_suite(seed)
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
