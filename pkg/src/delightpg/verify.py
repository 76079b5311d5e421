"""Numerical falsification of the corner-escape claims.

Every check evaluates the analytic drift from ``dynamics`` at sampled
policies (no trajectories), except the escape-time check which integrates
the flow. Reports carry the seed that produced the sample points.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bandit import PROB_FLOOR, BanditInstance, advantages, check_policy, sample_corner_region
from .dynamics import DG, EG, GateSpec, gap_batch, sigmoid
from .errors import InsufficientDataError, InvalidInputError, UnsupportedError
from .flow import FlowConfig, integrate

EG_CONST = 4.0
DG_CONST = 8.0
SHELLS = (0.1, 0.01, 0.001)


@dataclass(frozen=True)
class SectorPoint:
    pi: tuple
    corner: int
    epsilon: float
    in_sector: bool

    @classmethod
    def make(cls, pi, corner: int, optimal: int, eps_bar: float) -> "SectorPoint":
        pi = np.asarray(pi, dtype=float)
        K = pi.size
        eps = float(1.0 - pi[corner])
        inside = bool(0.0 < eps < eps_bar and pi[optimal] >= eps / K)
        return cls(tuple(float(x) for x in pi), int(corner), eps, inside)


@dataclass
class BoundCheckReport:
    name: str
    n_points: int
    n_violations: int
    worst_margin: float
    witness: SectorPoint | None
    seed: int | None = None
    n_skipped: int = 0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return _jsonable(d)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def random_bandit(rng: np.random.Generator, K: int, min_gap: float = 0.01) -> BanditInstance:
    """Uniform rewards in [0, 1] with every pairwise gap at least ``min_gap``."""
    for _ in range(10_000):
        r = rng.uniform(0.0, 1.0, size=K)
        if np.min(np.diff(np.sort(r))) >= min_gap:
            return BanditInstance(r, distinct=True)
    raise InvalidInputError("could not draw rewards with the requested minimum gap")


# ---------------------------------------------------------------- sampling

def sample_sector(rng: np.random.Generator, K: int, corner: int, optimal: int, eps: float,
                  n: int) -> np.ndarray:
    """Policies with 1 - pi(corner) = eps and pi(optimal) >= eps/K.

    Mass eps is split over the K-1 other arms by Dirichlet(1, ..., 1),
    conditioned on the optimal arm's share by rejection. A quarter of the
    points sit on the boundary pi(optimal) = eps/K and an eighth use a
    sparse Dirichlet(0.2) split, to reach the faces of the slice.
    """
    others = [a for a in range(K) if a != corner]
    io = others.index(optimal)
    m = K - 1
    n_bd = n // 4
    n_sp = n // 8
    n_in = n - n_bd - n_sp
    parts = []
    got = 0
    while got < n_in:
        x = rng.dirichlet(np.ones(m), size=max(2 * (n_in - got), 16))
        x = x[x[:, io] >= 1.0 / K]
        parts.append(x[: n_in - got])
        got += parts[-1].shape[0]
    got = 0
    while got < n_sp:
        x = rng.dirichlet(np.full(m, 0.2), size=max(4 * (n_sp - got), 16))
        x = x[x[:, io] >= 1.0 / K]
        parts.append(x[: n_sp - got])
        got += parts[-1].shape[0]
    if n_bd:
        x = np.empty((n_bd, m))
        x[:, io] = 1.0 / K
        if m > 1:
            rest = rng.dirichlet(np.ones(m - 1), size=n_bd) * (1.0 - 1.0 / K)
            x[:, [i for i in range(m) if i != io]] = rest
        parts.append(x)
    shares = np.concatenate(parts) if parts else np.empty((0, m))
    pis = np.empty((shares.shape[0], K))
    pis[:, corner] = 1.0 - eps
    pis[:, others] = eps * shares
    return pis


def adversarial_points(b: BanditInstance, corner: int, eps: float) -> np.ndarray:
    """Boundary points with pi(optimal) = eps/K and the rest of eps on a single arm."""
    K, opt = b.K, b.optimal_arm
    pts = []
    for a in range(K):
        if a == corner:
            continue
        p = np.zeros(K)
        p[corner] = 1.0 - eps
        p[opt] = eps / K
        p[a] += eps - eps / K
        pts.append(p)
    return np.array(pts)


def _shell_points(b, corner, eps, n, rng):
    pts = sample_sector(rng, b.K, corner, b.optimal_arm, eps, n)
    return np.concatenate([pts, adversarial_points(b, corner, eps)])


# ------------------------------------------------------------- sector bounds

def _gate_const(gate: GateSpec) -> float:
    if gate.kind == "eg":
        return EG_CONST
    if gate.kind == "dg":
        return DG_CONST
    raise UnsupportedError("sector bounds are stated for the EG and DG gates")


def sector_margins(b: BanditInstance, corner: int, gate: GateSpec, pis: np.ndarray) -> np.ndarray:
    """gap(optimal, corner) - (Delta_{1j} / (c K)) eps at each policy."""
    opt = b.optimal_arm
    eps = 1.0 - pis[:, corner]
    bound = b.gap(opt, corner) / (_gate_const(gate) * b.K) * eps
    return gap_batch(b, pis, gate, opt, corner) - bound


def _shell_violations(b, corner, gate, eps, n, rng) -> int:
    return int(np.sum(sector_margins(b, corner, gate, _shell_points(b, corner, eps, n, rng)) < 0))


def empirical_eps0(b: BanditInstance, corner: int, gate: GateSpec, rng: np.random.Generator,
                   n: int = 2000, top: float = 0.5, bottom: float = 1e-9,
                   bisect_steps: int = 20) -> tuple[float, float | None]:
    """Bracket (lo, hi) for the sector-bound radius.

    Shells eps = top * 2^-k are tested down to ``bottom``; lo is the largest
    tested eps below every violating shell and hi the smallest violating
    shell above it, refined by geometric bisection. hi is None when no shell
    violates.
    """
    grid = []
    e = top
    while e >= bottom:
        grid.append(e)
        e /= 2.0
    bad = [_shell_violations(b, corner, gate, e, n, rng) > 0 for e in grid]
    if not any(bad):
        return top, None
    last_bad = max(i for i, x in enumerate(bad) if x)
    if last_bad == len(grid) - 1:
        return 0.0, grid[-1]
    lo, hi = grid[last_bad + 1], grid[last_bad]
    for _ in range(bisect_steps):
        mid = math.sqrt(lo * hi)
        if _shell_violations(b, corner, gate, mid, n, rng) > 0:
            hi = mid
        else:
            lo = mid
    return lo, hi


def _arm_sets(b: BanditInstance, corner: int):
    r = b.rewards
    Rj = float(np.max(np.abs(r[corner] - r)))
    allies = [i for i in range(b.K) if r[i] > r[corner]]
    harmful = [k for k in range(b.K) if r[k] < r[corner]]
    return r, Rj, allies, harmful


def analytic_eps0_eg(b: BanditInstance, corner: int) -> float:
    """Radius satisfying every smallness condition used in the EG sector proof.

    With C = max_a |r(j) - r(a)|, |U(j)| <= C eps, so U(i) >= Delta_ij / 2 for
    allies when eps <= Delta_ij / (2C), harmful arms keep U < 0 when
    eps < Delta_jk / C, and the arm-j residual is dominated when
    eps <= Delta_1j / (8 K C).
    """
    r, C, allies, harmful = _arm_sets(b, corner)
    opt = b.optimal_arm
    cands = [0.5, b.gap(opt, corner) / (8.0 * b.K * C)]
    cands += [(r[i] - r[corner]) / (2.0 * C) for i in allies]
    cands += [(r[corner] - r[k]) / C for k in harmful]
    return float(min(cands))


def analytic_eps0_dg(b: BanditInstance, corner: int, eta: float) -> float:
    """EG conditions plus |U(k)| >= Delta_jk / 2 on harmful arms and
    2 C eps + R |S-| eps^d <= Delta_1j / (8K), d = min_k Delta_jk / (2 eta)."""
    r, C, allies, harmful = _arm_sets(b, corner)
    opt = b.optimal_arm
    target = b.gap(opt, corner) / (8.0 * b.K)
    cands = [0.5]
    cands += [(r[i] - r[corner]) / (2.0 * C) for i in allies]
    cands += [(r[corner] - r[k]) / (2.0 * C) for k in harmful]
    if not harmful:
        cands.append(target / (2.0 * C))
        return float(min(cands))
    R = b.reward_range
    d = min(r[corner] - r[k] for k in harmful) / (2.0 * eta)
    nk = len(harmful)

    def excess(log_e):
        e = math.exp(log_e)
        return 2.0 * C * e + R * nk * math.exp(d * log_e) - target

    lo, hi = -745.0, 0.0
    if excess(lo) > 0:
        return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            hi = mid
        else:
            lo = mid
    cands.append(math.exp(lo))
    return float(min(cands))


def check_sector_bound(b: BanditInstance, corner: int, gate: GateSpec, eps_values,
                       samples_per_eps: int, seed: int = 0, eps_bar: float = 0.5) -> BoundCheckReport:
    """Sample each eps shell and count points where the logit gap falls below
    Delta_{1j} eps / (cK), c = 4 for EG and 8 for DG.

    Shells with eps >= eps_bar are outside the sector and only counted as
    skipped.
    """
    opt = b.optimal_arm
    if corner == opt or not 0 <= corner < b.K:
        raise InvalidInputError("corner must be a sub-optimal arm")
    rng = np.random.default_rng(seed)
    n_pts = n_viol = n_skip = 0
    worst, witness = math.inf, None
    for eps in eps_values:
        if not (0.0 < eps < eps_bar):
            n_skip += 1
            continue
        pts = _shell_points(b, corner, float(eps), samples_per_eps, rng)
        m = sector_margins(b, corner, gate, pts)
        n_pts += m.size
        n_viol += int(np.sum(m < 0))
        i = int(np.argmin(m))
        if m[i] < worst:
            worst = float(m[i])
            witness = SectorPoint.make(pts[i], corner, opt, eps_bar)
    return BoundCheckReport(f"{gate.kind}_sector_bound", n_pts, n_viol, worst, witness, seed, n_skip)


def check_eg_sector_bound(b, corner, eps_values, samples_per_eps, seed=0, eps_bar=0.5):
    return check_sector_bound(b, corner, EG, eps_values, samples_per_eps, seed, eps_bar)


def check_dg_sector_bound(b, corner, eta, eps_values, samples_per_eps, seed=0, eps_bar=0.5):
    return check_sector_bound(b, corner, DG(eta), eps_values, samples_per_eps, seed, eps_bar)


def validated_sector_check(b: BanditInstance, corner: int, gate: GateSpec, samples_per_eps: int,
                           seed: int, decades: int = 4, bracket_samples: int = 2000) -> BoundCheckReport:
    """Bracket eps0 on one random stream, then re-test fresh points on shells
    lo * 10^-k (k = 0..decades) and at the analytic radius."""
    s_bracket, s_check = np.random.SeedSequence(seed).spawn(2)
    lo, hi = empirical_eps0(b, corner, gate, np.random.default_rng(s_bracket), n=bracket_samples)
    analytic = analytic_eps0_eg(b, corner) if gate.kind == "eg" else analytic_eps0_dg(b, corner, gate.eta)
    shells = [lo * 10.0 ** -k for k in range(decades + 1) if lo > 0]
    if analytic > 0:
        shells += [analytic, analytic / 10.0]
    check_seed = int(s_check.generate_state(1)[0])
    rep = check_sector_bound(b, corner, gate, shells, samples_per_eps, check_seed, eps_bar=0.5 + 1e-12)
    rep.seed = seed
    rep.details = {"eps0_bracket": [lo, hi], "analytic_eps0": analytic, "shells": shells,
                   "corner": corner, "rewards": b.rewards.tolist(), "gate": gate.label()}
    return rep


# --------------------------------------------------------- sector monotonicity

def check_sector_monotonicity(b: BanditInstance, corner: int, eps_values, samples_per_eps: int,
                              seed: int = 0) -> BoundCheckReport:
    """Under EG every non-corner arm gains on the corner arm (so eps grows),
    and the log-ratio bound holds. Margin is min over a != j of the gap."""
    rng = np.random.default_rng(seed)
    opt = b.optimal_arm
    n_pts = n_viol = 0
    worst, witness = math.inf, None
    others = [a for a in range(b.K) if a != corner]
    for eps in eps_values:
        pts = _shell_points(b, corner, float(eps), samples_per_eps, rng)
        gaps = np.stack([gap_batch(b, pts, EG, a, corner) for a in others], axis=1)
        m = gaps.min(axis=1)
        eps_dot = pts[:, corner] * np.sum(pts[:, others] * gaps, axis=1)
        bad = (m <= 0) | (eps_dot <= 0) | (sector_margins(b, corner, EG, pts) < 0)
        n_pts += m.size
        n_viol += int(bad.sum())
        i = int(np.argmin(m))
        if m[i] < worst:
            worst = float(m[i])
            witness = SectorPoint.make(pts[i], corner, opt, 1.0)
    return BoundCheckReport("sector_monotonicity", n_pts, n_viol, worst, witness, seed)


def monotonicity_eps_bar(b: BanditInstance, corner: int, rng, n: int = 2000,
                         top: float = 0.5, bottom: float = 1e-9) -> float:
    """Largest grid eps below every shell where sector monotonicity fails."""
    grid = []
    e = top
    while e >= bottom:
        grid.append(e)
        e /= 2.0
    fails = []
    for e in grid:
        rep = check_sector_monotonicity(b, corner, [e], n, seed=int(rng.integers(2**63)))
        fails.append(rep.n_violations > 0)
    if not any(fails):
        return top
    last = max(i for i, x in enumerate(fails) if x)
    return grid[last + 1] if last + 1 < len(grid) else 0.0


# ---------------------------------------------------------- poly suppression

def check_poly_suppression(b: BanditInstance, pi, eta: float, corner: int | None = None,
                           rel_tol: float = 1e-12) -> BoundCheckReport:
    """w(k) <= pi(k)^{|U(k)|/eta} on every arm with U(k) < 0.

    With ``corner`` given, arms k below the corner with |U(k)| >= Delta_jk/2
    are also checked against w(k) pi(k) <= pi(k)^{1 + Delta_jk/(2 eta)}.
    Margins are differences of logs; ``rel_tol`` absorbs rounding.
    """
    pi = check_policy(pi, b.K, atol=1e-9)
    U = advantages(b, pi)
    neg = U < 0
    if not np.any(neg):
        raise InvalidInputError("no arm with negative advantage")
    logp = np.log(np.maximum(pi, PROB_FLOOR))
    log_w = _log_gate(U, logp, eta)
    margin = np.where(neg, np.abs(U) / eta * logp - log_w + _slack(logp, rel_tol), np.inf)
    n_pts = int(neg.sum())
    if corner is not None:
        dj = b.rewards[corner] - b.rewards
        near = neg & (dj > 0) & (np.abs(U) >= dj / 2)
        m2 = (1 + dj / (2 * eta)) * logp - (log_w + logp) + _slack(logp, rel_tol)
        margin = np.minimum(margin, np.where(near, m2, np.inf))
        n_pts += int(near.sum())
    k = int(np.argmin(margin))
    return BoundCheckReport("poly_suppression", n_pts, int(np.sum(margin < 0)), float(margin[k]), None)


def _log_gate(U, logp, eta):
    """log sigmoid(U * (-log pi) / eta), evaluated without underflow."""
    return -np.logaddexp(0.0, U * logp / eta)


def _slack(logp, rel_tol):
    return rel_tol * np.maximum(1.0, np.abs(logp))


def poly_suppression_sweep(n: int, seed: int = 0, rel_tol: float = 1e-12) -> BoundCheckReport:
    """Random (pi, U < 0, eta) triples: pi log-uniform in [1e-12, 1), U uniform
    in [-1, 0), eta log-uniform in [1e-3, 1e2]."""
    rng = np.random.default_rng(seed)
    p = 10.0 ** rng.uniform(-12, 0, size=n)
    U = -rng.uniform(0, 1, size=n)
    U[U == 0] = -1e-300
    eta = 10.0 ** rng.uniform(-3, 2, size=n)
    logp = np.log(p)
    # compare logs: both sides underflow for deep pi and large |U|/eta
    with np.errstate(divide="ignore"):
        log_w = np.log(sigmoid(U * -logp / eta))
    deep = ~np.isfinite(log_w) | (log_w < -700)
    log_w[deep] = _log_gate(U[deep], logp[deep], eta[deep])
    margin = np.abs(U) / eta * logp - log_w + _slack(logp, rel_tol)
    i = int(np.argmin(margin))
    rep = BoundCheckReport("poly_suppression_sweep", n, int(np.sum(margin < 0)), float(margin[i]), None, seed)
    rep.details = {"worst_triple": {"pi": float(p[i]), "U": float(U[i]), "eta": float(eta[i])}}
    return rep


# ---------------------------------------------------------------- bad region

@dataclass
class RegionMap:
    gate: str
    corner: int
    resolution: int
    coords: np.ndarray          # (n, 3) barycentric cell centres
    bad: np.ndarray             # (n,) bool
    bad_fraction: float
    shell_fractions: dict       # eps -> bad fraction inside {1 - pi(corner) < eps}

    def to_csv(self) -> str:
        lines = ["pi_0,pi_1,pi_2,label"]
        for c, x in zip(self.coords, self.bad):
            lines.append(f"{float(c[0])!r},{float(c[1])!r},{float(c[2])!r},{'bad' if x else 'good'}")
        return "\n".join(lines) + "\n"


def simplex_grid(n: int) -> np.ndarray:
    """Centroids of the n^2 triangles of the n-subdivided 2-simplex."""
    i, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    up = ((i + 1 / 3) / n, (k + 1 / 3) / n)
    dn = ((i + 2 / 3) / n, (k + 2 / 3) / n)
    a = np.concatenate([up[0][i + k <= n - 1], dn[0][i + k <= n - 2]])
    c = np.concatenate([up[1][i + k <= n - 1], dn[1][i + k <= n - 2]])
    return np.stack([a, c, 1.0 - a - c], axis=1)


def corner_grid(n: int, corner: int, eps: float) -> np.ndarray:
    """Grid over {1 - pi(corner) < eps}: the other two coordinates are the
    centroids of the n-subdivided triangle of side eps."""
    g = simplex_grid(n)[:, :2] * eps
    out = np.empty((g.shape[0], 3))
    others = [a for a in range(3) if a != corner]
    out[:, others] = g
    out[:, corner] = 1.0 - g.sum(axis=1)
    return out


def bad_mask(b: BanditInstance, gate: GateSpec, corner: int, pis: np.ndarray) -> np.ndarray:
    return gap_batch(b, pis, gate, b.optimal_arm, corner) <= 0


def map_bad_region(b: BanditInstance, gate: GateSpec, corner: int, grid_resolution: int = 400,
                   shells=SHELLS) -> RegionMap:
    """Label grid cells bad where the optimal arm's logit does not outpace the
    corner arm's. Shell fractions use a zoomed grid of the same resolution
    over each corner neighbourhood."""
    if b.K != 3:
        raise UnsupportedError("planar maps need K = 3; use sample_bad_fraction for general K")
    if corner == b.optimal_arm:
        raise InvalidInputError("corner must be a sub-optimal arm")
    coords = simplex_grid(grid_resolution)
    bad = bad_mask(b, gate, corner, coords)
    fr = {}
    for e in shells:
        fr[float(e)] = float(bad_mask(b, gate, corner, corner_grid(grid_resolution, corner, e)).mean())
    return RegionMap(gate.label(), corner, grid_resolution, coords, bad, float(bad.mean()), fr)


def sample_bad_fraction(b: BanditInstance, gate: GateSpec, corner: int, eps: float, n: int,
                        rng: np.random.Generator) -> float:
    """Bad fraction among uniform points of {1 - pi(corner) < eps}, any K."""
    pis = sample_corner_region(rng, b.K, corner, eps, n)
    return float(bad_mask(b, gate, corner, pis).mean())


# ----------------------------------------------------------------- rate fit

@dataclass(frozen=True)
class RateFit:
    slope: float
    r_squared: float
    T0_estimate: float
    loglog_exponent: float
    super_linear: bool      # 1/delta grows faster than linearly in t


def fit_rate(delta_series, exponent_flag: float = 1.25) -> RateFit:
    """Least squares of 1/delta_t on t over the trailing half.

    T0 is where the fitted line crosses zero. The log-log exponent of 1/delta
    against t on the same window is reported and flags faster-than-1/t decay.
    """
    d = np.asarray(delta_series, dtype=float)
    if d.ndim != 1:
        raise InvalidInputError("delta series must be 1-d")
    start = d.size // 2
    tail = d[start:]
    if tail.size < 20:
        raise InsufficientDataError(f"trailing half has {tail.size} points; need at least 20")
    if np.any(tail <= 0) or not np.all(np.isfinite(tail)):
        raise InvalidInputError("delta series tail must be positive and finite")
    t = np.arange(start, d.size, dtype=float)
    y = 1.0 / tail
    slope, icpt = np.polyfit(t, y, 1)
    res = y - (slope * t + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(res @ res) / ss if ss > 0 else 0.0
    T0 = -icpt / slope if slope != 0 else math.nan
    pos = t > 0
    p = float(np.polyfit(np.log(t[pos]), np.log(y[pos]), 1)[0]) if np.sum(pos) >= 2 else math.nan
    return RateFit(float(slope), r2, float(T0), p, bool(p > exponent_flag))


# -------------------------------------------------------------- escape bound

@dataclass
class EscapeCheck:
    eps_bar: float
    n_trajectories: int
    n_violations: int
    worst_ratio: float      # max tau / bound
    rows: list

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def escape_time_bound(b: BanditInstance, corner: int, pi0) -> float:
    """4K / (Delta_{1j} eps0) * log(pi0(j) / pi0(1)), eps0 = 1 - pi0(j)."""
    opt = b.optimal_arm
    eps0 = 1.0 - pi0[corner]
    return 4.0 * b.K / (b.gap(opt, corner) * eps0) * math.log(pi0[corner] / pi0[opt])


def check_escape_bound(b: BanditInstance, corner: int, n_traj: int, seed: int = 0,
                       eps_bar: float | None = None, steps_per_bound: int = 100_000) -> EscapeCheck:
    """EG flows from random sector starts; min(tau_W, tau_exit) vs the bound.

    eps_bar defaults to the smaller of the EG sector-bound bracket and the
    sector-monotonicity radius. Starts have eps0 log-uniform in
    [eps_bar/1000, 0.9 eps_bar]; dt is bound / steps_per_bound so the
    measured time over-estimates the continuous one by at most one step.
    """
    opt = b.optimal_arm
    s_bar, s_pts = np.random.SeedSequence(seed).spawn(2)
    if eps_bar is None:
        rb = np.random.default_rng(s_bar)
        lo, _ = empirical_eps0(b, corner, EG, rb)
        eps_bar = min(lo, monotonicity_eps_bar(b, corner, rb))
    if not eps_bar > 0:
        raise InvalidInputError("no sector radius found")
    rng = np.random.default_rng(s_pts)
    rows = []
    n_viol = 0
    worst = 0.0
    while len(rows) < n_traj:
        eps0 = eps_bar * 10.0 ** rng.uniform(-3, math.log10(0.9))
        pi0 = sample_sector(rng, b.K, corner, opt, eps0, 4)[0]
        if pi0[opt] >= pi0[corner]:
            continue
        bound = escape_time_bound(b, corner, pi0)
        dt = bound / steps_per_bound
        cfg = FlowConfig(dt=dt, max_time=2.0 * bound, gate=EG, record_every=10 * steps_per_bound)
        tr = integrate(b, np.log(pi0), cfg, optimal=opt, corner=corner, stop_on_escape=True,
                       sector_eps_bar=eps_bar)
        times = [t for t in (tr.escape_time, tr.exit_time) if t is not None]
        tau = min(times) if times else math.inf
        ok = tau <= bound
        n_viol += 0 if ok else 1
        worst = max(worst, tau / bound)
        rows.append({"eps0": float(eps0), "tau": tau, "bound": bound, "escaped": tr.escape_time is not None,
                     "exited": tr.exit_time is not None, "ok": ok})
    return EscapeCheck(float(eps_bar), len(rows), n_viol, float(worst), rows)
