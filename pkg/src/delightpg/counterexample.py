"""Two-state shared-parameter example: a root node branches with equal
probability to s1 or s2, where one action is taken with shared probability
p = sigmoid(theta) and the episode ends.

Drifts are computed two ways: closed forms in p, and per-state sums
G_s = sum_a w(s,a) pi(a) U(s,a) dlog pi(a)/dtheta.
"""
from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field

import numpy as np

from .dynamics import sigmoid
from .errors import DomainError, InvalidInputError

METHODS = ("pg", "eg", "dg")
ETA_SWEEP = (0.1, 0.5, 1.0, 2.0, 5.0)


@dataclass(frozen=True)
class SharedParamInstance:
    r_s1_a1: float = 10.0
    r_s2_a1: float = -100.0
    r_a0: float = 0.0
    branch: float = 0.5
    overridden: bool = field(init=False, default=False)

    def __post_init__(self):
        if not 0.0 < self.branch < 1.0:
            raise InvalidInputError("branch probability must lie in (0, 1)")
        default = (10.0, -100.0, 0.0, 0.5)
        object.__setattr__(self, "overridden",
                           (self.r_s1_a1, self.r_s2_a1, self.r_a0, self.branch) != default)

    def states(self):
        """(weight, reward of a1, reward of a0) for each leaf state."""
        return ((self.branch, self.r_s1_a1, self.r_a0), (1.0 - self.branch, self.r_s2_a1, self.r_a0))


DEFAULT_INSTANCE = SharedParamInstance()


def _check_p(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise DomainError("p must lie strictly inside (0, 1)")
    return p


def state_advantages(p, r1: float, r0: float):
    """U(a1) = (1 - p)(r1 - r0), U(a0) = -p (r1 - r0)."""
    d = r1 - r0
    return (1.0 - p) * d, -p * d


def _state_term(p, r1, r0, method: str, eta: float):
    u1, u0 = state_advantages(p, r1, r0)
    q = 1.0 - p
    if method == "pg":
        w1 = w0 = 1.0
    elif method == "eg":
        w1 = (u1 > 0).astype(float)
        w0 = (u0 > 0).astype(float)
    else:
        w1 = sigmoid(u1 * -np.log(p) / eta)
        w0 = sigmoid(u0 * -np.log(q) / eta)
    return w1 * p * u1 * q + w0 * q * u0 * (-p)


def f_by_state(p, method: str, eta: float = 1.0, inst: SharedParamInstance = DEFAULT_INSTANCE):
    """F = sum_s P(s) G_s from the per-state advantages and score derivatives."""
    if method not in METHODS:
        raise InvalidInputError(f"method must be one of {METHODS}")
    if method == "dg" and not eta > 0:
        raise InvalidInputError("eta must be positive")
    p = _check_p(p)
    return sum(wt * _state_term(p, r1, r0, method, eta) for wt, r1, r0 in inst.states())


def f_pg(p, inst: SharedParamInstance = DEFAULT_INSTANCE):
    """p(1 - p) sum_s P(s) d_s with d_s = r(s,a1) - r(s,a0); -45 p(1 - p) by default."""
    p = _check_p(p)
    return p * (1.0 - p) * sum(wt * (r1 - r0) for wt, r1, r0 in inst.states())


def f_eg(p, inst: SharedParamInstance = DEFAULT_INSTANCE):
    """Only positive-advantage actions survive the gate: a1 where d_s > 0
    contributes p(1-p)^2 d_s, a0 where d_s < 0 contributes p^2(1-p) d_s.
    Reduces to 5 p (1 - p)(1 - 11 p) by default."""
    p = _check_p(p)
    out = np.zeros_like(p)
    for wt, r1, r0 in inst.states():
        d = r1 - r0
        if d > 0:
            out = out + wt * d * p * (1.0 - p) ** 2
        elif d < 0:
            out = out + wt * d * p ** 2 * (1.0 - p)
    return out


def f_eg_prime(p, inst: SharedParamInstance = DEFAULT_INSTANCE):
    p = _check_p(p)
    out = np.zeros_like(p)
    for wt, r1, r0 in inst.states():
        d = r1 - r0
        if d > 0:
            out = out + wt * d * (1.0 - p) * (1.0 - 3.0 * p)
        elif d < 0:
            out = out + wt * d * p * (2.0 - 3.0 * p)
    return out


def f_dg(p, eta: float = 1.0, inst: SharedParamInstance = DEFAULT_INSTANCE):
    return f_by_state(p, "dg", eta, inst)


def drift_fn(method: str, eta: float = 1.0, inst: SharedParamInstance = DEFAULT_INSTANCE):
    if method == "pg":
        return lambda p: f_pg(p, inst)
    if method == "eg":
        return lambda p: f_eg(p, inst)
    if method == "dg":
        return lambda p: f_dg(p, eta, inst)
    raise InvalidInputError(f"method must be one of {METHODS}")


@dataclass
class FixedPointReport:
    method: str
    eta: float | None
    roots: list
    derivatives: list
    stable: list
    residuals: list

    def to_dict(self) -> dict:
        return {"method": self.method, "eta": self.eta, "roots": self.roots,
                "derivatives": self.derivatives, "stable": self.stable, "residuals": self.residuals}


def _bisect(f, lo, hi, max_iter=200):
    """Bisect a sign change down to adjacent floats."""
    flo = f(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_fixed_points(method: str, eta: float = 1.0, inst: SharedParamInstance = DEFAULT_INSTANCE,
                      n_grid: int = 10_000, h: float = 1e-6) -> FixedPointReport:
    """Interior roots of F from sign changes on a grid in (0.001, 0.999).

    Each root is refined by bisection; stability is the sign of F' from a
    central difference with step h (the analytic derivative for EG).
    """
    method = method.lower()
    f = drift_fn(method, eta, inst)
    grid = np.linspace(0.001, 0.999, n_grid)
    vals = f(grid)
    roots = []
    for i in range(n_grid - 1):
        a, c = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(float(grid[i]))
        elif a * c < 0:
            roots.append(float(_bisect(lambda x: float(f(np.array(x))), grid[i], grid[i + 1])))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    derivs = []
    for r in roots:
        if method == "eg":
            derivs.append(float(f_eg_prime(np.array(r), inst)))
        else:
            derivs.append(float((f(np.array(r + h)) - f(np.array(r - h))) / (2 * h)))
    res = [float(abs(f(np.array(r)))) for r in roots]
    return FixedPointReport(method, eta if method == "dg" else None, roots, derivs,
                            [d < 0 for d in derivs], res)


def eta_sweep(etas=ETA_SWEEP, inst: SharedParamInstance = DEFAULT_INSTANCE) -> dict:
    return {float(e): find_fixed_points("dg", e, inst).roots for e in etas}


def shared_flow(method: str, theta0: float, t_max: float, dt: float = 1e-3, eta: float = 1.0,
                inst: SharedParamInstance = DEFAULT_INSTANCE):
    """RK4 integration of theta' = F(sigmoid(theta)). Returns (times, thetas, ps)."""
    f = drift_fn(method, eta, inst)

    def rhs(th):
        return float(f(np.array(sigmoid(th))))

    n = int(round(t_max / dt))
    th = float(theta0)
    thetas = np.empty(n + 1)
    thetas[0] = th
    for i in range(n):
        k1 = rhs(th)
        k2 = rhs(th + 0.5 * dt * k1)
        k3 = rhs(th + 0.5 * dt * k2)
        k4 = rhs(th + dt * k3)
        th += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        thetas[i + 1] = th
    times = np.arange(n + 1) * dt
    return times, thetas, sigmoid(thetas)


def drift_grid(n: int = 10_000, eta: float = 1.0, inst: SharedParamInstance = DEFAULT_INSTANCE):
    p = np.linspace(0.001, 0.999, n)
    return p, f_pg(p, inst), f_eg(p, inst), f_dg(p, eta, inst)


def grid_to_csv(n: int = 10_000, eta: float = 1.0, inst: SharedParamInstance = DEFAULT_INSTANCE) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "F_PG", "F_EG", "F_DG"])
    for row in zip(*drift_grid(n, eta, inst)):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()
