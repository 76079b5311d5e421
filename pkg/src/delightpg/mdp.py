"""Tabular MDPs: exact policy evaluation, per-state EG/DG updates and the
performance-difference identity."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .bandit import PROB_FLOOR, sample_corner_region, softmax
from .dynamics import EG, GateSpec, gap_batch_values, sigmoid
from .errors import InvalidInputError, PreconditionError

MDP_JSON_KEYS = ("n_states", "n_actions", "gamma", "rho", "rewards", "transitions")


@dataclass(frozen=True)
class TabularMdp:
    P: np.ndarray       # P[s, a, s']
    r: np.ndarray       # r[s, a]
    gamma: float
    rho: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        r = np.array(self.r, dtype=float)
        rho = np.array(self.rho, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise InvalidInputError(f"transitions must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if r.shape != (S, A):
            raise InvalidInputError(f"rewards must have shape ({S}, {A}), got {r.shape}")
        if rho.shape != (S,):
            raise InvalidInputError(f"rho must have shape ({S},)")
        if not all(np.all(np.isfinite(x)) for x in (P, r, rho)):
            raise InvalidInputError("MDP arrays must be finite")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > 1e-12):
            raise InvalidInputError("every P(.|s,a) must be a probability vector")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-12:
            raise InvalidInputError("rho must be a probability vector")
        if not 0.0 <= float(self.gamma) < 1.0:
            raise InvalidInputError("gamma must lie in [0, 1)")
        for name, val in (("P", P), ("r", r), ("rho", rho)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMdp":
        unknown = set(doc) - set(MDP_JSON_KEYS)
        missing = set(MDP_JSON_KEYS) - set(doc)
        if unknown or missing:
            raise InvalidInputError(f"MDP document: unknown keys {sorted(unknown)}, missing {sorted(missing)}")
        m = cls(doc["transitions"], doc["rewards"], doc["gamma"], doc["rho"])
        if (m.n_states, m.n_actions) != (doc["n_states"], doc["n_actions"]):
            raise InvalidInputError("n_states / n_actions disagree with the arrays")
        return m

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "rho": self.rho.tolist(),
            "rewards": self.r.tolist(),
            "transitions": self.P.tolist(),
        }


def load_mdp(path) -> TabularMdp:
    with open(path) as fh:
        return TabularMdp.from_dict(json.load(fh))


@dataclass(frozen=True)
class MdpPolicy:
    logits: np.ndarray

    def __post_init__(self):
        th = np.array(self.logits, dtype=float)
        if th.ndim != 2 or not np.all(np.isfinite(th)):
            raise InvalidInputError("policy logits must be a finite (S, A) array")
        th.flags.writeable = False
        object.__setattr__(self, "logits", th)

    @property
    def pis(self) -> np.ndarray:
        return softmax(self.logits)

    @classmethod
    def from_probs(cls, pis) -> "MdpPolicy":
        return cls(np.log(np.maximum(np.asarray(pis, dtype=float), PROB_FLOOR)))

    @classmethod
    def uniform(cls, m: TabularMdp) -> "MdpPolicy":
        return cls(np.zeros((m.n_states, m.n_actions)))


def corner_policy(m: TabularMdp, actions, depth: float = 6.0) -> MdpPolicy:
    """Logits 0 everywhere except ``depth`` on ``actions[s]`` in each state."""
    th = np.zeros((m.n_states, m.n_actions))
    th[np.arange(m.n_states), np.asarray(actions)] = depth
    return MdpPolicy(th)


@dataclass(frozen=True)
class EvalResult:
    V: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    d_rho: np.ndarray
    objective: float    # rho^T V


def _eval_probs(m: TabularMdp, pis: np.ndarray) -> EvalResult:
    S = m.n_states
    P_pi = np.einsum("sa,sat->st", pis, m.P)
    r_pi = np.sum(pis * m.r, axis=1)
    A = np.eye(S) - m.gamma * P_pi
    V = np.linalg.solve(A, r_pi)
    Q = m.r + m.gamma * (m.P @ V)
    U = Q - V[:, None]
    d = (1.0 - m.gamma) * np.linalg.solve(A.T, m.rho)
    return EvalResult(V, Q, U, d, float(m.rho @ V))


def policy_eval(m: TabularMdp, pol: MdpPolicy) -> EvalResult:
    pis = pol.pis
    if pis.shape != (m.n_states, m.n_actions):
        raise InvalidInputError("policy shape does not match the MDP")
    return _eval_probs(m, pis)


def value_iteration_estimate(m: TabularMdp, pol: MdpPolicy, n_iter: int = 10_000) -> np.ndarray:
    """Truncated iteration of the policy's Bellman operator from V = 0."""
    pis = pol.pis
    P_pi = np.einsum("sa,sat->st", pis, m.P)
    r_pi = np.sum(pis * m.r, axis=1)
    V = np.zeros(m.n_states)
    for _ in range(n_iter):
        V = r_pi + m.gamma * P_pi @ V
    return V


def visitation_by_rollout(m: TabularMdp, pol: MdpPolicy, horizon: int = 10_000) -> np.ndarray:
    """(1 - gamma) sum_t gamma^t Pr(s_t = s), truncated at ``horizon``."""
    P_pi = np.einsum("sa,sat->st", pol.pis, m.P)
    dist = m.rho.copy()
    out = np.zeros(m.n_states)
    w = 1.0
    for _ in range(horizon):
        out += w * dist
        dist = dist @ P_pi
        w *= m.gamma
        if w < 1e-300:
            break
    return (1.0 - m.gamma) * out


@dataclass(frozen=True)
class OptimalPolicy:
    V: np.ndarray
    Q: np.ndarray
    actions: np.ndarray
    margins: np.ndarray

    def policy_probs(self, n_actions: int) -> np.ndarray:
        return np.eye(n_actions)[self.actions]

    @property
    def objective_weights(self):
        return self.V


def optimal_policy(m: TabularMdp, tol: float = 1e-13, max_iter: int = 1_000_000,
                   margin: float = 1e-8, require_unique: bool = True) -> OptimalPolicy:
    """Value iteration to a fixed point, then exact evaluation of the greedy policy.

    Raises PreconditionError if some state's best action wins by less than
    ``margin`` (the optimal policy is then not unique).
    """
    V = np.zeros(m.n_states)
    for _ in range(max_iter):
        V_new = np.max(m.r + m.gamma * (m.P @ V), axis=1)
        done = np.max(np.abs(V_new - V)) < tol
        V = V_new
        if done:
            break
    acts = np.argmax(m.r + m.gamma * (m.P @ V), axis=1)
    ev = _eval_probs(m, np.eye(m.n_actions)[acts])
    Q = ev.Q
    acts = np.argmax(Q, axis=1)
    srt = np.sort(Q, axis=1)
    margins = srt[:, -1] - srt[:, -2] if m.n_actions > 1 else np.full(m.n_states, np.inf)
    if require_unique and np.any(margins < margin):
        s = int(np.argmin(margins))
        raise PreconditionError(
            f"optimal policy is not unique: state {s} has argmax margin {margins[s]:.3e} < {margin:g}")
    return OptimalPolicy(ev.V, Q, acts, margins)


class MdpStep(NamedTuple):
    policy: MdpPolicy
    value_delta: float
    progress_formula: float


def eg_increment(ev: EvalResult, pis: np.ndarray, eta: float) -> np.ndarray:
    return eta * np.maximum(ev.U, 0.0)


def dg_increment(ev: EvalResult, pis: np.ndarray, alpha: float, eta: float) -> np.ndarray:
    w = sigmoid(ev.U * -np.log(np.maximum(pis, PROB_FLOOR)) / eta)
    return alpha * w * ev.U


def _progress(m: TabularMdp, pis, U, inc, ev_next: EvalResult) -> float:
    mx = inc.max(axis=1, keepdims=True)
    if np.all(mx < 700.0):
        Z = np.sum(pis * np.exp(inc), axis=1)
        per_state = np.sum(pis * U * np.expm1(inc), axis=1) / Z
    else:
        # shift each state by its largest increment so e^inc cannot overflow
        e = np.exp(inc - mx)
        per_state = (np.sum(pis * U * e, axis=1) - np.exp(-mx[:, 0]) * np.sum(pis * U, axis=1)) \
            / np.sum(pis * e, axis=1)
    return float(ev_next.d_rho @ per_state / (1.0 - m.gamma))


def _step(m, pol, inc_fn):
    if not isinstance(pol, MdpPolicy):
        pol = MdpPolicy(pol)
    pis = pol.pis
    ev = _eval_probs(m, pis)
    inc = inc_fn(ev, pis)
    new = MdpPolicy(pol.logits + inc)
    ev_next = policy_eval(m, new)
    return MdpStep(new, ev_next.objective - ev.objective, _progress(m, pis, ev.U, inc, ev_next))


def eg_mdp_step(m: TabularMdp, pol: MdpPolicy, eta: float) -> MdpStep:
    """pi'(a|s) = pi(a|s) exp(eta [U(s,a)]_+) / Z_s, with the PDL progress formula."""
    if not eta > 0:
        raise InvalidInputError("eta must be positive")
    return _step(m, pol, lambda ev, pis: eg_increment(ev, pis, eta))


def dg_mdp_step(m: TabularMdp, pol: MdpPolicy, alpha: float, eta: float) -> MdpStep:
    if not (alpha > 0 and eta > 0):
        raise InvalidInputError("alpha and eta must be positive")
    return _step(m, pol, lambda ev, pis: dg_increment(ev, pis, alpha, eta))


def pdl_sides(m: TabularMdp, pol: MdpPolicy, pol_next: MdpPolicy) -> tuple[float, float]:
    """(V(pi') - V(pi), (1/(1-gamma)) sum_s d^{pi'}(s) sum_a pi'(a|s) U^pi(s,a))."""
    ev = policy_eval(m, pol)
    ev_next = policy_eval(m, pol_next)
    rhs = ev_next.d_rho @ np.sum(pol_next.pis * ev.U, axis=1) / (1.0 - m.gamma)
    return ev_next.objective - ev.objective, float(rhs)


def pdl_check(m: TabularMdp, pol: MdpPolicy, pol_next: MdpPolicy) -> float:
    lhs, rhs = pdl_sides(m, pol, pol_next)
    return abs(lhs - rhs)


Updater = Callable[[EvalResult, np.ndarray], np.ndarray]


def eg_updater(eta: float) -> Updater:
    return lambda ev, pis: eg_increment(ev, pis, eta)


def dg_updater(alpha: float, eta: float) -> Updater:
    return lambda ev, pis: dg_increment(ev, pis, alpha, eta)


@dataclass
class MdpConvergenceRecord:
    deltas: np.ndarray
    d_min: np.ndarray           # min_s d_rho^{pi_t}(s) per iterate
    opt_probs: np.ndarray       # pi_t(a*(s)|s), shape (T+1, S)
    greedy_ok: np.ndarray       # a*(s) = argmax_a Q^{pi_t}(s, a) for all s
    final_policy: MdpPolicy
    final_eval: EvalResult
    optimum: OptimalPolicy
    converged: bool
    iterations: int

    @property
    def final_delta(self) -> float:
        return float(self.deltas[-1])

    @property
    def max_tv(self) -> float:
        pis = self.final_policy.pis
        target = np.eye(pis.shape[1])[self.optimum.actions]
        return float(np.max(0.5 * np.abs(pis - target).sum(axis=1)))


def run_mdp_to_convergence(m: TabularMdp, pol0: MdpPolicy, stepper: Updater, tol: float = 1e-6,
                           max_iters: int = 1_000_000, tv_tol: float | None = None) -> MdpConvergenceRecord:
    """Iterate the logit increment ``stepper`` until V* - V(pi_t) < tol.

    With ``tv_tol`` the run additionally waits until every state's total
    variation distance to the optimal policy is below it.
    """
    opt = optimal_policy(m)
    v_star = float(m.rho @ opt.V)
    S = np.arange(m.n_states)
    th = np.array(pol0.logits, dtype=float)
    deltas, dmins, oprobs, greedy = [], [], [], []
    it = 0
    while True:
        pis = softmax(th)
        ev = _eval_probs(m, pis)
        deltas.append(v_star - ev.objective)
        dmins.append(float(ev.d_rho.min()))
        oprobs.append(pis[S, opt.actions])
        greedy.append(bool(np.all(np.argmax(ev.Q, axis=1) == opt.actions)))
        tv = float(np.max(1.0 - pis[S, opt.actions]))
        ok = deltas[-1] < tol and (tv_tol is None or tv < tv_tol)
        if ok or it >= max_iters:
            break
        th = th + stepper(ev, pis)
        it += 1
    return MdpConvergenceRecord(np.array(deltas), np.array(dmins), np.array(oprobs), np.array(greedy),
                                MdpPolicy(th), ev, opt, ok, it)


def mdp_telescope_constant(m: TabularMdp, eta: float, d_min: float) -> float:
    """c_MDP = eta d_min (1 - gamma) / (2 exp(eta R)) with R = r_max / (1 - gamma)."""
    R = float(m.r.max()) / (1.0 - m.gamma)
    return eta * d_min * (1.0 - m.gamma) / (2.0 * np.exp(eta * R))


def mdp_telescope_violations(rec: MdpConvergenceRecord, c: float, rel_tol: float = 1e-9,
                             atol: float = 1e-14) -> int:
    active = np.all(rec.opt_probs[:-1] >= 0.5, axis=1) & rec.greedy_ok[:-1]
    d = rec.deltas
    drop = d[:-1] - d[1:]
    return int(np.sum(active & (drop < c * d[:-1] ** 2 * (1 - rel_tol) - atol)))


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, gamma: float | None = None,
               unique: bool = True, max_tries: int = 100) -> TabularMdp:
    """Dense random MDP (Dirichlet transitions, uniform rewards, full-support rho)."""
    for _ in range(max_tries):
        P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
        r = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
        rho = rng.dirichlet(np.ones(n_states))
        g = float(rng.uniform(0.5, 0.95)) if gamma is None else gamma
        m = TabularMdp(P, r, g, rho)
        if not unique:
            return m
        try:
            optimal_policy(m, margin=1e-3)
            return m
        except PreconditionError:
            continue
    raise PreconditionError("could not draw an MDP with a unique optimal policy")


def _batched_q(m: TabularMdp, pis: np.ndarray) -> np.ndarray:
    """Q^pi for a batch of policies (n, S, A)."""
    P_pi = np.einsum("nsa,sat->nst", pis, m.P)
    r_pi = np.sum(pis * m.r, axis=2)
    A = np.eye(m.n_states)[None] - m.gamma * P_pi
    V = np.linalg.solve(A, r_pi[..., None])[..., 0]
    return m.r[None] + m.gamma * np.einsum("sat,nt->nsa", m.P, V)


def local_escape_fractions(m: TabularMdp, corner_actions, eps_values, n: int, rng: np.random.Generator,
                           gate: GateSpec = EG, depth: float = 6.0) -> dict:
    """Per-state corner dominance under the gated flow.

    Every state starts from the corner policy (logit ``depth`` on
    corner_actions[s]); one state at a time has its local policy replaced by
    uniform draws from {1 - pi(j(s)|s) < eps}. With Q^pi evaluated exactly,
    a draw is bad when a*(s) = argmax_a Q^pi(s, a) differs from j(s) and
    the logit gap theta'(s, a*) - theta'(s, j) is not positive. The common
    d(s)/(1 - gamma) factor of the MDP gradient does not change the sign, so
    the gap is the bandit one with Q^pi(s, .) as values.

    Returns {eps: (bad_fraction, n_counted)}.
    """
    j = np.asarray(corner_actions)
    base = corner_policy(m, j, depth).pis
    out = {}
    for e in eps_values:
        bad = total = 0
        for s in range(m.n_states):
            local = sample_corner_region(rng, m.n_actions, int(j[s]), float(e), n)
            pis = np.repeat(base[None], n, axis=0)
            pis[:, s, :] = local
            Qs = _batched_q(m, pis)[:, s, :]
            best = np.argmax(Qs, axis=1)
            for a in np.unique(best):
                if a == j[s]:
                    continue
                sel = best == a
                g = gap_batch_values(Qs[sel], local[sel], gate, int(a), int(j[s]))
                bad += int(np.sum(g <= 0))
                total += int(sel.sum())
        out[float(e)] = (bad / total if total else float("nan"), total)
    return out


def bellman_limit_residual(ev: EvalResult, pis: np.ndarray, support: float = 1e-6) -> float:
    """max |Q(s,a) - V(s)| over actions with pi(a|s) > support."""
    return float(np.max(np.where(pis > support, np.abs(ev.U), 0.0)))
