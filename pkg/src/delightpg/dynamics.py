"""Gate weights and continuous-time logit drifts for PG, EG and DG."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bandit import BanditInstance, advantages, check_policy, softmax, surprisal
from .errors import DegeneratePairError, InvalidInputError, UnsupportedError

GATE_KINDS = ("pg", "eg", "dg")


@dataclass(frozen=True)
class GateSpec:
    kind: str = "pg"
    eta: float = 1.0

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in GATE_KINDS:
            raise InvalidInputError(f"unknown gate {self.kind!r}; expected one of {GATE_KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == "dg" and not (np.isfinite(self.eta) and self.eta > 0):
            raise InvalidInputError("DG temperature eta must be positive")

    @property
    def code(self) -> int:
        return GATE_KINDS.index(self.kind)

    def label(self) -> str:
        return f"dg(eta={self.eta:g})" if self.kind == "dg" else self.kind


PG = GateSpec("pg")
EG = GateSpec("eg")


def DG(eta: float = 1.0) -> GateSpec:
    return GateSpec("dg", eta)


@dataclass(frozen=True)
class LogitGapDecomposition:
    direct: float
    indirect: float
    weighted_drift_S: float
    total: float


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def gate_from_advantages(U, pi, g: GateSpec) -> np.ndarray:
    if g.kind == "pg":
        return np.ones_like(U)
    if g.kind == "eg":
        return (U > 0).astype(float)
    return sigmoid(U * surprisal(pi) / g.eta)


def gate_weights(b: BanditInstance, pi, g: GateSpec) -> np.ndarray:
    return gate_from_advantages(advantages(b, pi), np.asarray(pi, dtype=float), g)


def weighted_drift(b: BanditInstance, pi, g: GateSpec) -> np.ndarray:
    """S = sum_i w_i pi(i) U(i)."""
    pi = np.asarray(pi, dtype=float)
    U = advantages(b, pi)
    return np.sum(gate_from_advantages(U, pi, g) * pi * U, axis=-1)


def drift_from_policy(b: BanditInstance, pi, g: GateSpec) -> np.ndarray:
    """Logit velocity pi(a) [w(a) U(a) - S] at policy ``pi``."""
    pi = check_policy(pi, b.K, atol=1e-9)
    U = advantages(b, pi)
    signal = gate_from_advantages(U, pi, g) * U
    S = np.sum(signal * pi, axis=-1, keepdims=True)
    return pi * (signal - S)


def drift_summed(b: BanditInstance, pi, g: GateSpec) -> np.ndarray:
    """Same drift written as sum_{a'} w(a') pi(a') U(a') (1{a=a'} - pi(a)).

    Kept as an independent O(K^2) route for cross-checking.
    """
    pi = check_policy(pi, b.K, atol=1e-9)
    U = advantages(b, pi)
    c = gate_from_advantages(U, pi, g) * pi * U
    K = b.K
    score = np.eye(K)[None, :, :] - pi.reshape(-1, K)[:, :, None]  # [n, a, a']
    out = np.einsum("nab,nb->na", score, c.reshape(-1, K))
    return out.reshape(pi.shape)


def drift(b: BanditInstance, theta, g: GateSpec) -> np.ndarray:
    return drift_from_policy(b, softmax(theta), g)


def logit_gap_from_policy(b: BanditInstance, pi, g: GateSpec, a: int, b_arm: int) -> LogitGapDecomposition:
    if a == b_arm:
        raise DegeneratePairError("logit gap needs two distinct arms")
    for idx in (a, b_arm):
        if not 0 <= idx < b.K:
            raise InvalidInputError(f"arm {idx} out of range for K={b.K}")
    pi = check_policy(pi, b.K, atol=1e-9)
    U = advantages(b, pi)
    c = gate_from_advantages(U, pi, g) * pi * U
    S = float(c.sum())
    direct = float(c[a] - c[b_arm])
    indirect = float((pi[b_arm] - pi[a]) * S)
    return LogitGapDecomposition(direct, indirect, S, direct + indirect)


def logit_gap(b: BanditInstance, theta, g: GateSpec, a: int, b_arm: int) -> LogitGapDecomposition:
    return logit_gap_from_policy(b, softmax(theta), g, a, b_arm)


def gap_batch(b: BanditInstance, pis, g: GateSpec, a: int, b_arm: int) -> np.ndarray:
    """Vectorised drift(a) - drift(b_arm) over a batch of policies (n, K)."""
    return gap_batch_values(b.rewards, pis, g, a, b_arm)


def gap_batch_values(values, pis, g: GateSpec, a: int, b_arm: int) -> np.ndarray:
    """As gap_batch with per-arm values in place of rewards; ``values`` may be
    (K,) or batched like ``pis`` (e.g. Q(s, .) rows of an MDP)."""
    pis = np.asarray(pis, dtype=float)
    v = np.asarray(values, dtype=float)
    U = np.einsum("...b,...ab->...a", pis, v[..., :, None] - v[..., None, :])
    c = gate_from_advantages(U, pis, g) * pis * U
    S = c.sum(axis=-1)
    return c[..., a] - c[..., b_arm] + (pis[..., b_arm] - pis[..., a]) * S


def pg_ratio_threshold(b: BanditInstance) -> float:
    r = b.rewards
    return float((r[1] - r[2]) / (2.0 * (r[0] - r[1])))


def pg_bad_region_test(b: BanditInstance, pi) -> bool:
    """True when pi(1)/pi(3) falls below (r2 - r3) / (2 (r1 - r2)).

    Only the three-arm closed form is supported; rewards are taken in the
    given arm order (arm 0 optimal).
    """
    if b.K != 3:
        raise UnsupportedError("the closed-form PG bad-region test is only defined for K = 3")
    pi = check_policy(pi, 3, atol=1e-9)
    return bool(pi[0] / pi[2] < pg_ratio_threshold(b))
