"""K-armed bandit instances, the softmax map, advantages and arm classes.

Arms are indexed from 0. Policies and logits are plain numpy arrays whose
last axis runs over arms, so every function here also accepts a batch of
policies of shape ``(..., K)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

# Floor applied before taking logs of probabilities.
PROB_FLOOR = 1e-30


@dataclass(frozen=True)
class BanditInstance:
    rewards: np.ndarray
    distinct: bool = False

    def __post_init__(self):
        r = np.asarray(self.rewards, dtype=float).copy()
        if r.ndim != 1 or r.size < 2:
            raise InvalidInputError(f"need a 1-d reward vector with K >= 2, got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise InvalidInputError("rewards must be finite")
        if np.any(r < 0) or np.any(r > 1):
            warnings.warn("rewards outside [0, 1]", stacklevel=3)
        if self.distinct and np.unique(r).size != r.size:
            raise InvalidInputError("rewards must be pairwise distinct")
        r.flags.writeable = False
        object.__setattr__(self, "rewards", r)

    @property
    def K(self) -> int:
        return self.rewards.size

    @property
    def optimal_arm(self) -> int:
        return int(np.argmax(self.rewards))

    @property
    def optimality_gap(self) -> float:
        """Gap between the best and second-best reward."""
        s = np.sort(self.rewards)
        return float(s[-1] - s[-2])

    @property
    def reward_range(self) -> float:
        return float(self.rewards.max() - self.rewards.min())

    def gap(self, a: int, b: int) -> float:
        return float(self.rewards[a] - self.rewards[b])

    def ordering(self) -> np.ndarray:
        """Permutation listing arms from best to worst reward."""
        return np.argsort(-self.rewards, kind="stable")


@dataclass(frozen=True)
class ArmClassification:
    corner: int
    allies: frozenset = field(default_factory=frozenset)
    harmful: frozenset = field(default_factory=frozenset)
    epsilon: float = 0.0


def as_logits(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidInputError("logits must be finite")
    return theta


def softmax(theta) -> np.ndarray:
    theta = as_logits(theta)
    z = np.exp(theta - theta.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def logits_from_policy(pi) -> np.ndarray:
    """Logits (up to an additive constant) whose softmax is ``pi``."""
    return np.log(np.maximum(np.asarray(pi, dtype=float), PROB_FLOOR))


def check_policy(pi, K: int | None = None, atol: float = 1e-12) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if K is not None and pi.shape[-1] != K:
        raise InvalidInputError(f"policy has {pi.shape[-1]} entries, expected {K}")
    if np.any(pi < 0) or not np.all(np.isfinite(pi)):
        raise InvalidInputError("policy entries must be finite and non-negative")
    if np.any(np.abs(pi.sum(axis=-1) - 1.0) > atol):
        raise InvalidInputError("policy does not sum to 1")
    return pi


def surprisal(pi) -> np.ndarray:
    return -np.log(np.maximum(pi, PROB_FLOOR))


def expected_reward(b: BanditInstance, pi) -> np.ndarray:
    return np.asarray(pi) @ b.rewards


def advantages(b: BanditInstance, pi) -> np.ndarray:
    """U(a) = r(a) - pi^T r, evaluated as sum_b pi(b) (r(a) - r(b)).

    The pairwise form keeps the corner arm's advantage accurate when the
    policy is nearly one-hot (the b = corner term vanishes exactly).
    """
    pi = check_policy(pi, b.K, atol=1e-9)
    r = b.rewards
    pair_gaps = r[:, None] - r[None, :]
    return pi @ pair_gaps.T


def classify_arms(b: BanditInstance, pi, corner: int) -> ArmClassification:
    if not 0 <= corner < b.K:
        raise InvalidInputError(f"corner index {corner} out of range for K={b.K}")
    pi = check_policy(pi, b.K, atol=1e-9)
    r = b.rewards
    allies = frozenset(int(i) for i in np.flatnonzero(r > r[corner]))
    harmful = frozenset(int(i) for i in np.flatnonzero(r < r[corner]))
    return ArmClassification(corner, allies, harmful, float(1.0 - pi[corner]))


def sample_corner_region(rng: np.random.Generator, K: int, corner: int, eps: float, n: int) -> np.ndarray:
    """Uniform points of {pi : 1 - pi(corner) < eps}.

    The non-corner mass is eps * u^(1/(K-1)) (volume of a scaled simplex
    grows like mass^(K-1)) and is split by Dirichlet(1, ..., 1).
    """
    others = [a for a in range(K) if a != corner]
    x = rng.dirichlet(np.ones(K - 1), size=n)
    mass = eps * rng.uniform(size=(n, 1)) ** (1.0 / (K - 1))
    pis = np.empty((n, K))
    pis[:, others] = x * mass
    pis[:, corner] = 1.0 - mass[:, 0]
    return pis
