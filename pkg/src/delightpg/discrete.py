"""Exponentiated discrete updates with their closed-form progress identities.

EG step:  pi'(i) = pi(i) exp(eta [U_i]_+) / Z
DG step:  pi'(a) = pi(a) exp(alpha w(a) U(a)) / Z,  w = sigmoid(U * surprisal / eta)

Both are applied in logit space and re-normalised through softmax.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from .bandit import BanditInstance, advantages, check_policy, logits_from_policy, softmax
from .dynamics import DG, gate_from_advantages
from .errors import InvalidInputError


@dataclass(frozen=True)
class StepReport:
    pi_next: np.ndarray
    value_delta: float
    progress_formula: float
    partition_Z: float


def _exponentiated(b: BanditInstance, pi, increment):
    pi_next = softmax(logits_from_policy(pi) + increment)
    with np.errstate(over="ignore"):
        Z = float(np.sum(pi * np.exp(increment)))
    value_delta = float((pi_next - pi) @ b.rewards)
    return pi_next, Z, value_delta


def _progress(pi, U, increment) -> float:
    """(1/Z) sum_a pi(a) U(a) (e^{inc(a)} - 1), shifted by max inc when e^inc overflows."""
    m = float(np.max(increment))
    if m < 700.0:
        Z = np.sum(pi * np.exp(increment))
        return float(np.sum(pi * U * np.expm1(increment)) / Z)
    e = np.exp(increment - m)
    return float((np.sum(pi * U * e) - np.exp(-m) * np.sum(pi * U)) / np.sum(pi * e))


def eg_step(b: BanditInstance, pi, eta_step: float) -> StepReport:
    if not eta_step > 0:
        raise InvalidInputError("eta_step must be positive")
    pi = check_policy(pi, b.K)
    U = advantages(b, pi)
    f = np.where(U > 0, U, 0.0)
    pi_next, Z, dv = _exponentiated(b, pi, eta_step * f)
    return StepReport(pi_next, dv, _progress(pi, U, eta_step * f), Z)


def dg_step(b: BanditInstance, pi, alpha: float, eta: float) -> StepReport:
    if not (alpha > 0 and eta > 0):
        raise InvalidInputError("alpha and eta must be positive")
    pi = check_policy(pi, b.K)
    U = advantages(b, pi)
    g = gate_from_advantages(U, pi, DG(eta)) * U
    pi_next, Z, dv = _exponentiated(b, pi, alpha * g)
    return StepReport(pi_next, dv, _progress(pi, U, alpha * g), Z)


def eg_stepper(eta_step: float) -> Callable[[BanditInstance, np.ndarray], StepReport]:
    return partial(eg_step, eta_step=eta_step)


def dg_stepper(alpha: float, eta: float) -> Callable[[BanditInstance, np.ndarray], StepReport]:
    return partial(dg_step, alpha=alpha, eta=eta)


@dataclass
class ConvergenceRecord:
    deltas: np.ndarray          # V* - V_t for t = 0..T
    pis: np.ndarray             # policies pi_0..pi_T
    value_deltas: np.ndarray    # directly measured V_{t+1} - V_t
    progress: np.ndarray        # closed-form progress for each step
    converged: bool
    iterations: int

    @property
    def final_delta(self) -> float:
        return float(self.deltas[-1])

    @property
    def final_pi(self) -> np.ndarray:
        return self.pis[-1]


def run_to_convergence(b: BanditInstance, pi0, stepper, tol: float = 1e-6,
                       max_iters: int = 1_000_000) -> ConvergenceRecord:
    """Iterate ``stepper`` until V* - V_t < tol or ``max_iters`` steps.

    Non-convergence is reported through ``converged=False``, not raised.
    """
    if np.unique(b.rewards).size != b.K:
        raise InvalidInputError("run_to_convergence needs pairwise distinct rewards")
    pi = check_policy(pi0, b.K).astype(float)
    v_star = float(b.rewards.max())
    pis = [pi]
    deltas = [v_star - float(pi @ b.rewards)]
    dvs, progress = [], []
    it = 0
    while deltas[-1] >= tol and it < max_iters:
        rep = stepper(b, pi)
        pi = rep.pi_next
        pis.append(pi)
        dvs.append(rep.value_delta)
        progress.append(rep.progress_formula)
        deltas.append(v_star - float(pi @ b.rewards))
        it += 1
    return ConvergenceRecord(np.array(deltas), np.array(pis), np.array(dvs),
                             np.array(progress), deltas[-1] < tol, it)


def telescope_constant(b: BanditInstance, eta: float) -> float:
    """c = eta / (2 exp(eta R)) with R = r_max - r_min."""
    return eta / (2.0 * np.exp(eta * b.reward_range))


def dg_telescope_constant(b: BanditInstance, alpha: float) -> float:
    return alpha / (8.0 * np.exp(alpha * b.reward_range))


def telescope_violations(b: BanditInstance, rec: ConvergenceRecord, c: float,
                         min_opt_prob: float = 0.5, rel_tol: float = 1e-9,
                         atol: float = 1e-15) -> int:
    """Count steps with pi_t(1) >= 1/2 where delta_t - delta_{t+1} < c delta_t^2."""
    opt = b.optimal_arm
    d = rec.deltas
    active = rec.pis[:-1, opt] >= min_opt_prob
    drop = d[:-1] - d[1:]
    need = c * d[:-1] ** 2
    return int(np.sum(active & (drop < need * (1 - rel_tol) - atol)))
