"""Gated softmax policy-gradient dynamics: PG, EG and DG on bandits and
tabular MDPs, with numerical checks of their corner-escape behaviour."""

__version__ = "0.1.0"

from .bandit import BanditInstance, advantages, classify_arms, softmax, surprisal
from .counterexample import SharedParamInstance, f_dg, f_eg, f_pg, find_fixed_points
from .discrete import dg_step, eg_step, run_to_convergence
from .dynamics import DG, EG, PG, GateSpec, drift, gate_weights, logit_gap, pg_bad_region_test
from .errors import (DegeneratePairError, DomainError, InsufficientDataError, InvalidInputError,
                     NumericalAbort, PreconditionError, UnsupportedError)
from .flow import FlowConfig, detect_escape, gap_sweep, integrate
from .mdp import (MdpPolicy, TabularMdp, dg_mdp_step, eg_mdp_step, pdl_check, policy_eval,
                  run_mdp_to_convergence)
from .verify import (check_dg_sector_bound, check_eg_sector_bound, check_poly_suppression, fit_rate,
                     map_bad_region)
