from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delightpg.bandit import BanditInstance, advantages, softmax
from delightpg.dynamics import (DG, EG, PG, GateSpec, drift, drift_from_policy, drift_summed, gap_batch,
                                gap_batch_values, gate_weights, logit_gap, logit_gap_from_policy,
                                pg_bad_region_test, pg_ratio_threshold, weighted_drift)
from delightpg.errors import DegeneratePairError, InvalidInputError, UnsupportedError

REF_R = np.array([1.0, 0.9, 0.1])
BAD_PI = np.array([0.01, 0.05, 0.94])


def exact_drift(rewards, pi, gate):
    """Rational-arithmetic drift for PG/EG from the summed definition."""
    r = [Fraction(x) for x in rewards]
    p = [Fraction(x) for x in pi]
    mean = sum(a * b for a, b in zip(p, r))
    U = [x - mean for x in r]
    w = [Fraction(1) if gate == "pg" else Fraction(int(u > 0)) for u in U]
    K = len(r)
    return [sum(w[b] * p[b] * U[b] * ((1 if a == b else 0) - p[a]) for b in range(K)) for a in range(K)]


def random_case(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 9))
    b = BanditInstance(rng.uniform(size=K))
    pi = rng.dirichlet(np.ones(K) * rng.choice([0.1, 1.0, 10.0]))
    pi = np.maximum(pi, 1e-300)
    pi /= pi.sum()
    g = [PG, EG, DG(float(10 ** rng.uniform(-3, 2)))][int(rng.integers(3))]
    return rng, b, pi, g


seeds = st.integers(0, 2**32 - 1)


def test_softmax_of_sweep_start():
    # frozen from 40-digit decimal evaluation of e^theta / sum e^theta
    np.testing.assert_allclose(softmax(np.array([-1.0, 5.0, 1.0])),
                               [0.002428258029591337, 0.9796292071670795, 0.017942534803329194], rtol=1e-12)


def test_advantages_at_bad_init():
    b = BanditInstance(REF_R)
    np.testing.assert_allclose(advantages(b, BAD_PI), [0.851, 0.751, -0.049], atol=1e-15)


def test_gate_weight_examples():
    b = BanditInstance(REF_R)
    assert np.all(gate_weights(b, BAD_PI, PG) == 1.0)
    assert list(gate_weights(b, BAD_PI, EG)) == [1.0, 1.0, 0.0]
    flat = BanditInstance(np.array([0.5, 0.5, 0.5]))
    assert np.all(gate_weights(flat, BAD_PI, DG(0.3)) == 0.5)


def test_eg_gate_is_zero_at_zero_advantage():
    flat = BanditInstance(np.array([0.5, 0.5]))
    assert np.all(gate_weights(flat, np.array([0.5, 0.5]), EG) == 0.0)


def test_pg_drift_at_bad_init_matches_rational_oracle():
    b = BanditInstance(REF_R)
    d = drift_from_policy(b, BAD_PI, PG)
    np.testing.assert_allclose(d, [0.00851, 0.03755, -0.04606], atol=1e-15)
    np.testing.assert_allclose(d, [float(x) for x in exact_drift(REF_R, BAD_PI, "pg")], atol=1e-16)
    np.testing.assert_allclose(d, BAD_PI * advantages(b, BAD_PI), atol=1e-16)


def test_eg_drift_at_bad_init_matches_rational_oracle():
    b = BanditInstance(REF_R)
    d = drift_from_policy(b, BAD_PI, EG)
    np.testing.assert_allclose(d, [0.0080494, 0.035247, -0.0432964], atol=1e-15)
    np.testing.assert_allclose(d, [float(x) for x in exact_drift(REF_R, BAD_PI, "eg")], atol=1e-16)
    assert d[0] > 0


def test_equal_rewards_give_zero_drift():
    b = BanditInstance(np.full(4, 0.3))
    for g in (PG, EG, DG(1.0)):
        assert np.all(drift(b, np.array([0.0, 1.0, -2.0, 3.0]), g) == 0.0)


def test_eg_weighted_drift_positive_near_corner_with_allies():
    b = BanditInstance(REF_R)
    S = float(weighted_drift(b, np.array([0.003, 0.007, 0.99]), EG))
    assert S == pytest.approx(0.003 * 0.8917 + 0.007 * 0.7917, rel=1e-12)
    assert S > 0


@settings(max_examples=300)
@given(seeds)
def test_drift_forms_agree(seed):
    _, b, pi, g = random_case(seed)
    np.testing.assert_allclose(drift_from_policy(b, pi, g), drift_summed(b, pi, g), atol=1e-12)


@settings(max_examples=300)
@given(seeds)
def test_logit_gap_identity(seed):
    rng, b, pi, g = random_case(seed)
    a, c = (int(x) for x in rng.choice(b.K, size=2, replace=False))
    dec = logit_gap_from_policy(b, pi, g, a, c)
    d = drift_from_policy(b, pi, g)
    assert dec.total == pytest.approx(dec.direct + dec.indirect, abs=1e-15)
    assert abs(dec.total - (d[a] - d[c])) <= 1e-12
    assert gap_batch(b, pi[None], g, a, c)[0] == pytest.approx(dec.total, abs=1e-14)


@settings(max_examples=300)
@given(seeds)
def test_pg_weighted_drift_vanishes(seed):
    _, b, pi, _ = random_case(seed)
    assert abs(float(weighted_drift(b, pi, PG))) <= 1e-12
    np.testing.assert_allclose(drift_from_policy(b, pi, PG), pi * advantages(b, pi), atol=1e-12)


@settings(max_examples=300)
@given(seeds, st.floats(1e-4, 1e3))
def test_dg_gate_preserves_sign_and_eg_drops_harmful(seed, eta):
    _, b, pi, _ = random_case(seed)
    U = advantages(b, pi)
    w = gate_weights(b, pi, DG(eta))
    assert np.all((w >= 0) & (w <= 1))
    assert np.all(np.sign(w * U)[w > 0] == np.sign(U)[w > 0])
    assert np.all(gate_weights(b, pi, EG)[U < 0] == 0.0)


def test_gap_batch_values_accepts_per_row_values(rng):
    b = BanditInstance(REF_R)
    pis = rng.dirichlet(np.ones(3), size=50)
    vals = np.repeat(REF_R[None], 50, axis=0)
    np.testing.assert_allclose(gap_batch_values(vals, pis, DG(0.5), 0, 2), gap_batch(b, pis, DG(0.5), 0, 2))


def test_logit_gap_errors():
    b = BanditInstance(REF_R)
    with pytest.raises(DegeneratePairError):
        logit_gap(b, np.zeros(3), EG, 1, 1)
    with pytest.raises(InvalidInputError):
        logit_gap(b, np.zeros(3), EG, 0, 5)


def test_gate_spec_validation():
    with pytest.raises(InvalidInputError):
        GateSpec("ng")
    with pytest.raises(InvalidInputError):
        DG(0.0)
    assert GateSpec("EG").kind == "eg"
    assert GateSpec("pg", eta=-1.0).kind == "pg"


def test_pg_bad_region_examples():
    b = BanditInstance(REF_R)
    assert pg_ratio_threshold(b) == pytest.approx(4.0)
    assert pg_bad_region_test(b, BAD_PI)
    assert not pg_bad_region_test(b, np.array([10 / 12, 1 / 12, 1 / 12]))
    assert pg_ratio_threshold(BanditInstance(np.array([1.0, 0.2, 0.1]))) == pytest.approx(0.0625)


def test_pg_bad_region_needs_three_arms():
    with pytest.raises(UnsupportedError):
        pg_bad_region_test(BanditInstance(np.array([1.0, 0.5])), np.array([0.5, 0.5]))
