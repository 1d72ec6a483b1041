import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import (
    hitting_mean_value_iteration,
    power_iteration,
    random_monotone_chain_matrix,
    restart_oracle,
)
from monotone_mc.errors import DivergentCycle, MonotoneViolation, NotConverged
from monotone_mc.gallery import birth_death_kernel
from monotone_mc.kernel import FiniteKernel, stationary_report
from monotone_mc.order import Poset, dominates
from monotone_mc.regeneration import (
    RegenSpec,
    check_pr,
    monotone_iteration,
    pi_minus_exact,
    pi_plus_exact,
    restarted_kernel,
)
from monotone_mc.rng import COORD_X, stream_keys, uniforms

FLIP = FiniteKernel([[0.0, 1.0], [1.0, 0.0]], Poset.antichain(2))


def test_regen_spec_validation():
    k = birth_death_kernel()
    with pytest.raises(ValueError):
        RegenSpec(3, 1).validate(k)
    with pytest.raises(ValueError):
        RegenSpec(0, 9).validate(k)


# -- PR condition


def test_check_pr_bottom_anchor():
    k = birth_death_kernel()
    res = check_pr(k, RegenSpec(0, 4))
    assert res.e_nu_minus == 1.0 and res.e_nu_plus == 1.0 and res.holds


def test_check_pr_flip():
    e_minus, e_plus, holds = check_pr(FLIP, RegenSpec(0, 0))
    assert (e_minus, e_plus, holds) == (2.0, 2.0, True)


def test_check_pr_birth_death_against_oracles():
    k = birth_death_kernel()
    res = check_pr(k, RegenSpec(1, 3))
    up = hitting_mean_value_iteration(k.P, [1, 2, 3, 4])
    down = hitting_mean_value_iteration(k.P, [0, 1, 2, 3])
    assert res.e_nu_minus == pytest.approx(1 + k.P[1] @ up, rel=1e-10)
    assert res.e_nu_plus == pytest.approx(1 + k.P[3] @ down, rel=1e-10)
    # Monte Carlo cross-check of the lower return time
    reps = 20_000
    keys = stream_keys(5, np.arange(reps), COORD_X)
    X = np.full(reps, 1)
    nu = np.zeros(reps)
    alive = np.ones(reps, dtype=bool)
    t = 0
    while alive.any():
        X = np.where(alive, k.step_batch(X, uniforms(keys, t)), X)
        t += 1
        nu[alive] = t
        alive &= X < 1
    se = nu.std(ddof=1) / math.sqrt(reps)
    assert abs(nu.mean() - res.e_nu_minus) <= 3 * se


def test_check_pr_fails_when_return_impossible():
    P = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    k = FiniteKernel(P, Poset.chain(3))
    res = check_pr(k, RegenSpec(1, 2))
    assert math.isinf(res.e_nu_minus) and not res.holds


# -- occupation measures


def test_pi_minus_bottom_is_point_mass():
    k = birth_death_kernel()
    occ = pi_minus_exact(k, RegenSpec(0, 4))
    assert occ.pi.p.tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]
    assert occ.mean_cycle == 1.0


def test_pi_minus_flip():
    occ = pi_minus_exact(FLIP, RegenSpec(0, 0))
    assert occ.pi.p.tolist() == [0.5, 0.5]
    assert occ.mean_cycle == 2.0


@pytest.mark.parametrize("anchors", [(1, 3), (0, 2), (2, 2), (1, 4)])
def test_pi_minus_matches_restart_oracle(anchors):
    k = birth_death_kernel()
    spec = RegenSpec(*anchors)
    pi = pi_minus_exact(k, spec).pi.p
    oracle = restart_oracle(k.P, spec.x0, np.arange(5) >= spec.x0)
    assert np.abs(pi - oracle).max() <= 1e-10
    pi = pi_plus_exact(k, spec).pi.p
    oracle = restart_oracle(k.P, spec.y0, np.arange(5) <= spec.y0)
    assert np.abs(pi - oracle).max() <= 1e-10


def test_mean_cycle_equals_return_time():
    k = birth_death_kernel()
    spec = RegenSpec(1, 3)
    pr = check_pr(k, spec)
    assert pi_minus_exact(k, spec).mean_cycle == pytest.approx(pr.e_nu_minus, rel=1e-12)
    assert pi_plus_exact(k, spec).mean_cycle == pytest.approx(pr.e_nu_plus, rel=1e-12)


def test_pi_plus_mirrors_pi_minus_under_order_reversal():
    k = birth_death_kernel(6, 0.35, 0.25)
    rev = FiniteKernel(k.P[::-1, ::-1], Poset.chain(6))
    lo = pi_minus_exact(k, RegenSpec(2, 4)).pi.p
    hi_rev = pi_plus_exact(rev, RegenSpec(1, 3)).pi.p
    assert np.abs(lo - hi_rev[::-1]).max() <= 1e-14


def test_restarted_kernel_is_stochastic():
    k = birth_death_kernel()
    L, R = restarted_kernel(k, 1, np.arange(5) >= 1)
    assert np.allclose(L.P.sum(axis=1), 1.0)
    assert R.tolist() == [0, 1]


def test_divergent_cycle():
    P = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    k = FiniteKernel(P, Poset.chain(3))
    with pytest.raises(DivergentCycle):
        pi_minus_exact(k, RegenSpec(1, 2))


# -- monotone iteration


def test_iteration_stationary_start():
    k = birth_death_kernel()
    pi = stationary_report(k).stationary_per_class[0]
    res = monotone_iteration(k, pi, pi)
    assert res.converged_at == 0
    assert np.array_equal(res.limit.p, pi.p)


def test_iteration_identity_kernel():
    k = FiniteKernel(np.eye(4), Poset.chain(4))
    lo = np.array([0.5, 0.5, 0.0, 0.0])
    res = monotone_iteration(k, lo, [0.0, 0.0, 0.0, 1.0])
    assert res.converged_at == 0
    assert np.array_equal(res.limit.p, lo)


def test_iteration_birth_death_reaches_stationary():
    k = birth_death_kernel()
    spec = RegenSpec(1, 3)
    lo, hi = pi_minus_exact(k, spec).pi, pi_plus_exact(k, spec).pi
    res = monotone_iteration(k, lo, hi)
    pi = power_iteration(k.P)
    assert np.abs(res.limit.p - pi).max() <= 1e-8
    seq = res.sequence
    for a, b in zip(seq, seq[1:]):
        assert dominates(a, b, k.poset, 1e-9)
        assert dominates(b, hi, k.poset, 1e-9)


def test_iteration_errors():
    k = birth_death_kernel()
    spec = RegenSpec(1, 3)
    lo, hi = pi_minus_exact(k, spec).pi, pi_plus_exact(k, spec).pi
    with pytest.raises(NotConverged):
        monotone_iteration(k, lo, hi, nmax=2)
    with pytest.raises(MonotoneViolation):
        monotone_iteration(k, hi, lo)
    bad = FiniteKernel([[0.0, 1.0], [1.0, 0.0]], Poset.chain(2))
    with pytest.raises(MonotoneViolation):
        monotone_iteration(bad, [1.0, 0.0], [0.0, 1.0])


# -- properties


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.data())
def test_seeds_bracket_and_superinvariance(n, seed, data):
    rng = np.random.default_rng(seed)
    k = FiniteKernel(random_monotone_chain_matrix(rng, n, zeros=False), Poset.chain(n))
    x0 = data.draw(st.integers(0, n - 1))
    y0 = data.draw(st.integers(x0, n - 1))
    spec = RegenSpec(x0, y0)
    lo = pi_minus_exact(k, spec).pi.p
    hi = pi_plus_exact(k, spec).pi.p
    assert dominates(lo, hi, k.poset, 1e-9)
    assert dominates(lo, lo @ k.P, k.poset, 1e-9)
    assert dominates(hi @ k.P, hi, k.poset, 1e-9)
    res = monotone_iteration(k, lo, hi, keep_sequence=False)
    assert np.abs(res.limit.p - stationary_report(k).stationary_per_class[0].p).max() <= 1e-8
