import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import (
    brute_distance,
    brute_dominates,
    brute_up_sets,
    kolmogorov,
    random_dist,
    random_relation,
)
from monotone_mc.errors import CapExceeded, DimensionMismatch, InvalidDistribution, InvalidPoset, NotDominated
from monotone_mc.order import (
    Dist,
    Poset,
    dominates,
    enumerate_up_sets,
    is_up_set,
    order_distance,
    random_poset,
    strassen_coupling,
)


def v_shape():
    return Poset.from_pairs(3, [(0, 1), (0, 2)])


# -- poset construction


def test_poset_rejects_bad_relations():
    with pytest.raises(InvalidPoset):
        Poset([[True, True], [True, True]])
    with pytest.raises(InvalidPoset):
        Poset([[False, False], [False, True]])
    rel = np.eye(3, dtype=bool)
    rel[0, 1] = rel[1, 2] = True
    with pytest.raises(InvalidPoset):
        Poset(rel)


def test_from_pairs_closes_transitively():
    p = Poset.from_pairs(3, [(0, 1), (1, 2)])
    assert p.le(0, 2) and p.is_chain
    assert p.covers == ((0, 1), (1, 2))


def test_json_roundtrip():
    p = Poset.from_pairs(4, [(0, 1), (0, 2), (2, 3)])
    q = Poset.from_json(json.dumps(p.to_json()))
    assert p == q


# -- up-sets


def test_is_up_set_examples():
    chain = Poset.chain(3)
    for p in (chain, v_shape(), Poset.antichain(3)):
        assert is_up_set(p, [])
        assert is_up_set(p, [0, 1, 2])
    assert not is_up_set(chain, [1])
    assert is_up_set(chain, [1, 2])


@pytest.mark.parametrize("k", [1, 2, 5, 9])
def test_up_set_counts(k):
    assert len(list(enumerate_up_sets(Poset.chain(k)))) == k + 1
    assert len(list(enumerate_up_sets(Poset.antichain(k)))) == 2**k


def test_v_shape_up_sets():
    got = sorted(u.members for u in enumerate_up_sets(v_shape()))
    assert got == sorted([(), (1,), (2,), (1, 2), (0, 1, 2)])
    brute = sorted(tuple(np.flatnonzero(s)) for s in brute_up_sets(v_shape().leq))
    assert got == brute


def test_enumeration_matches_brute_force_on_random_posets():
    rng = np.random.default_rng(7)
    for _ in range(50):
        rel = random_relation(rng, int(rng.integers(1, 8)), rng.uniform(0.1, 0.6))
        p = Poset(rel)
        got = sorted(u.mask for u in enumerate_up_sets(p))
        want = sorted(int(sum(1 << i for i in np.flatnonzero(s))) for s in brute_up_sets(rel))
        assert got == want


def test_enumeration_cap():
    with pytest.raises(CapExceeded):
        list(enumerate_up_sets(Poset.antichain(12), cap=1000))


# -- dominance


def test_dominates_examples():
    c2 = Poset.chain(2)
    mu = [0.7, 0.3]
    assert dominates(mu, mu, c2)
    assert dominates([0.7, 0.3], [0.3, 0.7], c2)
    assert not dominates([0.3, 0.7], [0.7, 0.3], c2)


def test_dominates_dimension_check():
    with pytest.raises(DimensionMismatch):
        dominates([0.5, 0.5], [1.0, 0.0, 0.0], Poset.chain(2))


def test_dist_validation():
    with pytest.raises(InvalidDistribution):
        Dist([0.5, 0.6])
    with pytest.raises(InvalidDistribution):
        Dist([1.1, -0.1])
    assert Dist([1.0, -1e-12]).p[1] == 0.0


def test_flow_agrees_with_enumeration_on_random_8_posets():
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        rel = random_relation(rng, 8, rng.uniform(0.05, 0.5))
        p = Poset(rel)
        mu1 = random_dist(rng, 8)
        # half the trials push mass upward so both verdicts occur
        if trial % 2:
            mu2 = mu1 @ (rel / rel.sum(axis=1, keepdims=True))
        else:
            mu2 = random_dist(rng, 8)
        assert dominates(mu1, mu2, p) == brute_dominates(mu1, mu2, rel)


# -- Strassen coupling


def test_strassen_point_masses():
    p = v_shape()
    lam = strassen_coupling([0, 1, 0], [0, 1, 0], p).lam
    want = np.zeros((3, 3))
    want[1, 1] = 1.0
    assert np.array_equal(lam, want)


def test_strassen_two_chain():
    c = strassen_coupling([0.7, 0.3], [0.3, 0.7], Poset.chain(2))
    assert c.marginal_error([0.7, 0.3], [0.3, 0.7]) <= 1e-12
    assert c.off_order_mass(Poset.chain(2)) == 0.0
    assert np.allclose(c.lam, [[0.3, 0.4], [0.0, 0.3]])


def test_strassen_witness_is_violated_up_set():
    rng = np.random.default_rng(5)
    seen = 0
    for _ in range(300):
        rel = random_relation(rng, 6, 0.3)
        p = Poset(rel)
        mu1, mu2 = random_dist(rng, 6), random_dist(rng, 6)
        if brute_dominates(mu1, mu2, rel):
            continue
        seen += 1
        with pytest.raises(NotDominated) as info:
            strassen_coupling(mu1, mu2, p)
        w = info.value.witness
        assert is_up_set(p, w)
        idx = list(w.members)
        assert mu1[idx].sum() > mu2[idx].sum()
    assert seen > 50


def test_strassen_deterministic():
    rng = np.random.default_rng(9)
    p = random_poset(7, 0.3, rng)
    mu1 = random_dist(rng, 7)
    mu2 = mu1 @ (p.leq / p.leq.sum(axis=1, keepdims=True))
    a = strassen_coupling(mu1, mu2, p).lam
    b = strassen_coupling(mu1, mu2, p).lam
    assert np.array_equal(a, b)


# -- order distance


def test_order_distance_examples():
    c2 = Poset.chain(2)
    assert order_distance([0.4, 0.6], [0.4, 0.6], c2) == 0.0
    assert order_distance([1, 0], [0, 1], c2) == 1.0


def test_order_distance_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(1, 9))
        rel = random_relation(rng, n, rng.uniform(0.0, 0.6))
        mu1, mu2 = random_dist(rng, n), random_dist(rng, n)
        assert abs(order_distance(mu1, mu2, Poset(rel)) - brute_distance(mu1, mu2, rel)) <= 1e-12


# -- properties


@st.composite
def poset_and_dists(draw, k=2):
    n = draw(st.integers(1, 7))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    rel = random_relation(rng, n, draw(st.floats(0.0, 0.7)))
    return Poset(rel), [random_dist(rng, n) for _ in range(k)]


@settings(max_examples=200, deadline=None)
@given(poset_and_dists(3))
def test_order_distance_is_a_metric(data):
    p, (a, b, c) = data
    dab = order_distance(a, b, p)
    assert 0.0 <= dab <= 1.0
    assert dab == pytest.approx(order_distance(b, a, p), abs=1e-12)
    assert order_distance(a, a, p) == 0.0
    assert dab <= order_distance(a, c, p) + order_distance(c, b, p) + 1e-12
    if dab <= 1e-14:
        # up-sets separate measures on a finite poset
        assert np.allclose(a, b, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(poset_and_dists(2))
def test_dominance_is_antisymmetric(data):
    p, (a, b) = data
    c = a @ (p.leq / p.leq.sum(axis=1, keepdims=True))
    assert dominates(a, c, p)
    if dominates(c, a, p):
        assert np.allclose(a, c, atol=1e-9)
    if dominates(a, b, p) and dominates(b, a, p):
        assert np.allclose(a, b, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(poset_and_dists(2))
def test_strassen_output_invariants(data):
    p, (a, _) = data
    b = a @ (p.leq / p.leq.sum(axis=1, keepdims=True))
    c = strassen_coupling(a, b, p)
    assert c.marginal_error(a, b) <= 1e-9
    assert c.off_order_mass(p) <= 1e-12
    assert c.lam.min() >= 0.0


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_chain_distance_is_kolmogorov(n, seed):
    rng = np.random.default_rng(seed)
    a, b = random_dist(rng, n), random_dist(rng, n)
    assert order_distance(a, b, Poset.chain(n)) == pytest.approx(kolmogorov(a, b), abs=1e-12)
