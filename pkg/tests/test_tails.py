import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from oracles import jump_chain_equal_freq, overlapping_model, random_model, tail_oracle
from phasehit import (ConsistencyError, DisjointnessError, DomainError, Equal, IntensityModel,
                      NotEqual, PreconditionError, SubPartition, TailQuery, Threshold, canonicalize, embedded_chain,
                      enumerate_partitions, equality_prob, region_probability, tail_p,
                      tail_p_absorbing, tail_p_alt, tail_p_simple, tail_probability)


def exponential(rate):
    return IntensityModel(np.array([[-rate, rate], [0.0, 0.0]]), {1: [1]}, np.array([1.0, 0.0]))


def query(s1, s2=(), t=()):
    return TailQuery(SubPartition(s1), SubPartition(s2), t)


SHAPES = [
    ([[1], [2], [3]], [], (0.2, 0.5, 0.9)),
    ([[1, 2]], [[3]], (0.4,)),
    ([[3]], [[1, 2]], (0.3,)),
    ([[1], [2, 3]], [], (0.2, 0.6)),
    ([], [[1, 2, 3]], ()),
    ([[1, 2, 3]], [], (0.5,)),
    ([[1], [2]], [], (0.4, 0.4)),
    ([[2]], [[1, 3]], (0.0,)),
]


@pytest.fixture(scope="module")
def models():
    rng = np.random.default_rng(99)
    return [random_model(rng, 6, 3, density=0.7, target_size=(1, 3)) for _ in range(3)]


# --- single key -----------------------------------------------------------

@pytest.mark.parametrize("rate", [0.5, 1.0, 3.0])
def test_exponential_tail(rate):
    m = exponential(rate)
    for t in (0.0, 0.3, 1.0, 4.0):
        assert tail_p(m, query([[1]], t=(t,))).value == pytest.approx(math.exp(-rate * t), abs=1e-12)


def test_thresholds_validated():
    with pytest.raises(ConsistencyError):
        query([[1], [2]], t=(0.5, 0.2))
    with pytest.raises(ConsistencyError):
        query([[1], [2]], t=(0.5,))
    with pytest.raises(DomainError):
        query([[1]], t=(-0.1,))
    with pytest.raises(DisjointnessError):
        query([[1]], [[1, 2]], (0.1,))


# --- product form ---------------------------------------------------------

def test_simple_matches_recursion(models):
    for m in models:
        q = query([[2], [1], [3]], t=(0.15, 0.4, 1.1))
        a = tail_p_simple(m, q.s1, q.t)
        b = tail_p(m, q)
        assert a.value == pytest.approx(b.value, abs=1e-10)
        assert np.allclose(a.p, b.p, atol=1e-10)


def test_simple_rejects_ties_and_blocks(models):
    m = models[0]
    with pytest.raises(ConsistencyError):
        tail_p_simple(m, SubPartition([[1], [2]]), (0.4, 0.4))
    with pytest.raises(PreconditionError):
        tail_p_simple(m, SubPartition([[1, 2]]), (0.4,))


# --- agreement with the augmented-chain oracle ---------------------------

@pytest.mark.parametrize("shape", range(len(SHAPES)))
def test_recursion_matches_oracle(models, shape):
    s1, s2, t = SHAPES[shape]
    for m in models:
        exact = tail_oracle(m, s1, s2, t)
        assert tail_p(m, query(s1, s2, t)).value == pytest.approx(exact, abs=1e-8)


@pytest.mark.parametrize("shape", range(len(SHAPES)))
def test_alt_matches_recursion(models, shape):
    s1, s2, t = SHAPES[shape]
    for m in models:
        q = query(s1, s2, t)
        assert tail_p_alt(m, q).value == pytest.approx(tail_p(m, q).value, abs=1e-7)


@pytest.mark.parametrize("s1, s2, t", [
    ([[5]], [[1, 3], [2, 4]], (0.4,)),
    ([[5], [1, 3]], [[2, 4]], (0.3, 0.9)),
    ([[2, 4], [5]], [[1, 3]], (0.2, 0.7)),
])
def test_two_pending_blocks(s1, s2, t):
    rng = np.random.default_rng(8)
    for _ in range(3):
        m = overlapping_model(rng, 5, 5, [(1, 3), (2, 4), (1, 2, 3, 4, 5)])
        q = query(s1, s2, t)
        exact = tail_oracle(m, s1, s2, t)
        assert exact > 1e-3
        assert tail_p(m, q).value == pytest.approx(exact, abs=1e-9)
        assert tail_p_alt(m, q).value == pytest.approx(exact, abs=1e-9)


def test_alt_without_pending_blocks(models):
    # with no equality blocks both forms reduce to the same product of exponentials
    m = models[1]
    q = query([[1], [3]], t=(0.3, 0.8))
    assert np.allclose(tail_p_alt(m, q).p, tail_p(m, q).p, atol=1e-12)


def test_absorbing_variant():
    rng = np.random.default_rng(5)
    for _ in range(3):
        m = random_model(rng, 6, 3, density=0.7, absorbing=True)
        for s1, s2, t in SHAPES:
            q = query(s1, s2, t)
            assert tail_p_absorbing(m, q).value == pytest.approx(tail_p(m, q).value, abs=1e-8)


def test_absorbing_variant_requires_absorbing(models):
    with pytest.raises(PreconditionError):
        tail_p_absorbing(models[0], query([[1, 2]], t=(0.3,)))


# --- structural invariants -----------------------------------------------

def test_base_case_is_one(models):
    m = models[0]
    r = tail_p(m, query([], [[1], [2], [3]]))
    free = ~np.isin(np.arange(m.n), sorted(set().union(*(m.target(k).indices for k in m.keys))))
    assert np.all(r.p[free] == 1.0)
    assert r.value == pytest.approx(1.0, abs=1e-15)


def test_singleton_pending_blocks_ignored(models):
    for m in models:
        a = tail_p(m, query([[1, 2]], [], (0.4,)))
        b = tail_p(m, query([[1, 2]], [[3]], (0.4,)))
        assert np.array_equal(a.p, b.p)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.0, 2.0), d1=st.floats(0.0, 1.0), d2=st.floats(0.0, 1.0))
def test_monotone_in_thresholds(a, d1, d2):
    m = random_model(np.random.default_rng(3), 5, 2, density=0.8)
    base = tail_p(m, query([[1], [2]], t=(a, a + d1))).value
    later = tail_p(m, query([[1], [2]], t=(a, a + d1 + d2))).value
    assert later <= base + 1e-12
    assert 0.0 <= later <= 1.0 + 1e-12


def test_lattice_equal_pair_vs_simulation(s5, s5_sample):
    for t in (0.1, 0.5, 1.0):
        q = query([[2, 3]], t=(t,))
        exact = tail_p(s5, q).value
        est = s5_sample.frequency(s5_sample.tail_indicator(q))
        sd = math.sqrt(exact * (1 - exact) / est.n) + 0.5 / est.n
        assert abs(est.value - exact) <= 3 * sd, (t, est.value, exact)


# --- jump chain and equality probabilities ------------------------------

def test_embedded_chain_example():
    Q = np.array([[-3.0, 1.0, 2.0], [0.0, 0.0, 0.0], [4.0, 0.0, -4.0]])
    m = IntensityModel(Q, {1: [1]}, np.array([1.0, 0.0, 0.0]))
    P, D = embedded_chain(m)
    assert np.allclose(P, [[0, 1 / 3, 2 / 3], [0, 1, 0], [1, 0, 0]], atol=1e-15)
    assert np.allclose(np.diag(D), [1 / 3, 0, 1 / 4])


def test_embedded_chain_structure(models):
    for m in models:
        P, D = embedded_chain(m)
        assert np.allclose(P.sum(axis=1), 1.0, atol=1e-14)
        assert np.all(P >= 0)
        moving = np.diag(D) > 0
        J = np.eye(m.n) + D @ m.intensity
        assert np.allclose(P[moving], J[moving], atol=1e-14)


def _overlap_model(seed):
    rng = np.random.default_rng(seed)
    n = 6
    Q = rng.exponential(size=(n, n)) * (rng.random((n, n)) < 0.7)
    Q[0, 1] += 0.5
    Q[1, 5] += 0.3
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    a = np.zeros(n)
    a[:3] = 1 / 3
    return IntensityModel(Q, {1: [3, 5], 2: [4, 5]}, a)


def test_equality_boundary_values():
    m = _overlap_model(0)
    q = equality_prob(m, 1, 2)
    assert q[5] == 1.0
    assert q[3] == 0.0 and q[4] == 0.0
    assert np.all((q >= 0) & (q <= 1 + 1e-12))


def test_equality_disjoint_targets_zero(models):
    m = IntensityModel(models[0].intensity, {1: [0], 2: [1]}, np.eye(6)[2])
    assert np.all(equality_prob(m, 1, 2) == 0.0)


def test_equality_vs_jump_chain_simulation():
    rng = np.random.default_rng(11)
    n = 200_000
    for seed in (0, 1):
        m = _overlap_model(seed)
        q = equality_prob(m, 1, 2)
        for start in (0, 2):
            f = jump_chain_equal_freq(m.intensity, [3, 5], [4, 5], start, n, rng)
            sd = math.sqrt(q[start] * (1 - q[start]) / n) + 0.5 / n
            assert abs(f - q[start]) <= 3 * sd, (seed, start, f, q[start])


def test_equality_matches_tail_form(models):
    for m in models:
        for keys in ((1, 2), (1, 3), (1, 2, 3)):
            a = float(m.alpha @ equality_prob(m, *keys))
            b = tail_p(m, query([], [list(keys)])).value
            assert a == pytest.approx(b, abs=1e-9)
            assert a == pytest.approx(tail_oracle(m, [], [list(keys)], ()), abs=1e-9)


def test_equality_rejects_repeated_keys(models):
    with pytest.raises(ConsistencyError):
        equality_prob(models[0], 1, 1)


def _two_set_model():
    """Two absorbing targets meeting only in a single absorbing state."""
    rng = np.random.default_rng(1)
    n, top = 7, 6
    g1, g2 = [4, 6], [5, 6]
    Q = rng.exponential(size=(n, n)) * (rng.random((n, n)) < 0.8)
    for g in (g1, g2):
        for i in g:
            Q[i, [j for j in range(n) if j not in g]] = 0.0
    Q[top] = 0.0
    Q[4, top] += 1.0
    Q[5, top] += 1.0
    Q[0, top] += 0.3
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    a = np.zeros(n)
    a[:4] = rng.random(4)
    a /= a.sum()
    return IntensityModel(Q, {1: g1, 2: g2}, a), g1, g2, top


def test_two_set_commutator_identity():
    """With ``h_i`` the indicator of the complement of target ``i`` on the
    non-absorbing states, ``A h1 h2 - [A, h1] - [A, h2] = g' A`` where
    ``g'`` indicates states outside both targets, and the row sums equal
    minus the direct rates into the common absorbing state."""
    m, g1, g2, top = _two_set_model()
    Q = m.intensity
    E = [i for i in range(m.n) if i != top]
    A = Q[np.ix_(E, E)]
    h1 = np.diag([0.0 if i in g1 else 1.0 for i in E])
    h2 = np.diag([0.0 if i in g2 else 1.0 for i in E])
    M = A @ h1 @ h2 - (A @ h1 - h1 @ A) - (A @ h2 - h2 @ A)
    gp = h1 @ h2
    assert np.allclose(M, gp @ A, atol=1e-12)
    C = np.array([0.0 if i in g1 or i in g2 else Q[i, top] for i in E])
    assert np.allclose(M @ np.ones(len(E)), -C, atol=1e-12)
    for u in (0.0, 0.4, 1.5):
        p = m.alpha[E] @ scipy.linalg.expm(A * u) @ np.linalg.solve(A, M @ np.ones(len(E)))
        assert p == pytest.approx(tail_p(m, query([[1, 2]], t=(u,))).value, abs=1e-12)


# --- raw constraints ------------------------------------------------------

def test_canonicalize_two_thresholds():
    dec = canonicalize([Threshold(1, 0.5), Threshold(2, 1.0)])
    assert not dec.contradictory
    pats = sorted((e.pattern.blocks, e.thresholds) for e in dec)
    assert pats == [(((1,), (2,)), (0.5, 1.0)), (((1, 2),), (1.0,))]


def test_canonicalize_sum_is_joint_tail(models):
    for m in models:
        p = tail_probability(m, [Threshold(1, 0.5), Threshold(2, 1.0)])
        assert p == pytest.approx(tail_p(m, query([[1], [2]], t=(0.5, 1.0))).value, abs=1e-9)


def test_all_distinct_is_sum_of_orderings(s5):
    cons = [NotEqual(1, 2), NotEqual(1, 3), NotEqual(2, 3)]
    dec = canonicalize(cons)
    assert len(dec) == 1
    orderings = [s for s in enumerate_partitions([1, 2, 3]) if len(s) == 3]
    assert len(orderings) == 6
    assert dec.probability(s5) == pytest.approx(sum(region_probability(s5, s) for s in orderings),
                                                abs=1e-10)


def test_contradictions_flagged(models):
    for cons in ([Equal(1, 2), NotEqual(1, 2)],
                 [Equal(1, 2), Equal(2, 3), NotEqual(1, 3)],
                 [NotEqual(2, 2)]):
        dec = canonicalize(cons)
        assert dec.contradictory and len(dec) == 0
        assert dec.probability(models[0]) == 0.0


def test_negative_threshold_rejected():
    with pytest.raises(ValueError):
        canonicalize([Threshold(1, -0.5)])


def test_equal_keys_trivial(models):
    m = models[0]
    assert tail_probability(m, [Equal(1, 1), Threshold(1, 0.0)]) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("cons", [
    [Threshold(1, 0.3), Equal(2, 3), NotEqual(1, 2)],
    [Threshold(1, 0.2), Threshold(2, 0.5), NotEqual(1, 2), NotEqual(2, 3)],
    [Equal(1, 2), Threshold(3, 0.4)],
    [Threshold(2, 0.1), Threshold(3, 0.6)],
])
def test_raw_constraints_vs_simulation(s5, s5_sample, cons):
    exact = tail_probability(s5, cons)
    f = s5_sample.frequency(s5_sample.constraint_indicator(cons)).value
    n = s5_sample.n
    sd = math.sqrt(exact * (1 - exact) / n) + 0.5 / n
    assert abs(f - exact) <= 3 * sd, (f, exact)


def test_methods_agree_on_raw_constraints(models):
    cons = [Threshold(1, 0.3), NotEqual(1, 2), Threshold(3, 0.1)]
    for m in models:
        a = tail_probability(m, cons)
        b = tail_probability(m, cons, method=tail_p_alt)
        assert a == pytest.approx(b, abs=1e-7)
