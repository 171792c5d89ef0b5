import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coordsim.bundled import binary_symmetric_channel, bsc_model
from coordsim.construction import SourceModel
from coordsim.polar import (
    SuccessiveCancellation,
    polar_transform,
    sc_probability_w,
    sc_probability_x,
    true_path_conditionals,
)
from coordsim.probability import Alphabet, ConditionalPMF, JointPMF

U, X, Y, V, W = (Alphabet(n, 2) for n in "UXYVW")


def kernel_matrix(m):
    F = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    G = F
    for _ in range(m - 1):
        G = np.kron(G, F) % 2
    return G


# -- transform -------------------------------------------------------------------


def test_transform_n2():
    assert np.array_equal(polar_transform([0, 1]), [1, 1])


def test_transform_n4_matrix_oracle():
    v = np.array([1, 0, 0, 1], dtype=np.uint8)
    expect = v @ kernel_matrix(2) % 2
    assert np.array_equal(polar_transform(v), expect)
    assert np.array_equal(polar_transform(v), [0, 1, 1, 1])


def test_transform_matches_matrix_for_random_vectors():
    rng = np.random.default_rng(0)
    for m in (1, 2, 3, 4, 5):
        n = 1 << m
        G = kernel_matrix(m)
        for _ in range(5):
            v = rng.integers(0, 2, n, dtype=np.uint8)
            assert np.array_equal(polar_transform(v), v @ G % 2)


def test_transform_rejects_non_power_of_two():
    with pytest.raises(ValueError, match="power of 2"):
        polar_transform([0, 1, 1])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 8, 16, 64]))
def test_transform_involution_and_linearity(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n, dtype=np.uint8)
    b = rng.integers(0, 2, n, dtype=np.uint8)
    assert np.array_equal(polar_transform(polar_transform(a)), a)
    assert np.array_equal(polar_transform(a ^ b), polar_transform(a) ^ polar_transform(b))


def test_transform_batched_rows():
    rng = np.random.default_rng(1)
    block = rng.integers(0, 2, (6, 8), dtype=np.uint8)
    rows = np.stack([polar_transform(r) for r in block])
    assert np.array_equal(polar_transform(block), rows)


# -- exhaustive conditional oracle --------------------------------------------------


def enumerate_conditional(leaf_p1, prefix, j):
    """P(bit_j = 1 | prefix) by enumerating every leaf configuration."""
    n = len(leaf_p1)
    xs = np.array(list(itertools.product([0, 1], repeat=n)), dtype=np.uint8)
    weights = np.prod(np.where(xs == 1, leaf_p1, 1 - np.asarray(leaf_p1)), axis=1)
    bits = polar_transform(xs)
    match = np.all(bits[:, : j - 1] == np.asarray(prefix, dtype=np.uint8), axis=1)
    denom = weights[match].sum()
    return weights[match & (bits[:, j - 1] == 1)].sum() / denom


def test_sequential_matches_enumeration():
    rng = np.random.default_rng(2)
    for n in (2, 4, 8):
        leaf = rng.uniform(0.05, 0.95, n)
        sc = SuccessiveCancellation(leaf)
        prefix = []
        for j in range(1, n + 1):
            p = sc.next_probability()
            assert p == pytest.approx(enumerate_conditional(leaf, prefix, j), abs=1e-12)
            bit = int(rng.random() < p)
            sc.push(bit)
            prefix.append(bit)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 8]))
def test_conditionals_match_enumeration_property(seed, n):
    rng = np.random.default_rng(seed)
    leaf = rng.uniform(0.02, 0.98, n)
    bits = rng.integers(0, 2, n, dtype=np.uint8)
    probs = true_path_conditionals(leaf[None, :], bits[None, :])[0]
    for j in range(1, n + 1):
        expect = enumerate_conditional(leaf, bits[: j - 1].tolist(), j)
        assert probs[j - 1] == pytest.approx(expect, abs=1e-12)


def test_batched_matches_sequential():
    rng = np.random.default_rng(3)
    n = 16
    leaf = rng.uniform(0.02, 0.98, (5, n))
    bits = rng.integers(0, 2, (5, n), dtype=np.uint8)
    batched = true_path_conditionals(leaf, bits)
    for row in range(5):
        sc = SuccessiveCancellation(leaf[row])
        for j in range(n):
            assert batched[row, j] == pytest.approx(sc.next_probability(), abs=1e-12)
            sc.push(int(bits[row, j]))


def test_push_without_query_keeps_state_consistent():
    # frozen positions push bits directly; later queries must still be exact
    rng = np.random.default_rng(4)
    n = 8
    leaf = rng.uniform(0.1, 0.9, n)
    bits = rng.integers(0, 2, n, dtype=np.uint8)
    sc = SuccessiveCancellation(leaf)
    queried = {2, 5, 7}
    for j in range(n):
        if j in queried:
            p = sc.next_probability()
            assert p == pytest.approx(enumerate_conditional(leaf, bits[:j].tolist(), j + 1), abs=1e-12)
        sc.push(int(bits[j]))


# -- model-facing queries --------------------------------------------------------------


def test_sc_probability_x_uniform_source():
    model = bsc_model()
    assert sc_probability_x(1, [], model, n=8) == pytest.approx(0.5, abs=1e-12)
    assert sc_probability_x(3, [0, 1], model, n=8) == pytest.approx(0.5, abs=1e-12)


def test_sc_probability_x_base_case():
    model = SourceModel(
        u_prior=JointPMF.uniform((U,)),
        x_prior=JointPMF((X,), np.array([0.7, 0.3])),
        channel=binary_symmetric_channel(0.1),
        w_rule=bsc_model().w_rule,
        v_rule=bsc_model().v_rule,
    )
    assert sc_probability_x(1, [], model, n=1) == pytest.approx(0.3, abs=1e-12)


def test_sc_probability_x_posterior_oracle():
    # n=2, uniform X through BSC(0.1), y=(0,0): brute force over 4 sequences
    model = bsc_model(crossover=0.1)
    got = sc_probability_x(1, [], model, y_obs=[0, 0])
    assert got == pytest.approx(0.18, abs=1e-12)


def test_sc_probability_w_independent_uniform():
    # W uniform, independent of everything
    w_rule = ConditionalPMF((X, U), (W,), np.full((2, 2, 2), 0.5))
    base = bsc_model()
    model = SourceModel(base.u_prior, base.x_prior, base.channel, w_rule, base.v_rule)
    assert sc_probability_w(1, [], model, x=[0, 1]) == pytest.approx(0.5, abs=1e-12)
    assert sc_probability_w(2, [1], model, x=[0, 1], u=[1, 0]) == pytest.approx(0.5, abs=1e-12)


def test_sc_probability_w_deterministic_copy():
    copy = np.zeros((2, 2, 2))
    copy[0, :, 0] = 1.0
    copy[1, :, 1] = 1.0  # W = X
    base = bsc_model()
    model = SourceModel(base.u_prior, base.x_prior, base.channel,
                        ConditionalPMF((X, U), (W,), copy), base.v_rule)
    x = [0, 1, 1, 0]
    z_true = polar_transform(np.array(x, dtype=np.uint8))
    prefix = []
    for j in range(1, 5):
        p = sc_probability_w(j, prefix, model, x=x, u=[0, 0, 0, 0])
        assert p in (pytest.approx(0.0, abs=1e-12), pytest.approx(1.0, abs=1e-12))
        assert int(round(p)) == z_true[j - 1]
        prefix.append(int(z_true[j - 1]))


def test_sc_probability_w_enumeration_oracle():
    rng = np.random.default_rng(5)
    rows = rng.dirichlet(np.ones(2), size=4).reshape(2, 2, 2)
    base = bsc_model()
    model = SourceModel(base.u_prior, base.x_prior, base.channel,
                        ConditionalPMF((X, U), (W,), rows), base.v_rule)
    x = [1, 0]
    u = [0, 1]
    leaf = model.w_given_xu()[x, u]
    for prefix in ([], [0], [1]):
        j = len(prefix) + 1
        got = sc_probability_w(j, prefix, model, x=x, u=u)
        assert got == pytest.approx(enumerate_conditional(leaf, prefix, j), abs=1e-12)
