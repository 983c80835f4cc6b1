import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from kvnmd.blockenc import (BlockEncoding, PrepPair, alternating_sign_encode, combine,
                            complete_unitary, derivative_encoding, embed, encode_diagonal,
                            inequality_test_gates, inequality_test_toffolis, kinetic_hierarchy,
                            kinetic_normalization, lcu_encode, pad_ancillas, perturbed_prep_error,
                            product_encoding, renormalize, select, shift_matrix,
                            signed_momentum_encoding, sum_encoding)
from kvnmd.errors import ValidationError
from kvnmd.findiff import derivative_matrix, fd_coefficients
from kvnmd.grid import PhaseSpaceGrid
from kvnmd.liouville import SystemParams, build, split


def unitaries(n, m, seed):
    return [unitary_group.rvs(n, random_state=seed + j) for j in range(m)]


def test_complete_unitary_first_column(rng):
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    v /= np.linalg.norm(v)
    U = complete_unitary(v)
    np.testing.assert_allclose(U[:, 0], v, atol=1e-14)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(8), atol=1e-13)
    with pytest.raises(ValidationError):
        complete_unitary(np.ones(4))


def test_select_pads_with_identity():
    us = unitaries(2, 3, 0)
    S = select(us, 2)
    np.testing.assert_allclose(S[4:6, 4:6], us[2])
    np.testing.assert_allclose(S[6:, 6:], np.eye(2))


@given(st.integers(1, 9), st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_lcu_is_exact(m, seed):
    w = np.random.default_rng(seed).random(m) + 0.01
    us = unitaries(2, m, seed)
    enc = lcu_encode(us, w)
    assert enc.alpha == pytest.approx(w.sum())
    assert enc.a == (math.ceil(math.log2(m)) if m > 1 else 0)
    assert enc.measured_error() < 1e-12 * max(1, enc.alpha)


def test_lcu_validation():
    us = unitaries(2, 2, 0)
    with pytest.raises(ValidationError):
        lcu_encode(us, [1.0])
    with pytest.raises(ValidationError):
        lcu_encode(us, [1.0, -1.0])
    with pytest.raises(ValidationError):
        lcu_encode([np.ones((2, 2)), us[0]], [1.0, 1.0])


def test_certificate_is_enforced():
    U = unitary_group.rvs(4, random_state=1)
    with pytest.raises(ValidationError, match="exceeds certificate"):
        BlockEncoding(U, 1.0, 1, 0.0, np.zeros((2, 2)))
    with pytest.raises(ValidationError, match="not unitary"):
        BlockEncoding(np.ones((4, 4)), 1.0, 1, 10.0, np.zeros((2, 2)))


def test_perturbed_prep_within_bound():
    us = unitaries(2, 4, 3)
    for delta in (1e-4, 1e-2, 0.1):
        measured, bound = perturbed_prep_error(us, [0.1, 0.2, 0.3, 0.4], delta, rng=7)
        assert 0 < measured <= bound


def test_product_and_sum_compositions():
    us = unitaries(2, 4, 10)
    A = lcu_encode(us[:2], [0.3, 0.7])
    B = lcu_encode(us[2:], [1.5, 0.5])
    P = product_encoding(A, B)
    np.testing.assert_allclose(P.target, A.target @ B.target)
    assert (P.alpha, P.a) == pytest.approx((2.0, 2))
    S = sum_encoding([renormalize(A, 2.0), B], PrepPair.for_coefficients([0.5, -2.0]))
    np.testing.assert_allclose(S.target, 1.0 * A.target - 2.0 * B.target, atol=1e-12)
    assert S.alpha == pytest.approx(2.0 * 2.5)
    with pytest.raises(ValidationError):
        sum_encoding([A, B], PrepPair.for_coefficients([1.0, 1.0]))


def test_combine_and_pad():
    us = unitaries(2, 3, 20)
    A = lcu_encode(us[:1], [2.0])
    B = lcu_encode(us[1:], [0.5, 0.5])
    C = combine([A, B], [1.0, 3.0])
    np.testing.assert_allclose(C.target, A.target + 3 * B.target, atol=1e-12)
    assert pad_ancillas(A, 3).a == 3
    with pytest.raises(ValidationError):
        pad_ancillas(B, 0)


def test_prep_pair_with_declared_error():
    c = np.array([math.sqrt(0.5), math.sqrt(0.5)])
    pair = PrepPair(c, c, 2.0, [1.0, 1.1], eps=0.1)
    assert pair.measured_error() == pytest.approx(0.1)
    with pytest.raises(ValidationError):
        PrepPair(c, c, 2.0, [1.0, 1.1], eps=0.05)


def test_embed_places_identities():
    enc = lcu_encode(unitaries(2, 2, 30), [1.0, 1.0])
    E = embed(enc, 2, 4)
    np.testing.assert_allclose(E.encoded(), np.kron(np.kron(np.eye(2), enc.encoded()), np.eye(4)),
                               atol=1e-12)


@pytest.mark.parametrize("a", [1, 2, 3, 4])
def test_alternating_sign_rule(a):
    v = np.arange(1 << a)
    enc = alternating_sign_encode(v, a)
    expect = np.where(v % 2 == 0, v, v + 1) / (1 << a)
    np.testing.assert_allclose(np.diag(enc.block).real, expect, atol=1e-14)
    np.testing.assert_allclose(enc.block - np.diag(np.diag(enc.block)), 0, atol=1e-14)
    assert enc.eps >= 1.0


def test_alternating_sign_even_values_are_exact():
    enc = alternating_sign_encode([0, 2, 4, 6], 3, scale=0.5)
    assert enc.measured_error() < 1e-12
    with pytest.raises(ValidationError):
        alternating_sign_encode([8], 3)
    with pytest.raises(ValidationError):
        alternating_sign_encode([1.5], 3)


def test_encode_diagonal_rounding_certificate(rng):
    x = rng.uniform(0, 3.0, size=6)
    enc = encode_diagonal(x, 4, 3.0)
    assert enc.measured_error() <= enc.eps


def test_signed_momentum_and_derivative_encodings():
    g, h = 8, 0.5
    p = h * (np.arange(g) - g // 2)
    enc = signed_momentum_encoding(p, h)
    np.testing.assert_allclose(enc.target, np.diag(p), atol=1e-14)
    assert enc.measured_error() <= h + 1e-12
    D = derivative_encoding(2, g, 0.25)
    np.testing.assert_allclose(D.target, -1j * derivative_matrix(fd_coefficients(2), g, 0.25).toarray(),
                               atol=1e-12)
    assert D.alpha == pytest.approx(fd_coefficients(2).abs_sum / 0.25)
    np.testing.assert_array_equal(shift_matrix(4, 1) @ np.arange(4), [1, 2, 3, 0])


def test_kinetic_hierarchy_matches_liouvillian():
    grid = PhaseSpaceGrid.build(1, 1, 4, 4.0, 4, 4.0)
    params = SystemParams([2.0], [0])
    enc = kinetic_hierarchy(grid, params)
    Lc, _ = split(build(grid, params, np.zeros(4)))
    M = Lc.dense()
    np.testing.assert_allclose(enc.target, M, atol=1e-13)
    assert np.linalg.norm(M - enc.encoded(), 2) <= enc.eps
    assert enc.alpha == pytest.approx(kinetic_normalization(grid, params))
    with pytest.raises(ValidationError):
        kinetic_hierarchy(PhaseSpaceGrid.build(1, 1, 8, 4.0, 16, 4.0), params)


@pytest.mark.parametrize("n", [1, 2, 5, 16])
def test_inequality_test_cost(n):
    assert len(inequality_test_gates(n)) == inequality_test_toffolis(n) == 5 * n - 2

