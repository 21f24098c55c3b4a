"""Tests for entmax, its threshold solver and backward rule."""

import numpy as np
import pytest

from app.core.entmax import (
    entmax,
    entmax_along_axis,
    entmax_backward,
    softmax,
    solve_threshold,
    sparsemax,
)
from tests.conftest import finite_difference, relative_error


def _sort_sparsemax(z):
    """Reference sparsemax from the support-size condition."""
    ordered = np.sort(z)[::-1]
    cumulative = np.cumsum(ordered)
    k = max(j for j in range(1, len(z) + 1) if 1 + j * ordered[j - 1] > cumulative[j - 1])
    tau = (cumulative[k - 1] - 1) / k
    return np.maximum(z - tau, 0.0)


@pytest.mark.parametrize("alpha", [1.0, 1.3, 1.5, 2.0, 2.5])
def test_constant_input_is_uniform(alpha):
    """Test that a constant score vector maps to the uniform distribution."""
    np.testing.assert_allclose(entmax(np.full(4, 0.7), alpha), np.full(4, 0.25), atol=1e-9)


def test_sparsemax_example():
    """Test sparsemax on a hand-computed example."""
    np.testing.assert_allclose(entmax(np.array([1.0, 0.0, -1.0]), 2.0), [1.0, 0.0, 0.0])


def test_softmax_limit(rng):
    """Test that alpha = 1 is softmax."""
    z = rng.standard_normal(10)
    direct = np.exp(z) / np.exp(z).sum()
    np.testing.assert_allclose(entmax(z, 1.0), direct, atol=1e-6)


def test_sparsemax_matches_sort_reference(rng):
    """Test alpha = 2 against the sort-based sparsemax."""
    for _ in range(50):
        z = rng.uniform(-2, 2, size=rng.integers(1, 12))
        np.testing.assert_allclose(entmax(z, 2.0), _sort_sparsemax(z), atol=1e-9)


@pytest.mark.parametrize("alpha", [0.9, 2.6])
def test_alpha_out_of_range(alpha):
    """Test that alpha outside [1, 2.5] is refused."""
    with pytest.raises(ValueError, match="alpha"):
        entmax(np.zeros(3), alpha)


def test_rejects_non_finite():
    """Test that infinite scores are refused."""
    with pytest.raises(ValueError, match="finite"):
        entmax(np.array([0.0, np.inf]), 1.5)


@pytest.mark.parametrize("alpha", [1.0, 1.25, 1.5, 2.0, 2.5])
def test_outputs_lie_on_the_simplex(rng, alpha):
    """Test that outputs are nonnegative and sum to one."""
    for _ in range(100):
        p = entmax(rng.uniform(-3, 3, size=rng.integers(1, 20)), alpha)
        assert p.min() >= 0.0
        assert abs(p.sum() - 1.0) <= 1e-8


@pytest.mark.parametrize("alpha", [1.0, 1.5, 2.0])
def test_permutation_equivariance(rng, alpha):
    """Test that permuting scores permutes probabilities."""
    z = rng.standard_normal(7)
    order = rng.permutation(7)
    np.testing.assert_allclose(entmax(z[order], alpha), entmax(z, alpha)[order], atol=1e-12)


@pytest.mark.parametrize("alpha", [1.0, 1.5, 2.0, 2.5])
def test_shift_invariance(rng, alpha):
    """Test that adding a constant to every score changes nothing."""
    z = rng.standard_normal(6)
    np.testing.assert_allclose(entmax(z + 3.7, alpha), entmax(z, alpha), atol=1e-9)


def test_sparsity_grows_with_alpha(rng):
    """Test that larger alpha gives smaller supports."""
    sizes = {1.0: [], 1.5: [], 2.0: []}
    for _ in range(1000):
        z = rng.standard_normal(10)
        for alpha in sizes:
            sizes[alpha].append(np.count_nonzero(entmax(z, alpha)))
    assert np.mean(sizes[1.0]) == 10
    assert np.mean(sizes[2.0]) <= np.mean(sizes[1.5]) <= 10


def test_vectorised_matches_per_row(rng):
    """Test the vectorised form against a per-row loop."""
    z = rng.standard_normal((4, 6))
    rows = np.stack([entmax(row, 1.5) for row in z])
    np.testing.assert_allclose(entmax_along_axis(z, 1.5, axis=1), rows, atol=1e-10)
    np.testing.assert_allclose(softmax(z, axis=0).sum(axis=0), np.ones(6))
    np.testing.assert_allclose(sparsemax(z, axis=0).sum(axis=0), np.ones(6))


def test_threshold_two_equal_entries():
    """Test the threshold for two equal scores."""
    tau, support = solve_threshold(np.array([0.0, 0.0]), 2.0)
    assert tau == pytest.approx(-0.5)
    np.testing.assert_array_equal(support, [0, 1])


def test_sparsemax_threshold():
    """Test the sparsemax threshold on a hand-computed example."""
    tau, support = solve_threshold(np.array([1.0, 0.0, -1.0]), 2.0)
    assert tau == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_array_equal(support, [0])


def test_threshold_extreme_separation():
    """Test that one dominant score takes all of the mass."""
    z = np.full(5, -10.0)
    z[2] = 10.0
    tau, support = solve_threshold(z, 1.5)
    np.testing.assert_array_equal(support, [2])
    expected = np.zeros(5)
    expected[2] = 1.0
    np.testing.assert_allclose(entmax(z, 1.5), expected, atol=1e-9)


@pytest.mark.parametrize("alpha", [1.2, 1.5, 2.0, 2.5])
def test_threshold_sums_to_one(rng, alpha):
    """Test that the solved threshold normalises the output."""
    z = rng.standard_normal(8)
    tau, _ = solve_threshold(z, alpha)
    total = (np.maximum((alpha - 1) * z - tau, 0.0) ** (1 / (alpha - 1))).sum()
    assert abs(total - 1.0) <= 1e-9


def test_softmax_has_no_threshold():
    """Test that the threshold solver needs alpha > 1."""
    with pytest.raises(ValueError, match="alpha > 1"):
        solve_threshold(np.zeros(3), 1.0)


@pytest.mark.parametrize("alpha", [1.0, 1.5, 2.0])
def test_constant_upstream_is_annihilated(rng, alpha):
    """Test that a constant upstream gradient maps to zero."""
    p = entmax(rng.standard_normal(6), alpha)
    np.testing.assert_allclose(entmax_backward(p, np.full(6, 2.5), alpha), 0.0, atol=1e-12)


def test_softmax_jacobian(rng):
    """Test the alpha = 1 backward against the softmax Jacobian."""
    p = entmax(rng.standard_normal(5), 1.0)
    g = rng.standard_normal(5)
    jacobian = np.diag(p) - np.outer(p, p)
    np.testing.assert_allclose(entmax_backward(p, g, 1.0), jacobian.T @ g, atol=1e-10)


@pytest.mark.parametrize("alpha", [1.5, 2.0, 2.5])
def test_backward_matches_finite_differences(rng, alpha):
    """Test the backward rule against finite differences."""
    z = rng.standard_normal(6)
    g = rng.standard_normal(6)
    analytic = entmax_backward(entmax(z, alpha), g, alpha)
    numeric = finite_difference(lambda: float(entmax(z, alpha) @ g), z)
    assert relative_error(analytic, numeric) <= 1e-4


def test_backward_rejects_off_simplex():
    """Test that the backward rule needs a distribution."""
    with pytest.raises(ValueError, match="simplex"):
        entmax_backward(np.array([0.5, 0.6]), np.ones(2), 1.5)


def test_backward_rejects_shape_mismatch():
    """Test that output and gradient shapes must agree."""
    with pytest.raises(ValueError, match="shapes differ"):
        entmax_backward(np.array([0.5, 0.5]), np.ones(3), 1.5)
