"""Alpha-entmax normalisation, its threshold solver and its backward rule.

``entmax(z)_i = [(alpha - 1) z_i - tau]_+ ** (1 / (alpha - 1))`` where ``tau``
makes the output sum to one. ``alpha = 1`` is softmax, ``alpha = 2`` is
sparsemax; larger ``alpha`` gives sparser outputs.
"""

from typing import Tuple

import numpy as np

ALPHA_MIN = 1.0
ALPHA_MAX = 2.5
BISECTION_TOL = 1e-9
BISECTION_MAX_ITER = 100
NEWTON_STEPS = 3
SIMPLEX_TOL = 1e-6


def check_alpha(alpha: float) -> float:
    """Validate ``alpha`` against the supported range.

    Raises:
        ValueError: If alpha is outside [1.0, 2.5]
    """
    alpha = float(alpha)
    if not ALPHA_MIN <= alpha <= ALPHA_MAX:
        raise ValueError(f"alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {alpha}")
    return alpha


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = np.exp(z - z.max(axis=axis, keepdims=True))
    return shifted / shifted.sum(axis=axis, keepdims=True)


def sparsemax_threshold(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Exact sort-based sparsemax threshold (keeps ``axis`` with extent 1)."""
    z = np.moveaxis(np.asarray(z, dtype=np.float64), axis, -1)
    ordered = -np.sort(-z, axis=-1)
    cumulative = np.cumsum(ordered, axis=-1)
    ranks = np.arange(1, z.shape[-1] + 1, dtype=np.float64)
    in_support = 1.0 + ranks * ordered > cumulative
    support_size = in_support.sum(axis=-1, keepdims=True)
    tau = (np.take_along_axis(cumulative, support_size - 1, axis=-1) - 1.0) / support_size
    return np.moveaxis(tau, -1, axis)


def sparsemax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z - sparsemax_threshold(z, axis=axis), 0.0)


def _bisect_threshold(z: np.ndarray, alpha: float, axis: int) -> np.ndarray:
    scaled = (alpha - 1.0) * np.moveaxis(z, axis, -1)
    exponent = 1.0 / (alpha - 1.0)
    hi = scaled.max(axis=-1, keepdims=True)
    lo = hi - 1.0
    tau = (lo + hi) / 2.0
    for _ in range(BISECTION_MAX_ITER):
        tau = (lo + hi) / 2.0
        total = (np.maximum(scaled - tau, 0.0) ** exponent).sum(axis=-1, keepdims=True)
        if np.all(np.abs(total - 1.0) <= BISECTION_TOL):
            break
        # The simplex sum decreases in tau.
        too_large = total > 1.0
        lo = np.where(too_large, tau, lo)
        hi = np.where(too_large, hi, tau)
    tau = _polish_threshold(scaled, tau, exponent)
    return np.moveaxis(tau, -1, axis)


def _polish_threshold(scaled: np.ndarray, tau: np.ndarray, exponent: float) -> np.ndarray:
    """Newton steps on the simplex residual; a step is kept only where it helps."""
    for _ in range(NEWTON_STEPS):
        gap = np.maximum(scaled - tau, 0.0)
        residual = (gap**exponent).sum(axis=-1, keepdims=True) - 1.0
        positive = gap > 0
        slope = exponent * np.where(
            positive, np.power(np.where(positive, gap, 1.0), exponent - 1.0), 0.0
        ).sum(axis=-1, keepdims=True)
        candidate = tau + residual / np.where(slope > 0, slope, 1.0)
        new_gap = np.maximum(scaled - candidate, 0.0)
        new_residual = (new_gap**exponent).sum(axis=-1, keepdims=True) - 1.0
        tau = np.where(np.abs(new_residual) < np.abs(residual), candidate, tau)
    return tau


def entmax_along_axis(z: np.ndarray, alpha: float, axis: int = -1) -> np.ndarray:
    """Vectorised entmax applied independently to every slice along ``axis``."""
    alpha = check_alpha(alpha)
    z = np.asarray(z, dtype=np.float64)
    if alpha == 1.0:
        return softmax(z, axis=axis)
    if alpha == 2.0:
        return sparsemax(z, axis=axis)
    tau = _bisect_threshold(z, alpha, axis)
    p = np.maximum((alpha - 1.0) * z - tau, 0.0) ** (1.0 / (alpha - 1.0))
    return p / p.sum(axis=axis, keepdims=True)


def entmax_backward_along_axis(
    p: np.ndarray, upstream: np.ndarray, alpha: float, axis: int = -1
) -> np.ndarray:
    """Vector-Jacobian product of entmax at output ``p``."""
    if alpha == 1.0:
        weights = p
    else:
        weights = np.where(p > 0, np.power(np.where(p > 0, p, 1.0), 2.0 - alpha), 0.0)
    dot = (weights * upstream).sum(axis=axis, keepdims=True)
    norm = weights.sum(axis=axis, keepdims=True)
    return weights * upstream - (dot / norm) * weights


def _as_vector(z: np.ndarray, name: str) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ValueError(f"{name} must be a non-empty vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} must be finite")
    return z


def entmax(z: np.ndarray, alpha: float) -> np.ndarray:
    """Alpha-entmax of a single vector.

    Args:
        z: Scores, shape (n,), n >= 1, finite
        alpha: Sparsity parameter in [1.0, 2.5]

    Returns:
        Nonnegative vector summing to one

    Raises:
        ValueError: If alpha is out of range or z is not a finite vector
    """
    alpha = check_alpha(alpha)
    return entmax_along_axis(_as_vector(z, "z"), alpha)


def solve_threshold(z: np.ndarray, alpha: float) -> Tuple[float, np.ndarray]:
    """Find tau such that the entmax output sums to one.

    Returns:
        (tau, support) where support holds the indices with (alpha-1) z_i > tau

    Raises:
        ValueError: If alpha is 1 (softmax has no threshold) or out of range
    """
    alpha = check_alpha(alpha)
    if alpha == 1.0:
        raise ValueError("solve_threshold requires alpha > 1; alpha = 1 is the softmax limit")
    z = _as_vector(z, "z")
    if alpha == 2.0:
        tau = float(sparsemax_threshold(z)[0])
    else:
        tau = float(_bisect_threshold(z, alpha, axis=-1)[0])
    support = np.flatnonzero((alpha - 1.0) * z > tau)
    return tau, support


def entmax_backward(p: np.ndarray, upstream: np.ndarray, alpha: float) -> np.ndarray:
    """Return J^T upstream for the entmax Jacobian at output ``p``.

    Raises:
        ValueError: If ``p`` is not on the probability simplex
    """
    alpha = check_alpha(alpha)
    p = _as_vector(p, "p")
    upstream = _as_vector(upstream, "upstream")
    if p.shape != upstream.shape:
        raise ValueError(f"p and upstream shapes differ: {p.shape} vs {upstream.shape}")
    if p.min() < -SIMPLEX_TOL or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError("p is not on the probability simplex")
    return entmax_backward_along_axis(p, upstream, alpha)
