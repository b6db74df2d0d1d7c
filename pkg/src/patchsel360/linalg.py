"""Dense linear-algebra kernel: symmetric eigendecomposition and SPD solves.

All routines work on 64-bit row-major ``numpy`` arrays and are pure
functions: identical inputs give bitwise-identical outputs. LAPACK (via
``numpy.linalg``) supplies the factorizations; this module owns input
validation, ordering conventions, and the error contract.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DefinitenessError, ShapeError

#: Relative asymmetry tolerated before an input is rejected as non-symmetric.
SYMMETRY_RTOL = 1e-9


def as_matrix(a, name="matrix"):
    """Validate and return ``a`` as a finite 2-D float64 array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ShapeError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(a)


def _check_symmetric(a, name):
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {a.shape}")
    scale = np.abs(a).max()
    if scale > 0 and np.abs(a - a.T).max() > SYMMETRY_RTOL * scale:
        raise ShapeError(f"{name} is not symmetric within rtol {SYMMETRY_RTOL}")


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues sorted non-increasing with matching orthonormal columns."""

    values: np.ndarray  # (n,)
    vectors: np.ndarray  # (n, n), column i pairs with values[i]


def eig_sym(a):
    """Full eigendecomposition of a symmetric matrix.

    Returns :class:`EigenPairs` with eigenvalues in descending order.
    Raises :class:`ShapeError` for non-square or asymmetric input.
    """
    a = as_matrix(a, "A")
    _check_symmetric(a, "A")
    # Symmetrize first so LAPACK sees an exactly symmetric operand; this
    # keeps outputs deterministic for inputs that differ only by
    # representable asymmetry below tolerance.
    sym = 0.5 * (a + a.T)
    values, vectors = np.linalg.eigh(sym)
    order = np.arange(values.size)[::-1]  # eigh returns ascending
    return EigenPairs(values=values[order].copy(), vectors=vectors[:, order].copy())


def _first_failing_pivot(a):
    """Index of the smallest leading minor that is not positive definite."""
    for k in range(1, a.shape[0] + 1):
        try:
            np.linalg.cholesky(a[:k, :k])
        except np.linalg.LinAlgError:
            return k - 1
    return None


def solve_spd(a, b):
    """Solve ``A X = B`` for symmetric positive-definite ``A`` via Cholesky.

    Raises :class:`DefinitenessError` (carrying the failing pivot index)
    when ``A`` is not SPD.
    """
    a = as_matrix(a, "A")
    _check_symmetric(a, "A")
    b = np.asarray(b, dtype=np.float64)
    b2d = b if b.ndim == 2 else b.reshape(-1, 1)
    if b2d.shape[0] != a.shape[0]:
        raise ShapeError(
            f"B has {b2d.shape[0]} rows, expected {a.shape[0]}"
        )
    sym = 0.5 * (a + a.T)
    try:
        chol = np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        pivot = _first_failing_pivot(sym)
        raise DefinitenessError(
            f"matrix is not positive definite (failing pivot {pivot})",
            pivot=pivot,
        ) from None
    y = np.linalg.solve(chol, b2d)
    x = np.linalg.solve(chol.T, y)
    return x if b.ndim == 2 else x.ravel()
