"""Pairwise distances, RBF similarity, and the rank-h spectral target.

The similarity matrix is built from one of three distance metrics
(Euclidean, Manhattan, Mahalanobis) through a Gaussian kernel with a
median-heuristic bandwidth, then eigendecomposed to obtain the best
rank-h Gram factor Z (S ~ Z Z^T).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    DefinitenessError,
    InputError,
    ShapeError,
    SpectrumError,
)
from .linalg import as_matrix, eig_sym, solve_spd

EUC = "EUC"
MAN = "MAN"
MAH = "MAH"

#: Fraction of the average covariance eigenvalue used as the default
#: Mahalanobis ridge; the per-image sample covariance is singular
#: whenever n < d.
MAH_DEFAULT_REG_SCALE = 1e-3

#: Eigenvalues in [-NEG_EIG_RTOL * ||S||_F, 0) are treated as numerical
#: zeros; anything more negative inside the kept window is an error.
NEG_EIG_RTOL = 1e-10


@dataclass(frozen=True)
class DistanceMetric:
    """Distance metric selector with Mahalanobis options."""

    kind: str = EUC
    mah_regularization: float | None = None  # None -> trace-scaled default
    mah_mode: str = "full-covariance"  # or "diagonal-covariance"

    def __post_init__(self):
        if self.kind not in (EUC, MAN, MAH):
            raise InputError(f"unknown metric kind {self.kind!r}")
        if self.mah_mode not in ("full-covariance", "diagonal-covariance"):
            raise InputError(f"unknown Mahalanobis mode {self.mah_mode!r}")
        if self.mah_regularization is not None and self.mah_regularization < 0:
            raise InputError("mah_regularization must be >= 0")


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric kernel matrix with unit diagonal and entries in [0, 1]."""

    s: np.ndarray
    bandwidth: float


@dataclass(frozen=True)
class SpectralTarget:
    """Top-h Gram factor of a similarity matrix (Z = V_h sqrt(D_h))."""

    z: np.ndarray  # (n, h)
    kept_eigenvalues: np.ndarray = field(repr=False)  # (h,), non-increasing
    discarded_energy: float = 0.0


def _mah_inverse_metric(e, metric):
    """Regularized inverse covariance (or its diagonal) for MAH distances."""
    n, d = e.shape
    centered = e - e.mean(axis=0)
    if metric.mah_mode == "diagonal-covariance":
        var = (centered**2).sum(axis=0) / max(n - 1, 1)
        lam = metric.mah_regularization
        if lam is None:
            lam = MAH_DEFAULT_REG_SCALE * var.sum() / d
        denom = var + lam
        if np.any(denom <= 0):
            raise DefinitenessError("regularized diagonal covariance has a non-positive entry")
        return ("diag", 1.0 / denom)
    cov = centered.T @ centered / max(n - 1, 1)
    lam = metric.mah_regularization
    if lam is None:
        lam = MAH_DEFAULT_REG_SCALE * np.trace(cov) / d
    return ("full", cov + lam * np.eye(d))


def pairwise_distance(e, metric=DistanceMetric()):
    """n x n distance matrix between the rows of ``e`` under ``metric``.

    Symmetric with an exactly zero diagonal. Mahalanobis uses the
    per-image covariance regularized by ``lambda * I`` (SPD required).
    """
    e = as_matrix(e, "E")
    n = e.shape[0]
    if n < 2:
        raise InputError(f"need at least 2 rows to form distances, got {n}")

    if metric.kind == MAN:
        d = np.abs(e[:, None, :] - e[None, :, :]).sum(axis=2)
    else:
        if metric.kind == EUC:
            rows = e
        else:
            form, inv = _mah_inverse_metric(e, metric)
            if form == "diag":
                rows = e * np.sqrt(inv)
            else:
                # d(x,y)^2 = (x-y)^T C^{-1} (x-y) with C = cov + lam*I.
                # Gram trick: d2_ij = q_i + q_j - 2 (E C^{-1} E^T)_ij.
                cinv_et = solve_spd(inv, e.T)  # (d, n)
                cross = e @ cinv_et
                q = np.diag(cross).copy()
                d2 = q[:, None] + q[None, :] - 2.0 * cross
                np.maximum(d2, 0.0, out=d2)
                d = np.sqrt(d2)
                d = 0.5 * (d + d.T)
                np.fill_diagonal(d, 0.0)
                return d
        sq = np.einsum("ij,ij->i", rows, rows)
        d2 = sq[:, None] + sq[None, :] - 2.0 * rows @ rows.T
        np.maximum(d2, 0.0, out=d2)
        d = np.sqrt(d2)

    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def similarity_from_distance(d, bandwidth="median"):
    """Gaussian kernel similarity S_ij = exp(-D_ij^2 / (2 sigma^2)).

    ``bandwidth`` is either the string ``"median"`` (sigma = median of the
    strict upper-triangle distances) or a fixed positive sigma.
    """
    d = as_matrix(d, "D")
    n = d.shape[0]
    if d.shape[0] != d.shape[1]:
        raise ShapeError(f"D must be square, got {d.shape}")
    if np.any(d < 0):
        raise InputError("distances must be non-negative")
    if np.abs(np.diag(d)).max(initial=0.0) != 0.0:
        raise InputError("D must have a zero diagonal")

    if isinstance(bandwidth, str):
        if bandwidth != "median":
            raise InputError(f"unknown bandwidth mode {bandwidth!r}")
        upper = d[np.triu_indices(n, k=1)]
        sigma = float(np.median(upper))
        if sigma <= 0.0:
            raise DegenerateInputError(
                "median off-diagonal distance is zero; bandwidth undefined"
            )
    else:
        sigma = float(bandwidth)
        if sigma <= 0.0:
            raise InputError("fixed bandwidth must be > 0")

    s = np.exp(-(d**2) / (2.0 * sigma**2))
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 1.0)
    return SimilarityMatrix(s=s, bandwidth=sigma)


def spectral_target(sim, h):
    """Best rank-h PSD Gram factor Z of a similarity matrix.

    Z = V_h sqrt(D_h) over the h largest eigenvalues (tiny negatives
    clamped to zero); ``discarded_energy`` is the sum of squared
    non-negative discarded eigenvalues, which equals ||Z Z^T - S||_F^2
    for PSD S.
    """
    s = sim.s if isinstance(sim, SimilarityMatrix) else as_matrix(sim, "S")
    n = s.shape[0]
    if not 1 <= h <= n:
        raise InputError(f"h must be in [1, {n}], got {h}")

    pairs = eig_sym(s)
    tol = NEG_EIG_RTOL * np.linalg.norm(s)
    values = pairs.values.copy()
    usable = values >= -tol
    if usable.sum() < h:
        raise SpectrumError(
            f"only {int(usable.sum())} non-negative eigenvalues available, "
            f"need {h}",
            available=int(usable.sum()),
        )
    if np.any(values[:h] < -tol):
        # A large negative eigenvalue sorted into the top-h window (possible
        # for non-PSD kernels) cannot be silently clamped.
        raise SpectrumError(
            "negative eigenvalue inside the top-h window",
            available=int(usable.sum()),
        )
    np.clip(values, 0.0, None, out=values)

    kept = values[:h]
    z = pairs.vectors[:, :h] * np.sqrt(kept)[None, :]
    discarded = values[h:]
    return SpectralTarget(
        z=z,
        kept_eigenvalues=kept.copy(),
        discarded_energy=float((discarded**2).sum()),
    )


def similarity_of_embeddings(e, metric=DistanceMetric(), bandwidth="median"):
    """Convenience: distances -> similarity for one embedding matrix."""
    return similarity_from_distance(pairwise_distance(e, metric), bandwidth)
