"""Alternating minimization for similarity-preserving patch selection.

Minimizes

    F(W, R) = ||E W - Z - R^T||_F^2 + alpha * sum_j ||W(j,:)||_2
                                    + beta  * sum_k ||R(:,k)||_2

by closed-form IRLS updates of W and per-column shrinkage updates of R,
then ranks patches by the l2 norm of their residual column (small norm =
similarity structure preserved = relevant).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InputError, ShapeError
from .linalg import as_matrix, solve_spd

EXACT_PROXIMAL = "exact-proximal"
LAGGED_FIXED_POINT = "lagged-fixed-point"


@dataclass(frozen=True)
class SelectorParams:
    """Hyper-parameters of the alternating solver."""

    alpha: float = 1.0
    beta: float = 1.0
    h: int = 8
    max_iters: int = 100
    rel_tol: float = 1e-6
    epsilon_floor: float = 1e-12
    r_update_mode: str = EXACT_PROXIMAL

    def __post_init__(self):
        for name in ("alpha", "beta", "rel_tol", "epsilon_floor"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be strictly positive")
        if self.h < 1:
            raise InputError("h must be >= 1")
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        if self.r_update_mode not in (EXACT_PROXIMAL, LAGGED_FIXED_POINT):
            raise InputError(f"unknown r_update_mode {self.r_update_mode!r}")


@dataclass
class SelectionState:
    """Solver output: factors plus the objective trace."""

    w: np.ndarray  # (d, h)
    r: np.ndarray  # (h, n)
    objective_history: list = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False


@dataclass(frozen=True)
class SelectionResult:
    """Ranked irrelevance scores and the kept index set."""

    scores: np.ndarray  # (n,)
    ranking: np.ndarray  # ascending by score, stable
    kept: np.ndarray  # first k of ranking, sorted view preserved
    k: int


def _check_shapes(e, w, r, z):
    n, d = e.shape
    if w.shape[0] != d:
        raise ShapeError(f"W has {w.shape[0]} rows, expected {d}")
    h = w.shape[1]
    if z.shape != (n, h):
        raise ShapeError(f"Z has shape {z.shape}, expected {(n, h)}")
    if r.shape != (h, n):
        raise ShapeError(f"R has shape {r.shape}, expected {(h, n)}")


def objective(e, w, r, z, alpha, beta):
    """Full non-smooth objective F(W, R)."""
    e, w, r, z = (as_matrix(m, n) for m, n in ((e, "E"), (w, "W"), (r, "R"), (z, "Z")))
    _check_shapes(e, w, r, z)
    fit = e @ w - z - r.T
    data = float((fit**2).sum())
    w_pen = float(np.linalg.norm(w, axis=1).sum())
    r_pen = float(np.linalg.norm(r, axis=0).sum())
    return data + alpha * w_pen + beta * r_pen


def update_w(e, r, z, w_prev, alpha, epsilon_floor=1e-12):
    """Closed-form IRLS step: (E^T E + alpha D) W = E^T (R^T + Z).

    D is diagonal with entries 1 / (2 ||W_prev(j,:)||_2 + eps); the eps
    floor keeps rows that have shrunk to zero from producing an infinite
    weight.
    """
    e, r, z, w_prev = (
        as_matrix(m, n) for m, n in ((e, "E"), (r, "R"), (z, "Z"), (w_prev, "W_prev"))
    )
    _check_shapes(e, w_prev, r, z)
    row_norms = np.linalg.norm(w_prev, axis=1)
    d_w = 1.0 / (2.0 * row_norms + epsilon_floor)
    lhs = e.T @ e + alpha * np.diag(d_w)
    rhs = e.T @ (r.T + z)
    return solve_spd(lhs, rhs)


def update_r(e, w, z, r_prev, beta, mode=EXACT_PROXIMAL, epsilon_floor=1e-12):
    """Residual update over the columns of C = (E W - Z)^T.

    exact-proximal: block soft threshold, the exact minimizer of
    ||c - r||^2 + beta ||r||_2 per column (threshold beta / 2).
    lagged-fixed-point: the literal fixed-point form with shrink factor
    ||r_prev|| / (||r_prev|| + beta), safeguarded by the eps floor.
    """
    e, w, z, r_prev = (
        as_matrix(m, n) for m, n in ((e, "E"), (w, "W"), (z, "Z"), (r_prev, "R_prev"))
    )
    _check_shapes(e, w, r_prev, z)
    c = (e @ w - z).T  # (h, n)
    if mode == EXACT_PROXIMAL:
        norms = np.linalg.norm(c, axis=0)
        shrink = np.zeros_like(norms)
        nz = norms > 0
        shrink[nz] = np.maximum(0.0, 1.0 - beta / (2.0 * norms[nz]))
    elif mode == LAGGED_FIXED_POINT:
        prev = np.linalg.norm(r_prev, axis=0) + epsilon_floor
        shrink = prev / (prev + beta)
    else:
        raise InputError(f"unknown r_update_mode {mode!r}")
    return c * shrink[None, :]


def fit(e, params, target):
    """Run Algorithm: alternate W and R updates until the objective settles.

    ``target`` is a :class:`~patchsel360.similarity.SpectralTarget` (or a
    plain (n, h) array). R starts at zero; W starts from one IRLS pass
    with all weights 1/2, i.e. a ridge solve with alpha/2.
    """
    e = as_matrix(e, "E")
    z = target.z if hasattr(target, "z") else as_matrix(target, "Z")
    n, d = e.shape
    if z.shape[0] != n:
        raise ShapeError(f"Z has {z.shape[0]} rows, expected {n}")
    h = z.shape[1]
    if h != params.h:
        raise ShapeError(f"Z has {h} columns but params.h = {params.h}")
    if h > d:
        raise ShapeError(f"h = {h} exceeds embedding dimension d = {d}")
    if h > d / 2:
        warnings.warn(f"h = {h} is large relative to d = {d}; expected h << d")

    r = np.zeros((h, n))
    # Deterministic ridge start: IRLS weights 1/(2*1).
    lhs = e.T @ e + (params.alpha / 2.0) * np.eye(d)
    w = solve_spd(lhs, e.T @ (r.T + z))

    history = [objective(e, w, r, z, params.alpha, params.beta)]
    converged = False
    iterations = 0
    for it in range(1, params.max_iters + 1):
        w = update_w(e, r, z, w, params.alpha, params.epsilon_floor)
        r = update_r(e, w, z, r, params.beta, params.r_update_mode,
                     params.epsilon_floor)
        f = objective(e, w, r, z, params.alpha, params.beta)
        if not np.isfinite(f):
            raise DivergenceError(
                f"objective became non-finite at iteration {it}", step=it
            )
        history.append(f)
        iterations = it
        prev = history[-2]
        if abs(prev - f) < params.rel_tol * max(abs(prev), 1e-300):
            converged = True
            break

    return SelectionState(
        w=w,
        r=r,
        objective_history=history,
        iterations_run=iterations,
        converged=converged,
    )


def irrelevance_scores(state):
    """Per-patch score: l2 norm of the matching residual column."""
    return np.linalg.norm(state.r, axis=0)


def select_top_k(scores, k):
    """Keep the k patches with the smallest irrelevance scores.

    Ties break toward the smaller original index; k is clamped to the
    number of patches with a warning.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise InputError("scores must be a non-empty 1-D sequence")
    if k < 1:
        raise InputError("k must be >= 1")
    n = scores.size
    if k > n:
        warnings.warn(f"k = {k} exceeds n = {n}; clamping")
        k = n
    ranking = np.argsort(scores, kind="stable")
    return SelectionResult(
        scores=scores.copy(),
        ranking=ranking,
        kept=ranking[:k].copy(),
        k=k,
    )
