"""Correlation metrics for quality prediction: SRCC and logistic-mapped PLCC."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateInputError, FitError, InputError


def average_ranks(x):
    """1-based ranks; tied values share the mean of their rank positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc**2).sum() * (yc**2).sum())
    if denom == 0.0:
        raise DegenerateInputError("correlation undefined for constant input")
    return float((xc * yc).sum() / denom)


def srcc(x, y):
    """Spearman rank-order correlation with average-rank tie handling."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError("x and y must be 1-D sequences of equal length")
    if x.size < 3:
        raise InputError("need at least 3 points")
    return pearson(average_ranks(x), average_ranks(y))


@dataclass(frozen=True)
class LogisticFit:
    """Four-parameter logistic map fitted from predictions to MOS."""

    beta1: float  # upper asymptote
    beta2: float  # lower asymptote
    beta3: float  # inflection location
    beta4: float  # slope scale (used as |beta4|)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        scale = abs(self.beta4) if self.beta4 != 0 else 1e-12
        with np.errstate(over="ignore"):  # exp overflow saturates to 0
            return self.beta2 + (self.beta1 - self.beta2) / (
                1.0 + np.exp(-(x - self.beta3) / scale)
            )


MAX_SIMPLEX_ITERS = 2000
MAX_RESTARTS = 8


def plcc_with_logistic(pred, mos):
    """Pearson correlation before and after a 4-parameter logistic mapping.

    The map beta2 + (beta1-beta2) / (1 + exp(-(x-beta3)/|beta4|)) is
    fitted to (pred, mos) by Nelder-Mead simplex from a data-driven
    start. Returns (plcc_raw, plcc_mapped, fit).
    """
    pred = np.asarray(pred, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    if pred.shape != mos.shape or pred.ndim != 1:
        raise InputError("pred and mos must be 1-D sequences of equal length")
    if pred.size < 5:
        raise InputError("need at least 5 points for the logistic fit")
    if np.ptp(mos) == 0.0:
        raise DegenerateInputError("mos is constant")
    plcc_raw = pearson(pred, mos)

    spread = float(pred.std())
    x0 = np.array([
        float(mos.max()),
        float(mos.min()),
        float(np.median(pred)),
        spread if spread > 0 else 1.0,
    ])

    def sse(b):
        with np.errstate(over="ignore"):
            mapped = LogisticFit(*b)(pred)
        return float(((mapped - mos) ** 2).sum())

    # The simplex is restarted from its best point when the iteration cap
    # is hit: on data where an asymptote diverges (e.g. exponential tails)
    # the parameters never settle even though the objective value does, so
    # convergence is judged on the objective across restarts.
    x = x0
    best = np.inf
    converged = False
    for _restart in range(MAX_RESTARTS):
        res = minimize(
            sse, x, method="Nelder-Mead",
            options={"maxiter": MAX_SIMPLEX_ITERS, "xatol": 1e-8,
                     "fatol": 1e-10},
        )
        x = res.x
        if res.success or best - res.fun <= 1e-9 * max(1.0, abs(best)):
            converged = True
            break
        best = res.fun
    fit = LogisticFit(*x)
    if not converged:
        raise FitError(
            f"logistic fit did not converge within {MAX_RESTARTS} runs of "
            f"{MAX_SIMPLEX_ITERS} simplex iterations",
            params=fit,
        )
    plcc_mapped = pearson(fit(pred), mos)
    return plcc_raw, plcc_mapped, fit
