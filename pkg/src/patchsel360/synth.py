"""Synthetic embedding benchmark with planted outlier rows.

Clean rows share a low-rank latent structure plus small isotropic noise;
outlier rows are large isotropic noise that breaks the similarity
structure. The generator records the planted outlier indices, so tests
and the acceptance gate can check recovery against ground truth.
"""

import numpy as np

from .errors import InputError
from .rng import substream

LATENT_RANK = 3
LATENT_SHIFT = 4.0
CLEAN_NOISE = 0.05
OUTLIER_SCALE = 1.0


def generate(n, d, n_outliers, seed):
    """Return (embeddings (n, d), outlier_indices sorted ascending)."""
    if n < 2 or d < 1:
        raise InputError("need n >= 2 and d >= 1")
    if not 0 <= n_outliers < n:
        raise InputError("n_outliers must satisfy 0 <= n_outliers < n")
    rng = substream(seed, "synth")

    n_clean = n - n_outliers
    latent = rng.standard_normal((n_clean, LATENT_RANK))
    latent[:, 0] += LATENT_SHIFT  # shared offset keeps clean rows one-sided
    basis = rng.standard_normal((LATENT_RANK, d))
    clean = latent @ basis + CLEAN_NOISE * rng.standard_normal((n_clean, d))
    outliers = OUTLIER_SCALE * rng.standard_normal((n_outliers, d))

    positions = rng.permutation(n)
    e = np.empty((n, d))
    outlier_idx = np.sort(positions[:n_outliers])
    clean_idx = np.sort(positions[n_outliers:])
    e[outlier_idx] = outliers
    e[clean_idx] = clean
    return e, outlier_idx
