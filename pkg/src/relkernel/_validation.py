"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def check_square_symmetric(mat, tol=1e-8, name="matrix"):
    """Return ``mat`` as a float64 array after checking it is square and symmetric.

    ``tol`` is an absolute bound on ``max |M - M^T|``.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise ValueError(f"{name} contains non-finite entries")
    asym = np.max(np.abs(mat - mat.T)) if mat.size else 0.0
    if asym > tol:
        raise ValueError(f"{name} is not symmetric (max asymmetry {asym:.3e} > {tol:.1e})")
    return (mat + mat.T) / 2.0


def check_labels(labels, n=None, name="labels"):
    """Return ``labels`` as a 1-D int64 array, optionally checking its length."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValueError(f"{name} must be integer-valued")
    arr = arr.astype(np.int64)
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def check_seed(seed):
    """Normalize a seed argument into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
