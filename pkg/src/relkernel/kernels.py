"""Initial Gaussian kernel with adaptive bandwidths and its low-rank factorization.

The learner operates in a reduced r-dimensional space: the initial kernel
``K0`` is eigendecomposed, the top-r eigenpairs (chosen by a Frobenius energy
threshold) give a column-orthogonal lifting matrix ``Q``, and everything is
carried through ``M -> Q^T M Q``.  The learned kernel lifts back as
``K = Q Khat Q^T``.  Keeping ``Khat`` full-rank in r dimensions is what makes
the log-det divergence finite throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import check_square_symmetric

__all__ = [
    "FactoredKernel",
    "adaptive_bandwidths",
    "gaussian_kernel",
    "cross_gaussian_kernel",
    "low_rank_factorize",
    "lift_kernel",
]


@dataclass(frozen=True)
class FactoredKernel:
    """A rank-r kernel held as ``Khat = G G^T`` in the transformed space.

    Attributes
    ----------
    g : ndarray of shape (r, r)
        Factor of the current kernel, ``khat = g @ g.T``.
    q : ndarray of shape (n, r)
        Column-orthogonal lifting matrix.
    k0_hat_diag : ndarray of shape (r,)
        Diagonal of the transformed initial kernel ``Q^T K0 Q`` (its
        eigenvalues), kept for divergence evaluation.
    khat : ndarray of shape (r, r)
        Dense current kernel in the transformed space (always ``g @ g.T``).
    n_clipped : int
        Number of small negative eigenvalues clipped to zero during
        factorization.
    """

    g: np.ndarray
    q: np.ndarray
    k0_hat_diag: np.ndarray
    khat: np.ndarray
    n_clipped: int = 0

    @property
    def r(self) -> int:
        return self.g.shape[0]

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def with_factor(self, g_new: np.ndarray) -> "FactoredKernel":
        """Return a copy holding the new factor (dense cache refreshed)."""
        khat = g_new @ g_new.T
        return FactoredKernel(g_new, self.q, self.k0_hat_diag, (khat + khat.T) / 2.0,
                              self.n_clipped)

    def check_valid(self, tol_orth=1e-10, tol_psd=1e-9) -> None:
        """Assert the structural invariants (orthogonal Q, PSD full-rank Khat)."""
        r = self.r
        orth_err = np.max(np.abs(self.q.T @ self.q - np.eye(r)))
        if orth_err > tol_orth:
            raise ValueError(f"Q lost column orthogonality (error {orth_err:.3e})")
        w = np.linalg.eigvalsh((self.khat + self.khat.T) / 2.0)
        scale = max(w.max(), 0.0)
        if w.min() < -tol_psd * max(scale, 1e-30):
            raise ValueError(f"transformed kernel is not PSD (min eigenvalue {w.min():.3e})")
        if np.sum(w > tol_psd * max(scale, 1e-30)) < r:
            raise ValueError("transformed kernel lost rank")


def adaptive_bandwidths(features, k: int = 7) -> np.ndarray:
    """Per-item bandwidths: distance from each item to its k-th nearest other
    item, giving large bandwidths in sparse regions and small ones in dense
    regions."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"neighbor count k={k} must satisfy 1 <= k < n={n}")
    if not np.isfinite(x).all():
        raise ValueError("features contain non-finite values")
    dists = cdist(x, x)
    np.fill_diagonal(dists, np.inf)
    dists.sort(axis=1)
    sigmas = dists[:, k - 1]
    zero = np.flatnonzero(sigmas <= 0.0)
    if zero.size:
        raise ValueError(
            f"zero bandwidth for item(s) {zero.tolist()}: duplicates exhaust the "
            f"{k} nearest neighbors"
        )
    return sigmas


def gaussian_kernel(features, sigmas) -> np.ndarray:
    """Initial kernel ``K0[i, j] = exp(-||x_i - x_j||^2 / (sigma_i sigma_j))``.

    The geometric-mean bandwidth product keeps the matrix symmetric; the
    diagonal is exactly 1.
    """
    x = np.asarray(features, dtype=np.float64)
    s = np.asarray(sigmas, dtype=np.float64)
    if s.shape != (x.shape[0],):
        raise ValueError(f"expected {x.shape[0]} bandwidths, got shape {s.shape}")
    if not np.all(s > 0) or not np.isfinite(s).all():
        raise ValueError("bandwidths must be positive and finite")
    sq = cdist(x, x, "sqeuclidean")
    k0 = np.exp(-sq / np.outer(s, s))
    np.fill_diagonal(k0, 1.0)
    if not np.isfinite(k0).all():
        raise ValueError("kernel evaluation produced non-finite entries")
    return (k0 + k0.T) / 2.0


def cross_gaussian_kernel(x, sigmas_x, y, sigmas_y) -> np.ndarray:
    """Gaussian kernel block between two point sets with their own bandwidths."""
    sq = cdist(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64),
               "sqeuclidean")
    out = np.exp(-sq / np.outer(sigmas_x, sigmas_y))
    out[sq == 0.0] = 1.0
    return out


def low_rank_factorize(k0, energy: float = 0.9, neg_tol: float = 1e-2) -> FactoredKernel:
    """Factorize a near-PSD kernel, keeping the smallest rank whose Frobenius
    energy ratio reaches ``energy``.

    ``r`` is the smallest rank with ``sqrt(sum_{i<=r} w_i^2) / sqrt(sum w_i^2)
    >= energy`` over the (descending) eigenvalues ``w``.  Adaptive-bandwidth
    Gaussian kernels are mildly indefinite (negative eigenvalues around 1e-3
    of the largest on typical data); eigenvalues in ``[-neg_tol * ||K0||_2,
    0)`` are clipped to zero and counted, anything more negative raises.
    Eigenvector signs follow a deterministic convention (largest-magnitude
    entry positive) for reproducibility.
    """
    if not 0.0 < energy <= 1.0:
        raise ValueError(f"energy must lie in (0, 1], got {energy}")
    k0 = check_square_symmetric(k0, tol=1e-10, name="initial kernel")
    w, vecs = np.linalg.eigh(k0)
    w, vecs = w[::-1].copy(), vecs[:, ::-1].copy()
    top = float(w[0]) if w.size else 0.0
    if top <= 0.0:
        raise ValueError("initial kernel has no positive eigenvalue")
    if w[-1] < -neg_tol * top:
        raise ValueError(
            f"initial kernel is too indefinite (eigenvalue {w[-1]:.3e} "
            f"< {-neg_tol * top:.3e})"
        )
    negative = w < 0.0
    n_clipped = int(np.count_nonzero(negative))
    w[negative] = 0.0

    total = float(np.sqrt(np.sum(w**2)))
    ratios = np.sqrt(np.cumsum(w**2)) / total
    candidates = np.flatnonzero(ratios >= energy - 1e-12)
    r = int(candidates[0]) + 1 if candidates.size else w.size
    # never include numerically-zero eigenvalues: Khat must stay full rank
    n_pos = int(np.count_nonzero(w > 1e-12 * top))
    r = min(r, n_pos)

    q = vecs[:, :r]
    anchor = np.argmax(np.abs(q), axis=0)
    flip = q[anchor, np.arange(r)] < 0
    q[:, flip] *= -1.0

    diag = w[:r].copy()
    g = np.diag(np.sqrt(diag))
    return FactoredKernel(g=g, q=q, k0_hat_diag=diag, khat=np.diag(diag),
                          n_clipped=n_clipped)


def lift_kernel(fk: FactoredKernel) -> np.ndarray:
    """Lift the transformed kernel back to the full space, ``K = Q Khat Q^T``."""
    k = fk.q @ fk.khat @ fk.q.T
    return (k + k.T) / 2.0
