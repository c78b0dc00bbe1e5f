"""Out-of-sample extension of a learned kernel.

For new points x, y the learned kernel evaluates as

    k(x, y) = k0(x, y) + k_x^T ( K0^+ (K - K0) K0^+ ) k_y,

where ``k0`` is the initial kernel function, ``k_x`` collects the initial
kernel between x and the training items, and ``K0^+`` is the pseudo-inverse
of the (low-rank) initial kernel matrix.  Everything is cached and evaluated
in the transformed r-space, where the initial kernel is diagonal, so no n x n
intermediates appear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .kernels import FactoredKernel, cross_gaussian_kernel

__all__ = ["KernelExtension", "build_extension", "extended_kernel"]

_PINV_RTOL = 1e-10


@dataclass(frozen=True)
class KernelExtension:
    """Cached state for evaluating the learned kernel on unseen points.

    ``m_hat`` is the r-space correction matrix ``K0hat^-1 (Khat - K0hat)
    K0hat^-1``; together with the lifting matrix ``q`` it represents
    ``K0^+ (K - K0) K0^+`` without ever materializing it.
    """

    train_features: np.ndarray
    train_sigmas: np.ndarray
    n_neighbors: int
    q: np.ndarray
    m_hat: np.ndarray
    k0_pinv_diag: np.ndarray

    def bandwidths(self, x) -> np.ndarray:
        """Adaptive bandwidth for each new point: distance to its
        ``n_neighbors``-th nearest training point, ignoring exact coincidences
        (so a training point reproduces its own training bandwidth)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        dists = cdist(x, self.train_features)
        dists[dists == 0.0] = np.inf
        dists.sort(axis=1)
        k = self.n_neighbors
        if k > dists.shape[1]:
            raise ValueError(f"need at least {k} distinct training points")
        sig = dists[:, k - 1]
        if not np.all(np.isfinite(sig)) or not np.all(sig > 0):
            raise ValueError("could not assign a positive bandwidth to every point")
        return sig

    def initial_cross(self, x, sigmas_x) -> np.ndarray:
        """Initial-kernel columns ``k_x`` for each row of ``x``, shape
        (n_train, len(x))."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return cross_gaussian_kernel(self.train_features, self.train_sigmas, x, sigmas_x)

    def gram(self, x, y=None) -> np.ndarray:
        """Learned-kernel Gram block between two point sets (``y=x`` when
        omitted); symmetric in its arguments."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        sig_x = self.bandwidths(x)
        kx = self.initial_cross(x, sig_x)
        if y is None:
            y, sig_y, ky = x, sig_x, kx
        else:
            y = np.atleast_2d(np.asarray(y, dtype=np.float64))
            sig_y = self.bandwidths(y)
            ky = self.initial_cross(y, sig_y)
        base = cross_gaussian_kernel(x, sig_x, y, sig_y)
        left = self.q.T @ kx
        right = self.q.T @ ky
        out = base + left.T @ self.m_hat @ right
        if not np.isfinite(out).all():
            raise ValueError("kernel extension produced non-finite values")
        return out


def build_extension(fk: FactoredKernel, train_features, train_sigmas,
                    n_neighbors: int) -> KernelExtension:
    """Cache the correction matrix for out-of-sample evaluation of ``fk``.

    Eigenvalues of the initial kernel below ``1e-10`` of the largest are
    treated as zero in the pseudo-inverse.
    """
    feats = np.asarray(train_features, dtype=np.float64)
    sigmas = np.asarray(train_sigmas, dtype=np.float64)
    if feats.shape[0] != fk.n:
        raise ValueError(
            f"training features have {feats.shape[0]} rows, kernel lifts {fk.n}"
        )
    if sigmas.shape != (fk.n,):
        raise ValueError(f"expected {fk.n} bandwidths, got shape {sigmas.shape}")
    diag0 = fk.k0_hat_diag
    pinv = np.where(diag0 > _PINV_RTOL * diag0.max(), 1.0 / diag0, 0.0)
    delta = fk.khat - np.diag(diag0)
    m_hat = pinv[:, None] * delta * pinv[None, :]
    m_hat = (m_hat + m_hat.T) / 2.0
    return KernelExtension(
        train_features=feats,
        train_sigmas=sigmas,
        n_neighbors=int(n_neighbors),
        q=fk.q,
        m_hat=m_hat,
        k0_pinv_diag=pinv,
    )


def extended_kernel(ext: KernelExtension, x, y) -> float:
    """Learned-kernel value between two single points."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    y = np.asarray(y, dtype=np.float64).reshape(1, -1)
    return float(ext.gram(x, y)[0, 0])
