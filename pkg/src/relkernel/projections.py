"""Bregman projections onto single rank-2 constraints under the log-det divergence.

One projection replaces the current kernel ``K`` by ``(K^-1 + alpha C)^-1``
for a multiplier ``alpha`` chosen so the constraint lands on its boundary
(hard mode) or balances a quadratic slack penalty (soft mode).  Because ``C``
has rank 2, everything reduces to the two nonzero eigenvalues of ``K C``:
the dual objective is ``log((1 + a*eta1)(1 + a*eta2))``, maximized in closed
form, and the kernel update is a Woodbury identity applied to the factor
``G`` through the Cholesky decomposition of an identity-plus-rank-2 matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constraints import Rank2Constraint, SENSE_EQ, SENSE_LEQ
from .kernels import FactoredKernel

__all__ = [
    "EigenPair",
    "rank2_eigenvalues",
    "alpha_hard",
    "alpha_soft",
    "alpha_soft_step",
    "chol_identity_rank2",
    "project",
    "logdet_divergence",
]


@dataclass(frozen=True)
class EigenPair:
    """The two (at most) nonzero eigenvalues of ``K C``, with eta2 <= 0 <= eta1."""

    eta1: float
    eta2: float

    @property
    def trace(self) -> float:
        return self.eta1 + self.eta2

    @property
    def product(self) -> float:
        return self.eta1 * self.eta2


def rank2_eigenvalues(fk: FactoredKernel, rc: Rank2Constraint) -> EigenPair:
    """Eigenvalues of ``K C`` via the similar 2x2 matrix ``V^T K U``.

    For a PSD kernel and a symmetric indefinite rank-2 ``C`` the pair
    satisfies ``eta2 <= 0 <= eta1``; a violation beyond tolerance signals a
    malformed constraint or a non-PSD kernel.
    """
    b = rc.v.T @ (fk.khat @ rc.u)
    return _eigenpair_from_2x2(b[0, 0] + b[1, 1], b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0])


def _eigenpair_from_2x2(trace: float, det: float) -> EigenPair:
    disc = 0.25 * trace * trace - det
    scale = max(trace * trace, abs(det), 1e-300)
    if disc < 0.0:
        if disc < -1e-12 * scale:
            raise ValueError(
                f"complex eigenvalue pair (discriminant {disc:.3e}); "
                "constraint factors are inconsistent"
            )
        disc = 0.0
    s = math.sqrt(disc)
    # root of larger magnitude first, partner from the product (no cancellation)
    if trace >= 0.0:
        big = 0.5 * trace + s
    else:
        big = 0.5 * trace - s
    small = det / big if big != 0.0 else 0.0
    eta1, eta2 = max(big, small), min(big, small)
    tol = 1e-9 * max(abs(eta1), abs(eta2))
    if eta2 > tol or eta1 < -tol:
        raise ValueError(
            f"eigenvalue sign pattern violated (eta1={eta1:.6e}, eta2={eta2:.6e}): "
            "kernel is not PSD or constraint is malformed"
        )
    return EigenPair(eta1=max(eta1, 0.0), eta2=min(eta2, 0.0))


def _check_active(ep: EigenPair) -> None:
    if ep.product == 0.0 or abs(ep.product) < 1e-15 * (abs(ep.eta1) + abs(ep.eta2)) ** 2:
        raise ValueError(
            f"inactive constraint (eta1={ep.eta1:.3e}, eta2={ep.eta2:.3e}); caller should skip"
        )


def alpha_hard(ep: EigenPair, sense: str = SENSE_LEQ) -> float:
    """Exact multiplier putting the constraint on its boundary.

    ``alpha* = -(eta1 + eta2) / (2 eta1 eta2)``.  For an inequality this is
    >= 0 exactly when the constraint is violated (positive trace); for an
    equality the same formula applies with unrestricted sign.
    """
    if sense not in (SENSE_LEQ, SENSE_EQ):
        raise ValueError(f"unknown sense {sense!r}")
    _check_active(ep)
    return float(-ep.trace / (2.0 * ep.product))


def _soft_stationarity(alpha, eta1, eta2, lam, offset=0.0):
    return (eta1 / (1.0 + alpha * eta1) + eta2 / (1.0 + alpha * eta2)
            - (offset + alpha) / lam)


def _soft_objective(alpha, eta1, eta2, lam, offset=0.0):
    total = offset + alpha
    return (math.log1p(alpha * eta1) + math.log1p(alpha * eta2)
            - 0.5 * total * total / lam)


def _cubic_real_roots(a, b, c, d):
    """All real roots of ``a x^3 + b x^2 + c x + d = 0`` (a != 0), closed form.

    Depressed-cubic reduction with the trigonometric branch for three real
    roots and Cardano's for one.
    """
    b, c, d = b / a, c / a, d / a
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = 0.25 * q * q + p**3 / 27.0
    if disc > 0.0:
        sq = math.sqrt(disc)
        t = math.copysign(abs(-0.5 * q + sq) ** (1.0 / 3.0), -0.5 * q + sq)
        u = math.copysign(abs(-0.5 * q - sq) ** (1.0 / 3.0), -0.5 * q - sq)
        return [t + u - shift]
    if p == 0.0:
        # depressed cubic collapses to y^3 = -q
        return [-math.copysign(abs(q) ** (1.0 / 3.0), q) - shift]
    m = 2.0 * math.sqrt(-p / 3.0)
    arg = 3.0 * q / (p * m)
    arg = min(1.0, max(-1.0, arg))
    theta = math.acos(arg) / 3.0
    return [m * math.cos(theta - 2.0 * math.pi * i / 3.0) - shift for i in range(3)]


def alpha_soft(ep: EigenPair, lam: float, sense: str = SENSE_LEQ) -> float:
    """Soft-margin multiplier: the maximizer of
    ``log((1 + a*eta1)(1 + a*eta2)) - a^2 / (2 lam)``.

    The objective is strictly concave on the open interval where both
    ``1 + a*eta_i`` stay positive, so the stationary point there is unique.
    Clearing denominators in the stationarity condition

        eta1/(1 + a*eta1) + eta2/(1 + a*eta2) - a/lam = 0

    gives the cubic ``e1 e2 a^3 + (e1 + e2) a^2 + (1 - 2 lam e1 e2) a
    - lam (e1 + e2) = 0``, solved in closed form and polished with Newton
    steps on the stationarity residual.  As ``lam -> inf`` the result
    approaches the hard multiplier.  For an inequality the result is clamped
    at zero when the constraint already holds (KKT).
    """
    return alpha_soft_step(ep, lam, 0.0, sense)


def alpha_soft_step(ep: EigenPair, lam: float, current: float,
                    sense: str = SENSE_LEQ) -> float:
    """Dual coordinate-ascent step for a constraint carrying cumulative
    multiplier ``current``.

    Returns the increment ``d`` maximizing ``log((1 + d*eta1)(1 + d*eta2)) -
    (current + d)^2 / (2 lam)``, i.e. the slack penalty acts on the total
    multiplier.  For an inequality the step is clamped so the total stays
    non-negative (dual feasibility).  ``current=0`` reduces to the
    one-shot soft multiplier.
    """
    if sense not in (SENSE_LEQ, SENSE_EQ):
        raise ValueError(f"unknown sense {sense!r}")
    if not lam > 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    if current < 0.0 and sense == SENSE_LEQ:
        raise ValueError(f"cumulative inequality multiplier must be >= 0, got {current}")
    _check_active(ep)
    e1, e2, t, p = ep.eta1, ep.eta2, ep.trace, ep.product

    # residual at delta=0 decides the root's side; the residual is strictly
    # decreasing on the open domain (log arguments positive) and blows up
    # toward +/- infinity at the boundaries; _check_active gives e2 < 0 < e1
    at_zero = t - current / lam
    if at_zero == 0.0:
        return 0.0
    if at_zero > 0.0:
        lo, hi = 0.0, -1.0 / e2
    else:
        lo, hi = -1.0 / e1, 0.0

    roots = _cubic_real_roots(
        p,
        t + current * p,
        1.0 + current * t - 2.0 * lam * p,
        current - lam * t,
    )
    feasible = [r for r in roots if lo < r < hi]
    delta = feasible[0] if len(feasible) == 1 else None
    if delta is None and feasible:
        delta = min(feasible,
                    key=lambda r: abs(_soft_stationarity(r, e1, e2, lam, current)))
    if delta is None:
        delta = _bisect_soft(lo, hi, e1, e2, lam, current)

    delta = _newton_polish(delta, lo, hi, e1, e2, lam, current)
    if 1.0 + delta * e1 <= 0.0 or 1.0 + delta * e2 <= 0.0:
        raise AssertionError("soft projection left the log-det domain")
    if sense == SENSE_LEQ and current + delta < 0.0:
        # dual feasibility: never drive the total multiplier negative
        delta = -current
    return float(delta)


def _bisect_soft(lo, hi, e1, e2, lam, offset=0.0):
    # residual is monotone decreasing on (lo, hi), positive at lo, negative
    # at hi; pull endpoints strictly inside the domain before bisecting
    a = 0.0 if lo == 0.0 else lo * (1.0 - 1e-14)
    b = 0.0 if hi == 0.0 else hi * (1.0 - 1e-14)
    span = b - a
    for _ in range(200):
        mid = 0.5 * (a + b)
        if _soft_stationarity(mid, e1, e2, lam, offset) > 0.0:
            a = mid
        else:
            b = mid
        if b - a <= 1e-16 * max(span, 1.0):
            break
    return 0.5 * (a + b)


def _newton_polish(alpha, lo, hi, e1, e2, lam, offset=0.0, steps=2):
    for _ in range(steps):
        f = _soft_stationarity(alpha, e1, e2, lam, offset)
        fp = (-(e1 / (1.0 + alpha * e1)) ** 2 - (e2 / (1.0 + alpha * e2)) ** 2
              - 1.0 / lam)
        step = f / fp
        cand = alpha - step
        if not lo < cand < hi:
            return _bisect_soft(lo, hi, e1, e2, lam, offset)
        alpha = cand
        if abs(step) <= 1e-15 * max(1.0, abs(alpha)):
            break
    return alpha


def _chol_rank2_coeffs(lam1, u, v, lam2, w, z):
    """Coefficient-tracked Cholesky recursion for ``I + lam1 u v^T + lam2 w z^T``.

    Returns ``(sqrt_tau, pcoef, qcoef)`` describing the lower factor

        W = diag(sqrt_tau) + strict_lower(u pcoef^T + w qcoef^T).

    At each level the recursion rescales the multipliers by the pivot and
    replaces the trailing (v, z) pair by a linear combination of itself, so
    only four combination coefficients are tracked instead of rewriting the
    vectors.
    """
    m = u.shape[0]
    sqrt_tau = np.empty(m)
    pcoef = np.empty(m)
    qcoef = np.empty(m)
    a, b, c, d = 1.0, 0.0, 0.0, 1.0  # v_cur = a v + b z ; z_cur = c v + d z
    l1, l2 = float(lam1), float(lam2)
    for idx in range(m):
        u1, w1 = u[idx], w[idx]
        v1 = a * v[idx] + b * z[idx]
        z1 = c * v[idx] + d * z[idx]
        tau = 1.0 + l1 * u1 * v1 + l2 * w1 * z1
        if tau <= 0.0:
            raise np.linalg.LinAlgError(
                f"matrix is not positive definite (pivot {tau:.3e} at level {idx})"
            )
        st = math.sqrt(tau)
        sqrt_tau[idx] = st
        pcoef[idx] = l1 * v1 / st
        qcoef[idx] = l2 * z1 / st
        e = 1.0 + l2 * w1 * z1
        f = -l2 * w1 * v1
        g = -l1 * u1 * z1
        h = 1.0 + l1 * u1 * v1
        a, b, c, d = e * a + f * c, e * b + f * d, g * a + h * c, g * b + h * d
        l1 /= tau
        l2 /= tau
    return sqrt_tau, pcoef, qcoef


def chol_identity_rank2(lam1, u, v, lam2, w, z) -> np.ndarray:
    """Lower-triangular ``W`` with ``W W^T = I + lam1 u v^T + lam2 w z^T``.

    The matrix must be symmetric (``max |A - A^T| <= 1e-10``) and positive
    definite.  The recursion runs in O(m) arithmetic per level; materializing
    the factor is O(m^2).
    """
    u, v, w, z = (np.ascontiguousarray(np.asarray(x, dtype=np.float64).ravel())
                  for x in (u, v, w, z))
    m = u.shape[0]
    if any(vec.shape[0] != m for vec in (v, w, z)):
        raise ValueError("all four vectors must share one length")
    asym = (lam1 * (np.outer(u, v) - np.outer(v, u))
            + lam2 * (np.outer(w, z) - np.outer(z, w)))
    if m and np.max(np.abs(asym)) > 1e-10:
        raise ValueError("identity-plus-rank-2 matrix is not symmetric")
    sqrt_tau, pcoef, qcoef = _chol_rank2_coeffs(lam1, u, v, lam2, w, z)
    out = np.tril(np.outer(u, pcoef) + np.outer(w, qcoef), -1)
    np.fill_diagonal(out, sqrt_tau)
    return out


def _mul_structured(g, sqrt_tau, u, w, pcoef, qcoef):
    """Product ``g @ W`` for ``W = diag(sqrt_tau) + strict_lower(u p^T + w q^T)``.

    Column k of the product is ``sqrt_tau_k g[:, k] + p_k sum_{j>k} g[:, j]
    u_j + q_k sum_{j>k} g[:, j] w_j``; the suffix sums make this O(n r).
    """
    gu = g * u[None, :]
    gw = g * w[None, :]
    suf_u = np.cumsum(gu[:, ::-1], axis=1)[:, ::-1]
    suf_w = np.cumsum(gw[:, ::-1], axis=1)[:, ::-1]
    out = g * sqrt_tau[None, :]
    out[:, :-1] += suf_u[:, 1:] * pcoef[None, :-1] + suf_w[:, 1:] * qcoef[None, :-1]
    return out


def project(fk: FactoredKernel, rc: Rank2Constraint, alpha: float) -> FactoredKernel:
    """Apply one Bregman projection, returning the kernel ``(K^-1 + alpha C)^-1``.

    Implemented on the factor: ``G <- G W`` where ``W W^T`` is the Cholesky
    factorization of ``I - alpha (G^T U) (I_2 + alpha V^T K U)^-1 (V^T G)``,
    an identity-plus-rank-2 matrix.
    """
    if alpha == 0.0:
        return fk
    g = fk.g
    p = g.T @ rc.u     # r x 2
    rmat = g.T @ rc.v  # r x 2
    bmat = rmat.T @ p  # V^T K U
    mid = np.eye(2) + alpha * bmat
    det = mid[0, 0] * mid[1, 1] - mid[0, 1] * mid[1, 0]
    # domain of the update: both 1 + alpha*eta_i must stay positive
    if det <= 0.0 or mid[0, 0] + mid[1, 1] <= 0.0:
        raise ValueError(
            f"projection step alpha={alpha:.6e} leaves the log-det domain"
        )
    inv_mid = np.array([[mid[1, 1], -mid[0, 1]], [-mid[1, 0], mid[0, 0]]]) / det
    mcoef = -alpha * inv_mid
    uvec = np.ascontiguousarray(p[:, 0])
    wvec = np.ascontiguousarray(p[:, 1])
    vvec = mcoef[0, 0] * rmat[:, 0] + mcoef[0, 1] * rmat[:, 1]
    zvec = mcoef[1, 0] * rmat[:, 0] + mcoef[1, 1] * rmat[:, 1]
    sqrt_tau, pcoef, qcoef = _chol_rank2_coeffs(1.0, uvec, vvec, 1.0, wvec, zvec)
    return fk.with_factor(_mul_structured(g, sqrt_tau, uvec, wvec, pcoef, qcoef))


def logdet_divergence(fk: FactoredKernel) -> float:
    """Log-det divergence ``tr(K K0^-1) - log det(K K0^-1) - r`` between the
    current and initial kernels in the transformed space, where the initial
    kernel is diagonal.  Always >= 0; infinite/invalid if either loses rank.
    """
    diag0 = fk.k0_hat_diag
    if np.any(diag0 <= 0.0):
        raise np.linalg.LinAlgError("initial kernel diagonal is not positive definite")
    tr_term = float(np.sum(np.diag(fk.khat) / diag0))
    sign, logdet = np.linalg.slogdet(fk.khat)
    if sign <= 0.0:
        raise np.linalg.LinAlgError("current kernel is not positive definite")
    return tr_term - (logdet - float(np.sum(np.log(diag0)))) - fk.r
