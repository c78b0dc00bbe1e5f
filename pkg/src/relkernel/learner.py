"""Constraint-sweep orchestration: hard and soft-margin kernel learning.

Hard mode repeats seeded random sweeps over the expanded constraints,
projecting every currently-unsatisfied one onto its boundary, until an epoch
ends with all constraints satisfied.  Soft mode visits every constraint each
epoch with the slack-penalized multiplier and stops once the per-constraint
multipliers stabilize, which also terminates gracefully on inconsistent
constraint sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .constraints import (
    SENSE_EQ,
    SENSE_LEQ,
    TripletConstraint,
    expand_triplets,
    satisfy_epsilon,
    transform_rank2,
)
from .extension import KernelExtension, build_extension
from .kernels import (
    FactoredKernel,
    adaptive_bandwidths,
    gaussian_kernel,
    lift_kernel,
    low_rank_factorize,
)
from .projections import (
    alpha_hard,
    alpha_soft_step,
    logdet_divergence,
    project,
    rank2_eigenvalues,
)

__all__ = [
    "LearnerConfig",
    "LearnReport",
    "learn",
    "satisfied_count",
    "RelativeKernelLearner",
]

_INACTIVE_RTOL = 1e-12


@dataclass
class LearnerConfig:
    """Knobs for one learning run.

    ``gamma2`` is the squared outlier margin (> 1).  ``lambda_neq`` and
    ``lambda_eq`` weight the quadratic slack penalties in soft mode; large
    values approach the hard behaviour.  ``satisfy_tolerance`` is the relative
    factor of the scale-aware satisfaction threshold.  ``alpha_stabilize_tol``
    ends a soft run once no multiplier moved by more than
    ``tol * (1 + |previous|)``.
    """

    gamma2: float = 2.0
    mode: str = "hard"
    lambda_neq: float = 1e5
    lambda_eq: float = 1e5
    satisfy_tolerance: float = 1e-6
    max_epochs: int = 200
    alpha_stabilize_tol: float = 1e-4
    seed: int | None = 0
    energy: float = 0.9

    def __post_init__(self):
        if self.mode not in ("hard", "soft"):
            raise ValueError(f"mode must be 'hard' or 'soft', got {self.mode!r}")
        if not self.gamma2 > 1.0:
            raise ValueError(f"gamma2 must exceed 1, got {self.gamma2}")
        if self.lambda_neq <= 0 or self.lambda_eq <= 0:
            raise ValueError("slack penalties must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")

    def to_dict(self) -> dict:
        return {
            "gamma2": self.gamma2,
            "mode": self.mode,
            "lambda_neq": self.lambda_neq,
            "lambda_eq": self.lambda_eq,
            "satisfy_tolerance": self.satisfy_tolerance,
            "max_epochs": self.max_epochs,
            "alpha_stabilize_tol": self.alpha_stabilize_tol,
            "seed": self.seed,
            "energy": self.energy,
        }


@dataclass
class LearnReport:
    """Outcome of a learning run; immutable once returned."""

    epochs: int
    converged: bool
    final_max_violation: float
    final_divergence: float
    violation_trace: list = field(default_factory=list)
    n_triplets: int = 0
    n_constraints: int = 0
    alphas: list | None = None
    config: dict = field(default_factory=dict)
    warning: str | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "learn-report",
            "epochs": self.epochs,
            "converged": self.converged,
            "final_max_violation": self.final_max_violation,
            "final_divergence": self.final_divergence,
            "violation_trace": [float(v) for v in self.violation_trace],
            "n_triplets": self.n_triplets,
            "n_constraints": self.n_constraints,
            "alphas": None if self.alphas is None else [float(a) for a in self.alphas],
            "config": self.config,
            "warning": self.warning,
        }


def _violations(khat, u_all, v_all):
    per_col = np.einsum("ij,ij->j", v_all, khat @ u_all)
    return per_col[0::2] + per_col[1::2]


def _excess(violations, is_eq):
    return np.where(is_eq, np.abs(violations), violations)


def satisfied_count(fk: FactoredKernel, constraints, eps: float):
    """Count satisfied constraints and the largest positive excess.

    Inequalities are satisfied when ``tr(K C) <= eps``, equalities when
    ``|tr(K C)| <= eps``.
    """
    if not constraints:
        return 0, 0.0
    u_all = np.concatenate([rc.u for rc in constraints], axis=1)
    v_all = np.concatenate([rc.v for rc in constraints], axis=1)
    is_eq = np.array([rc.sense == SENSE_EQ for rc in constraints])
    excess = _excess(_violations(fk.khat, u_all, v_all), is_eq)
    satisfied = int(np.count_nonzero(excess <= eps))
    return satisfied, float(max(0.0, excess.max()))


def _is_inactive(ep, scale):
    return abs(ep.eta1) <= _INACTIVE_RTOL * scale and abs(ep.eta2) <= _INACTIVE_RTOL * scale


def learn(fk0: FactoredKernel, triplets, cfg: LearnerConfig, check_invariants=False):
    """Run the constraint sweeps from ``fk0``; returns (kernel, report).

    An empty constraint list is a no-op.  ``check_invariants=True`` verifies
    PSD-ness and rank preservation after every epoch (test harness use).
    """
    triplets = [t if isinstance(t, TripletConstraint) else TripletConstraint(*t)
                for t in triplets]
    bad = [t for t in triplets if max(t.indices) >= fk0.n]
    if bad:
        raise ValueError(f"triplet {bad[0].indices} out of range for n={fk0.n}")

    if not triplets:
        report = LearnReport(epochs=0, converged=True, final_max_violation=0.0,
                             final_divergence=logdet_divergence(fk0),
                             n_triplets=0, n_constraints=0, config=cfg.to_dict())
        return fk0, report

    expanded = expand_triplets(triplets, cfg.gamma2, fk0.n)
    constraints = [transform_rank2(fk0.q, rc) for rc in expanded]
    m = len(constraints)
    u_all = np.concatenate([rc.u for rc in constraints], axis=1)
    v_all = np.concatenate([rc.v for rc in constraints], axis=1)
    is_eq = np.array([rc.sense == SENSE_EQ for rc in constraints])
    lambdas = np.where(is_eq, cfg.lambda_eq, cfg.lambda_neq)

    rng = np.random.default_rng(cfg.seed)
    fk = fk0
    trace = []
    alphas = np.zeros(m)
    converged = False
    epochs = 0

    for _ in range(cfg.max_epochs):
        epochs += 1
        if cfg.mode == "hard":
            for c in rng.permutation(m):
                rc = constraints[c]
                ep = rank2_eigenvalues(fk, rc)
                scale = float(np.trace(fk.khat)) / fk.r
                if _is_inactive(ep, scale):
                    continue
                eps = cfg.satisfy_tolerance * scale
                viol = ep.trace
                unsat = viol > eps if rc.sense == SENSE_LEQ else abs(viol) > eps
                if not unsat:
                    continue
                fk = project(fk, rc, alpha_hard(ep, rc.sense))
        else:
            # dual coordinate ascent: each constraint carries a cumulative
            # multiplier and every visit takes the ascent step for it, so the
            # slack penalty bounds the total enforcement per constraint and
            # the multipliers converge even on inconsistent sets
            prev = alphas.copy()
            for c in rng.permutation(m):
                rc = constraints[c]
                ep = rank2_eigenvalues(fk, rc)
                scale = float(np.trace(fk.khat)) / fk.r
                if _is_inactive(ep, scale):
                    continue
                delta = alpha_soft_step(ep, float(lambdas[c]), alphas[c], rc.sense)
                alphas[c] += delta
                if delta != 0.0:
                    fk = project(fk, rc, delta)

        if check_invariants:
            fk.check_valid()
        eps = satisfy_epsilon(fk, cfg.satisfy_tolerance)
        n_sat, max_viol = satisfied_count(fk, constraints, eps)
        trace.append(max_viol)
        if cfg.mode == "hard":
            if n_sat == m:
                converged = True
                break
        else:
            settled = np.abs(alphas - prev) <= cfg.alpha_stabilize_tol * (1.0 + np.abs(prev))
            if settled.all():
                converged = True
                break

    report = LearnReport(
        epochs=epochs,
        converged=converged,
        final_max_violation=trace[-1],
        final_divergence=logdet_divergence(fk),
        violation_trace=trace,
        n_triplets=len(triplets),
        n_constraints=m,
        alphas=alphas.tolist() if cfg.mode == "soft" else None,
        config=cfg.to_dict(),
        warning=None if converged else f"not converged after {epochs} epochs",
    )
    return fk, report


def _as_triplets(constraints):
    out = []
    for t in constraints:
        if isinstance(t, TripletConstraint):
            out.append(t)
        else:
            out.append(TripletConstraint(*t))
    return out


class RelativeKernelLearner(BaseEstimator, TransformerMixin):
    """Learn a PSD kernel matrix from triplet relative-distance constraints.

    Starting from an adaptive-bandwidth Gaussian kernel over the training
    points, iterative Bregman projections under the log-det divergence enforce
    the constraints; the learned kernel extends to unseen points through the
    cached initial-kernel correction.

    Parameters
    ----------
    gamma2 : float, default=2.0
        Squared margin by which an outlier's squared distance must exceed the
        inlier pair's; must exceed 1.
    mode : {"hard", "soft"}, default="hard"
        Exact constraint satisfaction versus quadratic slack penalties.
    lambda_neq, lambda_eq : float, default=1e5
        Soft-mode slack penalties for inequality/equality constraints.
    n_neighbors : int, default=7
        Neighbor rank used for the per-point kernel bandwidths.
    energy : float, default=0.9
        Frobenius energy kept by the low-rank factorization of the initial
        kernel.
    satisfy_tolerance : float, default=1e-6
        Relative satisfaction threshold (scaled by ``tr(K)/r``).
    max_epochs : int, default=200
    alpha_stabilize_tol : float, default=1e-4
        Soft-mode stopping tolerance on per-constraint multiplier movement.
    random_state : int or None, default=0
        Seed for the constraint sweep order.

    Attributes
    ----------
    kernel_ : ndarray of shape (n, n)
        The learned kernel over the training items.
    factored_ : FactoredKernel
        Low-rank transformed representation of ``kernel_``.
    report_ : LearnReport
    extension_ : KernelExtension
        Out-of-sample evaluator for the learned kernel.
    bandwidths_ : ndarray of shape (n,)
    """

    def __init__(self, gamma2=2.0, mode="hard", lambda_neq=1e5, lambda_eq=1e5,
                 n_neighbors=7, energy=0.9, satisfy_tolerance=1e-6, max_epochs=200,
                 alpha_stabilize_tol=1e-4, random_state=0):
        self.gamma2 = gamma2
        self.mode = mode
        self.lambda_neq = lambda_neq
        self.lambda_eq = lambda_eq
        self.n_neighbors = n_neighbors
        self.energy = energy
        self.satisfy_tolerance = satisfy_tolerance
        self.max_epochs = max_epochs
        self.alpha_stabilize_tol = alpha_stabilize_tol
        self.random_state = random_state

    def _config(self):
        return LearnerConfig(
            gamma2=self.gamma2,
            mode=self.mode,
            lambda_neq=self.lambda_neq,
            lambda_eq=self.lambda_eq,
            satisfy_tolerance=self.satisfy_tolerance,
            max_epochs=self.max_epochs,
            alpha_stabilize_tol=self.alpha_stabilize_tol,
            seed=self.random_state,
            energy=self.energy,
        )

    def fit(self, X, constraints):
        """Learn the kernel from feature vectors and triplet constraints.

        Parameters
        ----------
        X : array-like of shape (n, d)
        constraints : iterable of TripletConstraint or (kind, i, j, k) tuples
        """
        X = check_array(X, dtype=np.float64)
        triplets = _as_triplets(constraints)
        self.bandwidths_ = adaptive_bandwidths(X, self.n_neighbors)
        k0 = gaussian_kernel(X, self.bandwidths_)
        fk0 = low_rank_factorize(k0, self.energy)
        fk, report = learn(fk0, triplets, self._config())
        self.X_fit_ = X
        self.n_features_in_ = X.shape[1]
        self.initial_factored_ = fk0
        self.factored_ = fk
        self.kernel_ = lift_kernel(fk)
        self.report_ = report
        self.extension_ = build_extension(fk, X, self.bandwidths_, self.n_neighbors)
        return self

    def transform(self, X):
        """Learned-kernel values between ``X`` and the training items,
        shape (len(X), n_train)."""
        check_is_fitted(self, "extension_")
        X = check_array(X, dtype=np.float64)
        return self.extension_.gram(X, self.X_fit_)

    def gram(self, X, Y=None):
        """Learned-kernel Gram matrix between two point sets (``Y=X`` when
        omitted)."""
        check_is_fitted(self, "extension_")
        X = check_array(X, dtype=np.float64)
        Y = None if Y is None else check_array(Y, dtype=np.float64)
        return self.extension_.gram(X, Y)
