"""Triplet relative-distance constraints and their rank-2 matrix encodings.

A triplet either singles one item out as the outlier among three (``neq``) or
declares all three items equidistant (``eq``).  With squared kernel-space
distances ``delta(a, b) = K_aa - 2 K_ab + K_bb``, an outlier triplet
``(i, j | k)`` imposes the two scalar inequalities

    gamma^2 * delta(i, j) <= delta(i, k)   and
    gamma^2 * delta(j, i) <= delta(j, k),

and an equidistance triplet imposes three pairwise equalities.  Each scalar
(in)equality is ``tr(K C) <= 0`` (or ``= 0``) for a symmetric rank-2 matrix
``C`` kept in factored form ``C = U V^T`` with two columns per factor, so that
traces and eigenvalues reduce to 2x2 products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ._validation import check_labels, check_seed

if TYPE_CHECKING:  # pragma: no cover
    from .kernels import FactoredKernel

__all__ = [
    "TripletConstraint",
    "Rank2Constraint",
    "expand_neq",
    "expand_eq",
    "expand_triplets",
    "transform_rank2",
    "violation",
    "satisfy_epsilon",
    "synthesize_from_labels",
    "corrupt_triplets",
    "read_triplets",
    "write_triplets",
]

NEQ = "neq"
EQ = "eq"
SENSE_LEQ = "leq"  # tr(K C) <= 0
SENSE_EQ = "eq"    # tr(K C)  = 0


@dataclass(frozen=True)
class TripletConstraint:
    """A relative comparison over three items.

    ``kind == "neq"`` means item ``k`` is the outlier among ``(i, j, k)``;
    ``kind == "eq"`` means the three items are equidistant.
    """

    kind: str
    i: int
    j: int
    k: int

    def __post_init__(self):
        if self.kind not in (NEQ, EQ):
            raise ValueError(f"unknown triplet kind {self.kind!r}")
        idx = (self.i, self.j, self.k)
        if any(int(a) != a or a < 0 for a in idx):
            raise ValueError(f"triplet indices must be non-negative integers, got {idx}")
        if len(set(idx)) != 3:
            raise ValueError(f"triplet indices must be pairwise distinct, got {idx}")

    @property
    def indices(self):
        return (self.i, self.j, self.k)


@dataclass(frozen=True)
class Rank2Constraint:
    """One scalar (in)equality ``tr(K U V^T) {<=,=} 0`` in factored form.

    ``u`` and ``v`` hold two columns each; ``C = u @ v.T`` is symmetric with
    rank at most 2.  ``origin`` points back to the source triplet and ``form``
    names which of its expansions this is.
    """

    u: np.ndarray
    v: np.ndarray
    sense: str
    origin: TripletConstraint | None = None
    form: str = ""

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape[1] != 2 or u.shape != v.shape:
            raise ValueError(f"factors must be (m, 2) with equal shapes, got {u.shape}, {v.shape}")
        if self.sense not in (SENSE_LEQ, SENSE_EQ):
            raise ValueError(f"unknown constraint sense {self.sense!r}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def dense(self) -> np.ndarray:
        """Materialize ``C = U V^T`` (tests and small problems only)."""
        return self.u @ self.v.T

    def check_symmetric(self, tol=1e-12) -> None:
        """Verify ``U V^T`` is symmetric without forming the dense matrix.

        The asymmetry ``S = U V^T - V U^T`` has range within span([U, V]), so
        ``S`` vanishes iff ``S @ [U, V]`` does.
        """
        basis = np.hstack([self.u, self.v])
        s_basis = self.u @ (self.v.T @ basis) - self.v @ (self.u.T @ basis)
        scale = max(1.0, float(np.abs(basis).max()) ** 2)
        if np.max(np.abs(s_basis)) > tol * scale * max(1.0, basis.shape[0]):
            raise ValueError("constraint factors do not define a symmetric matrix")


def _indicator_diff(n, a, b):
    d = np.zeros(n, dtype=np.float64)
    d[a] = 1.0
    d[b] = -1.0
    return d


def _pair_constraint(n, a, b, c, weight, sense, origin, form):
    # C = weight^2 * (e_a - e_b)(e_a - e_b)^T - (e_a - e_c)(e_a - e_c)^T
    d_ab = _indicator_diff(n, a, b)
    d_ac = _indicator_diff(n, a, c)
    u = np.column_stack([weight * d_ab, d_ac])
    v = np.column_stack([weight * d_ab, -d_ac])
    return Rank2Constraint(u, v, sense, origin, form)


def expand_neq(t: TripletConstraint, gamma2: float, n: int):
    """Expand an outlier triplet into its two <=0 rank-2 constraints.

    Requires ``gamma2 > 1``: with a unit margin the inequalities would be
    satisfiable by arbitrarily small differences and carry no information.
    """
    if t.kind != NEQ:
        raise ValueError(f"expected a 'neq' triplet, got {t.kind!r}")
    if not gamma2 > 1.0:
        raise ValueError(f"gamma2 must exceed 1, got {gamma2}")
    if max(t.indices) >= n:
        raise ValueError(f"triplet {t.indices} out of range for n={n}")
    g = math.sqrt(gamma2)
    i, j, k = t.indices
    return [
        _pair_constraint(n, i, j, k, g, SENSE_LEQ, t, f"({i},{j}|{k})"),
        _pair_constraint(n, j, i, k, g, SENSE_LEQ, t, f"({j},{i}|{k})"),
    ]


def expand_eq(t: TripletConstraint, n: int):
    """Expand an equidistance triplet into three =0 rank-2 constraints.

    Anchors cycle through the items -- (i: j,k), (j: k,i), (k: i,j) -- so the
    three difference matrices sum to zero exactly.
    """
    if t.kind != EQ:
        raise ValueError(f"expected an 'eq' triplet, got {t.kind!r}")
    if max(t.indices) >= n:
        raise ValueError(f"triplet {t.indices} out of range for n={n}")
    i, j, k = t.indices
    return [
        _pair_constraint(n, i, j, k, 1.0, SENSE_EQ, t, f"({i},{j}={k})"),
        _pair_constraint(n, j, k, i, 1.0, SENSE_EQ, t, f"({j},{k}={i})"),
        _pair_constraint(n, k, i, j, 1.0, SENSE_EQ, t, f"({k},{i}={j})"),
    ]


def expand_triplets(triplets, gamma2: float, n: int):
    """Expand a triplet list into the flat list of rank-2 constraints."""
    out = []
    for t in triplets:
        out.extend(expand_neq(t, gamma2, n) if t.kind == NEQ else expand_eq(t, n))
    return out


def transform_rank2(q: np.ndarray, rc: Rank2Constraint) -> Rank2Constraint:
    """Carry a constraint into the r-dimensional space of a column-orthogonal
    ``q`` via ``U -> Q^T U``, ``V -> Q^T V`` (so ``C -> Q^T C Q``)."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] != rc.u.shape[0]:
        raise ValueError(
            f"lifting matrix has shape {q.shape}, constraint lives on {rc.u.shape[0]} items"
        )
    return Rank2Constraint(q.T @ rc.u, q.T @ rc.v, rc.sense, rc.origin, rc.form)


def violation(fk: "FactoredKernel", rc: Rank2Constraint) -> float:
    """Return ``tr(K C)`` evaluated through the 2x2 product ``V^T K U``."""
    if rc.u.shape[0] != fk.khat.shape[0]:
        raise ValueError(
            f"constraint lives on {rc.u.shape[0]} dimensions, kernel on {fk.khat.shape[0]}"
        )
    b = rc.v.T @ (fk.khat @ rc.u)
    return float(b[0, 0] + b[1, 1])


def satisfy_epsilon(fk: "FactoredKernel", rtol: float = 1e-6) -> float:
    """Scale-relative satisfaction threshold ``rtol * tr(K) / r``.

    An inequality counts satisfied when ``tr(K C) <= eps`` and an equality
    when ``|tr(K C)| <= eps``; an absolute threshold would break under kernel
    rescaling.
    """
    return rtol * float(np.trace(fk.khat)) / fk.r


def _coerce_binary_map(binary_map, classes):
    if binary_map is None:
        raise ValueError("binary/mixed synthesis needs a binary_map {label: superlabel}")
    classes = [int(c) for c in classes]
    missing = [c for c in classes if c not in binary_map]
    if missing:
        raise ValueError(f"binary_map misses labels {missing}")
    return {c: int(binary_map[c]) for c in classes}


def _sample_neq(rng, labels, pools):
    classes = list(pools)
    eligible = [c for c in classes if pools[c].size >= 2]
    if not eligible or len(classes) < 2:
        raise ValueError("outlier synthesis needs >= 2 classes with a pair in one of them")
    cls = eligible[rng.integers(len(eligible))]
    i, j = rng.choice(pools[cls], size=2, replace=False)
    others = np.flatnonzero(labels != cls)
    k = others[rng.integers(others.size)]
    return TripletConstraint(NEQ, int(i), int(j), int(k))


def _sample_eq(rng, labels, pools, cross):
    classes = list(pools)
    if cross:
        eligible = [c for c in classes if pools[c].size >= 1]
        if len(eligible) < 3:
            raise ValueError("cross-class equidistance triplets need >= 3 classes")
        picked = rng.choice(len(eligible), size=3, replace=False)
        items = [pools[eligible[p]][rng.integers(pools[eligible[p]].size)] for p in picked]
    else:
        eligible = [c for c in classes if pools[c].size >= 3]
        if not eligible:
            raise ValueError("same-class equidistance triplets need a class with >= 3 items")
        cls = eligible[rng.integers(len(eligible))]
        items = rng.choice(pools[cls], size=3, replace=False)
    i, j, k = (int(x) for x in items)
    return TripletConstraint(EQ, i, j, k)


def synthesize_from_labels(
    labels,
    n_triplets: int,
    mode: str = "multiclass",
    eq_mode: str = "none",
    n_eq: int = 0,
    seed=None,
    binary_map=None,
):
    """Generate triplets from class labels.

    Outlier triplets take two items from one class and the outlier from
    another.  ``mode`` selects what counts as a class: the fine labels
    (``multiclass``), caller-supplied super-labels (``binary``, via
    ``binary_map``), or a per-triplet coin flip between the two (``mixed``).
    Equidistance triplets take all three items from one class
    (``same_class``), one from each of three classes (``cross_class``), or
    half and half (``random``).  Deterministic per seed.
    """
    labels = check_labels(labels)
    if mode not in ("multiclass", "binary", "mixed"):
        raise ValueError(f"unknown synthesis mode {mode!r}")
    if eq_mode not in ("none", "same_class", "cross_class", "random"):
        raise ValueError(f"unknown eq_mode {eq_mode!r}")
    if n_triplets < 0 or n_eq < 0:
        raise ValueError("constraint counts must be non-negative")
    rng = check_seed(seed)
    classes = np.unique(labels)

    fine_pools = {int(c): np.flatnonzero(labels == c) for c in classes}
    if mode in ("binary", "mixed"):
        mapping = _coerce_binary_map(binary_map, (int(c) for c in classes))
        coarse = np.array([mapping[int(l)] for l in labels], dtype=np.int64)
        coarse_pools = {int(c): np.flatnonzero(coarse == c) for c in np.unique(coarse)}
    else:
        coarse, coarse_pools = None, None

    out = []
    for _ in range(n_triplets):
        use_coarse = mode == "binary" or (mode == "mixed" and rng.integers(2) == 1)
        if use_coarse:
            out.append(_sample_neq(rng, coarse, coarse_pools))
        else:
            out.append(_sample_neq(rng, labels, fine_pools))
    if eq_mode != "none":
        for idx in range(n_eq):
            if eq_mode == "random":
                cross = idx % 2 == 1  # first half same-class, alternating
            else:
                cross = eq_mode == "cross_class"
            out.append(_sample_eq(rng, labels, fine_pools, cross))
    return out


def corrupt_triplets(triplets, fraction: float, seed=None):
    """Swap the outlier with one of the inlier items in a random subset of
    exactly ``round(fraction * #neq)`` outlier triplets.

    Equidistance triplets are untouched and the list order is preserved.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    rng = check_seed(seed)
    neq_positions = [idx for idx, t in enumerate(triplets) if t.kind == NEQ]
    n_corrupt = int(round(fraction * len(neq_positions)))
    chosen = set()
    if n_corrupt:
        chosen = set(rng.choice(neq_positions, size=n_corrupt, replace=False).tolist())
    out = []
    for idx, t in enumerate(triplets):
        if idx in chosen:
            if rng.integers(2) == 0:
                out.append(TripletConstraint(NEQ, t.k, t.j, t.i))  # i becomes the outlier
            else:
                out.append(TripletConstraint(NEQ, t.i, t.k, t.j))  # j becomes the outlier
        else:
            out.append(t)
    return out


def read_triplets(path):
    """Read the plain-text constraint format: one ``neq i j k`` or ``eq i j k``
    per line, ``#`` comments allowed, 0-based indices."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            tokens = text.split()
            if len(tokens) != 4 or tokens[0] not in (NEQ, EQ):
                raise ValueError(
                    f"{path}: line {lineno}: expected 'neq i j k' or 'eq i j k', got {text!r}"
                )
            try:
                i, j, k = (int(tok) for tok in tokens[1:])
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: indices must be integers, got {text!r}"
                ) from None
            try:
                out.append(TripletConstraint(tokens[0], i, j, k))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return out


def write_triplets(triplets, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(f"{t.kind} {t.i} {t.j} {t.k}\n")
