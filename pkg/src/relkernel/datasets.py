"""Loading, subsampling, and splitting of labeled feature-vector datasets.

Two on-disk formats are supported:

* ``delimited`` -- comma-separated values, one item per row.  An optional
  single header line ``#labels`` declares that the final column holds an
  integer class label.
* ``sparse`` -- one item per line as ``label idx:val idx:val ...`` with
  1-based feature indices (the common sparse-repository style).

All real values are parsed and stored in double precision.  Item identity is
the row index after load; every constraint refers to these indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_seed

__all__ = [
    "Dataset",
    "DataFormatError",
    "load_dataset",
    "save_dataset",
    "subsample_per_class",
    "split_train_holdout",
]


class DataFormatError(ValueError):
    """Raised when a dataset file cannot be parsed."""


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of feature vectors with optional integer labels.

    Attributes
    ----------
    features : ndarray of shape (n, d)
        Row-per-item feature matrix, double precision.
    labels : ndarray of shape (n,) or None
        Integer class ids, when present.
    ids : ndarray of shape (n,)
        Stable item identifiers: row indices of the originally loaded data,
        preserved through subsampling and splitting.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        if feats.shape[0] < 1:
            raise ValueError("a dataset needs at least one item")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (feats.shape[0],):
                raise ValueError(
                    f"labels have shape {labels.shape}, expected ({feats.shape[0]},)"
                )
        ids = self.ids
        ids = np.arange(feats.shape[0]) if ids is None else np.asarray(ids, dtype=np.int64)
        if ids.shape != (feats.shape[0],):
            raise ValueError(f"ids have shape {ids.shape}, expected ({feats.shape[0]},)")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "Dataset":
        """Return the sub-dataset at ``indices`` (ids carried over)."""
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(self.features[indices], labels, self.ids[indices])


def _parse_delimited(lines, path):
    has_labels = False
    rows, labels, width = [], [], None
    for lineno, raw in lines:
        text = raw.strip()
        if not text:
            continue
        if text.startswith("#"):
            if text == "#labels":
                if rows:
                    raise DataFormatError(
                        f"{path}: line {lineno}: '#labels' header must precede all data rows"
                    )
                has_labels = True
            continue
        tokens = text.split(",")
        if width is None:
            width = len(tokens)
            if has_labels and width < 2:
                raise DataFormatError(
                    f"{path}: line {lineno}: labeled rows need at least two columns"
                )
        elif len(tokens) != width:
            raise DataFormatError(
                f"{path}: line {lineno}: inconsistent dimensionality "
                f"(expected {width} values, got {len(tokens)})"
            )
        try:
            values = [float(tok) for tok in tokens]
        except ValueError:
            bad = next(tok for tok in tokens if not _is_float(tok))
            raise DataFormatError(
                f"{path}: line {lineno}: non-numeric token {bad!r}"
            ) from None
        if has_labels:
            lab = values[-1]
            if not float(lab).is_integer():
                raise DataFormatError(
                    f"{path}: line {lineno}: non-integer label {lab!r}"
                )
            labels.append(int(lab))
            values = values[:-1]
        rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: empty dataset")
    feats = np.asarray(rows, dtype=np.float64)
    return feats, (np.asarray(labels, dtype=np.int64) if has_labels else None)


def _is_float(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _parse_sparse(lines, path, n_features):
    entries, labels, max_idx = [], [], 0
    for lineno, raw in lines:
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        tokens = text.split()
        try:
            lab = float(tokens[0])
            if not lab.is_integer():
                raise ValueError
            labels.append(int(lab))
        except ValueError:
            raise DataFormatError(
                f"{path}: line {lineno}: expected integer label, got {tokens[0]!r}"
            ) from None
        row = {}
        for tok in tokens[1:]:
            try:
                idx_s, val_s = tok.split(":", 1)
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: malformed index:value token {tok!r}"
                ) from None
            if idx < 1:
                raise DataFormatError(
                    f"{path}: line {lineno}: feature indices are 1-based, got {idx}"
                )
            if n_features is not None and idx > n_features:
                raise DataFormatError(
                    f"{path}: line {lineno}: feature index {idx} exceeds "
                    f"declared dimension {n_features}"
                )
            row[idx - 1] = val
            max_idx = max(max_idx, idx)
        entries.append(row)
    if not entries:
        raise DataFormatError(f"{path}: empty dataset")
    d = n_features if n_features is not None else max_idx
    feats = np.zeros((len(entries), d), dtype=np.float64)
    for i, row in enumerate(entries):
        for j, val in row.items():
            feats[i, j] = val
    return feats, np.asarray(labels, dtype=np.int64)


def load_dataset(path, fmt="delimited", n_features=None) -> Dataset:
    """Load a dataset from ``path``.

    Parameters
    ----------
    path : str or Path
    fmt : {"delimited", "sparse"}
    n_features : int, optional
        Declared dimension for the sparse format; inferred from the largest
        index when omitted.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = list(enumerate(fh, start=1))
    except OSError as exc:
        raise DataFormatError(f"cannot read dataset {path}: {exc}") from exc
    if fmt == "delimited":
        feats, labels = _parse_delimited(lines, path)
    elif fmt == "sparse":
        feats, labels = _parse_sparse(lines, path, n_features)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    return Dataset(feats, labels)


def save_dataset(ds: Dataset, path) -> None:
    """Write ``ds`` in the delimited format (17 significant digits round-trips
    IEEE doubles exactly)."""
    with open(path, "w", encoding="utf-8") as fh:
        if ds.labels is not None:
            fh.write("#labels\n")
        for i in range(ds.n):
            row = ",".join(format(v, ".17g") for v in ds.features[i])
            if ds.labels is not None:
                row += f",{ds.labels[i]}"
            fh.write(row + "\n")


def subsample_per_class(ds: Dataset, count: int, seed=None) -> Dataset:
    """Draw exactly ``count`` items per class, uniformly without replacement.

    Deterministic for a fixed seed.  Raises when labels are missing or a class
    has fewer than ``count`` members.
    """
    if ds.labels is None:
        raise ValueError("subsampling per class needs a labeled dataset")
    if count < 1:
        raise ValueError("count must be positive")
    rng = check_seed(seed)
    chosen = []
    for cls in np.unique(ds.labels):
        members = np.flatnonzero(ds.labels == cls)
        if members.size < count:
            raise ValueError(
                f"class {cls} has only {members.size} members, need {count}"
            )
        picked = rng.choice(members, size=count, replace=False)
        chosen.append(np.sort(picked))
    return ds.take(np.concatenate(chosen))


def split_train_holdout(ds: Dataset, train_fraction: float, seed=None):
    """Disjoint stratified split into (train, holdout); union equals ``ds``.

    Stratified per class when labels exist; deterministic per seed.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if ds.n < 2:
        raise ValueError("need at least two items to split")
    rng = check_seed(seed)
    if ds.labels is None:
        groups = [np.arange(ds.n)]
    else:
        groups = [np.flatnonzero(ds.labels == c) for c in np.unique(ds.labels)]
    train_idx, hold_idx = [], []
    for members in groups:
        perm = rng.permutation(members)
        n_train = int(len(members) * train_fraction + 0.5)
        train_idx.append(perm[:n_train])
        hold_idx.append(perm[n_train:])
    train = np.sort(np.concatenate(train_idx)).astype(np.int64)
    hold = np.sort(np.concatenate(hold_idx)).astype(np.int64)
    # keep both sides non-empty; move one item if rounding emptied a side
    if train.size == 0:
        train, hold = hold[:1], hold[1:]
    elif hold.size == 0:
        train, hold = train[:-1], train[-1:]
    return ds.take(train), ds.take(hold)
