"""On-disk containers: binary/text kernel matrices, factored kernels, JSON docs.

The binary kernel container is a little-endian uint64 item count followed by
the row-major float64 entries.  Factored kernels (plus whatever the
out-of-sample extension needs) travel as ``.npz`` archives.  Every emitted
JSON document carries ``schema_version`` and ``kind`` fields and validates
against the matching schema in ``relkernel/schemas/``.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .kernels import FactoredKernel

__all__ = [
    "write_kernel_binary",
    "read_kernel_binary",
    "write_kernel_text",
    "read_kernel_text",
    "save_factored",
    "load_factored",
    "write_json",
    "load_schema",
]


def write_kernel_binary(k, path) -> None:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"kernel must be square, got shape {k.shape}")
    with open(path, "wb") as fh:
        fh.write(np.uint64(k.shape[0]).tobytes())
        fh.write(np.ascontiguousarray(k, dtype="<f8").tobytes())


def read_kernel_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated kernel container")
    n = int(np.frombuffer(raw[:8], dtype="<u8")[0])
    expected = 8 + 8 * n * n
    if len(raw) != expected:
        raise ValueError(
            f"{path}: kernel container holds {len(raw)} bytes, expected {expected} for n={n}"
        )
    return np.frombuffer(raw[8:], dtype="<f8").reshape(n, n).copy()


def write_kernel_text(k, path) -> None:
    np.savetxt(path, np.asarray(k, dtype=np.float64), fmt="%.17g", delimiter=",")


def read_kernel_text(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def save_factored(path, fk: FactoredKernel, features=None, sigmas=None,
                  n_neighbors=None) -> None:
    """Persist a factored kernel; optional extras make the archive
    self-contained for out-of-sample extension."""
    payload = {
        "q": fk.q,
        "g": fk.g,
        "k0_hat_diag": fk.k0_hat_diag,
        "n_clipped": np.int64(fk.n_clipped),
    }
    if features is not None:
        payload["features"] = np.asarray(features, dtype=np.float64)
    if sigmas is not None:
        payload["sigmas"] = np.asarray(sigmas, dtype=np.float64)
    if n_neighbors is not None:
        payload["n_neighbors"] = np.int64(n_neighbors)
    np.savez(path, **payload)


def load_factored(path):
    """Load a factored kernel; returns ``(FactoredKernel, extras dict)``."""
    with np.load(path) as data:
        g = data["g"]
        fk = FactoredKernel(
            g=g,
            q=data["q"],
            k0_hat_diag=data["k0_hat_diag"],
            khat=g @ g.T,
            n_clipped=int(data["n_clipped"]),
        )
        extras = {}
        for key in ("features", "sigmas"):
            if key in data:
                extras[key] = data[key]
        if "n_neighbors" in data:
            extras["n_neighbors"] = int(data["n_neighbors"])
    return fk, extras


def load_schema(kind: str) -> dict:
    """Load the bundled JSON schema for a document kind, e.g. ``learn-report``."""
    name = f"{kind}.v1.schema.json"
    with resources.files("relkernel.schemas").joinpath(name).open("r") as fh:
        return json.load(fh)


def write_json(doc: dict, path) -> None:
    if "schema_version" not in doc or "kind" not in doc:
        raise ValueError("JSON documents must carry schema_version and kind fields")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
