"""Dataset sources: Gaussian blobs and CSV ingestion."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..data import MASKED, LabeledSet


def make_blobs(
    n_samples: int,
    classes: int = 2,
    dim: int = 2,
    separation: float = 3.0,
    seed: int = 0,
    priors=None,
) -> LabeledSet:
    """Isotropic unit-variance Gaussian blobs.

    Class centers sit on a regular simplex (a segment for two classes)
    with pairwise distance ``separation``.
    """
    if classes < 2 or dim < 1:
        raise ValueError("need at least two classes and one feature")
    if classes > dim + 1:
        raise ValueError(f"{classes} equidistant centers need dim >= {classes - 1}")
    rng = np.random.default_rng(seed)
    # one-hot vertices of the standard simplex, centered, scaled to the separation
    V = np.eye(classes) - 1.0 / classes
    basis, _ = np.linalg.qr(V.T)
    centers = V @ basis[:, : classes - 1] * (separation / np.sqrt(2.0))
    centers = np.hstack([centers, np.zeros((classes, dim - (classes - 1)))])
    priors = np.full(classes, 1.0 / classes) if priors is None else np.asarray(priors, dtype=float)
    counts = np.floor(priors * n_samples).astype(int)
    counts[: n_samples - counts.sum()] += 1
    y = np.repeat(np.arange(classes), counts)
    X = centers[y] + rng.standard_normal((n_samples, dim))
    perm = rng.permutation(n_samples)
    return LabeledSet(X[perm], y[perm], classes)


def load_csv(path, label_column: str = "label", features="rest", classes=None) -> LabeledSet:
    """Read a CSV with a header row.

    Labels are dictionary-encoded in order of first appearance unless an
    ordered ``classes`` list fixes the encoding; the cell ``-1`` marks an
    unlabeled row. ``features`` is a list of column names or ``"rest"`` for
    every non-label column.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: missing header row") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if label_column not in header:
        raise ValueError(f"{path}: no label column {label_column!r}")
    cols = [h for h in header if h != label_column] if features == "rest" else list(features)
    for c in cols:
        if c not in header:
            raise ValueError(f"{path}: no feature column {c!r}")
    li = header.index(label_column)
    fi = [header.index(c) for c in cols]

    names: dict[str, int] = {str(c): i for i, c in enumerate(classes or ())}
    labels = np.empty(len(rows), dtype=np.int64)
    X = np.empty((len(rows), len(cols)))
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        for j, (c, i) in enumerate(zip(cols, fi)):
            try:
                X[r - 1, j] = float(row[i])
            except ValueError:
                raise ValueError(f"{path}: row {r}, column {c!r}: cannot parse {row[i]!r} as a number") from None
        cell = row[li].strip()
        if cell == str(MASKED):
            labels[r - 1] = MASKED
        elif classes is not None and cell not in names:
            raise ValueError(f"{path}: row {r}, column {label_column!r}: unknown class {cell!r}")
        else:
            labels[r - 1] = names.setdefault(cell, len(names))
    if len(names) < 2:
        raise ValueError(f"{path}: need at least two classes, found {len(names)}")
    return LabeledSet(X, labels, len(names), tuple(names))


def write_csv(path, s: LabeledSet, label_column: str = "label", extra: dict | None = None) -> Path:
    """Write ``s`` in the format read by :func:`load_csv` (labels as class indices)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    extra = extra or {}
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(s.dim)] + [label_column] + list(extra))
        for i in range(len(s)):
            w.writerow([repr(float(v)) for v in s.features[i]] + [int(s.labels[i])] + [int(v[i]) for v in extra.values()])
    return path
