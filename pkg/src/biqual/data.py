"""Labeled sets, trusted/untrusted pairing and stratified splitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MASKED = -1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """Dense feature matrix with integer labels in ``0..K-1``.

    Label ``-1`` marks an unlabeled (masked) row.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, 1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise ValueError(f"features must be a 2-d matrix with d >= 1, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0] if y.ndim else 0} labels")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        if self.class_count < 2:
            raise ValueError(f"class_count must be >= 2, got {self.class_count}")
        if y.size and (y.max() >= self.class_count or y.min() < MASKED):
            raise ValueError(f"labels must lie in 0..{self.class_count - 1} (or -1 for masked)")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite values")
        if self.class_names is not None and len(self.class_names) != self.class_count:
            raise ValueError("class_names length must equal class_count")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels != MASKED

    def subset(self, idx) -> LabeledSet:
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledSet(self.features[idx], self.labels[idx], self.class_count, self.class_names)

    def with_labels(self, labels) -> LabeledSet:
        return LabeledSet(self.features, labels, self.class_count, self.class_names)

    def labeled(self) -> LabeledSet:
        """Drop masked rows."""
        return self.subset(np.flatnonzero(self.labeled_mask))

    def class_counts(self) -> np.ndarray:
        y = self.labels[self.labeled_mask]
        return np.bincount(y, minlength=self.class_count)


def empty_like(ref: LabeledSet) -> LabeledSet:
    return LabeledSet(np.empty((0, ref.dim)), np.empty(0, dtype=np.int64), ref.class_count, ref.class_names)


def concat(*sets: LabeledSet) -> LabeledSet:
    ref = sets[0]
    for s in sets[1:]:
        if s.dim != ref.dim or s.class_count != ref.class_count:
            raise ValueError("cannot concatenate sets with different d or K")
    return LabeledSet(
        np.vstack([s.features for s in sets]),
        np.concatenate([s.labels for s in sets]),
        ref.class_count,
        ref.class_names,
    )


@dataclass(frozen=True, eq=False)
class BiqualityDataset:
    """A trusted set D_T and an untrusted set D_U over one feature space.

    ``flip_mask`` marks corrupted untrusted rows. It is ground truth kept for
    evaluation only and is never read by the learning algorithms.
    """

    trusted: LabeledSet
    untrusted: LabeledSet
    flip_mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.trusted.dim != self.untrusted.dim:
            raise ValueError(f"trusted d={self.trusted.dim} != untrusted d={self.untrusted.dim}")
        if self.trusted.class_count != self.untrusted.class_count:
            raise ValueError("trusted and untrusted sets disagree on K")
        if len(self.trusted) + len(self.untrusted) < 1:
            raise ValueError("biquality dataset is empty")
        if self.flip_mask is not None:
            m = np.asarray(self.flip_mask, dtype=bool)
            if m.shape != (len(self.untrusted),):
                raise ValueError("flip_mask must align with the untrusted rows")
            object.__setattr__(self, "flip_mask", _frozen(m))

    @property
    def class_count(self) -> int:
        return self.trusted.class_count

    @property
    def dim(self) -> int:
        return self.trusted.dim

    @property
    def p(self) -> float:
        return trusted_ratio(self)


def trusted_ratio(ds: BiqualityDataset) -> float:
    """Fraction of trusted rows among all training rows."""
    n_t, n_u = len(ds.trusted), len(ds.untrusted)
    if n_t + n_u == 0:
        raise ValueError("trusted ratio undefined for an empty dataset")
    return n_t / (n_t + n_u)


@dataclass(frozen=True, eq=False)
class ClassSlice:
    parent: LabeledSet
    class_index: int
    row_indices: np.ndarray

    def rows(self) -> LabeledSet:
        return self.parent.subset(self.row_indices)

    def __len__(self) -> int:
        return len(self.row_indices)


def split_by_class(s: LabeledSet) -> list[ClassSlice]:
    """One slice per class; slice ``i`` holds exactly the rows labeled ``i``."""
    return [
        ClassSlice(s, i, _frozen(np.flatnonzero(s.labels == i)))
        for i in range(s.class_count)
    ]


def stratified_split_indices(labels, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Index partition with ``fraction`` of each stratum on the first side.

    Strata are label values (masked rows form their own stratum). Per-stratum
    counts are floor/ceil of the exact share, chosen by largest remainder so
    the first side totals ``round(fraction * n)``, and every stratum keeps at
    least one row on each side.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    strata = np.unique(labels)
    members = [np.flatnonzero(labels == c) for c in strata]
    sizes = np.array([len(m) for m in members])
    for c, n_c in zip(strata, sizes):
        if n_c < 2:
            raise ValueError(f"class {c} has {n_c} example(s); cannot place one on each side")
    exact = sizes * fraction
    take = np.floor(exact).astype(int)
    short = int(round(fraction * sizes.sum())) - take.sum()
    if short > 0:
        order = np.argsort(-(exact - take), kind="stable")
        take[order[:short]] += 1
    take = np.clip(take, 1, sizes - 1)

    first, second = [], []
    for m, k in zip(members, take):
        perm = rng.permutation(m)
        first.append(perm[:k])
        second.append(perm[k:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def stratified_split(s: LabeledSet, fraction: float, seed: int) -> tuple[LabeledSet, LabeledSet]:
    a, b = stratified_split_indices(s.labels, fraction, seed)
    return s.subset(a), s.subset(b)
