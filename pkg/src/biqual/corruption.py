"""Label corruption (CAR / AR / NAR / masking) and the quality score q."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .data import MASKED, LabeledSet

ROW_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic ``T[i, j] = P(untrusted label j | true label i)``."""

    entries: np.ndarray

    def __post_init__(self):
        T = np.array(self.entries, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] < 2:
            raise ValueError(f"transition matrix must be K x K with K >= 2, got {T.shape}")
        if np.any(T < -ROW_TOL) or np.any(T > 1 + ROW_TOL):
            raise ValueError("transition matrix entries must lie in [0, 1]")
        if np.any(np.abs(T.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("transition matrix rows must sum to 1")
        T = np.clip(T, 0.0, 1.0)
        T.setflags(write=False)
        object.__setattr__(self, "entries", T)

    @property
    def class_count(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def tolist(self) -> list[list[float]]:
        return self.entries.tolist()


def car_matrix(K: int, rho: float) -> TransitionMatrix:
    """Uniform flips: diagonal ``1 - rho``, off-diagonal ``rho / (K - 1)``."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    T = np.full((K, K), rho / (K - 1))
    np.fill_diagonal(T, 1.0 - rho)
    return TransitionMatrix(T)


def ar_matrix(rates) -> TransitionMatrix:
    """Class-dependent flip rates, each spread uniformly over the other classes."""
    rates = np.asarray(rates, dtype=float)
    K = len(rates)
    if K < 2 or np.any(rates < 0) or np.any(rates > 1):
        raise ValueError("need K >= 2 rates in [0, 1]")
    T = np.repeat((rates / (K - 1))[:, None], K, axis=1)
    np.fill_diagonal(T, 1.0 - rates)
    return TransitionMatrix(T)


def _as_matrix(T) -> np.ndarray:
    return T.entries if isinstance(T, TransitionMatrix) else np.asarray(T, dtype=float)


def apply_label_noise(s: LabeledSet, T, seed: int) -> tuple[LabeledSet, np.ndarray]:
    """Redraw each label ``y`` from row ``T[y]``. Masked rows are left alone."""
    T = _as_matrix(T)
    if T.shape != (s.class_count, s.class_count):
        raise ValueError(f"transition matrix is {T.shape} but the set has K={s.class_count}")
    rng = np.random.default_rng(seed)
    u = rng.random(len(s))
    y = s.labels.copy()
    live = y != MASKED
    cum = np.cumsum(T, axis=1)[y[live]]
    cum[:, -1] = 1.0
    y[live] = (u[live, None] >= cum).sum(axis=1)
    flip = y != s.labels
    return s.with_labels(y), flip


def _flip_to_other(y: np.ndarray, flip: np.ndarray, K: int, rng) -> np.ndarray:
    out = y.copy()
    shift = rng.integers(1, K, size=len(y))
    out[flip] = (y[flip] + shift[flip]) % K
    return out


def nar_flip_probabilities(scores: np.ndarray, labels: np.ndarray, strength: float, target) -> np.ndarray:
    """Per-row ``sigmoid(strength * score - shift_y)``, with ``shift_y`` set so
    each class's mean flip probability equals its target rate."""
    K = len(target)
    rho = np.zeros(len(labels))
    for c in range(K):
        rows = labels == c
        if not np.any(rows):
            continue
        t = float(target[c])
        if t <= 0.0:
            continue
        if t >= 1.0:
            rho[rows] = 1.0
            continue
        z = strength * scores[rows]
        gap = lambda shift: expit(z - shift).mean() - t  # noqa: E731
        lo, hi = z.min() - 50.0, z.max() + 50.0
        shift = brentq(gap, lo, hi, xtol=1e-12)
        rho[rows] = expit(z - shift)
    return rho


def apply_nar_noise(s: LabeledSet, w, strength: float, seed: int, target_rate=0.3) -> tuple[LabeledSet, np.ndarray]:
    """Instance-dependent flips driven by the linear score ``w . x``.

    ``target_rate`` is a scalar or a per-class vector of mean flip rates.
    A flipped label moves uniformly to one of the other ``K - 1`` classes.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (s.dim,):
        raise ValueError(f"direction has length {w.size}, expected d={s.dim}")
    if strength < 0:
        raise ValueError("strength must be >= 0")
    target = np.broadcast_to(np.asarray(target_rate, dtype=float), (s.class_count,))
    if np.any(target < 0) or np.any(target > 1):
        raise ValueError("target rates must lie in [0, 1]")
    scores = s.features @ w
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-finite NAR scores")
    rng = np.random.default_rng(seed)
    u = rng.random(len(s))
    rho = nar_flip_probabilities(scores, s.labels, strength, target)
    flip = (u < rho) & s.labeled_mask
    y = _flip_to_other(s.labels, flip, s.class_count, rng)
    return s.with_labels(y), flip


def mask_labels(s: LabeledSet, keep_prob, seed: int) -> tuple[LabeledSet, np.ndarray]:
    """Replace a label ``y`` by -1 with probability ``1 - keep_prob[y]``.

    Positive-unlabeled data is ``keep_prob = (0, e)``.
    """
    keep_prob = np.asarray(keep_prob, dtype=float)
    if keep_prob.shape != (s.class_count,) or np.any(keep_prob < 0) or np.any(keep_prob > 1):
        raise ValueError("keep_prob must hold one probability in [0, 1] per class")
    rng = np.random.default_rng(seed)
    u = rng.random(len(s))
    live = s.labeled_mask
    mask = np.zeros(len(s), dtype=bool)
    mask[live] = u[live] >= keep_prob[s.labels[live]]
    y = s.labels.copy()
    y[mask] = MASKED
    return s.with_labels(y), mask


@dataclass(frozen=True)
class CorruptionSpec:
    """One noise setting of the grid.

    ``kind`` is ``CAR``, ``AR``, ``NAR`` or ``MASK``. Parameters:

    * CAR: ``rho``
    * AR: ``rates`` (per-class flip rates) or a full ``matrix``
    * NAR: ``rate`` (scalar or per-class), ``strength``, optional ``direction``
      (defaults to the normalized all-ones vector)
    * MASK: ``keep`` per-class keep probabilities
    """

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        p = self.params
        if kind == "CAR":
            if not 0.0 <= p["rho"] <= 1.0:
                raise ValueError("CAR rho must lie in [0, 1]")
        elif kind == "AR":
            if "matrix" in p:
                TransitionMatrix(p["matrix"])
            elif "rates" in p:
                ar_matrix(p["rates"])
            else:
                raise ValueError("AR needs 'rates' or 'matrix'")
        elif kind == "NAR":
            if "rate" not in p:
                raise ValueError("NAR needs 'rate'")
            if p.get("strength", 0.0) < 0:
                raise ValueError("NAR strength must be >= 0")
        elif kind == "MASK":
            keep = np.asarray(p["keep"], dtype=float)
            if np.any(keep < 0) or np.any(keep > 1):
                raise ValueError("keep probabilities must lie in [0, 1]")
        else:
            raise ValueError(f"unknown corruption kind {self.kind!r}")

    @property
    def label(self) -> str:
        p = self.params
        fmt = lambda v: ",".join(f"{x:g}" for x in np.ravel(v))  # noqa: E731
        if self.kind == "CAR":
            return f"CAR({p['rho']:g})"
        if self.kind == "AR":
            return f"AR({fmt(p['rates'])})" if "rates" in p else f"AR([{fmt(p['matrix'])}])"
        if self.kind == "NAR":
            w = f";w={fmt(p['direction'])}" if p.get("direction") is not None else ""
            return f"NAR({fmt(p['rate'])};s={p.get('strength', 0.0):g}{w})"
        return f"MASK({fmt(p['keep'])})"

    def transition(self, K: int) -> TransitionMatrix | None:
        """Known channel for CAR/AR specs, ``None`` otherwise."""
        if self.kind == "CAR":
            return car_matrix(K, self.params["rho"])
        if self.kind == "AR":
            if "matrix" in self.params:
                return TransitionMatrix(self.params["matrix"])
            return ar_matrix(self.params["rates"])
        return None

    def apply(self, s: LabeledSet, seed: int | None = None) -> tuple[LabeledSet, np.ndarray]:
        seed = self.seed if seed is None else seed
        if self.kind in ("CAR", "AR"):
            return apply_label_noise(s, self.transition(s.class_count), seed)
        if self.kind == "NAR":
            w = self.params.get("direction")
            w = np.ones(s.dim) / np.sqrt(s.dim) if w is None else np.asarray(w, dtype=float)
            return apply_nar_noise(s, w, self.params.get("strength", 0.0), seed, self.params["rate"])
        return mask_labels(s, self.params["keep"], seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: np.asarray(v).tolist() for k, v in self.params.items()}}

    @classmethod
    def parse(cls, obj) -> CorruptionSpec:
        """Build from a mapping or a short string such as ``CAR(0.3)``,
        ``AR(0.1,0.5)``, ``NAR(0.3,4)`` (rate, strength) or ``MASK(0,0.3)``."""
        if isinstance(obj, CorruptionSpec):
            return obj
        if isinstance(obj, dict):
            d = dict(obj)
            kind = d.pop("kind")
            seed = d.pop("seed", 0)
            return cls(kind, d, seed)
        m = re.fullmatch(r"\s*([A-Za-z]+)\s*\(([^)]*)\)\s*", str(obj))
        if not m:
            raise ValueError(f"cannot parse corruption spec {obj!r}")
        kind = m.group(1).upper()
        args = [float(a) for a in m.group(2).replace(";", ",").split(",") if a.strip()]
        if kind == "CAR" and len(args) == 1:
            return cls("CAR", {"rho": args[0]})
        if kind == "AR" and args:
            return cls("AR", {"rates": args})
        if kind == "NAR" and len(args) == 2:
            return cls("NAR", {"rate": args[0], "strength": args[1]})
        if kind == "MASK" and args:
            return cls("MASK", {"keep": args})
        raise ValueError(f"cannot parse corruption spec {obj!r}")


@dataclass(frozen=True)
class QualityEstimate:
    q: float
    mean_kl: float
    reference_kl: float
    degenerate_reference: bool = False


def _kl_rows(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    # 0 * log(0 / q) = 0; floor q to keep the divergence finite
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * (np.log(P) - np.log(np.maximum(Q, 1e-300))), 0.0)
    return terms.sum(axis=1)


def quality_from_probs(P_T: np.ndarray, P_U: np.ndarray) -> QualityEstimate:
    """q = clamp(1 - E[KL(P_T || P_U)] / E[KL(P_T || uniform)], 0, 1)."""
    P_T = np.atleast_2d(np.asarray(P_T, dtype=float))
    P_U = np.atleast_2d(np.asarray(P_U, dtype=float))
    if P_T.shape != P_U.shape:
        raise ValueError("probability matrices differ in shape")
    K = P_T.shape[1]
    mean_kl = max(float(_kl_rows(P_T, P_U).mean()), 0.0)
    ref_kl = max(float(_kl_rows(P_T, np.full_like(P_T, 1.0 / K)).mean()), 0.0)
    if mean_kl == 0.0:
        return QualityEstimate(1.0, 0.0, ref_kl)
    if ref_kl == 0.0:
        return QualityEstimate(0.0, mean_kl, 0.0, degenerate_reference=True)
    q = min(max(1.0 - mean_kl / ref_kl, 0.0), 1.0)
    return QualityEstimate(q, mean_kl, ref_kl)


def measure_quality(f_T, f_U, probe) -> QualityEstimate:
    """KL-ratio quality of the untrusted conditional, averaged over ``probe`` rows."""
    X = probe.features if isinstance(probe, LabeledSet) else np.asarray(probe, dtype=float)
    return quality_from_probs(f_T.predict_proba(X), f_U.predict_proba(X))
