"""Transition-matrix estimation and forward/backward loss correction."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .corruption import TransitionMatrix
from .data import BiqualityDataset, LabeledSet, concat, split_by_class
from .learner import (
    ProbClassifier,
    TrainConfig,
    backward_head,
    fit,
    forward_head,
    train,
)

DEFAULT_COND_CAP = 1e8
DIAGONAL_LOAD = 1e-3


class CorrectionKind(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class CorrectionError(ValueError):
    """Backward correction needs an invertible, well-conditioned matrix."""


@dataclass(frozen=True, eq=False)
class AnchorSet:
    rows: np.ndarray  # (K, d), row i is the anchor of class i
    indices: np.ndarray  # positions in the pool


def find_anchors(model_U: ProbClassifier, pool) -> AnchorSet:
    """Per class, the pool row with the highest predicted probability (first on ties)."""
    X = pool.features if isinstance(pool, LabeledSet) else np.asarray(pool, dtype=float)
    if len(X) == 0:
        raise ValueError("anchor pool is empty")
    idx = np.argmax(model_U.predict_proba(X), axis=0)
    return AnchorSet(X[idx].copy(), idx)


def _row_normalize(M: np.ndarray) -> TransitionMatrix:
    M = np.maximum(M, 0.0)
    return TransitionMatrix(np.clip(M / M.sum(axis=1, keepdims=True), 0.0, 1.0))


def estimate_T_anchor(model_U: ProbClassifier, anchors: AnchorSet) -> TransitionMatrix:
    """Row i is the untrusted model's prediction at the anchor of class i."""
    return _row_normalize(model_U.predict_proba(anchors.rows))


def estimate_T_trusted(model_U: ProbClassifier, trusted: LabeledSet) -> TransitionMatrix:
    """Row i is the untrusted model's mean prediction over trusted rows of class i."""
    rows = []
    for sl in split_by_class(trusted):
        if len(sl) == 0:
            raise ValueError(f"class {sl.class_index} has no trusted examples")
        rows.append(model_U.predict_proba(trusted.features[sl.row_indices]).sum(axis=0))
    return _row_normalize(np.array(rows))


def forward_corrected_probs(probs, T) -> np.ndarray:
    """``T^T p``, i.e. ``p @ T`` row-wise for a batch."""
    return np.asarray(probs, dtype=float) @ np.asarray(T, dtype=float)


def inverse_transition(T, cond_cap: float = DEFAULT_COND_CAP, diagonal_loading: bool = False) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if diagonal_loading:
        T = T + DIAGONAL_LOAD * np.eye(len(T))
    cond = np.linalg.cond(T)
    if not np.isfinite(cond) or cond > cond_cap:
        raise CorrectionError(
            f"transition matrix is singular or ill-conditioned (cond={cond:.3g}); "
            "enable diagonal loading to regularize it"
        )
    return np.linalg.inv(T)


def backward_corrected_loss(loss_vec, T, cond_cap: float = DEFAULT_COND_CAP, diagonal_loading: bool = False) -> np.ndarray:
    """``T^-1 l`` for a vector of per-class losses. Entries may be negative."""
    loss_vec = np.asarray(loss_vec, dtype=float)
    if not np.all(np.isfinite(loss_vec)):
        raise ValueError("loss vector must be finite")
    return inverse_transition(T, cond_cap, diagonal_loading) @ loss_vec


def fit_corrected(
    s: LabeledSet,
    T,
    cfg: TrainConfig,
    kind: CorrectionKind = CorrectionKind.FORWARD,
    corrected=None,
    weights=None,
    diagonal_loading: bool = False,
) -> ProbClassifier:
    """Train with the corrected loss on ``corrected`` rows (all by default) and
    the plain loss on the rest."""
    keep = s.labeled_mask
    X, y = s.features[keep], s.labels[keep]
    corrected = np.ones(len(s), dtype=bool) if corrected is None else np.asarray(corrected, dtype=bool)
    weights = np.ones(len(s)) if weights is None else np.asarray(weights, dtype=float)
    if kind is CorrectionKind.FORWARD:
        head = forward_head(y, np.asarray(T, dtype=float), corrected[keep])
    else:
        T_inv = inverse_transition(T, diagonal_loading=diagonal_loading)
        head = backward_head(y, T_inv, corrected[keep])
    model, _ = train(X, head, weights[keep], cfg, s.class_count)
    return model


def patrini_fit(untrusted: LabeledSet, cfg: TrainConfig, kind: CorrectionKind = CorrectionKind.FORWARD, pool=None):
    """Anchor-point pipeline for untrusted data alone: fit, estimate T, refit corrected.

    Returns the model and the estimated matrix.
    """
    f_U = fit(untrusted, cfg)
    T_hat = estimate_T_anchor(f_U, find_anchors(f_U, untrusted if pool is None else pool))
    return fit_corrected(untrusted, T_hat, cfg, kind), T_hat


@dataclass(frozen=True, eq=False)
class GlcResult:
    model: ProbClassifier
    T_hat: TransitionMatrix
    model_U: ProbClassifier


def glc_fit_full(
    ds: BiqualityDataset,
    cfg: TrainConfig,
    kind: CorrectionKind = CorrectionKind.FORWARD,
    trusted_weight: float = 1.0,
    diagonal_loading: bool = False,
) -> GlcResult:
    if len(ds.trusted) == 0 or len(ds.untrusted) == 0:
        raise ValueError("GLC needs both trusted and untrusted data")
    f_U = fit(ds.untrusted, cfg)
    T_hat = estimate_T_trusted(f_U, ds.trusted)
    union = concat(ds.untrusted, ds.trusted)
    n_u = len(ds.untrusted)
    corrected = np.arange(len(union)) < n_u
    weights = np.where(corrected, 1.0, trusted_weight)
    model = fit_corrected(union, T_hat, cfg, kind, corrected, weights, diagonal_loading)
    return GlcResult(model, T_hat, f_U)


def glc_fit(ds: BiqualityDataset, cfg: TrainConfig, kind: CorrectionKind = CorrectionKind.FORWARD, **kw) -> ProbClassifier:
    """Corrected loss on D_U with T estimated from D_T, plain loss on D_T."""
    return glc_fit_full(ds, cfg, kind, **kw).model
