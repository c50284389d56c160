"""Inductive-transfer baselines: multi-task loss mixing and TrAdaBoost."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import BiqualityDataset, concat
from .learner import ProbClassifier, TrainConfig, fit_weighted

ERR_FLOOR = 1e-10


def mtl_loss(trusted_loss: float, untrusted_loss: float, lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return (1.0 - lam) * untrusted_loss + lam * trusted_loss


@dataclass(frozen=True)
class MtlConfig:
    lam: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")


def mtl_fit(ds: BiqualityDataset, mtl: MtlConfig, cfg: TrainConfig) -> ProbClassifier:
    """One shared model minimizing ``lam * mean CE(D_T) + (1 - lam) * mean CE(D_U)``."""
    n_t = int(ds.trusted.labeled_mask.sum())
    n_u = int(ds.untrusted.labeled_mask.sum())
    if n_t == 0 or n_u == 0:
        raise ValueError("MTL needs labeled trusted and untrusted data")
    union = concat(ds.trusted, ds.untrusted)
    w = np.concatenate([np.full(len(ds.trusted), mtl.lam / n_t), np.full(len(ds.untrusted), (1.0 - mtl.lam) / n_u)])
    return fit_weighted(union, w, cfg)


@dataclass(frozen=True, eq=False)
class BoostEnsemble:
    """Round models with their vote weights ``ln(1 / beta_t)``.

    Only rounds from ``half_point`` on vote. ``weight_history`` holds the
    normalized sample distribution over ``D_U`` then ``D_T`` before each round.
    """

    members: list[tuple[ProbClassifier, float]]
    half_point: int
    errors: list[float] = field(default_factory=list)
    weight_history: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def rounds(self) -> int:
        return len(self.members)

    @property
    def voters(self) -> list[tuple[ProbClassifier, float]]:
        return self.members[self.half_point:]

    @property
    def class_count(self) -> int:
        return self.members[0][0].class_count

    @property
    def dim(self) -> int:
        return self.members[0][0].dim

    def predict_proba(self, X) -> np.ndarray:
        """Vote-weighted mean of the voting members' probabilities."""
        voters = self.voters
        total = sum(v for _, v in voters)
        if not total > 0:
            raise ValueError("ensemble has no voter with positive weight")
        return sum(v * m.predict_proba(X) for m, v in voters) / total

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": 1,
                "half_point": self.half_point,
                "errors": self.errors,
                "members": [{"model": m.to_text(), "vote": v} for m, v in self.members],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> BoostEnsemble:
        d = json.loads(text)
        members = [(ProbClassifier.from_text(r["model"]), float(r["vote"])) for r in d["members"]]
        return cls(members, int(d["half_point"]), list(d.get("errors", [])))


def tradaboost_fit(ds: BiqualityDataset, rounds: int, cfg: TrainConfig) -> BoostEnsemble:
    """Binary TrAdaBoost with the logistic learner as weak learner.

    Trusted mistakes are upweighted by ``1 / beta_t`` with
    ``beta_t = err_t / (1 - err_t)``; untrusted mistakes are downweighted by
    the fixed ``beta = 1 / (1 + sqrt(2 ln n_U / N))``. Boosting stops early
    at a round whose trusted error reaches 0.5; that round is discarded.
    """
    if ds.class_count != 2:
        raise ValueError("TrAdaBoost supports binary tasks only")
    if rounds < 2:
        raise ValueError("TrAdaBoost needs at least 2 rounds")
    src = ds.untrusted.labeled()
    tgt = ds.trusted.labeled()
    n_u, n_t = len(src), len(tgt)
    if n_u == 0 or n_t == 0:
        raise ValueError("TrAdaBoost needs labeled trusted and untrusted data")
    union = concat(src, tgt)
    y = union.labels
    is_t = np.arange(n_u + n_t) >= n_u
    beta_u = 1.0 / (1.0 + math.sqrt(2.0 * math.log(n_u) / rounds))

    w = np.ones(n_u + n_t)
    members: list[tuple[ProbClassifier, float]] = []
    errors: list[float] = []
    history: list[np.ndarray] = []
    for _ in range(rounds):
        p = w / w.sum()
        history.append(p)
        h = fit_weighted(union, p, cfg)
        miss = (h.predict(union.features) != y).astype(float)
        err = float(p[is_t] @ miss[is_t] / p[is_t].sum())
        if err >= 0.5:
            break
        err = max(err, ERR_FLOOR)
        beta_t = err / (1.0 - err)
        members.append((h, math.log(1.0 / beta_t)))
        errors.append(err)
        w = np.where(is_t, w * beta_t ** (-miss), w * beta_u**miss)
        # keep the distribution finite when trusted weights explode
        w = w / w.max()
        w = np.maximum(w, 1e-300)
    history.append(w / w.sum())
    if not members:
        raise ValueError("TrAdaBoost stopped before completing a round (trusted error >= 0.5)")
    return BoostEnsemble(members, len(members) // 2, errors, history)
