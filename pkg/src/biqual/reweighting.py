"""Importance reweighting: IRBL, kernel mean matching and DIW."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .data import BiqualityDataset, LabeledSet, concat, split_by_class
from .learner import EPS, ProbClassifier, TrainConfig, fit, fit_weighted

IRBL_FLOOR = 1e-6
IRBL_CAP = 100.0


class KmmConvergenceWarning(UserWarning):
    pass


def irbl_weights(f_T, f_U, untrusted: LabeledSet, cap: float = IRBL_CAP) -> np.ndarray:
    """``f_T(x)[y] / f_U(x)[y]`` for each untrusted row, floored and capped.

    Masked rows get weight 0.
    """
    if f_T.class_count != f_U.class_count or f_T.dim != f_U.dim:
        raise ValueError("f_T and f_U must share K and d")
    y = untrusted.labels
    live = untrusted.labeled_mask
    beta = np.zeros(len(untrusted))
    if np.any(live):
        X = untrusted.features[live]
        rows = np.arange(live.sum())
        num = f_T.predict_proba(X)[rows, y[live]]
        den = np.maximum(f_U.predict_proba(X)[rows, y[live]], IRBL_FLOOR)
        beta[live] = np.clip(num / den, 0.0, cap)
    return beta


@dataclass(frozen=True, eq=False)
class IrblResult:
    model: ProbClassifier
    weights: np.ndarray  # over D_U rows


def irbl_fit_full(ds: BiqualityDataset, cfg: TrainConfig, cap: float = IRBL_CAP) -> IrblResult:
    if len(ds.trusted) == 0 or len(ds.untrusted) == 0:
        raise ValueError("IRBL needs both trusted and untrusted data")
    missing = np.flatnonzero(ds.trusted.class_counts() == 0)
    if missing.size:
        raise ValueError(f"class {int(missing[0])} has no trusted examples")
    f_T = fit(ds.trusted, cfg)
    f_U = fit(ds.untrusted, cfg)
    beta = irbl_weights(f_T, f_U, ds.untrusted, cap)
    union = concat(ds.trusted, ds.untrusted)
    w = np.concatenate([np.ones(len(ds.trusted)), beta])
    return IrblResult(fit_weighted(union, w, cfg), beta)


def irbl_fit(ds: BiqualityDataset, cfg: TrainConfig, cap: float = IRBL_CAP) -> ProbClassifier:
    return irbl_fit_full(ds, cfg, cap).model


# Kernel mean matching -----------------------------------------------------

@dataclass(frozen=True)
class KmmConfig:
    """``bandwidth`` is a positive float or ``"median-heuristic"``.

    The solver stops once a 50-iteration window improves the objective by
    less than ``tol`` times the total improvement so far.
    """

    bandwidth: float | str = "median-heuristic"
    weight_cap: float = 10.0
    slack: float = 0.01
    max_iters: int = 2000
    step_size: float | None = None
    tol: float = 1e-4

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median-heuristic":
                raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.weight_cap > 0 or self.slack < 0 or self.max_iters < 1:
            raise ValueError("invalid KMM configuration")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")


def median_heuristic(*samples: np.ndarray, max_points: int = 2000) -> float:
    """Median pairwise distance of the pooled sample, ignoring exact duplicates.

    Pools larger than ``max_points`` are thinned by a fixed stride.
    """
    Z = np.vstack(samples)
    if len(Z) > max_points:
        Z = Z[:: int(np.ceil(len(Z) / max_points))]
    d = pdist(Z)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def gaussian_kernel(A: np.ndarray, B: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * bandwidth**2))


def kmm_objective(beta, source, target, bandwidth: float) -> float:
    """Squared RKHS distance between the beta-weighted source mean and the target mean."""
    beta = np.asarray(beta, dtype=float)
    n, m = len(source), len(target)
    Kss = gaussian_kernel(source, source, bandwidth)
    Kst = gaussian_kernel(source, target, bandwidth)
    Ktt = gaussian_kernel(target, target, bandwidth)
    return float(beta @ Kss @ beta / n**2 - 2.0 * beta @ Kst.sum(axis=1) / (n * m) + Ktt.sum() / m**2)


def project_box_mean(v: np.ndarray, cap: float, lo_sum: float, hi_sum: float) -> np.ndarray:
    """Euclidean projection onto ``{0 <= b <= cap, lo_sum <= sum(b) <= hi_sum}``."""
    b = np.clip(v, 0.0, cap)
    s = b.sum()
    if lo_sum <= s <= hi_sum:
        return b
    target = lo_sum if s < lo_sum else hi_sum
    # sum(clip(v - tau)) is nonincreasing in tau
    lo, hi = v.min() - cap, v.max()
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        if np.clip(v - tau, 0.0, cap).sum() > target:
            lo = tau
        else:
            hi = tau
        if hi - lo < 1e-15 * max(1.0, abs(tau)):
            break
    return np.clip(v - 0.5 * (lo + hi), 0.0, cap)


def kmm_weights(source, target, cfg: KmmConfig = KmmConfig()) -> np.ndarray:
    """Weights on ``source`` rows matching its kernel mean to ``target``'s.

    Projected gradient descent (Nesterov momentum, restarted whenever the
    objective rises) on the box ``[0, B]`` with ``|mean - 1| <= slack``,
    started from all-ones. Emits :class:`KmmConvergenceWarning` and returns the
    best iterate when ``max_iters`` is exhausted.
    """
    source = np.atleast_2d(np.asarray(source, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    n, m = len(source), len(target)
    if n < 1 or m < 1:
        raise ValueError("KMM needs at least one source and one target row")
    if cfg.weight_cap * n < n * (1.0 - cfg.slack):
        raise ValueError("weight cap too small for the mean constraint")
    sigma = median_heuristic(source, target) if cfg.bandwidth == "median-heuristic" else float(cfg.bandwidth)
    Kss = gaussian_kernel(source, source, sigma)
    kappa = gaussian_kernel(source, target, sigma).sum(axis=1) * (n / m)
    # J(b) = (b K b - 2 kappa b) / n^2, up to a constant
    lam_max = np.linalg.eigvalsh(Kss)[-1] if n <= 3000 else float(Kss.sum(axis=1).max())
    lipschitz = 2.0 * max(lam_max, EPS) / n**2
    step = cfg.step_size if cfg.step_size is not None else 1.0 / lipschitz
    lo_sum, hi_sum = n * (1.0 - cfg.slack), n * (1.0 + cfg.slack)

    def value(b):
        return float(b @ (Kss @ b) - 2.0 * kappa @ b) / n**2

    # accelerated projected gradient with function-value restart
    beta = project_box_mean(np.ones(n), cfg.weight_cap, lo_sum, hi_sum)
    y, t = beta, 1.0
    best, best_val = beta, value(beta)
    start_val = window_val = prev_val = best_val
    for it in range(1, cfg.max_iters + 1):
        grad = 2.0 * (Kss @ y - kappa) / n**2
        nxt = project_box_mean(y - step * grad, cfg.weight_cap, lo_sum, hi_sum)
        val = value(nxt)
        if val < best_val:
            best, best_val = nxt, val
        if it % 50 == 0:
            if window_val - best_val <= cfg.tol * (start_val - best_val):
                return best
            window_val = best_val
        if val > prev_val:
            y, t = beta, 1.0
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = nxt + ((t - 1.0) / t_next) * (nxt - beta)
        beta, t, prev_val = nxt, t_next, val
    warnings.warn(f"KMM did not converge in {cfg.max_iters} iterations", KmmConvergenceWarning, stacklevel=2)
    return best


def class_prior_ratio(ds: BiqualityDataset) -> np.ndarray:
    """``P_T(y) / P_U(y)`` from label frequencies."""
    pt = ds.trusted.class_counts() / ds.trusted.class_counts().sum()
    pu = ds.untrusted.class_counts() / ds.untrusted.class_counts().sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        return pt / pu


def diw_weights(ds: BiqualityDataset, kmm: KmmConfig = KmmConfig()) -> np.ndarray:
    """Per-class KMM ratio times the class-prior ratio, over D_U rows."""
    ct, cu = ds.trusted.class_counts(), ds.untrusted.class_counts()
    for c in range(ds.class_count):
        if ct[c] == 0:
            raise ValueError(f"class {c} has no trusted examples")
        if cu[c] == 0:
            raise ValueError(f"class {c} has no untrusted examples")
    prior = class_prior_ratio(ds)
    beta = np.zeros(len(ds.untrusted))
    t_slices = split_by_class(ds.trusted)
    for su, st in zip(split_by_class(ds.untrusted), t_slices):
        b = kmm_weights(ds.untrusted.features[su.row_indices], ds.trusted.features[st.row_indices], kmm)
        beta[su.row_indices] = prior[su.class_index] * b
    return beta


@dataclass(frozen=True, eq=False)
class DiwResult:
    model: ProbClassifier
    weights: np.ndarray


def diw_fit_full(ds: BiqualityDataset, kmm: KmmConfig, cfg: TrainConfig, include_trusted: bool = True) -> DiwResult:
    beta = diw_weights(ds, kmm)
    if include_trusted:
        s = concat(ds.untrusted, ds.trusted)
        w = np.concatenate([beta, np.ones(len(ds.trusted))])
    else:
        s, w = ds.untrusted, beta
    return DiwResult(fit_weighted(s, w, cfg), beta)


def diw_fit(ds: BiqualityDataset, kmm: KmmConfig, cfg: TrainConfig, include_trusted: bool = True) -> ProbClassifier:
    return diw_fit_full(ds, kmm, cfg, include_trusted).model


def reweighted_risk(model, s: LabeledSet, weights) -> float:
    """Weight-normalized mean cross-entropy over the labeled rows."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(s),):
        raise ValueError("weights must align with the rows")
    live = s.labeled_mask
    w = w[live]
    if w.sum() <= 0:
        raise ValueError("total weight is zero")
    P = model.predict_proba(s.features[live])
    loss = -np.log(np.maximum(P[np.arange(len(w)), s.labels[live]], EPS))
    return float(w @ loss / w.sum())
