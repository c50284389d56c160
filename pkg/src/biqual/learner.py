"""Weighted multinomial logistic regression trained by full-batch gradient descent.

Every biquality method in this package reduces to fitting this model with
per-sample weights and, for loss correction, a modified per-row loss. A loss
is supplied as a *head*: a callable mapping the ``(n, K)`` probability matrix
to per-row losses and their gradient with respect to the logits.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import LabeledSet

EPS = 1e-12

LossHead = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


def softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class ProbClassifier:
    """Affine scores followed by a softmax.

    ``weights`` has shape ``(K, d)`` and ``biases`` shape ``(K,)``.
    """

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        b = np.array(self.biases, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError("weights must be (K, d) and biases (K,)")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)

    @classmethod
    def zeros(cls, class_count: int, dim: int) -> ProbClassifier:
        return cls(np.zeros((class_count, dim)), np.zeros(class_count))

    @classmethod
    def from_params(cls, params: np.ndarray) -> ProbClassifier:
        return cls(params[:, :-1], params[:, -1])

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def params(self) -> np.ndarray:
        return np.hstack([self.weights, self.biases[:, None]])

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[-1]}")
        return X @ self.weights.T + self.biases

    def predict_proba(self, X) -> np.ndarray:
        """Class probabilities for one row (shape ``(d,)``) or many (``(n, d)``)."""
        return softmax(self.scores(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"logreg-v1 {self.class_count} {self.dim}\n")
        for w, b in zip(self.weights, self.biases):
            out.write(" ".join(repr(float(v)) for v in (*w, b)) + "\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> ProbClassifier:
        lines = text.strip().splitlines()
        tag, k, d = lines[0].split()
        if tag != "logreg-v1":
            raise ValueError(f"unknown model record version {tag!r}")
        k, d = int(k), int(d)
        rows = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
        if rows.shape != (k, d + 1):
            raise ValueError(f"model record declares K={k}, d={d} but holds {rows.shape}")
        return cls.from_params(rows)


def predict_proba(model, x) -> np.ndarray:
    return model.predict_proba(x)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    max_iters: int = 500
    tolerance: float = 1e-6
    l2_penalty: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tolerance < 0 or self.l2_penalty < 0:
            raise ValueError("tolerance and l2_penalty must be >= 0")


def cross_entropy(probs, label: int) -> float:
    return float(-np.log(max(float(np.asarray(probs)[label]), EPS)))


# Loss heads ---------------------------------------------------------------

def ce_head(labels: np.ndarray) -> LossHead:
    """Plain cross-entropy with the probability floor."""
    labels = np.asarray(labels)
    rows = np.arange(len(labels))

    def head(P):
        py = P[rows, labels]
        live = py > EPS
        loss = -np.log(np.maximum(py, EPS))
        G = P.copy()
        G[rows, labels] -= 1.0
        G[~live] = 0.0
        return loss, G

    return head


def forward_head(labels: np.ndarray, T: np.ndarray, corrected: np.ndarray | None = None) -> LossHead:
    """Cross-entropy of ``T^T f(x)`` on ``corrected`` rows, plain elsewhere."""
    labels = np.asarray(labels)
    n = len(labels)
    rows = np.arange(n)
    corrected = np.ones(n, dtype=bool) if corrected is None else np.asarray(corrected, dtype=bool)
    T = np.asarray(T, dtype=float)
    # column y of T gives d(q_y)/d(p) for the corrected rows
    M = np.zeros((n, T.shape[0]))
    M[rows, labels] = 1.0
    M[corrected] = T[:, labels[corrected]].T

    def head(P):
        qy = np.einsum("nk,nk->n", P, M)
        live = qy > EPS
        loss = -np.log(np.maximum(qy, EPS))
        g = np.zeros_like(P)
        g[live] = -M[live] / qy[live, None]
        G = P * (g - np.einsum("nk,nk->n", P, g)[:, None])
        return loss, G

    return head


def backward_head(labels: np.ndarray, T_inv: np.ndarray, corrected: np.ndarray | None = None) -> LossHead:
    """Row ``y`` of ``T^-1`` applied to the per-class loss vector on ``corrected`` rows."""
    labels = np.asarray(labels)
    n = len(labels)
    rows = np.arange(n)
    corrected = np.ones(n, dtype=bool) if corrected is None else np.asarray(corrected, dtype=bool)
    C = np.zeros((n, T_inv.shape[0]))
    C[rows, labels] = 1.0
    C[corrected] = np.asarray(T_inv, dtype=float)[labels[corrected]]

    def head(P):
        live = P > EPS
        L = -np.log(np.maximum(P, EPS))
        loss = np.einsum("nk,nk->n", C, L)
        # d(-log p_k)/dz = p - e_k for unfloored entries
        Cl = np.where(live, C, 0.0)
        G = Cl.sum(axis=1, keepdims=True) * P - Cl
        return loss, G

    return head


# Training -----------------------------------------------------------------

def objective(params: np.ndarray, X: np.ndarray, head: LossHead, weights: np.ndarray, l2: float):
    """Weight-normalized mean loss plus ``l2/2 * ||W||^2`` and its gradient.

    Biases are not penalized.
    """
    W, b = params[:, :-1], params[:, -1]
    P = softmax(X @ W.T + b)
    loss, G = head(P)
    total = weights.sum()
    f = float(weights @ loss) / total + 0.5 * l2 * float(np.sum(W * W))
    Gw = G * (weights / total)[:, None]
    grad = np.empty_like(params)
    grad[:, :-1] = Gw.T @ X + l2 * W
    grad[:, -1] = Gw.sum(axis=0)
    return f, grad


def train(
    X: np.ndarray,
    head: LossHead,
    weights: np.ndarray,
    cfg: TrainConfig,
    class_count: int,
    init: ProbClassifier | None = None,
) -> tuple[ProbClassifier, list[float]]:
    """Gradient descent from zeros; returns the model and the loss history.

    A step that would increase the objective is retried at half the rate,
    and the reduced rate is kept for the remaining iterations.
    """
    X = np.asarray(X, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (X.shape[0],):
        raise ValueError("weights must align with the rows")
    if np.any(~np.isfinite(weights)) or np.any(weights < 0):
        raise ValueError("weights must be finite and nonnegative")
    if not np.any(weights > 0):
        raise ValueError("at least one weight must be positive")
    params = np.zeros((class_count, X.shape[1] + 1)) if init is None else init.params.copy()
    lr = cfg.learning_rate
    f, g = objective(params, X, head, weights, cfg.l2_penalty)
    if not np.isfinite(f):
        raise FloatingPointError("non-finite training loss")
    history = [f]
    for _ in range(cfg.max_iters):
        if np.linalg.norm(g) <= cfg.tolerance:
            break
        while True:
            cand = params - lr * g
            fc, gc = objective(cand, X, head, weights, cfg.l2_penalty)
            if np.isfinite(fc) and fc <= f:
                break
            lr *= 0.5
            if lr < 1e-14:
                raise FloatingPointError("gradient descent cannot decrease the loss")
        params, f, g = cand, fc, gc
        history.append(f)
    return ProbClassifier.from_params(params), history


def fit_weighted(s: LabeledSet, weights, cfg: TrainConfig) -> ProbClassifier:
    """Minimize weighted cross-entropy; masked rows (label -1) are dropped."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(s),):
        raise ValueError(f"{len(weights)} weights for {len(s)} rows")
    keep = s.labeled_mask
    y = s.labels[keep]
    model, _ = train(s.features[keep], ce_head(y), weights[keep], cfg, s.class_count)
    return model


def fit(s: LabeledSet, cfg: TrainConfig) -> ProbClassifier:
    return fit_weighted(s, np.ones(len(s)), cfg)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    balanced_accuracy: float
    mean_log_loss: float


def evaluate(model, test: LabeledSet) -> Metrics:
    """Argmax accuracy (ties go to the lower class), balanced accuracy and log loss."""
    test = test.labeled()
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    P = model.predict_proba(test.features)
    y = test.labels
    pred = np.argmax(P, axis=1)
    hit = pred == y
    recalls = [hit[y == c].mean() for c in range(test.class_count) if np.any(y == c)]
    ll = -np.log(np.maximum(P[np.arange(len(y)), y], EPS))
    return Metrics(float(hit.mean()), float(np.mean(recalls)), float(ll.mean()))
