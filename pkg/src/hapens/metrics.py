"""Scalar kernels shared by every selector and by the evaluation layer."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .library import ModelEntry, ModelLibrary

LOSS_CLIP = 1e-15
COST_FIELDS = ("inference_time", "memory", "disk")


@dataclass(frozen=True)
class EnsembleCosts:
    inference_time: float
    memory: float
    disk: float
    size: int

    def metric(self, name: str) -> float:
        if name in ("time", "inference_time"):
            return self.inference_time
        if name in ("size", "ensemble_size"):
            return float(self.size)
        if name in ("memory", "disk"):
            return getattr(self, name)
        raise ValueError(f"unknown cost metric {name!r}")

    def to_dict(self) -> dict:
        return {
            "inference_time": self.inference_time,
            "memory": self.memory,
            "disk": self.disk,
            "size": self.size,
        }


def as_counts(r) -> np.ndarray:
    counts = np.asarray(r, dtype=np.int64)
    if counts.ndim != 1 or np.any(counts < 0):
        raise ValueError("repetition vector must be a 1-D array of non-negative integers")
    return counts


def to_weights(r) -> np.ndarray:
    """Weights ``c_j / T`` of a repetition vector."""
    counts = as_counts(r)
    total = int(counts.sum())
    if total == 0:
        raise ValueError("empty ensemble")
    return counts / total


def ensemble_predict(lib: ModelLibrary, w, split: str = "val") -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (lib.p,):
        raise ValueError(f"dimension mismatch: {w.shape[0] if w.ndim else 0} weights for {lib.p} models")
    return np.tensordot(w, lib.stacked(split), axes=1)


def midranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks; tied scores share the mean of their positions."""
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    new_group = np.empty(s.size, dtype=bool)
    new_group[0] = True
    np.not_equal(s[1:], s[:-1], out=new_group[1:])
    group = np.cumsum(new_group) - 1
    sizes = np.bincount(group)
    mid = np.cumsum(sizes) - (sizes - 1) / 2.0
    ranks = np.empty(s.size)
    ranks[order] = mid[group]
    return ranks


def _binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("degenerate class: need at least one positive and one negative")
    u = midranks(scores)[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(pred, labels) -> float:
    """ROC AUC; macro one-vs-rest when there are more than two classes.

    ``pred`` is an ``(n, K)`` probability matrix (a 1-D vector is read as
    the positive-class score of a binary problem).
    """
    pred = np.asarray(pred, dtype=float)
    labels = np.asarray(labels)
    if pred.ndim == 1:
        return _binary_auc(pred, labels == 1)
    if pred.shape[0] != labels.shape[0]:
        raise ValueError("dimension mismatch between predictions and labels")
    K = pred.shape[1]
    if K == 2:
        return _binary_auc(pred[:, 1], labels == 1)
    return float(np.mean([_binary_auc(pred[:, k], labels == k) for k in range(K)]))


def fitness_loss(lib: ModelLibrary, w, split: str = "val") -> float:
    return 1.0 - roc_auc(ensemble_predict(lib, w, split), lib.labels(split))


def per_sample_log_loss(model: ModelEntry, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    probs = model.val_predictions[np.arange(labels.size), labels]
    return -np.log(np.clip(probs, LOSS_CLIP, 1.0))


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation, 0 when either vector is constant."""
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(da @ da), np.sqrt(db @ db)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def loss_correlation_matrix(lib: ModelLibrary) -> np.ndarray:
    """``(p, p)`` Pearson matrix of per-sample validation losses, diagonal 1."""
    losses = np.stack([per_sample_log_loss(m, lib.val_labels) for m in lib.models])
    centered = losses - losses.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", centered, centered))
    safe = np.where(norms > 0, norms, 1.0)
    unit = centered / safe[:, None]
    corr = np.clip(unit @ unit.T, -1.0, 1.0)
    flat = norms == 0
    corr[flat, :] = 0.0
    corr[:, flat] = 0.0
    np.fill_diagonal(corr, 1.0)
    return corr


def average_loss_correlation(lib: ModelLibrary, r) -> float:
    counts = as_counts(r)
    active = np.flatnonzero(counts)
    if active.size == 0:
        raise ValueError("empty ensemble")
    if active.size == 1:
        return 1.0
    losses = {j: per_sample_log_loss(lib.models[j], lib.val_labels) for j in active}
    return float(np.mean([pearson(losses[j], losses[k]) for j, k in combinations(active, 2)]))


def ensemble_costs(lib: ModelLibrary, r) -> EnsembleCosts:
    """Costs of an ensemble: each model with a non-zero count is paid for once."""
    counts = as_counts(r)
    active = counts > 0
    if not active.any():
        raise ValueError("empty ensemble")
    t, m, d = lib.cost_matrix[active].sum(axis=0)
    return EnsembleCosts(float(t), float(m), float(d), int(active.sum()))


def min_max_normalize(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def hardware_aggregate(cost_rows) -> np.ndarray:
    """Mean of min-max normalized time, memory and disk across ``cost_rows``."""
    table = np.array([[getattr(c, f) for f in COST_FIELDS] for c in cost_rows], dtype=float)
    normed = np.column_stack([min_max_normalize(table[:, i]) for i in range(3)])
    return normed.mean(axis=1)


def weight_entropy(r) -> float:
    w = to_weights(r)
    w = w[w > 0]
    return max(0.0, float(-(w * np.log(w)).sum()))
