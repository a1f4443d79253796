"""Evaluated ensembles and the per-library evaluation cache."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .library import ModelLibrary
from .metrics import EnsembleCosts


@dataclass(frozen=True, eq=False)
class Ensemble:
    """A repetition vector with its cached validation/test loss and costs."""

    counts: tuple[int, ...]
    val_loss: float
    test_loss: float
    costs: EnsembleCosts
    behavior: tuple[float, float] | None = None
    method: str = ""
    iteration: int = 0

    @property
    def weights(self) -> np.ndarray:
        return metrics.to_weights(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def relabel(self, method: str, iteration: int, behavior=None) -> "Ensemble":
        return Ensemble(
            self.counts,
            self.val_loss,
            self.test_loss,
            self.costs,
            self.behavior if behavior is None else behavior,
            method,
            iteration,
        )

    def to_dict(self) -> dict:
        d = {
            "counts": list(self.counts),
            "iteration": self.iteration,
            "val_loss": self.val_loss,
            "test_loss": self.test_loss,
            "costs": self.costs.to_dict(),
        }
        if self.behavior is not None:
            d["behavior"] = list(self.behavior)
        return d

    @classmethod
    def from_dict(cls, d: dict, method: str = "") -> "Ensemble":
        behavior = tuple(d["behavior"]) if "behavior" in d else None
        c = d["costs"]
        costs = EnsembleCosts(
            float(c["inference_time"]), float(c["memory"]), float(c["disk"]), int(c["size"])
        )
        return cls(
            tuple(int(x) for x in d["counts"]),
            float(d["val_loss"]),
            float(d["test_loss"]),
            costs,
            behavior,
            method,
            int(d["iteration"]),
        )


@dataclass
class EnsembleSet:
    method: str
    seed: int
    ensembles: list[Ensemble]
    library: str = ""
    params: dict = field(default_factory=dict)
    duplicates: int = 0

    def __post_init__(self):
        if not self.ensembles:
            raise ValueError("an ensemble set cannot be empty")
        sizes = {len(e.counts) for e in self.ensembles}
        if len(sizes) != 1:
            raise ValueError("ensembles in one set must share the library size")

    def __len__(self) -> int:
        return len(self.ensembles)

    def __iter__(self):
        return iter(self.ensembles)

    @property
    def n_unique(self) -> int:
        return len({e.counts for e in self.ensembles})


class Evaluator:
    """Evaluates repetition vectors against one library, memoizing by vector.

    Holds the loss-correlation matrix so behavior descriptors cost
    ``O(|support|^2)`` instead of recomputing Pearson correlations.
    """

    def __init__(self, lib: ModelLibrary):
        self.lib = lib
        self.p = lib.p
        self._val = lib.stacked("val")
        self._test = lib.stacked("test")
        self._corr = None
        self._cache: dict[tuple[int, ...], Ensemble] = {}
        self.n_evaluations = 0

    @property
    def corr(self) -> np.ndarray:
        if self._corr is None:
            self._corr = metrics.loss_correlation_matrix(self.lib)
        return self._corr

    def __contains__(self, counts) -> bool:
        return tuple(counts) in self._cache

    def val_loss(self, counts) -> float:
        """Validation loss only, for greedy inner loops."""
        w = metrics.to_weights(counts)
        return 1.0 - metrics.roc_auc(np.tensordot(w, self._val, axes=1), self.lib.val_labels)

    def evaluate(self, counts) -> Ensemble:
        key = tuple(int(c) for c in counts)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if len(key) != self.p:
            raise ValueError(f"dimension mismatch: {len(key)} counts for {self.p} models")
        w = metrics.to_weights(key)
        val = 1.0 - metrics.roc_auc(np.tensordot(w, self._val, axes=1), self.lib.val_labels)
        test = 1.0 - metrics.roc_auc(np.tensordot(w, self._test, axes=1), self.lib.test_labels)
        ens = Ensemble(key, val, test, metrics.ensemble_costs(self.lib, key))
        self._cache[key] = ens
        self.n_evaluations += 1
        return ens

    def alc(self, counts) -> float:
        active = np.flatnonzero(np.asarray(counts))
        if active.size == 0:
            raise ValueError("empty ensemble")
        if active.size == 1:
            return 1.0
        n = active.size
        sub = self.corr[np.ix_(active, active)]
        # symmetric with unit diagonal: off-diagonal mean from the full sum
        return float((sub.sum() - n) / (n * (n - 1)))
