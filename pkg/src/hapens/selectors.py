"""Greedy ensemble selection baselines.

All selectors are deterministic and break ties towards the lowest model
index. Each returned ensemble records its 1-based iteration in
``Ensemble.iteration``; for the greedy family that equals its total pick
count ``T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleSet, Evaluator
from .library import ModelLibrary
from .metrics import min_max_normalize

DEFAULT_ITERATIONS = 50


@dataclass(frozen=True)
class MultiGesConfig:
    beta: float = 0.68
    iterations: int = DEFAULT_ITERATIONS

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")

    @property
    def alpha(self) -> float:
        return 1.0 - self.beta


def _evaluator(lib, evaluator):
    return evaluator if evaluator is not None else Evaluator(lib)


def _candidates(counts: np.ndarray) -> list[np.ndarray]:
    out = []
    for m in range(counts.size):
        cand = counts.copy()
        cand[m] += 1
        out.append(cand)
    return out


def single_best(lib: ModelLibrary, evaluator: Evaluator | None = None) -> EnsembleSet:
    ev = _evaluator(lib, evaluator)
    losses = [ev.val_loss(np.eye(lib.p, dtype=np.int64)[j]) for j in range(lib.p)]
    best = int(np.argmin(losses))  # argmin returns the first minimum
    counts = np.zeros(lib.p, dtype=np.int64)
    counts[best] = 1
    ens = ev.evaluate(counts).relabel("single-best", 1)
    return EnsembleSet("single-best", 0, [ens], lib.fingerprint)


def ges_star(
    lib: ModelLibrary, iterations: int = DEFAULT_ITERATIONS, evaluator: Evaluator | None = None
) -> EnsembleSet:
    """Greedy forward selection with replacement, keeping every intermediate ensemble."""
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    ev = _evaluator(lib, evaluator)
    counts = np.zeros(lib.p, dtype=np.int64)
    trajectory = []
    for it in range(1, iterations + 1):
        losses = [ev.val_loss(c) for c in _candidates(counts)]
        counts[int(np.argmin(losses))] += 1
        trajectory.append(ev.evaluate(counts).relabel("ges-star", it))
    return EnsembleSet("ges-star", 0, trajectory, lib.fingerprint, {"iterations": iterations})


def ges(
    lib: ModelLibrary, iterations: int = DEFAULT_ITERATIONS, evaluator: Evaluator | None = None
) -> EnsembleSet:
    """Classic GES: the earliest snapshot with the lowest validation loss."""
    star = ges_star(lib, iterations, evaluator)
    losses = [e.val_loss for e in star.ensembles]
    best = star.ensembles[int(np.argmin(losses))]
    return EnsembleSet(
        "ges", 0, [best.relabel("ges", best.iteration)], lib.fingerprint, {"iterations": iterations}
    )


def multi_ges_scores(val_losses, times, beta: float) -> np.ndarray:
    """Weighted sum of candidate loss and time, each min-max normalized over the candidates."""
    return (1.0 - beta) * min_max_normalize(val_losses) + beta * min_max_normalize(times)


def multi_ges(
    lib: ModelLibrary,
    config: MultiGesConfig | None = None,
    evaluator: Evaluator | None = None,
) -> EnsembleSet:
    config = config or MultiGesConfig()
    ev = _evaluator(lib, evaluator)
    times = lib.cost_matrix[:, 0]
    counts = np.zeros(lib.p, dtype=np.int64)
    trajectory = []
    for it in range(1, config.iterations + 1):
        cands = _candidates(counts)
        perf = np.array([ev.val_loss(c) for c in cands])
        cand_time = np.array([times[c > 0].sum() for c in cands])
        scores = multi_ges_scores(perf, cand_time, config.beta)
        counts[int(np.argmin(scores))] += 1
        trajectory.append(ev.evaluate(counts).relabel("multi-ges", it))
    params = {"beta": config.beta, "iterations": config.iterations}
    return EnsembleSet("multi-ges", 0, trajectory, lib.fingerprint, params)
