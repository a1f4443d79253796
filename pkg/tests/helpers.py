"""Library builders and independent oracles shared by the test modules."""
from __future__ import annotations

import numpy as np

from hapens import metrics
from hapens.indicators import pareto_front
from hapens.library import HardwareCost, ModelEntry, ModelLibrary, SyntheticConfig, generate_synthetic


def make_library(val_preds, val_labels, test_preds=None, test_labels=None, costs=None, names=None):
    """Build a library from per-model positive-class scores or full matrices."""

    def as_matrix(x):
        x = np.asarray(x, dtype=float)
        return np.column_stack([1.0 - x, x]) if x.ndim == 1 else x

    val = [as_matrix(v) for v in val_preds]
    test = [as_matrix(t) for t in test_preds] if test_preds is not None else val
    p = len(val)
    costs = costs or [(0.1 * (j + 1), 100.0 * (j + 1), 50.0 * (j + 1)) for j in range(p)]
    names = names or [f"m{j}" for j in range(p)]
    models = tuple(
        ModelEntry(names[j], val[j], test[j], HardwareCost(*costs[j])) for j in range(p)
    )
    return ModelLibrary(
        models,
        np.asarray(val_labels),
        np.asarray(test_labels if test_labels is not None else val_labels),
        val[0].shape[1],
    )


def random_library(seed: int, p: int, n_val: int, K: int = 2, n_test: int | None = None):
    return generate_synthetic(
        SyntheticConfig(p=p, n_val=n_val, n_test=n_test or n_val, K=K, seed=seed)
    )


def oracle_step(lib, counts, beta=0.0):
    """Score every one-model extension from scratch; return the argmin index."""
    scores = []
    cands = []
    for m in range(lib.p):
        c = list(counts)
        c[m] += 1
        cands.append(c)
    perf = [metrics.fitness_loss(lib, metrics.to_weights(c)) for c in cands]
    times = [sum(lib.models[j].cost.inference_time for j in range(lib.p) if c[j] > 0) for c in cands]

    def norm(v):
        lo, hi = min(v), max(v)
        return [0.0 if hi == lo else (x - lo) / (hi - lo) for x in v]

    for a, b in zip(norm(perf), norm(times)):
        scores.append((1 - beta) * a + beta * b)
    best = min(scores)
    return scores.index(best)


def oracle_trajectory(lib, iterations, beta=0.0):
    counts = [0] * lib.p
    out = []
    for _ in range(iterations):
        counts[oracle_step(lib, counts, beta)] += 1
        out.append(tuple(counts))
    return out


# hand-decomposed fixtures: (points, rectangle sum with reference (1, 1), decimal value)
HV_FIXTURES = [
    ([(0.5, 0.5)], (1 - 0.5) * (1 - 0.5), 0.25),
    ([(0.2, 0.6), (0.6, 0.2)], (0.6 - 0.2) * (1 - 0.6) + (1 - 0.6) * (1 - 0.2), 0.48),
    ([(1.0, 0.3)], 0.0, 0.0),
    (
        [(0.25, 0.75), (0.5, 0.5), (0.75, 0.25)],
        (0.5 - 0.25) * (1 - 0.75) + (0.75 - 0.5) * (1 - 0.5) + (1 - 0.75) * (1 - 0.25),
        0.375,
    ),
    # dominated and duplicate points add nothing
    ([(0.0, 0.5), (0.5, 0.0), (0.5, 0.0), (0.5, 0.5), (0.75, 0.75)], (0.5 - 0.0) * (1 - 0.5) + (1 - 0.5) * (1 - 0.0), 0.75),
]


def monte_carlo_hv(points, n=1_000_000, seed=0):
    samples = np.random.default_rng(seed).random((n, 2))
    front = pareto_front(points)
    front = front[np.all(front < 1.0, axis=1)]
    if len(front) == 0:
        return 0.0
    # best cost among points whose loss is <= the sample's loss
    idx = np.searchsorted(front[:, 0], samples[:, 0], side="right") - 1
    prefix_min = np.minimum.accumulate(front[:, 1])
    ok = idx >= 0
    dominated = np.zeros(n, dtype=bool)
    dominated[ok] = prefix_min[idx[ok]] <= samples[ok, 1]
    return dominated.mean()


def replay(log):
    """Rebuild per-cell minimum losses from the archive's insertion log."""
    cells = {}
    for entry in log:
        if entry[0] == "insert":
            _, cell, loss, accepted = entry
            should = cell not in cells or loss < cells[cell]
            assert should == accepted
            if should:
                cells[cell] = loss
        else:
            cells = {}
            for cell, loss in entry[1]:
                if cell not in cells or loss < cells[cell]:
                    cells[cell] = loss
    return cells
