"""Pareto fronts, 2-D hypervolume and IGD+ in the normalized (loss, cost) space.

Both objectives are minimized. Points are ``(n, 2)`` float arrays of
``(perf_loss, cost)``.
"""
from __future__ import annotations

from itertools import product
from math import comb

import numpy as np

from . import metrics
from .ensemble import EnsembleSet, Evaluator
from .library import ModelLibrary

REFERENCE_POINT = (1.0, 1.0)
COST_MODES = ("time", "memory", "disk", "size", "aggregate")
ORACLE_MAX_P = 6
ORACLE_MAX_T = 4


def _as_points(points) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, 2)


def pareto_mask(points) -> np.ndarray:
    """Mask of non-dominated points; of exact duplicates only the first is kept."""
    pts = _as_points(points)
    n = len(pts)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    keep = np.zeros(n, dtype=bool)
    best_cost = np.inf
    prev = None
    for i in order:
        x, y = pts[i]
        if prev is not None and x == prev[0] and y == prev[1]:
            continue
        # sorted by loss then cost: a point survives iff its cost beats every earlier one
        if y < best_cost:
            keep[i] = True
            best_cost = y
        prev = (x, y)
    return keep


def pareto_front(points) -> np.ndarray:
    """Non-dominated points, duplicates collapsed, sorted by ascending loss."""
    pts = _as_points(points)
    if len(pts) == 0:
        raise ValueError("pareto_front needs at least one point")
    front = pts[pareto_mask(pts)]
    return front[np.lexsort((front[:, 1], front[:, 0]))]


def hypervolume_2d(points, reference=REFERENCE_POINT) -> float:
    """Exact area dominated by ``points`` and bounded by ``reference``."""
    pts = _as_points(points)
    ref = np.asarray(reference, dtype=float)
    pts = pts[np.all(pts < ref, axis=1)]
    if len(pts) == 0:
        return 0.0
    front = pareto_front(pts)
    next_x = np.append(front[1:, 0], ref[0])
    return float(np.sum((next_x - front[:, 0]) * (ref[1] - front[:, 1])))


def igd_plus(solution, reference_front) -> float:
    """Mean over reference points of the one-sided distance to the closest solution point."""
    a = _as_points(solution)
    z = _as_points(reference_front)
    if len(a) == 0 or len(z) == 0:
        raise ValueError("empty front")
    diff = np.maximum(a[None, :, :] - z[:, None, :], 0.0)
    dist = np.sqrt((diff**2).sum(axis=2))
    return float(dist.min(axis=1).mean())


def _raw_cost(sets, cost_mode: str) -> np.ndarray:
    rows = [e.costs for s in sets for e in s.ensembles]
    if cost_mode == "aggregate":
        return metrics.hardware_aggregate(rows)
    if cost_mode not in COST_MODES:
        raise ValueError(f"unknown cost mode {cost_mode!r}; expected one of {COST_MODES}")
    return np.array([c.metric(cost_mode) for c in rows], dtype=float)


def build_objective_space(sets: list[EnsembleSet], cost_mode: str = "aggregate") -> list[np.ndarray]:
    """Project every set into ``[0, 1]^2`` using min/max over the union of all sets."""
    if not sets:
        return []
    libs = {s.library for s in sets}
    if len(libs) > 1:
        raise ValueError(f"incomparable sets: built on different libraries {sorted(libs)}")
    loss = metrics.min_max_normalize([e.test_loss for s in sets for e in s.ensembles])
    cost = metrics.min_max_normalize(_raw_cost(sets, cost_mode))
    points = np.column_stack([loss, cost])
    out, start = [], 0
    for s in sets:
        out.append(points[start : start + len(s.ensembles)])
        start += len(s.ensembles)
    return out


def reference_front(point_sets) -> np.ndarray:
    return pareto_front(np.concatenate([_as_points(p) for p in point_sets]))


def n_compositions(p: int, max_T: int) -> int:
    return sum(comb(T + p - 1, p - 1) for T in range(1, max_T + 1))


def brute_force_front(lib: ModelLibrary, max_T: int = ORACLE_MAX_T, evaluator=None) -> EnsembleSet:
    """Every repetition vector with ``1 <= T <= max_T``, evaluated."""
    if lib.p > ORACLE_MAX_P or max_T > ORACLE_MAX_T or max_T < 1:
        raise ValueError(
            f"instance too large for oracle: p={lib.p}, max_T={max_T} "
            f"(limits p <= {ORACLE_MAX_P}, 1 <= max_T <= {ORACLE_MAX_T})"
        )
    ev = evaluator if evaluator is not None else Evaluator(lib)
    found = []
    for counts in product(range(max_T + 1), repeat=lib.p):
        total = sum(counts)
        if 1 <= total <= max_T:
            found.append(ev.evaluate(counts).relabel("oracle", total))
    found.sort(key=lambda e: (e.total, tuple(-c for c in e.counts)))
    return EnsembleSet("oracle", 0, found, lib.fingerprint, {"max_T": max_T})
