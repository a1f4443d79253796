"""Quality-diversity ensemble search over a two-dimensional behavior space.

HAPEns places every ensemble in a grid spanned by its average loss
correlation and a hardware cost; each cell keeps the lowest-loss ensemble
seen. QDO-ES runs the same loop with a cost-blind second dimension
(entropy of the weight vector).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import metrics
from .ensemble import Ensemble, EnsembleSet, Evaluator
from .library import ModelLibrary

log = logging.getLogger(__name__)

COST_METRICS = ("inference_time", "memory", "disk", "ensemble_size")
_METRIC_ALIASES = {"time": "inference_time", "size": "ensemble_size"}

MAX_ATTEMPTS = 50
MAX_INCREMENT = 8
MAX_INITIAL_SUPPORT = 8
SAMPLING_WINDOW = 10


def canonical_metric(name: str) -> str:
    name = _METRIC_ALIASES.get(name, name)
    if name not in COST_METRICS:
        raise ValueError(f"unknown cost metric {name!r}; expected one of {COST_METRICS}")
    return name


class BehaviorDescriptor(NamedTuple):
    alc: float
    hw: float


@dataclass(frozen=True)
class HapensConfig:
    cost_metric: str = "memory"
    initial_population: int = 20
    iterations: int = 100
    offspring_per_iteration: int = 20
    p_mac: float = 0.5
    remap_period: int = 10
    seed: int = 0
    grid_size: int = 7

    def __post_init__(self):
        object.__setattr__(self, "cost_metric", canonical_metric(self.cost_metric))
        counts = (
            self.initial_population,
            self.iterations,
            self.offspring_per_iteration,
            self.remap_period,
            self.grid_size,
        )
        if min(counts) < 1:
            raise ValueError("all HAPEns counts must be at least 1")
        if not 0.0 <= self.p_mac <= 1.0:
            raise ValueError(f"p_mac must lie in [0, 1], got {self.p_mac}")


def behavior_descriptor(lib: ModelLibrary, r, cost_metric: str) -> BehaviorDescriptor:
    metric = canonical_metric(cost_metric)
    return BehaviorDescriptor(
        metrics.average_loss_correlation(lib, r), metrics.ensemble_costs(lib, r).metric(metric)
    )


def quantile_cuts(values, n_bins: int) -> np.ndarray:
    """``n_bins + 1`` cut points at evenly spaced quantiles of ``values``.

    Uses midpoint plotting positions (``(i - 0.5) / n``) with linear
    interpolation, so ``n_bins`` distinct equally spaced values land in
    ``n_bins`` separate bins.
    """
    q = np.linspace(0.0, 1.0, n_bins + 1)
    return np.quantile(np.asarray(values, dtype=float), q, method="hazen")


def bin_index(value: float, cuts: np.ndarray) -> int:
    # inner cuts only: below the first cut clamps to 0, above the last to n_bins - 1
    return int(np.searchsorted(cuts[1:-1], value, side="left"))


class Archive:
    """A ``grid_size x grid_size`` elite grid with sliding (quantile) boundaries."""

    def __init__(self, grid_size: int = 7, history=()):
        self.grid_size = grid_size
        self.cells: dict[tuple[int, int], Ensemble] = {}
        self.history: list[tuple[float, float]] = [tuple(h) for h in history]
        self.log: list[tuple] = []
        if self.history:
            self.boundaries = self.cuts_for(self.history)
        else:
            self.boundaries = np.zeros((2, grid_size + 1))

    def __len__(self) -> int:
        return len(self.cells)

    def cuts_for(self, behaviors) -> np.ndarray:
        h = np.asarray(behaviors, dtype=float).reshape(-1, 2)
        return np.stack([quantile_cuts(h[:, d], self.grid_size) for d in range(2)])

    def cell_of(self, behavior) -> tuple[int, int]:
        return (
            bin_index(behavior[0], self.boundaries[0]),
            bin_index(behavior[1], self.boundaries[1]),
        )

    def insert(self, ens: Ensemble) -> bool:
        """Offer an evaluated ensemble; True if it became its cell's elite."""
        if ens.behavior is None:
            raise ValueError("ensemble has no behavior descriptor")
        self.history.append(tuple(ens.behavior))
        cell = self.cell_of(ens.behavior)
        incumbent = self.cells.get(cell)
        accepted = incumbent is None or ens.val_loss < incumbent.val_loss
        if accepted:
            self.cells[cell] = ens
        self.log.append(("insert", cell, ens.val_loss, accepted))
        return accepted

    def remap(self):
        """Recompute boundaries from the full history and re-bucket the elites."""
        if not self.history:
            raise ValueError("cannot remap an archive with no history")
        self.boundaries = self.cuts_for(self.history)
        old = [self.cells[c] for c in sorted(self.cells)]
        self.cells = {}
        placed = []
        for ens in old:
            cell = self.cell_of(ens.behavior)
            placed.append((cell, ens.val_loss))
            incumbent = self.cells.get(cell)
            if incumbent is None or ens.val_loss < incumbent.val_loss:
                self.cells[cell] = ens
        self.log.append(("remap", placed))

    def elites(self) -> list[Ensemble]:
        return [self.cells[c] for c in sorted(self.cells)]

    def best(self) -> Ensemble:
        if not self.cells:
            raise ValueError("empty archive")
        return min(self.elites(), key=lambda e: e.val_loss)


@dataclass
class SamplingState:
    """Probability of picking the best elite (vs. a random one) and its acceptance tally."""

    mode_probability: float = 0.5
    window_tally: dict = field(default_factory=lambda: {"best": 0, "random": 0})

    def record(self, modes, accepted: bool):
        if accepted:
            for mode in modes:
                self.window_tally[mode] += 1


def update_sampling_state(state: SamplingState, step: float = 0.1) -> SamplingState:
    """Shift probability towards whichever mode earned more acceptances; ties explore."""
    tally = state.window_tally
    delta = step if tally["best"] > tally["random"] else -step
    prob = round(min(0.9, max(0.1, state.mode_probability + delta)), 10)
    return SamplingState(prob)


def select_parents(archive: Archive, state: SamplingState, rng: np.random.Generator):
    """Draw two parents; returns ``((first, second), (mode_first, mode_second))``."""
    elites = archive.elites()
    if not elites:
        raise ValueError("empty archive")
    best = archive.best()
    parents, modes = [], []
    for _ in range(2):
        if rng.random() < state.mode_probability:
            parents.append(best)
            modes.append("best")
        else:
            parents.append(elites[int(rng.integers(len(elites)))])
            modes.append("random")
    return tuple(parents), tuple(modes)


def crossover(r, r2, rng: np.random.Generator, cuts: tuple[int, int] | None = None) -> np.ndarray:
    """Two-point crossover over the joint support, else rounded-up average.

    ``cuts`` (1-based ``a < b``) overrides the random cut points.
    """
    r = metrics.as_counts(r)
    r2 = metrics.as_counts(r2)
    support = np.flatnonzero((r > 0) | (r2 > 0))
    child = np.zeros_like(r)
    if support.size >= 3:
        if cuts is None:
            a, b = np.sort(rng.choice(np.arange(1, support.size + 1), size=2, replace=False))
        else:
            a, b = cuts
        for k, idx in enumerate(support, start=1):
            child[idx] = r[idx] if (k <= a or k > b) else r2[idx]
    if support.size < 3 or not child.any():
        child = (r + r2 + 1) // 2
    return child


def mutate(
    child,
    seen,
    rng: np.random.Generator,
    max_attempts: int = MAX_ATTEMPTS,
    max_increment: int = MAX_INCREMENT,
) -> tuple[np.ndarray, int]:
    """Add ``increment`` to one uniformly drawn entry, rejecting vectors in ``seen``.

    Rounds of ``max_attempts`` draws start at increment 1 and double after
    each failed round up to ``max_increment``. Returns the candidate and
    the increment used; an increment above 1 means the emergency brake
    fired. If every round fails the last (already seen) candidate is
    returned.
    """
    child = metrics.as_counts(child)
    p = child.size
    increment = 1
    cand = child
    while True:
        for _ in range(max_attempts):
            cand = child.copy()
            cand[int(rng.integers(p))] += increment
            if tuple(cand.tolist()) not in seen:
                return cand, increment
        if increment >= max_increment:
            return cand, increment
        increment *= 2


def sample_initial_counts(p: int, rng: np.random.Generator) -> np.ndarray:
    s = int(rng.integers(1, min(MAX_INITIAL_SUPPORT, p) + 1))
    return np.bincount(rng.integers(0, p, size=s), minlength=p).astype(np.int64)


Describe = Callable[[Evaluator, Ensemble], tuple]


def hardware_describer(cost_metric: str) -> Describe:
    metric = canonical_metric(cost_metric)

    def describe(ev: Evaluator, ens: Ensemble):
        return BehaviorDescriptor(ev.alc(ens.counts), ens.costs.metric(metric))

    return describe


def entropy_describer(ev: Evaluator, ens: Ensemble):
    return BehaviorDescriptor(ev.alc(ens.counts), metrics.weight_entropy(ens.counts))


class SearchResult(NamedTuple):
    ensembles: EnsembleSet
    archive: Archive
    evaluator: Evaluator


class _Search:
    def __init__(self, lib, config, rng, describe, method, evaluator=None):
        self.lib = lib
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.describe = describe
        self.method = method
        self.ev = evaluator if evaluator is not None else Evaluator(lib)
        self.emitted: list[Ensemble] = []
        self.duplicates = 0

    def emit(self, counts, iteration: int) -> Ensemble:
        if tuple(counts.tolist()) in self.ev:
            self.duplicates += 1
        base = self.ev.evaluate(counts)
        ens = base.relabel(self.method, iteration, tuple(self.describe(self.ev, base)))
        self.emitted.append(ens)
        return ens

    def init_population(self) -> list[Ensemble]:
        return [
            self.emit(sample_initial_counts(self.lib.p, self.rng), 0)
            for _ in range(self.config.initial_population)
        ]

    def run(self) -> SearchResult:
        cfg, rng = self.config, self.rng
        population = self.init_population()
        # initial boundaries come from the initial population; insert() then records its history
        archive = Archive(cfg.grid_size)
        archive.boundaries = archive.cuts_for([e.behavior for e in population])
        for ens in population:
            archive.insert(ens)

        state = SamplingState()
        for it in range(1, cfg.iterations + 1):
            p_mac = cfg.p_mac
            for _ in range(cfg.offspring_per_iteration):
                (pa, pb), modes = select_parents(archive, state, rng)
                child = crossover(pa.counts, pb.counts, rng)
                roll = rng.random()
                if roll < p_mac or tuple(child.tolist()) in self.ev:
                    child, increment = mutate(child, self.ev, rng)
                    if increment > 1:
                        p_mac = 1.0
                        log.debug("emergency brake at iteration %d (increment %d)", it, increment)
                ens = self.emit(child, it)
                state.record(modes, archive.insert(ens))
            if it % cfg.remap_period == 0:
                archive.remap()
            if it % SAMPLING_WINDOW == 0:
                state = update_sampling_state(state)

        params = {
            "initial_population": cfg.initial_population,
            "iterations": cfg.iterations,
            "offspring_per_iteration": cfg.offspring_per_iteration,
            "p_mac": cfg.p_mac,
            "remap_period": cfg.remap_period,
            "grid_size": cfg.grid_size,
        }
        if self.method == "hapens":
            params["cost_metric"] = cfg.cost_metric
        result = EnsembleSet(
            self.method, cfg.seed, self.emitted, self.lib.fingerprint, params, self.duplicates
        )
        return SearchResult(result, archive, self.ev)


def init_population(
    lib: ModelLibrary, config: HapensConfig, rng: np.random.Generator, evaluator=None
) -> list[Ensemble]:
    search = _Search(lib, config, rng, hardware_describer(config.cost_metric), "hapens", evaluator)
    return search.init_population()


def hapens_search(lib, config: HapensConfig, rng=None, evaluator=None) -> SearchResult:
    describe = hardware_describer(config.cost_metric)
    return _Search(lib, config, rng, describe, "hapens", evaluator).run()


def qdo_es_search(lib, config: HapensConfig, rng=None, evaluator=None) -> SearchResult:
    return _Search(lib, config, rng, entropy_describer, "qdo-es", evaluator).run()


def hapens_run(lib: ModelLibrary, config: HapensConfig, rng=None) -> EnsembleSet:
    """Run HAPEns and return every ensemble it evaluated, in evaluation order."""
    return hapens_search(lib, config, rng).ensembles


def qdo_es_run(lib: ModelLibrary, config: HapensConfig, rng=None) -> EnsembleSet:
    return qdo_es_search(lib, config, rng).ensembles
