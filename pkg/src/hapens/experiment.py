"""Seeded multi-method runs, run records, and the reports built from them."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import indicators, qdo, selectors
from .ensemble import Ensemble, EnsembleSet, Evaluator
from .library import LibraryError, ModelLibrary, SyntheticConfig, generate_synthetic, load_library

log = logging.getLogger(__name__)

METHODS = ("single-best", "ges", "ges-star", "multi-ges", "hapens", "qdo-es")

_PARAMS = {
    "single-best": {},
    "ges": {"iterations": selectors.DEFAULT_ITERATIONS},
    "ges-star": {"iterations": selectors.DEFAULT_ITERATIONS},
    "multi-ges": {"iterations": selectors.DEFAULT_ITERATIONS, "beta": 0.68},
    "hapens": {
        "cost_metric": "memory",
        "iterations": 100,
        "offspring": 20,
        "init_pop": 20,
        "pmac": 0.5,
        "remap_period": 10,
    },
    "qdo-es": {"iterations": 100, "offspring": 20, "init_pop": 20, "pmac": 0.5, "remap_period": 10},
}


class ConfigError(ValueError):
    pass


class EvaluationError(ValueError):
    pass


@dataclass
class MethodSpec:
    name: str
    label: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in METHODS:
            raise ConfigError(f"unknown method {self.name!r}; valid methods: {', '.join(METHODS)}")
        unknown = set(self.params) - set(_PARAMS[self.name])
        if unknown:
            raise ConfigError(f"method {self.name!r} does not take {sorted(unknown)}")
        self.params = {**_PARAMS[self.name], **self.params}
        if not self.label:
            self.label = self.name
        if self.name == "hapens":
            try:
                self.params["cost_metric"] = qdo.canonical_metric(self.params["cost_metric"])
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        d = dict(d)
        try:
            name = d.pop("name")
        except KeyError:
            raise ConfigError("every method entry needs a 'name'") from None
        label = d.pop("label", "")
        return cls(name, label, d)


@dataclass
class ExperimentConfig:
    methods: list[MethodSpec]
    seeds: list[int]
    library: str | None = None
    synthetic: SyntheticConfig | None = None
    cost_mode: str = "aggregate"
    out: str = "results"

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any((not isinstance(s, int)) or s < 0 or s >= 2**64 for s in self.seeds):
            raise ConfigError("seeds must be non-negative 64-bit integers")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"method labels must be unique, got {labels}")
        if (self.library is None) == (self.synthetic is None):
            raise ConfigError("give exactly one of 'library' or 'synthetic'")
        if self.cost_mode not in indicators.COST_MODES:
            raise ConfigError(
                f"unknown cost mode {self.cost_mode!r}; expected one of {indicators.COST_MODES}"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"methods", "seeds", "library", "synthetic", "cost_mode", "out"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        synthetic = d.get("synthetic")
        if synthetic is not None:
            if "skill_range" in synthetic:
                synthetic = {**synthetic, "skill_range": tuple(synthetic["skill_range"])}
            try:
                synthetic = SyntheticConfig(**synthetic)
                synthetic.check()
            except (TypeError, LibraryError) as exc:
                raise ConfigError(f"bad synthetic config: {exc}") from exc
        return cls(
            methods=[MethodSpec.from_dict(m) for m in d.get("methods", [])],
            seeds=list(d.get("seeds", [])),
            library=d.get("library"),
            synthetic=synthetic,
            cost_mode=d.get("cost_mode", "aggregate"),
            out=d.get("out", "results"),
        )

    def to_dict(self) -> dict:
        return {
            "library": self.library,
            "synthetic": asdict(self.synthetic) if self.synthetic else None,
            "methods": [{"name": m.name, "label": m.label, **m.params} for m in self.methods],
            "seeds": self.seeds,
            "cost_mode": self.cost_mode,
            "out": self.out,
        }

    def load(self) -> ModelLibrary:
        if self.library is not None:
            return load_library(self.library)
        return generate_synthetic(self.synthetic)


def method_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(label.encode())])


def run_method(
    lib: ModelLibrary, spec: MethodSpec, seed: int, evaluator: Evaluator | None = None
) -> EnsembleSet:
    """Run one method on one library; the returned set carries ``spec.label``."""
    p = spec.params
    ev = evaluator if evaluator is not None else Evaluator(lib)
    if spec.name == "single-best":
        result = selectors.single_best(lib, ev)
    elif spec.name == "ges":
        result = selectors.ges(lib, p["iterations"], ev)
    elif spec.name == "ges-star":
        result = selectors.ges_star(lib, p["iterations"], ev)
    elif spec.name == "multi-ges":
        result = selectors.multi_ges(lib, selectors.MultiGesConfig(p["beta"], p["iterations"]), ev)
    else:
        config = qdo.HapensConfig(
            cost_metric=p.get("cost_metric", "memory"),
            initial_population=p["init_pop"],
            iterations=p["iterations"],
            offspring_per_iteration=p["offspring"],
            p_mac=p["pmac"],
            remap_period=p["remap_period"],
            seed=seed,
        )
        rng = method_rng(seed, spec.label)
        # QD searches need their own cache so duplicate accounting is per run
        if spec.name == "hapens":
            result = qdo.hapens_run(lib, config, rng)
        else:
            result = qdo.qdo_es_run(lib, config, rng)
    result.method = spec.label
    result.seed = seed
    result.params = {"method": spec.name, **p}
    result.ensembles = [e.relabel(spec.label, e.iteration) for e in result.ensembles]
    return result


@dataclass
class RunRecord:
    method: str
    seed: int
    wall_time: float
    ensembles: EnsembleSet

    def payload(self) -> dict:
        s = self.ensembles
        return {
            "method": self.method,
            "seed": self.seed,
            "library": s.library,
            "params": s.params,
            "n_ensembles": len(s),
            "n_unique": s.n_unique,
            "duplicates": s.duplicates,
            "ensembles": [e.to_dict() for e in s.ensembles],
        }

    @classmethod
    def from_payload(cls, d: dict, wall_time: float = 0.0) -> "RunRecord":
        ensembles = [Ensemble.from_dict(e, d["method"]) for e in d["ensembles"]]
        s = EnsembleSet(d["method"], d["seed"], ensembles, d["library"], d["params"], d["duplicates"])
        return cls(d["method"], d["seed"], wall_time, s)


def atomic_write(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


def record_path(out: Path, method: str, seed: int) -> Path:
    return Path(out) / "records" / f"{method}__seed{seed}.json"


def cmd_run(config: ExperimentConfig, lib: ModelLibrary | None = None) -> list[Path]:
    """Run every (method, seed) pair and write one record file per pair."""
    lib = lib if lib is not None else config.load()
    out = Path(config.out)
    atomic_write(out / "config.json", dumps({**config.to_dict(), "library_fingerprint": lib.fingerprint}))
    paths, timings = [], []
    shared = Evaluator(lib)
    for spec in config.methods:
        for seed in config.seeds:
            start = time.perf_counter()
            ev = shared if spec.name not in ("hapens", "qdo-es") else None
            result = run_method(lib, spec, seed, ev)
            elapsed = time.perf_counter() - start
            record = RunRecord(spec.label, seed, elapsed, result)
            path = record_path(out, spec.label, seed)
            atomic_write(path, dumps(record.payload()))
            paths.append(path)
            timings.append({"method": spec.label, "seed": seed, "wall_time_s": elapsed})
            log.info("%s seed=%d: %d ensembles in %.2fs", spec.label, seed, len(result), elapsed)
    atomic_write(out / "timings.json", dumps(timings))
    return paths


def load_records(directory) -> list[RunRecord]:
    directory = Path(directory)
    files = sorted(directory.glob("*.json"))
    if not files:
        raise EvaluationError(f"no run records found in {directory}")
    timings = {}
    tpath = directory.parent / "timings.json"
    if tpath.is_file():
        timings = {(t["method"], t["seed"]): t["wall_time_s"] for t in json.loads(tpath.read_text())}
    records = []
    for f in files:
        d = json.loads(f.read_text())
        records.append(RunRecord.from_payload(d, timings.get((d["method"], d["seed"]), 0.0)))
    return records


def _group_by_seed(records: list[RunRecord]) -> dict[int, list[RunRecord]]:
    libs = {r.ensembles.library for r in records}
    if len(libs) != 1:
        raise EvaluationError(f"records come from different libraries: {sorted(libs)}")
    groups: dict[int, list[RunRecord]] = {}
    for r in sorted(records, key=lambda r: (r.seed, r.method)):
        groups.setdefault(r.seed, []).append(r)
    return groups


def _front_list(front: np.ndarray) -> list[list[float]]:
    return [[float(x), float(y)] for x, y in front]


def evaluate_seed(sets: list[EnsembleSet], cost_mode: str) -> dict:
    """HV and IGD+ of each set against the front of all sets together."""
    try:
        spaces = indicators.build_objective_space(sets, cost_mode)
    except ValueError as exc:
        raise EvaluationError(str(exc)) from exc
    ref_front = indicators.reference_front(spaces)
    out = {}
    for s, pts in zip(sets, spaces):
        front = indicators.pareto_front(pts)
        out[s.method] = {
            "hv": indicators.hypervolume_2d(pts),
            "igd_plus": indicators.igd_plus(pts, ref_front),
            "front": _front_list(front),
            "n_ensembles": len(s),
            "n_pareto": int(len(front)),
        }
    return out


def cmd_evaluate(records: list[RunRecord], cost_mode: str = "aggregate") -> dict:
    if cost_mode not in indicators.COST_MODES:
        raise EvaluationError(f"unknown cost mode {cost_mode!r}")
    groups = _group_by_seed(records)
    per_seed = []
    for seed, recs in groups.items():
        per_seed.append({"seed": seed, "methods": evaluate_seed([r.ensembles for r in recs], cost_mode)})

    methods = sorted({m for entry in per_seed for m in entry["methods"]})
    collected: dict[str, dict[str, list[float]]] = {
        m: {"hv": [], "igd_plus": [], "hv_rank": [], "igd_plus_rank": []} for m in methods
    }
    for entry in per_seed:
        present = sorted(entry["methods"])
        hv = np.array([entry["methods"][m]["hv"] for m in present])
        igd = np.array([entry["methods"][m]["igd_plus"] for m in present])
        hv_rank, igd_rank = rankdata(-hv), rankdata(igd)
        for i, m in enumerate(present):
            collected[m]["hv"].append(float(hv[i]))
            collected[m]["igd_plus"].append(float(igd[i]))
            collected[m]["hv_rank"].append(float(hv_rank[i]))
            collected[m]["igd_plus_rank"].append(float(igd_rank[i]))
    summary = {
        m: {f"{k}_mean": float(np.mean(v)) for k, v in vals.items()} | {"n_seeds": len(vals["hv"])}
        for m, vals in collected.items()
    }
    return {
        "cost_mode": cost_mode,
        "library": records[0].ensembles.library,
        "reference_point": list(indicators.REFERENCE_POINT),
        "summary": summary,
        "seeds": per_seed,
    }


def cmd_pareto(records: list[RunRecord], cost_mode: str = "aggregate") -> str:
    """CSV of total, unique and Pareto-optimal ensemble counts per (method, seed)."""
    groups = _group_by_seed(records)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "seed", "total", "unique", "pareto", "duplicates"])
    for seed, recs in groups.items():
        spaces = indicators.build_objective_space([r.ensembles for r in recs], cost_mode)
        for r, pts in zip(recs, spaces):
            s = r.ensembles
            n_pareto = len(indicators.pareto_front(pts))
            writer.writerow([s.method, seed, len(s), s.n_unique, n_pareto, s.duplicates])
    return buf.getvalue()


def dedupe_betas(betas) -> list[float]:
    out = []
    for b in betas:
        b = float(b)
        if not 0.0 <= b <= 1.0:
            raise ConfigError(f"beta {b} outside [0, 1]")
        if b in out:
            log.warning("duplicate beta %g ignored", b)
            continue
        out.append(b)
    return out


def _beta_key(b: float) -> str:
    return repr(float(b))


def sweep_library(lib: ModelLibrary, betas, iterations: int, cost_mode: str) -> dict:
    """Multi-GES for every beta on one library, evaluated in a shared objective space."""
    ev = Evaluator(lib)
    sets = []
    for b in betas:
        s = selectors.multi_ges(lib, selectors.MultiGesConfig(b, iterations), ev)
        s.method = f"beta={_beta_key(b)}"
        sets.append(s)
    spaces = indicators.build_objective_space(sets, cost_mode)
    result = {}
    for b, s, pts in zip(betas, sets, spaces):
        final = s.ensembles[-1]
        result[_beta_key(b)] = {
            "hv": indicators.hypervolume_2d(pts),
            "final_inference_time": final.costs.inference_time,
            "final_test_auc": 1.0 - final.test_loss,
            "final_counts": list(final.counts),
        }
    return result


def cmd_sweep_beta(config: ExperimentConfig, betas, iterations: int | None = None) -> dict:
    """Mean HV, final inference time and final test AUC per beta across seeds.

    With a synthetic library every seed draws its own library (the synthetic
    seed is replaced); a library on disk is shared by all seeds.
    """
    betas = dedupe_betas(betas)
    if not betas:
        raise ConfigError("at least one beta is required")
    if iterations is None:
        iterations = next(
            (m.params["iterations"] for m in config.methods if m.name == "multi-ges"),
            selectors.DEFAULT_ITERATIONS,
        )
    shared = load_library(config.library) if config.library is not None else None
    per_seed = []
    for seed in config.seeds:
        if shared is not None:
            lib = shared
        else:
            lib = generate_synthetic(SyntheticConfig(**{**asdict(config.synthetic), "seed": seed}))
        per_seed.append(
            {"seed": seed, "library": lib.fingerprint, "betas": sweep_library(lib, betas, iterations, config.cost_mode)}
        )
    means = {}
    for b in map(_beta_key, betas):
        rows = [entry["betas"][b] for entry in per_seed]
        means[b] = {
            "hv": float(np.mean([r["hv"] for r in rows])),
            "final_inference_time": float(np.mean([r["final_inference_time"] for r in rows])),
            "final_test_auc": float(np.mean([r["final_test_auc"] for r in rows])),
        }
    return {
        "betas": betas,
        "iterations": iterations,
        "cost_mode": config.cost_mode,
        "mean": means,
        "seeds": per_seed,
    }


__all__ = [
    "ConfigError",
    "EvaluationError",
    "ExperimentConfig",
    "LibraryError",
    "MethodSpec",
    "RunRecord",
    "cmd_evaluate",
    "cmd_pareto",
    "cmd_run",
    "cmd_sweep_beta",
    "load_records",
    "run_method",
]
