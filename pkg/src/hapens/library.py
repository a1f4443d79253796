"""Model libraries: precomputed class probabilities plus per-model hardware costs.

A library directory looks like::

    library.json          {"n_classes": K, "models": [{"name", "inference_time_s",
                                                      "memory_bytes", "disk_bytes"}, ...]}
    val_labels.csv        one integer label per line
    test_labels.csv
    val/<name>.csv        n_val rows of K probabilities
    test/<name>.csv

Model order in ``library.json`` fixes the index ``j`` used by every
repetition vector.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

ROW_TOL = 1e-6
# rows closer to 1 than this are left untouched so that write/load round-trips exactly
_RENORM_EPS = 1e-12


class LibraryError(ValueError):
    """Raised when a library on disk or a synthetic config is unusable."""


@dataclass(frozen=True)
class HardwareCost:
    inference_time: float
    memory: float
    disk: float

    def __post_init__(self):
        for name in ("inference_time", "memory", "disk"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise LibraryError(f"invalid hardware cost: {name}={v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.inference_time, self.memory, self.disk], dtype=float)


@dataclass(frozen=True, eq=False)
class ModelEntry:
    name: str
    val_predictions: np.ndarray
    test_predictions: np.ndarray
    cost: HardwareCost

    def __eq__(self, other):
        if not isinstance(other, ModelEntry):
            return NotImplemented
        return (
            self.name == other.name
            and self.cost == other.cost
            and np.array_equal(self.val_predictions, other.val_predictions)
            and np.array_equal(self.test_predictions, other.test_predictions)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ModelLibrary:
    """An ordered pool of models sharing one validation and one test split."""

    models: tuple[ModelEntry, ...]
    val_labels: np.ndarray
    test_labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "val_labels", np.asarray(self.val_labels, dtype=np.int64))
        object.__setattr__(self, "test_labels", np.asarray(self.test_labels, dtype=np.int64))

    def __eq__(self, other):
        if not isinstance(other, ModelLibrary):
            return NotImplemented
        return (
            self.n_classes == other.n_classes
            and self.models == other.models
            and np.array_equal(self.val_labels, other.val_labels)
            and np.array_equal(self.test_labels, other.test_labels)
        )

    __hash__ = None

    def __len__(self) -> int:
        return len(self.models)

    @property
    def p(self) -> int:
        return len(self.models)

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.models]

    def labels(self, split: str) -> np.ndarray:
        if split == "val":
            return self.val_labels
        if split == "test":
            return self.test_labels
        raise ValueError(f"unknown split {split!r}")

    def stacked(self, split: str) -> np.ndarray:
        """Predictions of all models as one ``(p, n, K)`` array."""
        return self._val_stack if split == "val" else self._test_stack

    @cached_property
    def _val_stack(self) -> np.ndarray:
        return np.stack([m.val_predictions for m in self.models])

    @cached_property
    def _test_stack(self) -> np.ndarray:
        return np.stack([m.test_predictions for m in self.models])

    @cached_property
    def cost_matrix(self) -> np.ndarray:
        """``(p, 3)`` array of (inference_time, memory, disk)."""
        return np.stack([m.cost.as_array() for m in self.models])

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.n_classes).encode())
        h.update(np.ascontiguousarray(self.val_labels, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.test_labels, dtype="<i8").tobytes())
        for m in self.models:
            h.update(m.name.encode())
            h.update(m.cost.as_array().astype("<f8").tobytes())
            h.update(np.ascontiguousarray(m.val_predictions, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(m.test_predictions, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs of the synthetic library generator.

    ``cost_spread`` is the width, in decades, of the log-uniform cost range.
    """

    p: int = 10
    n_val: int = 200
    n_test: int = 200
    K: int = 2
    skill_range: tuple[float, float] = (1.5, 4.0)
    error_correlation: float = 0.3
    cost_spread: float = 3.0
    seed: int = 0
    difficulty_scale: float = field(default=0.4, repr=False)
    hard_fraction: float = field(default=0.03, repr=False)
    hard_margin: float = field(default=3.0, repr=False)
    cost_coupling: float = field(default=0.7, repr=False)
    skill_cost_coupling: float = field(default=0.5, repr=False)

    def check(self):
        lo, hi = self.skill_range
        ok = (
            self.p >= 2
            and self.n_val >= 10
            and self.n_test >= 1
            and self.K >= 2
            and 0.0 <= self.error_correlation <= 1.0
            and lo <= hi
            and self.cost_spread >= 0
            and 0.0 <= self.difficulty_scale <= 1.0
            and 0.0 <= self.hard_fraction < 1.0
            and self.hard_margin >= 0
            and 0.0 <= self.cost_coupling <= 1.0
            and 0.0 <= self.skill_cost_coupling <= 1.0
        )
        if not ok:
            raise LibraryError(f"invalid synthetic config: {self}")


def validate_library(lib: ModelLibrary) -> list[str]:
    """Return a description of every violated library invariant (empty if valid)."""
    problems: list[str] = []
    K = lib.n_classes
    if K < 2:
        problems.append(f"n_classes={K} must be at least 2")
    if lib.p < 1:
        problems.append("library has no models")
    n_val, n_test = len(lib.val_labels), len(lib.test_labels)
    if n_val < 2:
        problems.append(f"n_val={n_val} must be at least 2")
    if n_test < 1:
        problems.append(f"n_test={n_test} must be at least 1")

    seen: dict[str, int] = {}
    for j, m in enumerate(lib.models):
        if m.name in seen:
            problems.append(
                f"duplicate model name {m.name!r} at indices {seen[m.name]} and {j}"
            )
        else:
            seen[m.name] = j
        for split, arr, n in (
            ("val", m.val_predictions, n_val),
            ("test", m.test_predictions, n_test),
        ):
            if arr.shape != (n, K):
                problems.append(
                    f"model {m.name!r} {split} predictions have shape {arr.shape}, expected {(n, K)}"
                )
                continue
            bad_range = np.flatnonzero(~np.all(np.isfinite(arr) & (arr >= 0) & (arr <= 1), axis=1))
            bad_sum = np.flatnonzero(np.abs(arr.sum(axis=1) - 1.0) > ROW_TOL)
            for i in sorted(set(bad_range.tolist()) | set(bad_sum.tolist())):
                problems.append(f"model {m.name!r} {split} row {i} is not a probability vector")

    for split, labels in (("val", lib.val_labels), ("test", lib.test_labels)):
        for i in np.flatnonzero((labels < 0) | (labels >= K)):
            problems.append(f"{split} label at index {i} is {labels[i]}, outside [0, {K})")
    present = set(np.unique(lib.val_labels).tolist())
    for k in range(max(K, 0)):
        if k not in present:
            problems.append(f"class {k} never appears in val labels")
    return problems


def _read_matrix(path: Path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    return arr


def _read_labels(path: Path) -> np.ndarray:
    raw = np.loadtxt(path, dtype=float, ndmin=1)
    if np.any(raw != np.round(raw)):
        raise LibraryError(f"invalid label: non-integer value in {path.name}")
    return raw.astype(np.int64)


def _normalize_rows(arr: np.ndarray, where: str) -> np.ndarray:
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1 + ROW_TOL):
        raise LibraryError(f"invalid probabilities in {where}")
    sums = arr.sum(axis=1)
    off = np.abs(sums - 1.0)
    if np.any(off > ROW_TOL):
        row = int(np.argmax(off))
        raise LibraryError(f"invalid probabilities in {where}: row {row} sums to {sums[row]:.9g}")
    fix = off > _RENORM_EPS
    if fix.any():
        arr = arr.copy()
        arr[fix] /= sums[fix, None]
    return np.clip(arr, 0.0, 1.0)


def load_library(path) -> ModelLibrary:
    """Load and validate a library directory."""
    root = Path(path)
    meta_path = root / "library.json"
    if not meta_path.is_file():
        raise LibraryError(f"library incomplete: missing {meta_path}")
    meta = json.loads(meta_path.read_text())
    try:
        K = int(meta["n_classes"])
        specs = meta["models"]
    except (KeyError, TypeError, ValueError) as exc:
        raise LibraryError(f"library incomplete: bad library.json ({exc})") from exc

    files = [root / "val_labels.csv", root / "test_labels.csv"]
    for spec in specs:
        files += [root / "val" / f"{spec['name']}.csv", root / "test" / f"{spec['name']}.csv"]
    missing = [str(f.relative_to(root)) for f in files if not f.is_file()]
    if missing:
        raise LibraryError(f"library incomplete: missing {', '.join(missing)}")

    val_labels = _read_labels(root / "val_labels.csv")
    test_labels = _read_labels(root / "test_labels.csv")

    models = []
    for spec in specs:
        name = spec["name"]
        val = _read_matrix(root / "val" / f"{name}.csv")
        test = _read_matrix(root / "test" / f"{name}.csv")
        if val.shape != (len(val_labels), K) or test.shape != (len(test_labels), K):
            raise LibraryError(
                f"inconsistent shapes: model {name!r} has val {val.shape}, test {test.shape}; "
                f"expected {(len(val_labels), K)}, {(len(test_labels), K)}"
            )
        val = _normalize_rows(val, f"val/{name}.csv")
        test = _normalize_rows(test, f"test/{name}.csv")
        cost = HardwareCost(
            float(spec["inference_time_s"]), float(spec["memory_bytes"]), float(spec["disk_bytes"])
        )
        models.append(ModelEntry(name, val, test, cost))

    for split, labels in (("val", val_labels), ("test", test_labels)):
        bad = np.flatnonzero((labels < 0) | (labels >= K))
        if bad.size:
            raise LibraryError(f"invalid label: {split} index {bad[0]} has label {labels[bad[0]]}")

    lib = ModelLibrary(tuple(models), val_labels, test_labels, K)
    problems = validate_library(lib)
    if problems:
        raise LibraryError("invalid library: " + "; ".join(problems))
    return lib


def write_library(lib: ModelLibrary, path) -> Path:
    root = Path(path)
    (root / "val").mkdir(parents=True, exist_ok=True)
    (root / "test").mkdir(parents=True, exist_ok=True)
    meta = {
        "n_classes": lib.n_classes,
        "models": [
            {
                "name": m.name,
                "inference_time_s": m.cost.inference_time,
                "memory_bytes": m.cost.memory,
                "disk_bytes": m.cost.disk,
            }
            for m in lib.models
        ],
    }
    (root / "library.json").write_text(json.dumps(meta, indent=2) + "\n")
    np.savetxt(root / "val_labels.csv", lib.val_labels, fmt="%d")
    np.savetxt(root / "test_labels.csv", lib.test_labels, fmt="%d")
    for m in lib.models:
        np.savetxt(root / "val" / f"{m.name}.csv", m.val_predictions, fmt="%.17g", delimiter=",")
        np.savetxt(root / "test" / f"{m.name}.csv", m.test_predictions, fmt="%.17g", delimiter=",")
    return root


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def generate_synthetic(config: SyntheticConfig) -> ModelLibrary:
    """Draw a library whose models differ in skill, error correlation and cost.

    Each model's logits are ``skill * m_i * onehot(y_i)`` plus noise mixed
    from a component shared by all models (weight ``sqrt(error_correlation)``)
    and an independent one. The per-sample signal multiplier ``m_i`` is
    ``1 - difficulty_scale * U(0, 1)``. A ``hard_fraction`` of samples carry
    no signal and instead add ``hard_margin`` to one shared wrong class, so
    they mislead every model alike whatever its skill and no ensemble
    reaches a perfect AUC. Log-costs span ``cost_spread`` decades and mix a
    per-model size factor (weight ``cost_coupling``) with per-metric
    jitter, so large models tend to be slow, memory-hungry and big on disk.
    The size factor itself leans towards skill by ``skill_cost_coupling``:
    stronger models tend to be bigger.
    """
    config.check()
    rng = np.random.default_rng(config.seed)
    p, K = config.p, config.K
    rho = config.error_correlation

    def labels(n):
        # every class shows up at least once so per-class AUC is defined
        y = rng.integers(0, K, n)
        if n >= K:
            y[rng.permutation(n)[:K]] = np.arange(K)
        return y

    def signal(y):
        n = len(y)
        m = 1.0 - config.difficulty_scale * rng.random(n)
        hard = rng.random(n) < config.hard_fraction
        m[hard] = 0.0
        # shift by 1..K-1 so the decoy is never the true class
        decoy = (y + rng.integers(1, K, n)) % K
        lure = np.zeros((n, K))
        lure[np.flatnonzero(hard), decoy[hard]] = config.hard_margin
        return m, lure

    y_val, y_test = labels(config.n_val), labels(config.n_test)
    (m_val, lure_val), (m_test, lure_test) = signal(y_val), signal(y_test)
    shared_val = rng.standard_normal((config.n_val, K))
    shared_test = rng.standard_normal((config.n_test, K))
    skills = rng.uniform(*config.skill_range, size=p)

    base = np.array([1e-3, 1e6, 1e6])
    lo, hi = config.skill_range
    rel_skill = (skills - lo) / (hi - lo) if hi > lo else np.full(p, 0.5)
    c = config.skill_cost_coupling
    size = (c * rel_skill + (1.0 - c) * rng.random(p))[:, None]
    jitter = rng.random((p, 3))
    log_costs = config.cost_spread * (config.cost_coupling * size + (1.0 - config.cost_coupling) * jitter)
    costs = base * 10.0**log_costs

    def predict(skill, y, m, lure, shared):
        n = len(y)
        logits = np.sqrt(rho) * shared + np.sqrt(1.0 - rho) * rng.standard_normal((n, K)) + lure
        logits[np.arange(n), y] += skill * m
        return _softmax(logits)

    width = len(str(p - 1))
    models = []
    for j in range(p):
        val = predict(skills[j], y_val, m_val, lure_val, shared_val)
        test = predict(skills[j], y_test, m_test, lure_test, shared_test)
        cost = HardwareCost(*(float(c) for c in costs[j]))
        models.append(ModelEntry(f"m{j:0{width}d}", val, test, cost))
    return ModelLibrary(tuple(models), y_val, y_test, K)
