"""Multi-task evaluation: the averaged relative metric, representational
similarity between task encoders, and a synthetic benchmark whose ground
truth grouping is known by construction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .errors import ConfigError, DimensionMismatch, DomainError
from .partition import Partition

CACHE_MAGIC = b"BMTB"
CACHE_VERSION = 1


@dataclass(frozen=True)
class MetricRecord:
    """Per-task metric values plus the direction that counts as better."""

    values: tuple[float, ...]
    lower_better: tuple[bool, ...]
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        flags = tuple(bool(b) for b in self.lower_better)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lower_better", flags)
        if len(values) != len(flags):
            raise DimensionMismatch("one direction flag per metric required")
        if self.names is not None:
            names = tuple(str(n) for n in self.names)
            object.__setattr__(self, "names", names)
            if len(names) != len(values):
                raise DimensionMismatch("one name per metric required")
        if not all(np.isfinite(v) for v in values):
            raise DomainError("metric values must be finite")

    def to_json(self) -> dict:
        names = self.names or tuple(f"t{i}" for i in range(len(self.values)))
        return {
            "tasks": [
                {"name": n, "value": v, "lower_better": b}
                for n, v, b in zip(names, self.values, self.lower_better)
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MetricRecord":
        rows = obj["tasks"]
        return cls(
            values=tuple(float(r["value"]) for r in rows),
            lower_better=tuple(bool(r["lower_better"]) for r in rows),
            names=tuple(str(r["name"]) for r in rows),
        )


def delta_m(model: MetricRecord, baseline: MetricRecord) -> float:
    """Average per-task relative change vs the baseline, in percent.

    Sign-adjusted so that negative always means worse: improvements on
    lower-is-better metrics count positive.
    """
    if len(model.values) != len(baseline.values):
        raise DimensionMismatch("records cover different task counts")
    if model.lower_better != baseline.lower_better:
        raise DimensionMismatch("records disagree on metric directions")
    if model.names is not None and baseline.names is not None:
        if model.names != baseline.names:
            raise DimensionMismatch("records cover different tasks")
    total = 0.0
    for m, b, lower in zip(model.values, baseline.values, model.lower_better):
        if b == 0.0:
            raise DomainError("baseline metric of 0 makes the ratio undefined")
        sign = -1.0 if lower else 1.0
        total += sign * (m - b) / b
    return 100.0 * total / len(model.values)


def rsa_matrix(features: Sequence[np.ndarray]) -> np.ndarray:
    """Second-order similarity of task encoders over a shared probe set.

    For each task, the probe-pair dissimilarity pattern is 1 - Pearson
    correlation between feature vectors; entry (i, j) is the Spearman
    correlation of those patterns. Tasks with constant features get NaN
    off-diagonal entries (the pattern is undefined).
    """
    feats = [np.asarray(f, dtype=np.float64) for f in features]
    if not feats:
        raise DimensionMismatch("need at least one task")
    probes = feats[0].shape[0]
    if any(f.ndim != 2 or f.shape[0] != probes for f in feats):
        raise DimensionMismatch("every task needs features for the same probes")
    if probes < 3:
        raise DimensionMismatch("need at least 3 probes for a rank correlation")

    rows, cols = np.triu_indices(probes, k=1)
    condensed = []
    for f in feats:
        if np.any(f.std(axis=1) == 0):
            condensed.append(None)
            continue
        corr = np.corrcoef(f)
        condensed.append((1.0 - corr)[rows, cols])

    num_tasks = len(feats)
    out = np.full((num_tasks, num_tasks), np.nan)
    np.fill_diagonal(out, 1.0)
    for i in range(num_tasks):
        for j in range(i + 1, num_tasks):
            if condensed[i] is None or condensed[j] is None:
                continue
            rho = spearmanr(condensed[i], condensed[j]).statistic
            out[i, j] = out[j, i] = rho
    return out


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Recipe for related regression tasks.

    Each task's target is a private projection applied to a group-shared
    projection of the input; tasks in one relatedness block see the same
    shared projection, so they can be solved by one branch while unrelated
    tasks compete for capacity.
    """

    num_tasks: int
    input_dim: int
    hidden_dim: int
    target_dim: int
    relatedness: Partition
    noise_std: float = 0.01
    train_samples: int = 512
    test_samples: int = 256
    signal_scale: float = 0.2
    share_private: bool = False

    def __post_init__(self):
        if self.relatedness.num_tasks != self.num_tasks:
            raise DimensionMismatch("relatedness partition covers wrong task count")
        if self.noise_std < 0:
            raise DomainError("noise_std must be non-negative")
        if self.signal_scale <= 0:
            raise DomainError("signal_scale must be positive")
        if min(self.input_dim, self.hidden_dim, self.target_dim) < 1:
            raise DomainError("dimensions must be positive")
        if min(self.train_samples, self.test_samples) < 1:
            raise DomainError("sample counts must be positive")


@dataclass
class Dataset:
    task_names: tuple[str, ...]
    inputs_train: np.ndarray
    inputs_test: np.ndarray
    targets_train: tuple[np.ndarray, ...]
    targets_test: tuple[np.ndarray, ...]
    seed: int | None = None

    @property
    def num_tasks(self) -> int:
        return len(self.task_names)

    @property
    def input_dim(self) -> int:
        return self.inputs_train.shape[1]

    @property
    def target_dims(self) -> tuple[int, ...]:
        return tuple(y.shape[1] for y in self.targets_train)

    def select_tasks(self, tasks: Sequence[int]) -> "Dataset":
        """Subset view keeping task names, for single-task comparisons."""
        return Dataset(
            task_names=tuple(self.task_names[t] for t in tasks),
            inputs_train=self.inputs_train,
            inputs_test=self.inputs_test,
            targets_train=tuple(self.targets_train[t] for t in tasks),
            targets_test=tuple(self.targets_test[t] for t in tasks),
            seed=self.seed,
        )


def _orthonormal_rows(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(dim, max(rows, 1))))
    return q.T[:rows]


def generate_tasks(spec: SyntheticTaskSpec, rng: np.random.Generator) -> Dataset:
    """Sample the benchmark: standard-normal inputs, projected noisy targets.

    When every group's shared projection fits inside the input dimension
    they are drawn jointly orthonormal, making unrelated tasks genuinely
    independent; otherwise each group is orthonormalized on its own.
    """
    blocks = spec.relatedness.blocks()
    total_rows = len(blocks) * spec.hidden_dim
    if total_rows <= spec.input_dim:
        stacked = _orthonormal_rows(rng, total_rows, spec.input_dim)
        shared = [
            stacked[i * spec.hidden_dim : (i + 1) * spec.hidden_dim]
            for i in range(len(blocks))
        ]
    else:
        shared = [
            _orthonormal_rows(rng, spec.hidden_dim, spec.input_dim) for _ in blocks
        ]
    group_of = {}
    for g, block in enumerate(blocks):
        for t in block:
            group_of[t] = g

    # signal_scale sets the target amplitude.  Task losses (and their
    # architecture gradients) shrink quadratically with it while the resource
    # term is amplitude-free, so this is what keeps resource weights on a
    # small grid (0.05, 0.5) able to tip grouping decisions.
    if spec.share_private:
        one = spec.signal_scale * _orthonormal_rows(rng, spec.target_dim, spec.hidden_dim)
        private = [one] * spec.num_tasks
    else:
        private = [
            spec.signal_scale * _orthonormal_rows(rng, spec.target_dim, spec.hidden_dim)
            for _ in range(spec.num_tasks)
        ]

    x_train = rng.normal(size=(spec.train_samples, spec.input_dim))
    x_test = rng.normal(size=(spec.test_samples, spec.input_dim))

    def targets(x):
        out = []
        for t in range(spec.num_tasks):
            clean = x @ shared[group_of[t]].T @ private[t].T
            out.append(clean + spec.noise_std * rng.normal(size=clean.shape))
        return tuple(out)

    return Dataset(
        task_names=tuple(f"t{t}" for t in range(spec.num_tasks)),
        inputs_train=x_train,
        inputs_test=x_test,
        targets_train=targets(x_train),
        targets_test=targets(x_test),
    )


def save_dataset(dataset: Dataset, path):
    """Binary cache: magic, version, JSON meta, then the arrays in order."""
    meta = {
        "tasks": list(dataset.task_names),
        "train_samples": int(dataset.inputs_train.shape[0]),
        "test_samples": int(dataset.inputs_test.shape[0]),
        "input_dim": int(dataset.input_dim),
        "target_dims": [int(d) for d in dataset.target_dims],
        "seed": dataset.seed,
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<II", CACHE_VERSION, len(blob)))
        fh.write(blob)
        np.save(fh, dataset.inputs_train)
        np.save(fh, dataset.inputs_test)
        for y in dataset.targets_train:
            np.save(fh, y)
        for y in dataset.targets_test:
            np.save(fh, y)


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        if fh.read(4) != CACHE_MAGIC:
            raise ConfigError(f"{path} is not a benchmark cache file")
        version, meta_len = struct.unpack("<II", fh.read(8))
        if version != CACHE_VERSION:
            raise ConfigError(f"unsupported cache version {version}")
        meta = json.loads(fh.read(meta_len).decode())
        inputs_train = np.load(fh)
        inputs_test = np.load(fh)
        n = len(meta["tasks"])
        targets_train = tuple(np.load(fh) for _ in range(n))
        targets_test = tuple(np.load(fh) for _ in range(n))
    return Dataset(
        task_names=tuple(meta["tasks"]),
        inputs_train=inputs_train,
        inputs_test=inputs_test,
        targets_train=targets_train,
        targets_test=targets_test,
        seed=meta.get("seed"),
    )
