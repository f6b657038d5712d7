"""Labeled dataset generation, distribution statistics, splitting and file IO.

File layout (little endian)::

    "CBDS"  version:u8  width:u8  height:u8  count:u64
    count x (packed genome record, modulus:f8, strength:f8, toughness:f8)

Records are fixed width, so a file can be memory mapped and sliced.
"""
from __future__ import annotations

import csv
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import fem
from .metrics import PROPERTY_NAMES
from .microstructure import (Microstructure, check_grid, pack_many, packed_size, random_bits,
                             unpack_many)

MAGIC = b"CBDS"
VERSION = 1
HEADER = struct.Struct("<4sBBBQ")
CHUNK = 1024


class DatasetFormatError(ValueError):
    pass


class StatsUndefinedError(ValueError):
    pass


@dataclass
class LabeledDataset:
    """Genomes ``bits`` ``(count, width*height)`` with FE labels ``(count, 3)``."""

    width: int
    height: int
    bits: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        check_grid(self.width, self.height)
        self.bits = np.asarray(self.bits, dtype=np.uint8).reshape(-1, self.width * self.height)
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1, 3)
        if len(self.bits) != len(self.labels):
            raise ValueError("bits and labels disagree on sample count")

    def __len__(self):
        return len(self.bits)

    @property
    def grid(self) -> tuple[int, int]:
        return self.width, self.height

    def microstructure(self, i: int) -> Microstructure:
        return Microstructure(self.width, self.height, self.bits[i])

    def images(self) -> np.ndarray:
        return self.bits.reshape(-1, self.height, self.width).astype(np.float64)

    def subset(self, index) -> "LabeledDataset":
        return LabeledDataset(self.width, self.height, self.bits[index], self.labels[index])

    def column(self, prop: str) -> np.ndarray:
        return self.labels[:, PROPERTY_NAMES.index(prop)]

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (self.grid == other.grid and np.array_equal(self.bits, other.bits)
                and np.array_equal(self.labels, other.labels))


def _label_chunk(args):
    start, count, width, height, seed, stiff, soft = args
    bits = random_bits(count, width, height, seed, start)
    return bits, fem.evaluate_batch(bits, width, height, stiff, soft)


def generate(count: int, grid=(8, 4), seed: int = 0, worker_count: int = 1,
             stiff: fem.ElasticMaterial = fem.STIFF, soft: fem.ElasticMaterial = fem.SOFT) -> LabeledDataset:
    """Sample ``count`` uniform random microstructures and label them with the FE solver.

    Sample ``i`` always uses the stream ``(seed, i)``, so the result does not
    depend on ``worker_count``. Duplicate genomes are kept.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    width, height = grid
    check_grid(width, height)
    jobs = [(s, min(CHUNK, count - s), width, height, seed, stiff, soft)
            for s in range(0, count, CHUNK)]
    if worker_count > 1:
        with ProcessPoolExecutor(worker_count) as pool:
            parts = list(pool.map(_label_chunk, jobs))
    else:
        parts = [_label_chunk(job) for job in jobs]
    return LabeledDataset(width, height, np.concatenate([p[0] for p in parts]),
                          np.concatenate([p[1] for p in parts]))


def label_all(width: int, height: int, stiff=fem.STIFF, soft=fem.SOFT) -> LabeledDataset:
    """Every genome of a small grid with its FE labels (the exhaustive oracle)."""
    from .microstructure import all_genomes
    bits = all_genomes(width, height)
    return LabeledDataset(width, height, bits, fem.evaluate_batch(bits, width, height, stiff, soft))


@dataclass(frozen=True)
class PropertyStats:
    count: int
    mean: float
    coefficient_of_variation: float
    skew: float
    excess_kurtosis: float


def describe(values) -> PropertyStats:
    """Population moments of one label column; CV is ``inf`` when the mean is zero."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise StatsUndefinedError("need at least two samples")
    std = x.std()
    if std == 0 or std <= 1e-14 * np.abs(x).max():
        raise StatsUndefinedError("zero variance: skew and kurtosis are undefined")
    mean = x.mean()
    cv = std / abs(mean) if mean != 0 else np.inf
    return PropertyStats(int(x.size), float(mean), float(cv),
                         float(stats.skew(x, bias=True)),
                         float(stats.kurtosis(x, fisher=True, bias=True)))


def summary_stats(dataset) -> dict[str, PropertyStats]:
    labels = dataset.labels if isinstance(dataset, LabeledDataset) else np.asarray(dataset)
    return {name: describe(labels[:, k]) for k, name in enumerate(PROPERTY_NAMES)}


@dataclass(frozen=True)
class BatchMeansTrace:
    """Means of consecutive equal-size batches and their running average."""

    batch_size: int
    means: np.ndarray
    running: np.ndarray

    def stabilization(self) -> np.ndarray:
        """Per property: range of the running mean over its last quarter / |final value|."""
        tail = self.running[-max(1, len(self.running) // 4):]
        return (tail.max(axis=0) - tail.min(axis=0)) / np.abs(self.running[-1])

    def histogram(self, bins: int = 30) -> list[tuple[str, np.ndarray, np.ndarray]]:
        out = []
        for k, name in enumerate(PROPERTY_NAMES):
            counts, edges = np.histogram(self.means[:, k], bins=bins)
            out.append((name, counts, edges))
        return out


def batch_means(dataset, batch_size: int = 500) -> BatchMeansTrace:
    labels = dataset.labels if isinstance(dataset, LabeledDataset) else np.asarray(dataset)
    if batch_size < 1 or len(labels) % batch_size:
        raise ValueError(f"batch size {batch_size} does not divide {len(labels)} samples")
    means = labels.reshape(-1, batch_size, labels.shape[1]).mean(axis=1)
    running = np.cumsum(means, axis=0) / np.arange(1, len(means) + 1)[:, None]
    return BatchMeansTrace(batch_size, means, running)


def split(dataset: LabeledDataset, train_fraction: float, seed: int):
    """Shuffled disjoint (train, test) split; train gets ``round(fraction * count)`` samples."""
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in [0, 1]")
    order = np.random.default_rng(seed).permutation(len(dataset))
    n_train = int(round(train_fraction * len(dataset)))
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])


def record_dtype(width: int, height: int) -> np.dtype:
    return np.dtype([("genome", np.uint8, (packed_size(width, height),)), ("labels", "<f8", (3,))])


def write_dataset(path, dataset: LabeledDataset) -> None:
    records = np.empty(len(dataset), dtype=record_dtype(dataset.width, dataset.height))
    records["genome"] = pack_many(dataset.bits, dataset.width, dataset.height)
    records["labels"] = dataset.labels
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, dataset.width, dataset.height, len(dataset)))
        fh.write(records.tobytes())


def read_dataset(path) -> LabeledDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, version, width, height, count = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    try:
        check_grid(width, height)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc
    dtype = record_dtype(width, height)
    if len(raw) != HEADER.size + count * dtype.itemsize:
        raise DatasetFormatError(f"{path}: expected {count} records of {dtype.itemsize} bytes")
    records = np.frombuffer(raw, dtype=dtype, offset=HEADER.size, count=count)
    try:
        bits = unpack_many(records["genome"], width, height)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc
    return LabeledDataset(width, height, bits, records["labels"].copy())


def write_stats_csv(path, summary: dict[str, PropertyStats]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["property", "count", "mean", "coefficient_of_variation", "skew",
                         "excess_kurtosis"])
        for name, s in summary.items():
            writer.writerow([name, s.count, repr(s.mean), repr(s.coefficient_of_variation),
                             repr(s.skew), repr(s.excess_kurtosis)])


def write_batch_means_csv(path, trace: BatchMeansTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch"] + [f"{n}_mean" for n in PROPERTY_NAMES]
                        + [f"{n}_running" for n in PROPERTY_NAMES])
        for k, (m, r) in enumerate(zip(trace.means, trace.running)):
            writer.writerow([k] + [repr(float(v)) for v in m] + [repr(float(v)) for v in r])


def write_histogram_csv(path, trace: BatchMeansTrace, bins: int = 30) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["property", "bin_left", "bin_right", "count"])
        for name, counts, edges in trace.histogram(bins):
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                writer.writerow([name, repr(float(lo)), repr(float(hi)), int(c)])
