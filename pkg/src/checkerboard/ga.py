"""Binary genetic algorithm with roulette selection, two-point crossover,
bit-flip mutation and elitism, plus the compromise-programming objective
used for multi-objective runs.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fem, seeding
from .microstructure import Microstructure, pack_many

log = logging.getLogger(__name__)

FitnessOracle = Callable[[np.ndarray], np.ndarray]
PROPERTY_INDEX = {"modulus": 0, "strength": 1, "toughness": 2}


class GaError(RuntimeError):
    """Fitness oracle failure, annotated with the generation it happened in."""


@dataclass(frozen=True)
class GaParams:
    generation_size: int = 1024
    gene_count: int = 128
    max_generations: int = 150
    crossover_probability: float = 0.95
    crossover_points: int = 2
    mutation_probability: float = 0.005
    elitism_ratio: float = 0.10
    # stop after this many generations without the best improving by more than the tolerance
    stagnation_generations: int = 30
    stagnation_tolerance: float = 1e-9

    def __post_init__(self):
        for name in ("crossover_probability", "mutation_probability", "elitism_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.crossover_points != 2:
            raise ValueError("only two-point crossover is implemented")
        if self.gene_count < 3:
            raise ValueError("two-point crossover needs at least 3 genes")
        if self.generation_size < 2 or self.max_generations < 1:
            raise ValueError("generation_size must be >= 2 and max_generations >= 1")
        if not 1 <= self.elite_count < self.generation_size:
            raise ValueError(f"elitism keeps {self.elite_count} of {self.generation_size} chromosomes")

    @property
    def elite_count(self) -> int:
        return int(round(self.elitism_ratio * self.generation_size))


@dataclass
class Generation:
    index: int
    chromosomes: np.ndarray
    fitness: np.ndarray

    def ranking(self) -> np.ndarray:
        """Indices from best to worst; ties go to the lexicographically smaller genome."""
        keys = [self.chromosomes[:, j] for j in range(self.chromosomes.shape[1] - 1, -1, -1)]
        return np.lexsort(keys + [-self.fitness])


@dataclass
class GaResult:
    best: np.ndarray
    best_fitness: float
    best_history: list = field(default_factory=list)
    mean_history: list = field(default_factory=list)
    final: Generation | None = None
    stopped_by: str = "max_generations"

    @property
    def generations(self) -> int:
        return len(self.best_history)

    def top_k(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Best ``k`` distinct chromosomes of the final generation and their fitness."""
        order = self.final.ranking()
        seen, genomes, values = set(), [], []
        for i in order:
            key = self.final.chromosomes[i].tobytes()
            if key in seen:
                continue
            seen.add(key)
            genomes.append(self.final.chromosomes[i])
            values.append(self.final.fitness[i])
            if len(genomes) == k:
                break
        return np.array(genomes), np.array(values)


def roulette_probabilities(fitness) -> np.ndarray:
    f = np.asarray(fitness, dtype=float)
    if f.min() <= 0:
        f = f - f.min() + 1e-12
    total = f.sum()
    if not np.isfinite(total) or total <= 0:
        return np.full(len(f), 1.0 / len(f))
    return f / total


def roulette_select(fitness, rng: np.random.Generator, size: int | None = None):
    """Index (or ``size`` indices) drawn with probability proportional to fitness."""
    if isinstance(fitness, Generation):
        fitness = fitness.fitness
    cdf = np.cumsum(roulette_probabilities(fitness))
    draws = rng.random(size) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, draws, side="right"), len(cdf) - 1)
    return int(idx) if size is None else idx


def two_point_crossover(p1, p2, rng: np.random.Generator, probability: float = 1.0, cuts=None):
    """Swap the segment ``[i, j)`` between two parents with probability ``probability``.

    Cut points are distinct and drawn from ``1 .. n-1``; pass ``cuts`` to fix them.
    """
    p1, p2 = np.asarray(p1), np.asarray(p2)
    c1, c2 = p1.copy(), p2.copy()
    if rng.random() >= probability:
        return c1, c2
    if cuts is None:
        i, j = np.sort(rng.choice(np.arange(1, len(p1)), size=2, replace=False))
    else:
        i, j = cuts
    c1[i:j], c2[i:j] = p2[i:j], p1[i:j]
    return c1, c2


def mutate(chromosome, rng: np.random.Generator, probability: float):
    chromosome = np.asarray(chromosome)
    flips = rng.random(chromosome.shape) < probability
    return np.where(flips, 1 - chromosome, chromosome).astype(chromosome.dtype)


class CachedOracle:
    """Memoizes a batch fitness oracle on genome bytes."""

    def __init__(self, oracle: FitnessOracle):
        self.oracle = oracle
        self.cache: dict[bytes, float] = {}
        self.calls = 0

    def __call__(self, chromosomes: np.ndarray) -> np.ndarray:
        keys = [c.tobytes() for c in chromosomes]
        missing = list(dict.fromkeys(k for k in keys if k not in self.cache))
        if missing:
            rows = np.array([np.frombuffer(k, dtype=chromosomes.dtype) for k in missing])
            values = np.asarray(self.oracle(rows), dtype=float).reshape(-1)
            self.calls += len(missing)
            self.cache.update(zip(missing, values))
        return np.array([self.cache[k] for k in keys])


def next_generation(current: Generation, params: GaParams, rng: np.random.Generator) -> np.ndarray:
    elites = current.chromosomes[current.ranking()[:params.elite_count]]
    children = [elites]
    count = len(elites)
    while count < params.generation_size:
        a = roulette_select(current.fitness, rng)
        b = roulette_select(current.fitness, rng)
        c1, c2 = two_point_crossover(current.chromosomes[a], current.chromosomes[b], rng,
                                     params.crossover_probability)
        pair = np.stack([mutate(c1, rng, params.mutation_probability),
                         mutate(c2, rng, params.mutation_probability)])
        children.append(pair[: params.generation_size - count])
        count += len(children[-1])
    return np.concatenate(children)


def evolve(params: GaParams, fitness_oracle: FitnessOracle, seed: int,
           initial: np.ndarray | None = None) -> GaResult:
    """Maximize ``fitness_oracle`` over binary genomes.

    The oracle takes a ``(count, gene_count)`` uint8 array and returns one
    finite fitness per row; it is memoized, so elites are never re-evaluated.
    """
    rng = np.random.default_rng(seed)
    oracle = CachedOracle(fitness_oracle)
    if initial is None:
        chromosomes = rng.integers(0, 2, (params.generation_size, params.gene_count), dtype=np.uint8)
    else:
        chromosomes = np.asarray(initial, dtype=np.uint8)
    result = GaResult(best=chromosomes[0], best_fitness=-np.inf)
    stale = 0
    for g in range(params.max_generations):
        try:
            fitness = oracle(chromosomes)
        except Exception as exc:
            raise GaError(f"fitness evaluation failed in generation {g}") from exc
        if not np.all(np.isfinite(fitness)):
            raise GaError(f"non-finite fitness in generation {g}")
        current = Generation(g, chromosomes, fitness)
        leader = current.ranking()[0]
        improvement = fitness[leader] - result.best_fitness
        result.best, result.best_fitness = chromosomes[leader].copy(), float(fitness[leader])
        result.best_history.append(result.best_fitness)
        result.mean_history.append(float(fitness.mean()))
        result.final = current
        stale = 0 if improvement > params.stagnation_tolerance else stale + 1
        log.debug("generation %d best %.6g mean %.6g", g, result.best_fitness, fitness.mean())
        if stale >= params.stagnation_generations:
            result.stopped_by = "stagnation"
            break
        if g + 1 < params.max_generations:
            chromosomes = next_generation(current, params, rng)
    return result


@dataclass(frozen=True)
class AofWeights:
    """Compromise-programming weights and the single-objective maxima used to normalize."""

    modulus: float
    strength: float
    toughness: float
    normalizers: tuple | None = None
    exponent: int = 4

    def __post_init__(self):
        w = self.weights
        if np.any(w < 0):
            raise ValueError("AOF weights must be non-negative")
        # 0.333 * 3 is an accepted spelling of equal thirds
        if abs(w.sum() - 1.0) > 1.5e-3:
            raise ValueError(f"AOF weights must sum to 1, got {w.sum():.6g}")
        if self.normalizers is not None and not np.all(np.asarray(self.normalizers) > 0):
            raise ValueError("AOF normalizers must be positive")

    @property
    def weights(self) -> np.ndarray:
        return np.array([self.modulus, self.strength, self.toughness], dtype=float)

    def with_normalizers(self, normalizers) -> "AofWeights":
        return AofWeights(self.modulus, self.strength, self.toughness,
                          tuple(float(v) for v in normalizers), self.exponent)


def normalized_objectives(properties, weights: AofWeights) -> np.ndarray:
    if weights.normalizers is None:
        raise ValueError("AOF needs the single-objective maxima as normalizers")
    return np.asarray(properties, dtype=float) / np.asarray(weights.normalizers)


def aof(properties, weights: AofWeights):
    """``sum_k w_k (property_k / max_k) ** n``; accepts one triple or a ``(count, 3)`` array."""
    F = normalized_objectives(properties, weights)
    return (weights.weights * F ** weights.exponent).sum(axis=-1)


def property_oracle(predict: Callable[[np.ndarray], np.ndarray], prop: str) -> FitnessOracle:
    """Fitness = one column of a ``(count, 3)`` property predictor."""
    k = PROPERTY_INDEX[prop]
    return lambda genomes: predict(genomes)[:, k]


def aof_oracle(predict: Callable[[np.ndarray], np.ndarray], weights: AofWeights) -> FitnessOracle:
    return lambda genomes: aof(predict(genomes), weights)


def fem_predictor(width: int, height: int, stiff: fem.ElasticMaterial = fem.STIFF,
                  soft: fem.ElasticMaterial = fem.SOFT) -> Callable[[np.ndarray], np.ndarray]:
    """Exact FE properties of a genome batch (the oracle path for small grids)."""
    return lambda genomes: fem.evaluate_batch(genomes, width, height, stiff, soft)


def model_predictor(model) -> Callable[[np.ndarray], np.ndarray]:
    """Surrogate properties of a genome batch from a trained :class:`~.nn.CnnModel`."""
    h, w = model.config.height, model.config.width
    return lambda genomes: model.predict(np.asarray(genomes).reshape(-1, h, w))


@dataclass
class AofRun:
    weights: AofWeights
    result: GaResult
    properties: np.ndarray

    @property
    def objectives(self) -> np.ndarray:
        return normalized_objectives(self.properties, self.weights)


def single_objective_maxima(predict, params: GaParams, seed: int) -> tuple[tuple, dict]:
    """Best value of each property from separate runs; these become the AOF normalizers."""
    runs = {p: evolve(params, property_oracle(predict, p), seeding.child_seed(seed, f"ga.{p}"))
            for p in PROPERTY_INDEX}
    return tuple(runs[p].best_fitness for p in PROPERTY_INDEX), runs


def optimize_aof(predict, weights: AofWeights, params: GaParams, seed: int) -> AofRun:
    if weights.normalizers is None:
        raise ValueError("AOF needs the single-objective maxima as normalizers")
    result = evolve(params, aof_oracle(predict, weights), seed)
    return AofRun(weights, result, np.asarray(predict(result.best[None, :]), dtype=float)[0])


def write_history(path, result: GaResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best_fitness", "mean_fitness"])
        for g, (best, mean) in enumerate(zip(result.best_history, result.mean_history)):
            writer.writerow([g, repr(best), repr(mean)])


def write_top_genomes(path, genomes: np.ndarray, fitness: np.ndarray, width: int, height: int) -> None:
    """CSV of rank, fitness, soft volume fraction and the hex-encoded packed genome record."""
    records = pack_many(genomes, width, height)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "fitness", "volume_fraction_soft", "packed_genome"])
        for r, (rec, f, bits) in enumerate(zip(records, fitness, genomes), start=1):
            vf = Microstructure(width, height, bits).volume_fraction_soft()
            writer.writerow([r, repr(float(f)), repr(vf), rec.tobytes().hex()])
