"""Retrieval quality, capacity sweeps and log-log scaling fits."""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import data
from .network import RetrievalConfig, retrieve_batch
from .patterns import Pattern, PatternKind, PatternSet
from .seeding import derive_seed


class CorruptionKind(str, enum.Enum):
    FLIP = "flip"
    GAUSSIAN = "gaussian"


@dataclass
class Corruption:
    kind: CorruptionKind = CorruptionKind.FLIP
    level: float = 0.05  # flip probability or Gaussian sigma

    def __post_init__(self):
        self.kind = CorruptionKind(self.kind)

    @classmethod
    def flip(cls, prob: float = 0.05) -> "Corruption":
        return cls(CorruptionKind.FLIP, prob)

    @classmethod
    def gaussian(cls, sigma: float = 0.6) -> "Corruption":
        return cls(CorruptionKind.GAUSSIAN, sigma)

    @classmethod
    def for_kind(cls, kind: PatternKind) -> "Corruption":
        return cls.flip() if PatternKind(kind) is PatternKind.BINARY else cls.gaussian()

    def apply(self, patterns: PatternSet, seed: int) -> np.ndarray:
        if self.level == 0:
            return np.array(patterns.values)
        if self.kind is CorruptionKind.FLIP:
            return data.corrupt_flip(patterns, self.level, seed).values
        return data.corrupt_gaussian(patterns, self.level, seed)


@dataclass
class CapacitySpec:
    similarity_threshold: float = 0.99
    corruption: Corruption = field(default_factory=Corruption.flip)
    repeats: int = 10
    pattern_step: int | None = None  # None -> max(1, N // 32)
    max_patterns: int = 64
    seed: int = 0
    stop_on_failure: bool = True

    def __post_init__(self):
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must lie in (0, 1]")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.pattern_step is not None and self.pattern_step < 1:
            raise ValueError("pattern_step must be at least 1")

    def step_for(self, n: int) -> int:
        return self.pattern_step or max(1, n // 32)


@dataclass
class SimilarityResult:
    mean: float
    spread: tuple[float, float]
    values: np.ndarray  # (repeats, M)
    iterations: np.ndarray  # (repeats, M)
    converged: np.ndarray  # (repeats, M)


@dataclass
class CurvePoint:
    pattern_count: int
    mean: float
    low: float
    high: float
    passed: bool
    error: str | None = None
    result: SimilarityResult | None = None


@dataclass
class CapacityResult:
    capacity: int
    curve: list[CurvePoint]

    @property
    def similarity_curve(self) -> list[tuple[int, float, tuple[float, float]]]:
        return [(p.pattern_count, p.mean, (p.low, p.high)) for p in self.curve]


def cosine_similarity(a, b) -> float:
    a = a.values if isinstance(a, Pattern) else np.asarray(a, dtype=float)
    b = b.values if isinstance(b, Pattern) else np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("patterns must have equal length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def row_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity; a zero row scores 0."""
    num = np.sum(a * b, axis=-1)
    den = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(out, -1.0, 1.0)


def retrieval_similarity(
    net,
    patterns: PatternSet,
    corruption: Corruption,
    repeats: int = 10,
    cfg: RetrievalConfig | None = None,
    seed: int = 0,
) -> SimilarityResult:
    cfg = cfg or RetrievalConfig.for_kind(patterns.kind)
    m = patterns.count
    values = np.zeros((repeats, m))
    iterations = np.zeros((repeats, m), dtype=int)
    converged = np.zeros((repeats, m), dtype=bool)
    for r in range(repeats):
        noisy = corruption.apply(patterns, derive_seed(seed, "corrupt", r))
        res = retrieve_batch(net, noisy, cfg)
        values[r] = row_cosine(res.states, patterns.values)
        iterations[r] = res.iterations
        converged[r] = res.converged | res.cycle_detected
    per_repeat = values.mean(axis=1) if m else np.ones(repeats)
    mean = float(values.mean()) if m else 1.0
    return SimilarityResult(mean, (float(per_repeat.min()), float(per_repeat.max())), values, iterations, converged)


Trainer = Callable[[PatternSet, int], object]


def nested_sample(pool: PatternSet, count: int, seed: int) -> PatternSet:
    """First ``count`` entries of a seeded permutation of ``pool``.

    Successive counts share their patterns, so a sweep grows one memory set.
    """
    if count > pool.count:
        raise data.InsufficientDataError(f"need {count} patterns, pool has {pool.count}")
    order = np.random.default_rng(derive_seed(seed, "sample")).permutation(pool.count)
    return pool.subset(order[:count])


def _evaluate_count(args) -> CurvePoint:
    trainer, pool, count, spec, cfg = args
    patterns = nested_sample(pool, count, spec.seed)
    try:
        net = trainer(patterns, derive_seed(spec.seed, "train", count))
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return CurvePoint(count, float("nan"), float("nan"), float("nan"), False, error=str(exc))
    res = retrieval_similarity(net, patterns, spec.corruption, spec.repeats, cfg, derive_seed(spec.seed, "eval", count))
    return CurvePoint(count, res.mean, res.spread[0], res.spread[1], res.mean > spec.similarity_threshold, result=res)


def measure_capacity(
    trainer: Trainer,
    pool: PatternSet,
    spec: CapacitySpec,
    cfg: RetrievalConfig | None = None,
    workers: int = 1,
) -> CapacityResult:
    """Sweep pattern counts step, 2*step, ... and report the last consecutive pass.

    ``trainer(patterns, seed)`` returns a network; exceptions it raises mark
    that count as failed. With ``stop_on_failure`` the sweep ends at the first
    failing count, which leaves the capacity unchanged.
    """
    step = spec.step_for(pool.dim)
    counts = list(range(step, spec.max_patterns + 1, step))
    cfg = cfg or RetrievalConfig.for_kind(pool.kind)
    curve: list[CurvePoint] = []
    jobs = [(trainer, pool, c, spec, cfg) for c in counts]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for start in range(0, len(jobs), workers):
                chunk = list(ex.map(_evaluate_count, jobs[start : start + workers]))
                if spec.stop_on_failure and not all(p.passed for p in chunk):
                    # keep the serial curve: drop points past the first failure
                    first = next(i for i, p in enumerate(chunk) if not p.passed)
                    curve.extend(chunk[: first + 1])
                    break
                curve.extend(chunk)
    else:
        for job in jobs:
            point = _evaluate_count(job)
            curve.append(point)
            if spec.stop_on_failure and not point.passed:
                break
    capacity = 0
    for p in curve:
        if not p.passed:
            break
        capacity = p.pattern_count
    return CapacityResult(capacity, curve)


def fit_scaling_exponent(points) -> tuple[float, float, float]:
    """Least-squares line through (log N, log capacity): (slope, intercept, r^2)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (N, capacity) points")
    if np.any(pts <= 0):
        raise ValueError("N and capacity must be positive")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)
