"""Replica scheduling, ensemble statistics and report records."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .prf import derive_seed


def replica_seeds(master_seed: int, count: int) -> list[int]:
    return [derive_seed(master_seed, r) for r in range(count)]


def run_replicas(fn: Callable[[int, int], Any], master_seed: int, count: int, threads: int = 1) -> list[Any]:
    """Evaluate ``fn(r, seed_r)`` for every replica; results in replica order.

    Work is handed out by replica index; the returned list does not depend
    on ``threads``.
    """
    seeds = replica_seeds(master_seed, count)
    if threads <= 1:
        return [fn(r, s) for r, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count), seeds))


@dataclass
class EnsembleStats:
    """Per-replica values with mean, unbiased variance and a k-sigma radius of the mean."""

    values: np.ndarray
    target: float | None = None
    target_source: str = ""
    sigma: float = 3.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.size == 0:
            raise ValueError("no replica values")

    @property
    def count(self) -> int:
        return int(self.values.size)

    @property
    def mean(self) -> float:
        # sequential fold in replica order
        return math.fsum(self.values.tolist()) / self.count

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        m = self.mean
        return math.fsum(((self.values - m) ** 2).tolist()) / (self.count - 1)

    @property
    def radius(self) -> float:
        return self.sigma * math.sqrt(self.variance / self.count)

    def deviation(self) -> float:
        return abs(self.mean - self.target)

    def within(self, slack: float = 0.0) -> bool:
        """|mean - target| <= radius + slack."""
        return self.deviation() <= self.radius + slack

    def to_record(self) -> dict[str, Any]:
        rec = {"count": self.count, "mean": self.mean, "variance": self.variance,
               "radius": self.radius, "sigma": self.sigma}
        if self.target is not None:
            rec.update(target=self.target, target_source=self.target_source)
        return rec


@dataclass
class Check:
    name: str
    passed: bool
    value: Any = None
    target: Any = None
    tolerance: Any = None
    source: str = ""
    detail: dict[str, Any] = field(default_factory=dict)

    def to_record(self) -> dict[str, Any]:
        rec = {"name": self.name, "passed": bool(self.passed)}
        for key in ("value", "target", "tolerance"):
            v = getattr(self, key)
            if v is not None:
                rec[key] = _plain(v)
        if self.source:
            rec["target_source"] = self.source
        if self.detail:
            rec["detail"] = _plain(self.detail)
        return rec


@dataclass
class Report:
    """Outcome of one experiment: checks, summary numbers and CSV tables."""

    kind: str
    checks: list[Check] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    series: list[dict[str, Any]] = field(default_factory=list)
    census: list[dict[str, Any]] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def check(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)

    def to_record(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "checks": [c.to_record() for c in self.checks],
            "summary": _plain(self.summary),
            "seeds": list(self.seeds),
        }


def _plain(obj):
    """Convert numpy scalars/arrays and tuples to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def strictly_decreasing(xs: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def non_increasing(xs: Sequence[float]) -> bool:
    return all(b <= a for a, b in zip(xs, xs[1:]))
