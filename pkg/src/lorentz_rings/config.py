"""Experiment configuration: JSON files, CLI overrides and feasibility checks."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

from .lattice import Dims
from .scatter import kappa
from .transport import ReservoirParams

KINDS = ("validate", "fick", "relax", "walk", "couple", "orbits")

DEFAULT_TOLERANCES = {
    "sigma": 3.0,               # radius multiplier for ensemble and binomial checks
    "fick_relative": 0.20,      # finite-size slack on kappa matching, relative
    "chi2_alpha": 0.01,         # family-wise level, Bonferroni-split over cells
    "epsilon_fraction": 0.01,   # relax threshold as a fraction of kappa |rho_- - rho_+| / N
    "min_rate_fraction": 0.5,   # fitted relax rate must exceed this fraction of kappa
    "mgf_abs": 1e-8,
    "solve_abs": 1e-12,
    "tail_rate_relative": 0.25,
}

# bytes per phase-space site for a field plus its ring map and crossing data
_BYTES_PER_SITE = 48


class ConfigError(ValueError):
    """Invalid or infeasible configuration (a usage error)."""


@dataclass
class ExperimentConfig:
    kind: str = "validate"
    d: int = 2
    N: int = 4
    mu: float = 0.2
    rho_minus: float = 0.8
    rho_plus: float = 0.2
    rho_init: float = 0.5
    replicas: int = 100
    seed: int = 12345
    out: str | None = None
    threads: int = 1
    tolerances: dict[str, float] = field(default_factory=dict)
    n_values: list[int] | None = None   # N sweep (fick, walk trends)
    times: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    interface: int | str | None = None  # relax: layer index or "all" (sup over interfaces)
    epsilon: float | None = None
    horizon: int | None = None
    samples: int = 100_000              # couple starts and walk Monte Carlo sizes
    nu: float | None = None             # walk experiments; defaults to kappa(mu)
    memory_budget_mb: float = 4096.0

    def __post_init__(self):
        self.validate()

    # -- derived quantities -------------------------------------------------
    @property
    def dims(self) -> Dims:
        return Dims(self.d, self.N)

    @property
    def reservoir(self) -> ReservoirParams:
        return ReservoirParams(self.rho_minus, self.rho_plus, self.rho_init)

    @property
    def kappa(self) -> float:
        return kappa(self.mu, self.d)

    @property
    def walk_nu(self) -> float:
        return self.kappa if self.nu is None else self.nu

    def tol(self, name: str) -> float:
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def sweep(self) -> list[int]:
        return list(self.n_values) if self.n_values else [self.N]

    # -- checks ---------------------------------------------------------------
    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        try:
            Dims(self.d, self.N)
            for n in self.n_values or []:
                Dims(self.d, n)
            self.reservoir
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0 < self.mu < 1:
            raise ConfigError(f"mu must lie in (0, 1), got {self.mu}")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if 2 * self.d * self.walk_nu > 1 or self.walk_nu < 0:
            raise ConfigError(f"nu={self.walk_nu} violates 0 <= 2 d nu <= 1")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        if isinstance(self.interface, str) and self.interface != "all":
            raise ConfigError("interface must be an integer or 'all'")
        if isinstance(self.interface, int) and not 0 <= self.interface <= self.N - 2:
            raise ConfigError(f"interface {self.interface} outside [0, {self.N - 2}]")

    def memory_estimate_mb(self) -> float:
        """Peak working set of concurrently held replicas, in MiB."""
        largest = max(self.sweep())
        return largest ** (self.d + 1) * _BYTES_PER_SITE * self.threads / 2 ** 20

    def check_feasible(self) -> None:
        need = self.memory_estimate_mb()
        if need > self.memory_budget_mb:
            raise ConfigError(
                f"infeasible: about {need:.0f} MiB needed for {max(self.sweep())}^{self.d + 1} sites "
                f"x {self.threads} threads, budget {self.memory_budget_mb:.0f} MiB")

    def to_record(self) -> dict[str, Any]:
        rec = dataclasses.asdict(self)
        rec["tolerances"] = {k: self.tol(k) for k in sorted(DEFAULT_TOLERANCES)}
        rec.pop("out")
        rec.pop("threads")  # results never depend on it
        return rec


def _field_names() -> set[str]:
    return {f.name for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(data: dict[str, Any], **overrides) -> ExperimentConfig:
    """Build a config; unknown keys are rejected and ``None`` overrides ignored."""
    data = dict(data)
    if "dims" in data:
        data["d"], data["N"] = data.pop("dims")
    unknown = set(data) - _field_names()
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return config_from_dict(data, **overrides)
