"""JSON run configurations for the batch commands."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .diagnostics import BesovConfig
from .models import PRESETS, InitialData, SystemSpec, build_preset, modulated_coupling
from .solver import SolverConfig
from .spectral import TorusGrid

INITIAL_KINDS = ("weighted_decay", "fourier_bump", "chandrasekhar_mollified",
                 "random_hermitian", "custom_spectral")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    preset: str = "gravitating"
    coupling: Optional[list] = None
    # optional c(x) = c (1 + amplitude cos(kappa . x))
    modulation: Optional[dict] = None

    def build(self, d: int) -> SystemSpec:
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.preset == "general":
            if self.coupling is None:
                raise ConfigError("general preset needs a coupling tensor")
            base = np.asarray(self.coupling, dtype=float)
        else:
            base = build_preset(self.preset, d).coupling
        if self.modulation:
            try:
                c = modulated_coupling(base, float(self.modulation["amplitude"]),
                                       self.modulation["wavevector"])
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"bad modulation block: {exc}") from exc
            return SystemSpec(d, base.shape[0], c, preset=self.preset)
        return SystemSpec(d, base.shape[0], base, preset=self.preset)


@dataclass
class GridConfig:
    d: int = 2
    n: int = 64
    period: float = 2 * math.pi

    def build(self) -> TorusGrid:
        return TorusGrid(self.d, self.n, self.period)


@dataclass
class InitialConfig:
    kind: str = "fourier_bump"
    params: dict = field(default_factory=dict)

    def build(self, grid: TorusGrid, m: int, seed: int) -> InitialData:
        from . import models

        p = dict(self.params)
        k = self.kind
        if k not in INITIAL_KINDS:
            raise ConfigError(f"unknown initial data kind {k!r}")
        if k == "weighted_decay":
            return models.weighted_decay(grid, float(p.get("eta", 1.0)), m,
                                         tuple(p["cutoff"]) if "cutoff" in p else None)
        if k == "fourier_bump":
            if "amplitude" in p:
                A = float(p["amplitude"])
            elif "amplitude_times_A_star" in p:
                from .certificate import build_ladder, estimate_threshold

                A = float(p["amplitude_times_A_star"]) * estimate_threshold(
                    build_ladder(grid.d, 6))["A_star"]
            else:
                raise ConfigError("fourier_bump needs amplitude or amplitude_times_A_star")
            return models.fourier_bump(grid, A, p.get("center"), float(p.get("radius", 0.25)))
        if k == "chandrasekhar_mollified":
            return models.chandrasekhar_mollified(grid, float(p["eps"]),
                                                  tuple(p["cutoff"]) if "cutoff" in p else None)
        if k == "random_hermitian":
            return models.random_hermitian(grid, float(p.get("amplitude", 0.5)),
                                           int(p.get("bandwidth", 8)), m,
                                           int(p.get("seed", seed)))
        from .io import read_snapshot

        f = read_snapshot(p["path"])
        if f.grid != grid:
            raise ConfigError("snapshot grid does not match the configured grid")
        return models.custom_spectral(grid, f.coeffs)


@dataclass
class DiagnosticsConfig:
    thetas: list = field(default_factory=lambda: [0.0, 2.0])
    pm_indices: list = field(default_factory=lambda: [0.0])
    besov: dict = field(default_factory=lambda: {"a": 0.0, "k_min": -3, "k_max": 3})

    def besov_config(self) -> BesovConfig:
        return BesovConfig(**self.besov)


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    solver: dict = field(default_factory=dict)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output_dir: str = "out"
    seed: int = 0
    # compare-oracle only: {"R": mode box half-width, "steps": trapezoid nodes}
    oracle: dict = field(default_factory=dict)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def validate(self) -> "RunConfig":
        """Build every component once so errors surface before any output is written."""
        try:
            grid = self.grid.build()
            spec = self.model.build(grid.d)
            self.solver_config()
            self.diagnostics.besov_config()
            if self.initial.kind not in INITIAL_KINDS:
                raise ConfigError(f"unknown initial data kind {self.initial.kind!r}")
            if spec.constant_coupling and spec.m != np.shape(spec.coupling)[0]:
                raise ConfigError("coupling shape mismatch")
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(
                model=ModelConfig(**data.get("model", {})),
                grid=GridConfig(**data.get("grid", {})),
                initial=InitialConfig(**data.get("initial", {})),
                solver=dict(data.get("solver", {})),
                diagnostics=DiagnosticsConfig(**data.get("diagnostics", {})),
                output_dir=str(data.get("output_dir", "out")),
                seed=int(data.get("seed", 0)),
                oracle=dict(data.get("oracle", {})),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_json(text)
