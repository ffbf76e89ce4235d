"""Experiment configuration, loaded from YAML.

Every key is optional; missing ones take the defaults below. Unknown keys
are rejected so typos do not silently fall back to defaults. Schema::

    plant:        PlantParams fields (k1, k2, V, cA0, alpha, tau_s, u_min,
                  u_max, noise_std_frac, b_outflow_sign, substeps)
    regressor:    {n_a, n_b, m}
    oracle:       {L_override, weights, stride, safety}
    empc:         {variant, N, N_p, tol, max_iter, penalty_weight,
                   penalty_growth, max_rounds, n_random_starts, multistart,
                   feas_tol, Qz, R}
    signal:       SignalSpec fields for the training chirp
    validation_signal: SignalSpec fields for the held-out step sequence
    ideal:        {n_trials, N, L0, max_draws}
    online:       {iterations, period, update}
    cv:           {n_a, n_b, L, stride}
    seeds, t_sim, n_init, workers, output_dir
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from oempc.empc import SolverSettings, Variant
from oempc.harness.signals import SignalKind, SignalSpec
from oempc.narx import RegressorSpec
from oempc.plant import PlantParams


@dataclass(frozen=True)
class OracleSettings:
    L_override: float | None = 100.0
    weights: tuple | None = None
    stride: int = 10
    safety: float = 1.5

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))


@dataclass(frozen=True)
class ControllerSettings:
    variant: str = Variant.ORACLE_TERMINAL_EQ.value
    N: int = 5
    N_p: int | None = None
    tol: float = 1e-6
    max_iter: int = 200
    penalty_weight: float = 1e2
    penalty_growth: float = 10.0
    max_rounds: int = 6
    n_random_starts: int = 0
    multistart: bool = True
    feas_tol: float = 1e-5
    Qz: float = 1.0
    R: float = 0.1

    def __post_init__(self):
        Variant(self.variant)

    def solver(self, seed: int = 0) -> SolverSettings:
        return SolverSettings(self.tol, self.max_iter, self.penalty_weight,
                              self.penalty_growth, self.max_rounds,
                              self.n_random_starts, seed, self.multistart)


@dataclass(frozen=True)
class IdealSettings:
    n_trials: int = 100
    N: int = 5
    L0: float = 100.0
    max_draws: int = 200


@dataclass(frozen=True)
class OnlineSettings:
    iterations: int = 20
    period: float = 10.0
    update: bool = True


@dataclass(frozen=True)
class CvSettings:
    n_a: tuple = (2, 3, 4)
    n_b: tuple = (2, 3, 4)
    L: tuple = (100.0,)
    stride: int = 10

    def __post_init__(self):
        for name in ("n_a", "n_b", "L"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


def _default_validation() -> SignalSpec:
    return SignalSpec(kind=SignalKind.PRBS_STEPS, n_samples=4000)


@dataclass(frozen=True)
class ExperimentConfig:
    plant: PlantParams = PlantParams()
    regressor: RegressorSpec = RegressorSpec()
    oracle: OracleSettings = OracleSettings()
    empc: ControllerSettings = ControllerSettings()
    signal: SignalSpec = SignalSpec()
    validation_signal: SignalSpec = field(default_factory=_default_validation)
    ideal: IdealSettings = IdealSettings()
    online: OnlineSettings = OnlineSettings()
    cv: CvSettings = CvSettings()
    seeds: tuple = (0,)
    t_sim: float = 100.0
    n_init: int = 100
    workers: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.t_sim > 0:
            raise ValueError("t_sim must be positive")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_sim / self.plant.tau_s))

    @property
    def window(self) -> int:
        return int(round(self.online.period / self.plant.tau_s))


_SECTIONS = {
    "plant": PlantParams,
    "regressor": RegressorSpec,
    "oracle": OracleSettings,
    "empc": ControllerSettings,
    "signal": SignalSpec,
    "validation_signal": SignalSpec,
    "ideal": IdealSettings,
    "online": OnlineSettings,
    "cv": CvSettings,
}


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ValueError(f"section {where!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown keys in {where!r}: {sorted(unknown)}")
    base = _default_validation() if where == "validation_signal" else cls()
    return dataclasses.replace(base, **values)


def config_from_dict(raw: dict | None) -> ExperimentConfig:
    raw = dict(raw or {})
    kw = {}
    for key, cls in _SECTIONS.items():
        if key in raw:
            kw[key] = _build(cls, raw.pop(key) or {}, key)
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} - set(_SECTIONS)
    unknown = set(raw) - top
    if unknown:
        raise ValueError(f"unknown top-level keys: {sorted(unknown)}")
    kw.update(raw)
    return ExperimentConfig(**kw)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(v):
        if dataclasses.is_dataclass(v):
            return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)
                    if f.init}
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if hasattr(v, "value"):
            return v.value
        return v
    return plain(cfg)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
