"""Builds the objects every experiment needs from an ExperimentConfig.

Random streams are keyed by ``[seed, STREAM_*]`` so that the training data,
validation data and closed-loop trials never share draws.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from oempc import oracle, plant
from oempc.empc import (EmpcConfig, ModelController, OracleController, Variant,
                        estimate_eta, synth_terminal)
from oempc.harness.config import ExperimentConfig
from oempc.harness.experiments import (CapturePolicy, ModelPolicy, OraclePolicy,
                                       build_dataset, run_validation, simulate_measured)
from oempc.harness.signals import gen_signal
from oempc.sstarget import SteadyTarget, solve_ss_oracle, sweep_model

STREAM_TRAIN_NOISE, STREAM_VALID_SIGNAL, STREAM_VALID_NOISE = 10, 11, 12


def input_box(cfg: ExperimentConfig) -> tuple[float, float]:
    return cfg.plant.u_lo, cfg.plant.u_max


def training_inputs(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    return gen_signal(cfg.signal, seed, input_box(cfg))


def validation_inputs(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    return gen_signal(cfg.validation_signal, [seed, STREAM_VALID_SIGNAL],
                      input_box(cfg))


def training_data(cfg: ExperimentConfig, seed: int) -> oracle.Dataset:
    """Full measured training table (not subsampled)."""
    return build_dataset(training_inputs(cfg, seed), cfg.plant, cfg.regressor,
                         noise_seed=[seed, STREAM_TRAIN_NOISE], experiment="train")


def train(cfg: ExperimentConfig, data: oracle.Dataset, stride: int | None = None
          ) -> oracle.LipschitzModel:
    o = cfg.oracle
    return oracle.fit(data, o.L_override, weights=o.weights, safety=o.safety,
                      stride=o.stride if stride is None else stride)


def trained_oracle(cfg: ExperimentConfig, seed: int, stride: int | None = None
                   ) -> oracle.LipschitzModel:
    return train(cfg, training_data(cfg, seed), stride)


def validate(cfg: ExperimentConfig, model: oracle.LipschitzModel, seed: int):
    return run_validation(model, validation_inputs(cfg, seed), cfg.plant,
                          noise_seed=[seed, STREAM_VALID_NOISE])


def measured_pair(cfg: ExperimentConfig, inputs, noise_seed):
    """``(measured_costs, inputs)`` of an open-loop run, for cross-validation."""
    _, _, m = simulate_measured(inputs, cfg.plant, noise_seed)
    return m, np.asarray(inputs, dtype=np.float64)


def model_target(cfg: ExperimentConfig) -> SteadyTarget:
    return sweep_model(cfg.plant, spec=cfg.regressor)


def oracle_target(cfg: ExperimentConfig, model: oracle.LipschitzModel) -> SteadyTarget:
    return solve_ss_oracle(model, input_box(cfg))


def oracle_controller_config(cfg: ExperimentConfig, model: oracle.LipschitzModel,
                             target: SteadyTarget, seed: int = 0,
                             N_p: int | None = None) -> EmpcConfig:
    """Controller settings from ``cfg.empc``; terminal ingredients or the
    linear terminal weight are synthesised from ``model`` when needed."""
    e = cfg.empc
    variant = Variant(e.variant)
    if variant is Variant.MODEL_TERMINAL_EQ:
        raise ValueError("empc.variant must name an oracle-based variant")
    kw = {}
    if variant is Variant.ORACLE_TERMINAL_INGREDIENTS:
        n = cfg.regressor.n_z
        m = cfg.regressor.m
        kw["terminal"] = synth_terminal(model, target, input_box(cfg),
                                        Qz=e.Qz * np.eye(n), R=e.R * np.eye(m))
    elif variant is Variant.ORACLE_LINEAR_TERMINAL:
        kw["eta"] = estimate_eta(model, target)
    return EmpcConfig(variant, e.N, target, input_box(cfg), cfg.regressor,
                      N_p=e.N_p if N_p is None else N_p, solver=e.solver(seed),
                      feas_tol=e.feas_tol, **kw)


def ideal_controller_config(cfg: ExperimentConfig, target: SteadyTarget,
                            seed: int = 0) -> EmpcConfig:
    e = cfg.empc
    return EmpcConfig(Variant.MODEL_TERMINAL_EQ, e.N, target, input_box(cfg),
                      cfg.regressor, solver=e.solver(seed), feas_tol=e.feas_tol)


# Policy factories are classes (not closures) so worker processes can
# unpickle them.


@dataclasses.dataclass(frozen=True)
class OracleFactory:
    cfg: EmpcConfig
    model: oracle.LipschitzModel

    def __call__(self):
        return OraclePolicy(OracleController(self.cfg, self.model))


@dataclasses.dataclass(frozen=True)
class IdealFactory:
    cfg: EmpcConfig
    params: plant.PlantParams
    terminal_form: str = "state"
    warm_solver: object = None

    def __call__(self):
        return ModelPolicy(ModelController(self.cfg, self.params, self.terminal_form,
                                           self.warm_solver))


def capture_ideal_factory(cfg: EmpcConfig, params: plant.PlantParams) -> IdealFactory:
    """Model-based controller solving exactly the problem the capture policy
    solves at each step (output-form terminal, warm solves single-start)."""
    warm = dataclasses.replace(cfg.solver, multistart=False)
    return IdealFactory(cfg, params, "output", warm)


@dataclasses.dataclass(frozen=True)
class CaptureFactory:
    params: plant.PlantParams
    target: SteadyTarget
    N: int
    spec: object
    L0: float
    solver: object

    def __call__(self):
        return CapturePolicy(self.params, self.target, self.N, self.spec, self.L0,
                             self.solver)
