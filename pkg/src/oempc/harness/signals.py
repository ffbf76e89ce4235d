"""Excitation and disturbance input sequences."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.signal import chirp


class SignalKind(str, enum.Enum):
    CHIRP = "chirp"
    PRBS_STEPS = "prbs_steps"
    IMPULSE_TRAIN = "impulse_train"
    CONSTANT = "constant"


@dataclass(frozen=True)
class SignalSpec:
    """Input signal parameters. Times are in minutes, frequencies in 1/min."""

    kind: SignalKind = SignalKind.CHIRP
    n_samples: int = 40_000
    tau_s: float = 0.25
    center: float = 1.0
    amplitude: float = 1.0
    f0: float = 1e-6
    f1: float = 0.3
    step_range: tuple[float, float] = (0.0, 2.0)
    min_hold: float = 0.5
    max_hold: float = 5.0
    period: float = 10.0
    magnitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SignalKind(self.kind))
        object.__setattr__(self, "step_range", tuple(self.step_range))
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.kind is SignalKind.CHIRP and not self.f0 < self.f1:
            raise ValueError("chirp needs f0 < f1")
        if not 0 < self.min_hold <= self.max_hold:
            raise ValueError("need 0 < min_hold <= max_hold")
        if not self.period > 0:
            raise ValueError("period must be positive")

    def hold_samples(self) -> tuple[int, int]:
        lo = max(1, int(round(self.min_hold / self.tau_s)))
        hi = max(lo, int(round(self.max_hold / self.tau_s)))
        return lo, hi


def gen_signal(spec: SignalSpec, seed: int = 0,
               box: tuple[float, float] = (1e-6, 2.0)) -> np.ndarray:
    """Input sequence of ``spec.n_samples`` values clipped into ``box``.

    The chirp is center + amplitude * sin(2 pi phi(t)) with a linear
    frequency sweep from f0 to f1 over the whole sequence. Step sequences
    draw levels uniformly from ``step_range`` and hold times uniformly
    between ``min_hold`` and ``max_hold``.
    """
    n = spec.n_samples
    kind = spec.kind
    if kind is SignalKind.CHIRP:
        t = np.arange(n) * spec.tau_s
        t1 = max(t[-1], spec.tau_s)
        # phi = -90 deg turns scipy's cosine into a sine
        u = spec.center + spec.amplitude * chirp(t, spec.f0, t1, spec.f1,
                                                 method="linear", phi=-90.0)
    elif kind is SignalKind.PRBS_STEPS:
        rng = np.random.default_rng(seed)
        lo_n, hi_n = spec.hold_samples()
        u = np.empty(n)
        k = 0
        while k < n:
            hold = int(rng.integers(lo_n, hi_n + 1))
            u[k:k + hold] = rng.uniform(*spec.step_range)
            k += hold
    elif kind is SignalKind.IMPULSE_TRAIN:
        u = np.full(n, spec.center)
        every = max(1, int(round(spec.period / spec.tau_s)))
        u[::every] += spec.magnitude
    else:
        u = np.full(n, spec.center, dtype=np.float64)
    return np.clip(u, box[0], box[1])


def hold_lengths(u) -> np.ndarray:
    """Run lengths of consecutive equal values."""
    u = np.asarray(u)
    if u.size == 0:
        return np.empty(0, dtype=np.int64)
    edges = np.flatnonzero(np.diff(u) != 0) + 1
    bounds = np.concatenate([[0], edges, [u.size]])
    return np.diff(bounds)
