"""Episodic tuning environment: observation, 8-way capacitor stepping and reward."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import PF
from .circuit import CircuitParams, gamma
from .dataset import LoadSample

# (dCp, dCs) sign pairs, lexicographic over {-1, 0, +1}^2 without (0, 0).
ACTIONS: tuple[tuple[int, int], ...] = tuple(
    (a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)
)
N_ACTIONS = len(ACTIONS)
STATE_DIM = 6


def action_index(dcp: int, dcs: int) -> int:
    return ACTIONS.index((dcp, dcs))


@dataclass(frozen=True)
class EnvConfig:
    cap_min: float = 0.5 * PF
    cap_max: float = 21.0 * PF
    delta_c: float = 0.5 * PF
    cap_init: float = 11.0 * PF
    eps_threshold: float = 0.01
    max_steps_train: int = 1000
    max_steps_test: int = 200
    rs: float = 50.0
    f_min: float = 1.0e9
    f_max: float = 2.0e9

    def __post_init__(self):
        if not self.delta_c > 0:
            raise ValueError("delta_c must be positive")
        if not self.cap_min <= self.cap_init <= self.cap_max:
            raise ValueError("cap_init must lie inside [cap_min, cap_max]")
        if not self.f_max > self.f_min > 0:
            raise ValueError("frequency band must satisfy 0 < f_min < f_max")


@dataclass(frozen=True)
class EnvState:
    gamma_mag: float
    sin_phi: float
    cos_phi: float
    cp_norm: float
    cs_norm: float
    f_norm: float

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma_mag, self.sin_phi, self.cos_phi,
                         self.cp_norm, self.cs_norm, self.f_norm])


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    terminal: bool
    truncated: bool
    gamma_mag: float


def r_base(g: float) -> float:
    if g < 0.01:
        return 100.0
    if g < 0.02:
        return 80.0 + 800.0 * (0.02 - g)
    if g < 0.06:
        return 40.0 + 600.0 * (0.06 - g)
    return -10.0 - 5.0 * math.log10(g)


def r_imp(delta: float) -> float:
    if delta > 0:
        return min(30.0, 300.0 * delta)
    if delta < -0.02:
        return 200.0 * delta
    return -0.5


def r_fast(g: float, k_step: int) -> float:
    if g < 0.01 and k_step < 200:
        return 0.1 * (200 - k_step)
    return 0.0


def reward(gamma_now: float, gamma_prev: float, k_step: int) -> float:
    """Piecewise step reward: base + improvement + fast-convergence terms."""
    return r_base(gamma_now) + r_imp(gamma_prev - gamma_now) + r_fast(gamma_now, k_step)


class EpisodeFinishedError(RuntimeError):
    pass


class TuningEnv:
    """Single L-network tuning episode over one load sample.

    Capacitors live on the lattice ``cap_init + k * delta_c``; a step that
    would leave ``[cap_min, cap_max]`` saturates at the outermost lattice
    point inside the range and still counts as a step.
    """

    def __init__(self, config: EnvConfig | None = None, max_steps: int | None = None):
        self.config = config or EnvConfig()
        self.max_steps = self.config.max_steps_train if max_steps is None else max_steps
        c = self.config
        self._k_lo = -math.floor((c.cap_init - c.cap_min) / c.delta_c + 1e-9)
        self._k_hi = math.floor((c.cap_max - c.cap_init) / c.delta_c + 1e-9)
        self.sample: LoadSample | None = None
        self._kp = self._ks = 0
        self.steps = 0
        self.done = False
        self._gamma: complex = 0j
        self._gamma_prev = 0.0

    @property
    def cp(self) -> float:
        return self.config.cap_init + self._kp * self.config.delta_c

    @property
    def cs(self) -> float:
        return self.config.cap_init + self._ks * self.config.delta_c

    @property
    def gamma_mag(self) -> float:
        return abs(self._gamma)

    def _lattice_index(self, c: float) -> int:
        k = (c - self.config.cap_init) / self.config.delta_c
        if abs(k - round(k)) > 1e-6:
            raise ValueError(f"{c / PF} pF is not on the tuning lattice")
        return min(max(round(k), self._k_lo), self._k_hi)

    def _evaluate(self) -> None:
        s = self.sample
        self._gamma = gamma(CircuitParams(self.cp, self.cs, s.f, self.config.rs), s.zl)

    def reset(self, sample: LoadSample) -> EnvState:
        self.sample = sample
        self._kp = self._ks = 0
        self.steps = 0
        self._evaluate()
        self._gamma_prev = self.gamma_mag
        self.done = self.gamma_mag < self.config.eps_threshold
        return self.observe()

    def set_caps(self, cp: float, cs: float) -> EnvState:
        """Jump to lattice capacitances (F) without consuming a step."""
        if self.sample is None:
            raise EpisodeFinishedError("call reset() first")
        self._kp = self._lattice_index(cp)
        self._ks = self._lattice_index(cs)
        self._evaluate()
        self._gamma_prev = self.gamma_mag
        self.done = self.gamma_mag < self.config.eps_threshold
        return self.observe()

    def observe(self) -> EnvState:
        c = self.config
        span = c.cap_max - c.cap_min
        mag = abs(self._gamma)
        phi = cmath.phase(self._gamma)
        return EnvState(
            gamma_mag=mag,
            sin_phi=math.sin(phi),
            cos_phi=math.cos(phi),
            cp_norm=(self.cp - c.cap_min) / span,
            cs_norm=(self.cs - c.cap_min) / span,
            f_norm=(self.sample.f - c.f_min) / (c.f_max - c.f_min),
        )

    def step(self, action: int) -> StepOutcome:
        if self.sample is None or self.done:
            raise EpisodeFinishedError("episode is finished; call reset()")
        dcp, dcs = ACTIONS[action]
        self._kp = min(max(self._kp + dcp, self._k_lo), self._k_hi)
        self._ks = min(max(self._ks + dcs, self._k_lo), self._k_hi)
        self.steps += 1
        self._evaluate()
        g = self.gamma_mag
        r = reward(g, self._gamma_prev, self.steps)
        self._gamma_prev = g
        terminal = g < self.config.eps_threshold
        truncated = not terminal and self.steps >= self.max_steps
        self.done = terminal or truncated
        return StepOutcome(self.observe(), r, terminal, truncated, g)
