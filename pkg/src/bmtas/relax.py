"""Gumbel-Softmax relaxation of discrete routing, annealing, discretization.

During search every routing row is a temperature-softened sample; the final
architecture is the plain argmax of the logits. The soft sample multiplies
candidate outputs directly (a mixture), there is no straight-through pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .errors import BoundsError, DomainError
from .graph import RoutingMask
from .resloss import ArchitectureParams

# keeps -log(-log(u)) finite at both ends of the uniform draw
NOISE_EPS = 1e-12

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class TemperatureSchedule:
    """Linear annealing from `start` down to `end` over `total_steps`."""

    start: float = 5.0
    end: float = 0.1
    total_steps: int = 1

    def __post_init__(self):
        if not self.start >= self.end > 0:
            raise DomainError("need start >= end > 0")
        if self.total_steps < 1:
            raise DomainError("need at least one step")


@dataclass(frozen=True)
class GumbelSample:
    """One task's soft routing rows, with the noise that produced them."""

    z: np.ndarray
    noise: np.ndarray
    tau: float

    def __post_init__(self):
        z = np.array(self.z, dtype=np.float64)
        noise = np.array(self.noise, dtype=np.float64)
        if z.shape != noise.shape:
            raise DomainError("z and noise shapes disagree")
        if np.any(z <= 0) or np.any(np.abs(z.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise DomainError("soft rows must be positive and sum to 1")
        z.setflags(write=False)
        noise.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "noise", noise)


def gumbel_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """Standard Gumbel draws via -log(-log(u)), u kept away from {0, 1}."""
    u = rng.uniform(NOISE_EPS, 1.0 - NOISE_EPS, size=shape)
    return -np.log(-np.log(u))


def soft_row(logits_row: np.ndarray, noise_row: np.ndarray, tau: float) -> np.ndarray:
    """softmax((logits + g) / tau) for an explicit, fixed noise row."""
    if tau <= 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    return softmax((np.asarray(logits_row) + np.asarray(noise_row)) / tau)


def sample_soft(
    alpha: ArchitectureParams, task: int, layer: int, tau: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw one soft routing row for (task, 1-based layer)."""
    if not 0 <= task < alpha.num_tasks:
        raise BoundsError(f"task {task} out of range")
    if not 1 <= layer <= alpha.num_layers:
        raise BoundsError(f"layer {layer} out of range")
    g = gumbel_noise((alpha.num_candidates,), rng)
    return soft_row(alpha.logits[task, layer - 1], g, tau)


def draw_sample(
    alpha: ArchitectureParams, task: int, tau: float, rng: np.random.Generator
) -> GumbelSample:
    """All layers of one task in a single draw."""
    if not 0 <= task < alpha.num_tasks:
        raise BoundsError(f"task {task} out of range")
    if tau <= 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    g = gumbel_noise((alpha.num_layers, alpha.num_candidates), rng)
    z = softmax((alpha.logits[task] + g) / tau, axis=1)
    return GumbelSample(z=z, noise=g, tau=tau)


def schedule_tau(schedule: TemperatureSchedule, step: int) -> float:
    if not 0 <= step <= schedule.total_steps:
        raise BoundsError(f"step {step} outside 0..{schedule.total_steps}")
    frac = step / schedule.total_steps
    return schedule.start + (schedule.end - schedule.start) * frac


def discretize(alpha: ArchitectureParams) -> list[RoutingMask]:
    """Argmax routing per task; ties resolve to the lowest candidate index."""
    masks = []
    for t in range(alpha.num_tasks):
        choices = np.argmax(alpha.logits[t], axis=1)
        masks.append(
            RoutingMask.from_choices(t, choices.tolist(), alpha.num_candidates)
        )
    return masks
