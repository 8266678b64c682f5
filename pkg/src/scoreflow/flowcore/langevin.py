"""Discriminator-guided Langevin sampling.

Each step builds a kernel discriminator whose generator centres are the
current particles and whose data centres are a fresh batch from the data pool,
then moves every particle by ``x <- x - alpha_t grad D(x) + gamma_t z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .field import DiscriminatorField, as_particles

DECAY_MODES = ("constant", "geometric")
NOISE_MODES = ("zero", "sqrt_two_alpha")


class LangevinDiverged(FloatingPointError):
    def __init__(self, step):
        super().__init__(f"non-finite particle at step {step}")
        self.step = step


@dataclass(frozen=True)
class LangevinSchedule:
    alpha0: float
    steps: int
    decay: str = "constant"
    rho: float = 0.99
    noise: str = "zero"

    def __post_init__(self):
        if not (math.isfinite(self.alpha0) and self.alpha0 >= 0):
            raise ValueError("alpha0 must be finite and >= 0")
        if int(self.steps) < 0:
            raise ValueError("steps must be >= 0")
        if self.decay not in DECAY_MODES:
            raise ValueError(f"decay must be one of {DECAY_MODES}")
        if self.noise not in NOISE_MODES:
            raise ValueError(f"noise must be one of {NOISE_MODES}")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")


def _check_step(s, t):
    if not 0 <= t < s.steps:
        raise IndexError(f"step {t} outside [0, {s.steps})")


def schedule_alpha(s, t):
    _check_step(s, t)
    if s.decay == "geometric":
        return s.alpha0 * s.rho**t
    return s.alpha0


def schedule_gamma(s, t):
    a = schedule_alpha(s, t)
    return math.sqrt(2.0 * a) if s.noise == "sqrt_two_alpha" else 0.0


@dataclass
class LangevinResult:
    particles: np.ndarray
    step_sq: np.ndarray
    snapshots: list = field(default_factory=list)


def langevin_run(init, data, kernel, schedule, rng, scale=1.0, batch_size=1000,
                 recorder=None, snapshot_stride=0):
    """Run the sampler for ``schedule.steps`` steps.

    ``recorder(t, x)`` is called on the initial set (``t = 0``) and after every
    step. ``step_sq[t-1]`` is the mean over particles of ``|x_t - x_{t-1}|^2``.
    With ``snapshot_stride > 0``, ``(t, x_t)`` pairs are kept every that many
    steps, including ``t = 0``.
    """
    x = as_particles(init, "init").copy()
    pool = as_particles(data, "data")
    if pool.shape[1] != x.shape[1]:
        raise ValueError("particles and data must share a dimension")
    n_batch = min(pool.shape[0], int(batch_size))
    step_sq = np.empty(schedule.steps)
    snaps = []
    if snapshot_stride:
        snaps.append((0, x.copy()))
    if recorder is not None:
        recorder(0, x)
    for t in range(schedule.steps):
        alpha = schedule_alpha(schedule, t)
        gamma = schedule_gamma(schedule, t)
        if n_batch == pool.shape[0]:
            centers = pool
        else:
            centers = pool[rng.choice(pool.shape[0], n_batch)]
        disc = DiscriminatorField(centers, x, kernel, scale)
        with np.errstate(over="ignore", invalid="ignore"):
            step = -alpha * disc.grad(x)
            if gamma:
                step = step + gamma * rng.normal(x.shape)
            new = x + step
        if not np.all(np.isfinite(new)):
            raise LangevinDiverged(t + 1)
        step_sq[t] = float(np.mean(np.sum(step * step, axis=1)))
        x = new
        if snapshot_stride and (t + 1) % snapshot_stride == 0:
            snaps.append((t + 1, x.copy()))
        if recorder is not None:
            recorder(t + 1, x)
    return LangevinResult(x, step_sq, snaps)
