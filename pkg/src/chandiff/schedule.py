"""Continuous-time sigmoid noise schedule and SNR-to-timestep matching."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DomainError

BISECTION_STEPS = 60
TARGET_FLOOR = 1e-9
TARGET_CEIL = 1.0 - 1e-9


@dataclass(frozen=True)
class NoiseSchedule:
    """Sigmoid schedule ``S(t)`` mapping time in [0, 1] to a noise level.

    ``S(t) = (sig((t(e-g)+g)/tau) - sig(g/tau)) / (sig(e/tau) - sig(g/tau))``.
    The reverse process is deterministic, so ``reverse_variance`` is 0.
    """
    e: float = 3.0
    g: float = 0.0
    tau: float = 0.7
    reverse_variance: float = 0.0

    def __post_init__(self):
        if not self.e > self.g:
            raise DomainError("schedule needs e > g")
        if not self.tau > 0:
            raise DomainError("schedule temperature must be positive")
        if self.reverse_variance != 0:
            raise DomainError("only the deterministic reverse process is supported")

    def __call__(self, t):
        return noise_level(self, t)


def noise_level(sched: NoiseSchedule, t):
    """Noise level ``S(t)``; exact 0 at ``t = 0`` and exact 1 at ``t = 1``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1):
        raise DomainError("time must lie in [0, 1]")
    x = np.where(t == 1, sched.e, t * (sched.e - sched.g) + sched.g)
    lo = expit(sched.g / sched.tau)
    hi = expit(sched.e / sched.tau)
    out = (expit(x / sched.tau) - lo) / (hi - lo)
    return out if out.ndim else float(out)


def invert_noise_level(sched: NoiseSchedule, beta):
    """Time ``t`` with ``S(t) = beta`` by bisection.

    Targets are clamped to ``[1e-9, 1 - 1e-9]``.  The upper bracket end is
    returned, so ``S(t) >= beta`` always holds.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if np.any(beta <= 0) or np.any(beta >= 1):
        raise DomainError("noise level must lie in (0, 1)")
    target = np.clip(beta, TARGET_FLOOR, TARGET_CEIL)
    lo = np.zeros_like(target)
    hi = np.ones_like(target)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        below = noise_level(sched, mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return hi if hi.ndim else float(hi)


def step_match(sched: NoiseSchedule, snr_linear):
    """Diffusion time matching a channel SNR: ``S^-1(1 / (1 + snr))``."""
    snr = np.asarray(snr_linear, dtype=np.float64)
    if np.any(snr <= 0):
        raise DomainError("SNR must be positive")
    return invert_noise_level(sched, np.clip(1.0 / (1.0 + snr), TARGET_FLOOR, TARGET_CEIL))


def dump(sched: NoiseSchedule, points: int = 1001):
    """``(t, S(t))`` on a uniform grid."""
    t = np.linspace(0.0, 1.0, points)
    return t, noise_level(sched, t)
