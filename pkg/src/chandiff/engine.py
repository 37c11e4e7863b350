"""Forward noising, deterministic reverse updates and the two sampling loops.

The slow-fading loop starts at the matched time ``m`` of the (uniform)
equalized noise level and walks back to 0 in ``T`` equal steps of ``m/T``.
The fast-fading loop starts at the time matching the largest per-element
level, walks back in steps of ``1/T`` and water-fills the less noisy
elements up to the current level before every denoiser call.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .channel import EqualizedOutput
from .errors import DomainError, InvariantViolation
from .schedule import NoiseSchedule, noise_level, step_match

STEP_MODES = ("matched", "unit")
LEVEL_TOL = 1e-12


@dataclass
class DiffusionState:
    latent: np.ndarray
    t: float
    levels: np.ndarray
    steps_total: int


def forward_noise(f0, beta, rng: np.random.Generator):
    """``sqrt(1-beta) f0 + sqrt(beta) n``."""
    if not 0 <= beta <= 1:
        raise DomainError("noise level must lie in [0, 1]")
    f0 = np.asarray(f0, dtype=np.float64)
    return np.sqrt(1.0 - beta) * f0 + np.sqrt(beta) * rng.standard_normal(f0.shape)


def forward_bridge(f_s, beta_s, beta_t, rng: np.random.Generator):
    """Move a sample at level ``beta_s`` forward to the higher level ``beta_t``."""
    if beta_t < beta_s:
        raise DomainError("forward bridge needs beta_t >= beta_s")
    if not 0 <= beta_s < 1 or beta_t > 1:
        raise DomainError("noise levels must lie in [0, 1] with beta_s < 1")
    f_s = np.asarray(f_s, dtype=np.float64)
    keep = np.sqrt((1.0 - beta_t) / (1.0 - beta_s))
    add = np.sqrt(max(beta_t - beta_s * (1.0 - beta_t) / (1.0 - beta_s), 0.0))
    return keep * f_s + add * rng.standard_normal(f_s.shape)


def reverse_step(f_t, beta_t, beta_s, f0_hat):
    """Deterministic update from level ``beta_t`` down to ``beta_s``.

    ``f_s = sqrt(bs/bt) f_t + (sqrt(1-bs) - sqrt(bs (1-bt) / bt)) f0_hat``.
    """
    if not 0 <= beta_s < beta_t <= 1:
        raise DomainError("reverse step needs 0 <= beta_s < beta_t <= 1")
    c_t = np.sqrt(beta_s / beta_t)
    c_0 = np.sqrt(1.0 - beta_s) - np.sqrt(beta_s * (1.0 - beta_t) / beta_t)
    return c_t * np.asarray(f_t, dtype=np.float64) + c_0 * np.asarray(f0_hat, dtype=np.float64)


def water_fill(state: DiffusionState, beta_t: float, rng: np.random.Generator):
    """Raise every element's noise level to ``beta_t``.

    ``g_i = sqrt((1-bt)/(1-b_i)) f_i + sqrt(bt - b_i (1-bt)/(1-b_i)) eps_i``;
    elements already at ``beta_t`` are returned unchanged.
    """
    b = np.asarray(state.levels, dtype=np.float64)
    if np.any(b > beta_t + LEVEL_TOL):
        worst = float(np.max(b - beta_t))
        raise InvariantViolation(f"tracked level exceeds beta_t by {worst:.3e}")
    b = np.minimum(b, beta_t)
    f = np.asarray(state.latent, dtype=np.float64)
    eps = rng.standard_normal(f.shape)
    keep = np.sqrt((1.0 - beta_t) / (1.0 - b))
    add = np.sqrt(np.maximum(beta_t - b * (1.0 - beta_t) / (1.0 - b), 0.0))
    return np.where(b == beta_t, f, keep * f + add * eps)


def time_grid(t0: float, T: int, step: str = "matched") -> np.ndarray:
    """Decreasing times from ``t0`` to exactly 0.

    ``matched`` uses ``T`` steps of ``t0/T``; ``unit`` uses steps of ``1/T``
    with the last step clamped at 0.
    """
    if step == "matched":
        grid = t0 * np.arange(T, -1, -1) / T
    elif step == "unit":
        n = int(np.ceil(t0 * T - 1e-9))
        grid = np.append(t0 - np.arange(n) / T, 0.0)
    else:
        raise DomainError(f"unknown step mode {step!r}")
    grid[0] = t0
    grid[-1] = 0.0
    return grid


def _matched_time(sched, d):
    d = float(d)
    return float(step_match(sched, (1.0 - d) / d))


def denoise_slow(eq_out: EqualizedOutput, model, sched: NoiseSchedule, T: int = 50,
                 cond=None, step: str = "matched"):
    """Reverse diffusion from the matched time of a uniform noise level.

    When the matched time is below ``1/T`` the equalized values are returned
    unchanged.  ``values`` may carry leading batch dimensions.
    """
    if T < 1:
        raise DomainError("T must be at least 1")
    d = eq_out.uniform_level
    values = np.asarray(eq_out.values, dtype=np.float64)
    m = _matched_time(sched, d)
    if m < 1.0 / T:
        return values.copy()
    grid = time_grid(m, T, step)
    levels = noise_level(sched, grid)
    f = values
    for k in range(len(grid) - 1):
        bt, bs = float(levels[k]), float(levels[k + 1])
        f = reverse_step(f, bt, bs, model(f, bt, cond))
    return f


def denoise_fast(eq_out: EqualizedOutput, model, sched: NoiseSchedule, T: int = 50,
                 cond=None, fill: bool = True, rng: Optional[np.random.Generator] = None,
                 step: str = "unit",
                 on_step: Optional[Callable[[DiffusionState, float], None]] = None):
    """Water-filling reverse diffusion for per-element noise levels.

    Each iteration fills all elements to the current level ``beta_t`` (fresh
    noise every time), denoises, and applies the reverse step only where the
    tracked level is at least the next level ``beta_s``; other elements pass
    through untouched.  With ``fill=False`` the heterogeneous latent is fed
    to the denoiser as is.  ``on_step(state, beta_t)`` is called after every
    update.
    """
    if T < 1:
        raise DomainError("T must be at least 1")
    values = np.asarray(eq_out.values, dtype=np.float64)
    d = np.broadcast_to(np.asarray(eq_out.noise_levels, dtype=np.float64), values.shape)
    if fill and rng is None:
        rng = np.random.default_rng()
    d_max = float(np.max(d))
    t0 = _matched_time(sched, d_max)
    if t0 < 1.0 / T:
        return values.copy()
    grid = time_grid(t0, T, step)
    levels = noise_level(sched, grid)
    # the bisection lands on S(t0) >= d_max; the noisiest elements are taken
    # to sit exactly at S(t0), as the slow path assumes
    b = np.where(d == d_max, float(levels[0]), d)
    state = DiffusionState(values.copy(), float(grid[0]), b, T)
    for k in range(len(grid) - 1):
        bt, bs = float(levels[k]), float(levels[k + 1])
        if np.any(state.levels > bt + LEVEL_TOL):
            raise InvariantViolation(f"tracked level above beta_t at t={state.t:.6f}")
        g = water_fill(state, bt, rng) if fill else state.latent
        stepped = reverse_step(g, bt, bs, model(g, bt, cond))
        upd = state.levels >= bs
        state.latent = np.where(upd, stepped, state.latent)
        state.levels = np.where(upd, bs, state.levels)
        state.t = float(grid[k + 1])
        if np.any(state.levels > bs + LEVEL_TOL):
            raise InvariantViolation(f"tracked level above beta_s at t={state.t:.6f}")
        if on_step is not None:
            on_step(state, bt)
    return state.latent
