"""Denoisers predicting the clean latent ``f0`` from ``(f_t, beta_t)``.

Two kinds share one calling convention ``model(noisy, beta, cond=None)``:

* :class:`AnalyticDenoiser` returns the exact Bayes posterior mean of a
  synthetic source.
* :class:`NetworkDenoiser` is a small dense network trained with the
  two-term masked objective.  Its input is the noisy latent with masked
  positions zeroed, the noise level, the binary mask, and (optionally) a
  one-hot component label.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, InvalidShapeError, TrainingDiverged
from .nn import MLP
from .schedule import NoiseSchedule, noise_level
from .sources import ConditioningVector, SourceModel, posterior_mean, sample_source

CONDITIONING_MODES = ("none", "label")

DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 500


@dataclass(frozen=True)
class TrainingConfig:
    steps: int = 20000
    batch_size: int = 64
    learning_rate: float = 5e-3
    mask_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise DomainError("steps must be >= 0 and batch_size >= 1")
        # a zero rate is allowed: it freezes the weights
        if self.learning_rate < 0:
            raise DomainError("learning rate must be non-negative")
        if not 0 <= self.mask_fraction < 1:
            raise DomainError("mask fraction must lie in [0, 1)")


class AnalyticDenoiser:
    kind = "analytic_mmse"

    def __init__(self, source: SourceModel, conditioning_mode: str = "none"):
        if conditioning_mode not in CONDITIONING_MODES:
            raise DomainError(f"unknown conditioning mode {conditioning_mode!r}")
        self.source = source
        self.conditioning_mode = conditioning_mode

    def __call__(self, noisy, beta, cond: Optional[ConditioningVector] = None, mask=None):
        if self.conditioning_mode == "none":
            cond = None
        return posterior_mean(self.source, noisy, beta, cond)


class NetworkDenoiser:
    kind = "trained_network"
    role = "denoiser"

    def __init__(self, mlp: MLP, n_dims: int, conditioning_mode: str = "none",
                 n_labels: int = 0, seed: int = 0):
        if conditioning_mode not in CONDITIONING_MODES:
            raise DomainError(f"unknown conditioning mode {conditioning_mode!r}")
        if conditioning_mode == "label" and n_labels < 1:
            raise DomainError("label conditioning needs at least one label")
        expected = input_width(n_dims, conditioning_mode, n_labels)
        if mlp.sizes[0] != expected or mlp.sizes[-1] != n_dims:
            raise InvalidShapeError(
                f"network shape {mlp.sizes} does not fit n_dims={n_dims}, inputs={expected}")
        self.mlp = mlp
        self.n_dims = n_dims
        self.conditioning_mode = conditioning_mode
        self.n_labels = n_labels if conditioning_mode == "label" else 0
        self.seed = seed
        self.loss_curve = np.zeros(0)

    def features(self, noisy, beta, cond=None, mask=None):
        x = np.atleast_2d(np.asarray(noisy, dtype=np.float64))
        if x.shape[-1] != self.n_dims:
            raise InvalidShapeError(f"expected latent length {self.n_dims}, got {x.shape[-1]}")
        batch = x.shape[0]
        m = np.zeros_like(x) if mask is None else np.broadcast_to(
            np.asarray(mask, dtype=np.float64), x.shape)
        beta_col = np.broadcast_to(np.asarray(beta, dtype=np.float64).reshape(-1, 1), (batch, 1))
        cols = [x * (1.0 - m), beta_col, m]
        if self.conditioning_mode == "label":
            onehot = np.zeros((batch, self.n_labels))
            if cond is not None and cond.label is not None:
                labels = np.broadcast_to(np.asarray(cond.label), (batch,))
                onehot[np.arange(batch), labels] = 1.0
            cols.append(onehot)
        return np.concatenate(cols, axis=1)

    def __call__(self, noisy, beta, cond: Optional[ConditioningVector] = None, mask=None):
        noisy = np.asarray(noisy, dtype=np.float64)
        out = self.mlp.forward(self.features(noisy, beta, cond, mask))
        return out.reshape(noisy.shape)


def input_width(n_dims: int, conditioning_mode: str, n_labels: int) -> int:
    return 2 * n_dims + 1 + (n_labels if conditioning_mode == "label" else 0)


def new_network(n_dims: int, rng: np.random.Generator, conditioning_mode: str = "none",
                n_labels: int = 0, seed: int = 0) -> NetworkDenoiser:
    """Freshly initialized denoiser with two hidden layers of width ``4 * n_dims``."""
    width = 4 * n_dims
    sizes = (input_width(n_dims, conditioning_mode, n_labels), width, width, n_dims)
    return NetworkDenoiser(MLP(sizes, rng), n_dims, conditioning_mode, n_labels, seed)


def denoise(model, noisy, beta, cond: Optional[ConditioningVector] = None):
    """Predict ``f0`` from a noisy latent at noise level ``beta``."""
    beta_arr = np.asarray(beta)
    if np.any(beta_arr <= 0) or np.any(beta_arr >= 1):
        raise DomainError("noise level must lie in (0, 1)")
    n = getattr(model, "n_dims", None)
    if n is not None and np.shape(noisy)[-1] != n:
        raise InvalidShapeError(f"expected latent length {n}, got {np.shape(noisy)[-1]}")
    return model(noisy, beta, cond)


def _mask_array(mask, n):
    if mask is None:
        return np.zeros(n)
    m = np.asarray(mask)
    if m.dtype == bool:
        if m.shape[-1] != n:
            raise InvalidShapeError("boolean mask length must match the latent")
        return m.astype(np.float64)
    out = np.zeros(n)
    idx = m.astype(int).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise InvalidShapeError("mask index out of range")
    out[idx] = 1.0
    return out


def dm_loss(model, f_t, f_0, beta, mask=None, cond=None) -> float:
    """Squared error on the plain input plus squared error on the masked input.

    ``mask`` is an index set or boolean vector of masked positions; masked
    positions of ``f_t`` are zeroed for the second term.
    """
    f_t = np.asarray(f_t, dtype=np.float64)
    f_0 = np.asarray(f_0, dtype=np.float64)
    m = _mask_array(mask, f_t.shape[-1])
    full = model(f_t, beta, cond)
    masked_input = f_t * (1.0 - m)
    if isinstance(model, NetworkDenoiser):
        masked = model(f_t, beta, cond, mask=m)
    else:
        masked = model(masked_input, beta, cond)
    return float(np.sum((full - f_0) ** 2) + np.sum((masked - f_0) ** 2))


def train_denoiser(source: SourceModel, sched: NoiseSchedule, cfg: TrainingConfig,
                   n_dims: int, conditioning_mode: str = "none") -> NetworkDenoiser:
    """Fit a network denoiser by SGD on ``||f0 - eps(f_t, beta_t)||^2``.

    Each step draws ``f0`` from the source, ``t ~ U(0, 1)``, ``beta_t = S(t)``
    and ``f_t = sqrt(1-beta_t) f0 + sqrt(beta_t) n``.  With a positive
    ``mask_fraction`` a second term on a randomly masked copy of ``f_t`` is
    added.  The per-step batch loss is kept on ``model.loss_curve``.
    """
    rng = np.random.default_rng(cfg.seed)
    n_labels = source.n_labels if conditioning_mode == "label" else 0
    if conditioning_mode == "label" and n_labels == 0:
        raise DomainError("label conditioning needs a mixture source")
    model = new_network(n_dims, rng, conditioning_mode, n_labels, cfg.seed)
    mlp = model.mlp
    losses = np.empty(cfg.steps)
    initial = None
    streak = 0
    for step in range(cfg.steps):
        f0, cond = sample_source(source, n_dims, rng, size=cfg.batch_size)
        t = rng.uniform(0.0, 1.0, cfg.batch_size)
        beta = noise_level(sched, t)[:, None]
        f_t = np.sqrt(1.0 - beta) * f0 + np.sqrt(beta) * rng.standard_normal(f0.shape)
        label_cond = cond if conditioning_mode == "label" else None

        out, acts = mlp.forward(model.features(f_t, beta, label_cond), keep=True)
        resid = out - f0
        loss = np.sum(resid * resid) / cfg.batch_size
        grads = mlp.backward(acts, 2.0 * resid / cfg.batch_size)
        if cfg.mask_fraction > 0:
            mask = (rng.random(f0.shape) < cfg.mask_fraction).astype(np.float64)
            out_m, acts_m = mlp.forward(model.features(f_t, beta, label_cond, mask), keep=True)
            resid_m = out_m - f0
            loss += np.sum(resid_m * resid_m) / cfg.batch_size
            grads = [g + h for g, h in zip(grads, mlp.backward(acts_m, 2.0 * resid_m / cfg.batch_size))]

        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}")
        if initial is None:
            initial = loss
        streak = streak + 1 if loss > DIVERGENCE_FACTOR * initial else 0
        if streak >= DIVERGENCE_PATIENCE:
            raise TrainingDiverged(
                f"loss above {DIVERGENCE_FACTOR}x its initial value for {streak} steps")
        losses[step] = loss
        if cfg.learning_rate > 0:
            mlp.sgd_step(grads, cfg.learning_rate)
            if not mlp.all_finite():
                raise TrainingDiverged(f"non-finite weights after step {step}")
    model.loss_curve = losses
    return model


def gradient_check(model: NetworkDenoiser, probe, beta: float, step: float = 1e-3) -> float:
    """Max relative deviation between backprop and five-point finite-difference gradients.

    The probed loss is ``||eps(sqrt(1-beta) probe, beta) - probe||^2``.
    Relative deviations use ``max(|analytic|, |numeric|, 1e-6)`` as the
    denominator so vanishing gradients do not divide by zero.  The
    five-point stencil keeps the numeric error near 1e-11, well under that
    floor; a two-point stencil sits near 1e-10 and swamps tiny gradients.
    """
    probe = np.atleast_2d(np.asarray(probe, dtype=np.float64))
    x = model.features(np.sqrt(1.0 - beta) * probe, beta)
    mlp = model.mlp.copy()

    def loss_at(flat):
        mlp.set_flat(flat)
        return float(np.sum((mlp.forward(x) - probe) ** 2))

    base = mlp.get_flat()
    mlp.set_flat(base)
    out, acts = mlp.forward(x, keep=True)
    analytic = np.concatenate([g.ravel() for g in mlp.backward(acts, 2.0 * (out - probe))])
    numeric = np.empty_like(base)
    work = base.copy()
    for i in range(base.size):
        vals = []
        for k in (2, 1, -1, -2):
            work[i] = base[i] + k * step
            vals.append(loss_at(work))
        work[i] = base[i]
        numeric[i] = (-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))
