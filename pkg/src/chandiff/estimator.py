"""Pilot-free estimation of the signal level alpha and the channel phase.

The receiver sees ``u = l2_normalize(sqrt(alpha) R(e^{j phi} C(f)) + sqrt(1-alpha) n)``.
Moment estimators read alpha from the excess fourth moment and phi from
the complex sample mean (which needs a source with a nonzero mean).
Network estimators are small dense nets trained on the squared-error
objectives for ``alpha`` and ``phi / pi``.  :func:`joint_estimate`
alternates the two with cumulative phase removal.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .denoiser import DIVERGENCE_FACTOR, DIVERGENCE_PATIENCE, TrainingConfig
from .errors import DomainError, IdentifiabilityError, InvariantViolation, TrainingDiverged
from .nn import MLP
from .signal import l2_normalize, power_normalize, to_complex, to_real
from .sources import SourceModel, sample_source

ALPHA_FLOOR = 1e-6
ALPHA_CEIL = 1.0 - 1e-6


def wrap_phase(phi):
    """Wrap angles to (-pi, pi]."""
    out = np.mod(np.asarray(phi, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


def rotate(observed, phi):
    """Multiply the complex view of a latent by ``e^{j phi}``."""
    return to_real(to_complex(observed) * np.exp(1j * phi))


@dataclass
class CsiEstimate:
    alpha: float
    phase: float
    iterations: int
    converged: bool
    equalized: np.ndarray = field(repr=False, default=None)
    rotations: List[float] = field(default_factory=list)


class MomentSnrEstimator:
    kind = "moment_based"

    def __init__(self, kurtosis: float):
        if abs(kurtosis - 3.0) < 1e-9:
            raise IdentifiabilityError("source kurtosis 3 gives no alpha information")
        self.kurtosis = float(kurtosis)

    @classmethod
    def for_source(cls, source: SourceModel):
        return cls(source.fourth_moment())

    def __call__(self, observed) -> float:
        u = np.asarray(observed, dtype=np.float64)
        m2 = np.mean(u * u)
        m4 = np.mean(u**4) / (m2 * m2)
        alpha = np.sqrt(max(0.0, (m4 - 3.0) / (self.kurtosis - 3.0)))
        return float(np.clip(alpha, ALPHA_FLOOR, ALPHA_CEIL))


class MomentPhaseEstimator:
    kind = "moment_based"

    def __init__(self, mean_offset: float):
        if mean_offset == 0:
            raise IdentifiabilityError("zero-mean source: phase only known mod pi")
        self.mean_offset = float(mean_offset)

    @classmethod
    def for_source(cls, source: SourceModel):
        return cls(source.mean_offset)

    def __call__(self, observed, alpha=None) -> float:
        w = np.mean(to_complex(observed))
        phi = np.arctan2(w.imag, w.real)
        if self.mean_offset < 0:
            phi += np.pi
        return float(wrap_phase(phi))


class NetworkSnrEstimator:
    """Dense net of widths ``(4N, N, 1)`` with a sigmoid output.

    The observation is sorted before it enters the net: the target depends
    on the empirical distribution only, and sorting hands the net the
    order statistics directly.
    """
    kind = "trained_network"
    role = "snr_estimator"

    def __init__(self, mlp: MLP, n_dims: int, seed: int = 0):
        if mlp.sizes[0] != n_dims or mlp.sizes[-1] != 1 or mlp.output != "sigmoid":
            raise DomainError(f"network {mlp.sizes} ({mlp.output}) is not an SNR net for N={n_dims}")
        self.mlp = mlp
        self.n_dims = n_dims
        self.seed = seed
        self.loss_curve = np.zeros(0)

    def features(self, observed):
        return np.sort(np.atleast_2d(np.asarray(observed, dtype=np.float64)), axis=-1)

    def __call__(self, observed):
        a = self.mlp.forward(self.features(observed))[:, 0]
        a = np.clip(a, ALPHA_FLOOR, ALPHA_CEIL)
        return float(a[0]) if np.ndim(observed) == 1 else a


class NetworkPhaseEstimator:
    """Dense net on ``[observation, alpha]`` predicting ``phi / pi`` through tanh."""
    kind = "trained_network"
    role = "phase_estimator"

    def __init__(self, mlp: MLP, n_dims: int, seed: int = 0):
        if mlp.sizes[0] != n_dims + 1 or mlp.sizes[-1] != 1 or mlp.output != "tanh":
            raise DomainError(f"network {mlp.sizes} ({mlp.output}) is not a phase net for N={n_dims}")
        self.mlp = mlp
        self.n_dims = n_dims
        self.seed = seed
        self.loss_curve = np.zeros(0)

    def features(self, observed, alpha):
        x = np.atleast_2d(np.asarray(observed, dtype=np.float64))
        a = np.broadcast_to(np.asarray(alpha, dtype=np.float64).reshape(-1, 1), (len(x), 1))
        return np.concatenate([x, a], axis=1)

    def __call__(self, observed, alpha):
        phi = np.pi * self.mlp.forward(self.features(observed, alpha))[:, 0]
        phi = wrap_phase(phi)
        return float(phi[0]) if np.ndim(observed) == 1 else phi


def estimate_snr(model, observed) -> float:
    return model(observed)


def estimate_phase(model, observed, alpha) -> float:
    return model(observed, alpha)


def joint_estimate(snr_model, phase_model, observed, max_iters: int = 10,
                   tol: float = 1e-3) -> CsiEstimate:
    """Alternate phase removal, alpha estimation and residual phase estimation.

    Starts from zero phase.  Each round removes the accumulated phase,
    estimates alpha, then estimates the residual phase and adds it to the
    total.  Converged once the residual satisfies ``|dphi| / pi < tol`` and
    alpha moved by less than ``tol`` since the previous round (the first
    round only checks the phase).  The returned ``equalized`` latent has the
    full accumulated phase removed.
    """
    if max_iters < 1:
        raise DomainError("max_iters must be at least 1")
    u = np.asarray(observed, dtype=np.float64)
    w = to_complex(u)
    total = 0.0
    rotations = []
    alpha_prev = None
    converged = False
    k = 0
    alpha = ALPHA_FLOOR
    for k in range(1, max_iters + 1):
        current = to_real(w * np.exp(-1j * total))
        alpha = float(estimate_snr(snr_model, current))
        dphi = float(estimate_phase(phase_model, current, alpha))
        rotations.append(dphi)
        total = float(wrap_phase(total + dphi))
        if abs(dphi) / np.pi < tol and (alpha_prev is None or abs(alpha - alpha_prev) < tol):
            converged = True
            break
        alpha_prev = alpha
    if abs(wrap_phase(sum(rotations) - total)) > 1e-9:
        raise InvariantViolation("accumulated rotation drifted from the sum of estimates")
    return CsiEstimate(alpha, total, k, converged, to_real(w * np.exp(-1j * total)), rotations)


# -- training ---------------------------------------------------------------

def observation_batch(source: SourceModel, n_dims: int, alpha, phi, rng):
    """Receiver-side normalized observations for given alpha and phase arrays."""
    f, _ = sample_source(source, n_dims, rng, size=len(alpha))
    f = power_normalize(f)
    z = to_complex(f) * np.exp(1j * np.asarray(phi))[:, None]
    u = np.sqrt(alpha)[:, None] * to_real(z) + np.sqrt(1.0 - alpha)[:, None] * rng.standard_normal(f.shape)
    return l2_normalize(u)


def new_snr_network(n_dims: int, rng) -> NetworkSnrEstimator:
    return NetworkSnrEstimator(MLP((n_dims, 4 * n_dims, n_dims, 1), rng, "sigmoid"), n_dims)


def new_phase_network(n_dims: int, rng) -> NetworkPhaseEstimator:
    return NetworkPhaseEstimator(MLP((n_dims + 1, 4 * n_dims, n_dims, 1), rng, "tanh"), n_dims)


def train_estimator(kind: str, source: SourceModel, cfg: TrainingConfig, n_dims: int,
                    alpha_range=(0.05, 0.95)):
    """Fit an SNR (``kind='snr'``) or phase (``kind='phase'``) network by SGD.

    SNR targets are ``alpha`` on phase-free observations; phase targets are
    ``phi / pi`` with ``phi ~ U(-pi, pi)`` and the true alpha supplied.
    """
    if kind not in ("snr", "phase"):
        raise DomainError(f"unknown estimator kind {kind!r}")
    lo, hi = alpha_range
    if not 0 < lo < hi < 1:
        raise DomainError("alpha range must satisfy 0 < lo < hi < 1")
    rng = np.random.default_rng(cfg.seed)
    model = new_snr_network(n_dims, rng) if kind == "snr" else new_phase_network(n_dims, rng)
    model.seed = cfg.seed
    mlp = model.mlp
    losses = np.empty(cfg.steps)
    initial = None
    streak = 0
    for step in range(cfg.steps):
        alpha = rng.uniform(lo, hi, cfg.batch_size)
        if kind == "snr":
            phi = np.zeros(cfg.batch_size)
            u = observation_batch(source, n_dims, alpha, phi, rng)
            x, target = model.features(u), alpha
        else:
            phi = rng.uniform(-np.pi, np.pi, cfg.batch_size)
            u = observation_batch(source, n_dims, alpha, phi, rng)
            x, target = model.features(u, alpha), phi / np.pi
        out, acts = mlp.forward(x, keep=True)
        resid = out[:, 0] - target
        loss = float(np.mean(resid * resid))
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
            grads = mlp.backward(acts, (2.0 * resid / cfg.batch_size)[:, None])
            mlp.sgd_step(grads, cfg.learning_rate)
            if not mlp.all_finite():
                raise TrainingDiverged(f"non-finite weights after step {step}")
    model.loss_curve = losses
    return model
