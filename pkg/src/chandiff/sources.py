"""Synthetic latent sources with closed-form Bayes posterior means.

Every source is scaled so that the population second moment of each element
is one, which matches the unit average-power constraint on transmitted
latents.  The observation model used throughout is the variance-preserving
corruption ``y = sqrt(1 - beta) * f + sqrt(beta) * n`` with ``n`` standard
normal, and :func:`posterior_mean` returns ``E[f | y]`` exactly.

Kinds
-----
unit_gaussian
    i.i.d. standard normal elements.
gaussian_mixture
    One component is drawn per vector (its index is the conditioning label);
    within a component the elements are independent Gaussians.
structured
    Per complex symbol ``(f_i, f_{i+N/2})`` a fair sign ``c`` is drawn and
    ``f_i = mu_a + a*c + sqrt(v)*e1``, ``f_{i+N/2} = b*c + sqrt(v)*e2``.
    The first half therefore has mean ``mu_a``, the halves have correlation
    coefficient ``r``, and the elements are bimodal (kurtosis well below 3).
laplace
    i.i.d. unit-variance Laplace elements (kurtosis 6).
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, log_ndtr, logsumexp

from .errors import DomainError, InvalidShapeError

KINDS = ("unit_gaussian", "gaussian_mixture", "structured", "laplace")

_LAPLACE_RATE = np.sqrt(2.0)  # 1/b for a unit-variance Laplace


@dataclass(frozen=True)
class ConditioningVector:
    label: Optional[int] = None
    embedding: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class SourceModel:
    kind: str
    weights: np.ndarray = field(default_factory=lambda: np.ones(1))
    means: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    variances: np.ndarray = field(default_factory=lambda: np.ones((1, 1)))
    correlation: float = 0.0
    mean_offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown source kind {self.kind!r}")
        if self.kind == "gaussian_mixture":
            w = np.asarray(self.weights, dtype=np.float64)
            if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise DomainError("mixture weights must be non-negative and sum to 1")
            if np.any(np.asarray(self.variances) <= 0):
                raise DomainError("component variances must be positive")
        if self.kind == "structured":
            if not abs(self.correlation) < 1:
                raise DomainError("structured source needs |correlation| < 1")
            if not abs(self.mean_offset) < 1:
                raise DomainError("structured source needs |mean_offset| < 1")

    # -- constructors -----------------------------------------------------

    @classmethod
    def unit_gaussian(cls) -> "SourceModel":
        return cls("unit_gaussian")

    @classmethod
    def laplace(cls) -> "SourceModel":
        return cls("laplace")

    @classmethod
    def mixture(cls, weights, means, variances) -> "SourceModel":
        """Build a Gaussian mixture rescaled to unit per-element power.

        ``means`` and ``variances`` hold one entry per component, each a
        scalar or a per-element vector.
        """
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum()
        m = np.atleast_1d(np.asarray(means, dtype=np.float64))
        v = np.atleast_1d(np.asarray(variances, dtype=np.float64))
        if m.ndim == 1:
            m = m[:, None]
        if v.ndim == 1:
            v = v[:, None]
        if len(m) != len(w) or len(v) != len(w):
            raise InvalidShapeError("need one mean and one variance per component")
        m, v = np.broadcast_arrays(m, v)
        second = np.einsum("k,kd->d", w, m * m + v)
        scale = 1.0 / np.sqrt(second)
        return cls("gaussian_mixture", w, m * scale, v * scale**2)

    @classmethod
    def two_component(cls, separation: float, weight: float = 0.5) -> "SourceModel":
        """Mixture with means ``+-separation`` and variance ``1 - separation**2``."""
        if not 0 <= separation < 1:
            raise DomainError("separation must lie in [0, 1)")
        var = 1.0 - separation**2
        return cls.mixture([weight, 1.0 - weight], [separation, -separation], [var, var])

    @classmethod
    def structured(cls, mean_offset: float = 0.8, correlation: float = 0.8) -> "SourceModel":
        return cls("structured", correlation=float(correlation), mean_offset=float(mean_offset))

    # -- derived quantities ------------------------------------------------

    @property
    def n_labels(self) -> int:
        return len(self.weights) if self.kind == "gaussian_mixture" else 0

    def structured_params(self):
        """Return ``(v, a, b)`` of the structured construction.

        ``v`` solves ``r^2 (1 - mu^2) = (1 - mu^2 - v)(1 - v)`` on ``[0, 1 - mu^2]``.
        """
        q = 1.0 - self.mean_offset**2
        r = self.correlation
        v = 0.5 * ((1 + q) - np.sqrt((1 + q) ** 2 - 4 * q * (1 - r * r)))
        a = np.sqrt(max(q - v, 0.0))
        b = np.copysign(np.sqrt(1.0 - v), r) if r != 0 else np.sqrt(1.0 - v)
        return v, a, b

    def fourth_moment(self) -> float:
        """Population fourth moment pooled over all elements (the kurtosis,
        since the second moment is one)."""
        if self.kind == "unit_gaussian":
            return 3.0
        if self.kind == "laplace":
            return 6.0
        if self.kind == "gaussian_mixture":
            m, v = self.means, self.variances
            per_dim = np.einsum("k,kd->d", self.weights, m**4 + 6 * m**2 * v + 3 * v**2)
            return float(per_dim.mean())
        v, a, b = self.structured_params()
        mu = self.mean_offset
        c4 = mu**4 + 6 * mu**2 * a**2 + a**4
        c2 = mu**2 + a**2
        first = c4 + 6 * c2 * v + 3 * v * v
        second = b**4 + 6 * b * b * v + 3 * v * v
        return float(0.5 * (first + second))


def _component_arrays(model: SourceModel, n: int):
    m, v = model.means, model.variances
    if m.shape[1] not in (1, n):
        raise InvalidShapeError(f"component vectors have length {m.shape[1]}, expected {n}")
    return np.broadcast_to(m, (len(m), n)), np.broadcast_to(v, (len(v), n))


def sample_source(model: SourceModel, n_dims: int, rng: np.random.Generator, size=None):
    """Draw a latent vector (or ``size`` of them) and its conditioning.

    For mixtures the conditioning carries the true component label; with
    ``size`` given the label is an integer array.
    """
    if n_dims % 2:
        raise InvalidShapeError(f"n_dims must be even, got {n_dims}")
    shape = (n_dims,) if size is None else (size, n_dims)
    if model.kind == "unit_gaussian":
        return rng.standard_normal(shape), ConditioningVector()
    if model.kind == "laplace":
        return rng.laplace(0.0, 1.0 / _LAPLACE_RATE, shape), ConditioningVector()
    if model.kind == "gaussian_mixture":
        means, variances = _component_arrays(model, n_dims)
        labels = rng.choice(len(model.weights), size=size, p=model.weights)
        f = means[labels] + np.sqrt(variances[labels]) * rng.standard_normal(shape)
        return f, ConditioningVector(label=labels if size is not None else int(labels))
    v, a, b = model.structured_params()
    half = n_dims // 2
    signs = rng.choice([-1.0, 1.0], size=shape[:-1] + (half,))
    noise = np.sqrt(v) * rng.standard_normal(shape)
    f = np.concatenate([model.mean_offset + a * signs, b * signs], axis=-1) + noise
    return f, ConditioningVector()


def posterior_mean(model: SourceModel, noisy, noise_level: float,
                   conditioning: Optional[ConditioningVector] = None) -> np.ndarray:
    """Bayes posterior mean ``E[f | y]`` for ``y = sqrt(1-b) f + sqrt(b) n``.

    ``noise_level`` may be a scalar or broadcast against ``noisy`` (e.g. one
    level per batch row).  A conditioning label restricts a mixture to that
    component; other kinds ignore conditioning.
    """
    y = np.asarray(noisy, dtype=np.float64)
    beta = np.asarray(noise_level, dtype=np.float64)
    if np.any(beta <= 0) or np.any(beta >= 1):
        raise DomainError("noise level must lie in (0, 1)")
    scale = np.sqrt(1.0 - beta)

    if model.kind == "unit_gaussian":
        # prior variance 1: E[f|y] = scale / (scale^2 + beta) * y and scale^2 + beta = 1
        return scale * y

    if model.kind == "laplace":
        return _laplace_posterior_mean(y / scale, np.sqrt(beta) / scale)

    if model.kind == "structured":
        return _structured_posterior_mean(model, y, scale, beta)

    means, variances = _component_arrays(model, y.shape[-1])
    label = None if conditioning is None else conditioning.label
    if label is not None:
        label = np.asarray(label)
        if np.any(label < 0) or np.any(label >= len(model.weights)):
            raise DomainError(f"label {label} does not index a mixture component")

    comp_means = []
    log_post = []
    for k, w in enumerate(model.weights):
        m, v = means[k], variances[k]
        s = scale * scale * v + beta
        resid = y - scale * m
        comp_means.append(m + scale * v / s * resid)
        ll = -0.5 * np.sum(resid * resid / s + np.log(2 * np.pi * s), axis=-1)
        log_post.append(np.log(w) + ll if w > 0 else np.full_like(ll, -np.inf))
    comp_means = np.stack(comp_means)
    if label is not None:
        idx = np.broadcast_to(label, y.shape[:-1])
        return np.take_along_axis(comp_means, idx[None, ..., None], axis=0)[0]
    log_post = np.stack(log_post)
    resp = np.exp(log_post - logsumexp(log_post, axis=0))
    return np.sum(resp[..., None] * comp_means, axis=0)


def _structured_posterior_mean(model, y, scale, beta):
    v, a, b = model.structured_params()
    half = y.shape[-1] // 2
    if y.shape[-1] % 2:
        raise InvalidShapeError("structured source needs an even-length latent")
    y1, y2 = y[..., :half], y[..., half:]
    s = scale * scale * v + beta
    gain = scale * v / s
    mu = model.mean_offset
    # log-likelihood ratio of sign +1 versus -1 for each symbol
    m1p, m1n = mu + a, mu - a
    llr = -((y1 - scale * m1p) ** 2 - (y1 - scale * m1n) ** 2
            + (y2 - scale * b) ** 2 - (y2 + scale * b) ** 2) / (2 * s)
    p = expit(llr)
    c = 2 * p - 1  # posterior mean of the sign
    # component posterior means are linear in the component mean, so mixing
    # them reduces to plugging in E[c]
    first = (mu + a * c) + gain * (y1 - scale * (mu + a * c))
    second = b * c + gain * (y2 - scale * b * c)
    return np.concatenate([first, second], axis=-1)


def _laplace_posterior_mean(x, sigma):
    """E[f | x] for f ~ Laplace(unit variance) and x = f + sigma * n."""
    lam = _LAPLACE_RATE
    mu_pos = x - lam * sigma**2
    mu_neg = x + lam * sigma**2
    log_w_pos = -lam * x + log_ndtr(mu_pos / sigma)
    log_w_neg = lam * x + log_ndtr(-mu_neg / sigma)
    p = expit(log_w_pos - log_w_neg)
    # the truncation corrections of the two halves cancel exactly
    return p * mu_pos + (1 - p) * mu_neg
