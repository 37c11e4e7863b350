"""Real/complex latent mappings and power normalization.

A latent vector of length ``2L`` is paired with a complex vector of length
``L`` by taking the first half as real parts and the second half as
imaginary parts.  All functions accept leading batch dimensions; the mapping
acts on the last axis.
"""

import numpy as np

from .errors import DegenerateInputError, InvalidShapeError


def as_latent(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0:
        raise InvalidShapeError("latent vector must have at least one axis")
    return v


def to_complex(v) -> np.ndarray:
    """Map a real vector ``[a; b]`` of length 2L to ``a + jb`` of length L."""
    v = as_latent(v)
    n = v.shape[-1]
    if n % 2:
        raise InvalidShapeError(f"latent length must be even, got {n}")
    half = n // 2
    out = np.empty(v.shape[:-1] + (half,), dtype=np.complex128)
    out.real = v[..., :half]
    out.imag = v[..., half:]
    return out


def to_real(z) -> np.ndarray:
    """Inverse of :func:`to_complex`."""
    z = np.asarray(z, dtype=np.complex128)
    return np.concatenate([z.real, z.imag], axis=-1)


def mean_power(v) -> np.ndarray:
    v = as_latent(v)
    return np.mean(v * v, axis=-1)


def power_normalize(v) -> np.ndarray:
    """Scale ``v`` so that its per-element power ``(1/N)||v||^2`` is one."""
    v = as_latent(v)
    p = mean_power(v)
    if np.any(p == 0):
        raise DegenerateInputError("cannot normalize an all-zero vector")
    return v / np.sqrt(p)[..., None]


def l2_normalize(v) -> np.ndarray:
    """Normalize a received vector by its L2 norm, rescaled to unit per-element power.

    Same arithmetic as :func:`power_normalize`; kept separate because it is
    applied at the receiver, where the unit power splits into a signal share
    ``alpha`` and a noise share ``1 - alpha``.
    """
    v = as_latent(v)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(norm == 0):
        raise DegenerateInputError("cannot normalize an all-zero vector")
    return v * (np.sqrt(v.shape[-1]) / norm)[..., None]
