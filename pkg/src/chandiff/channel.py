"""AWGN, slow Rayleigh and block-fading channels with MMSE-style equalization.

Conventions: complex symbols carry unit power per real dimension, the noise
variance ``sigma2`` is per real dimension (complex noise ``CN(0, 2 sigma2)``),
and ``sigma2 = 10 ** (-snr_db / 10)`` so that ``snr = |h|^2 / sigma2`` at the
nominal gain ``|h| = 1``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateChannelError, DomainError, InvalidShapeError
from .signal import to_real

CHANNEL_KINDS = ("awgn", "slow_fading", "fast_fading")

LEVEL_FLOOR = 1e-9
LEVEL_CEIL = 1.0 - 1e-9


def clamp_levels(d):
    return np.clip(d, LEVEL_FLOOR, LEVEL_CEIL)


def snr_db_to_noise_variance(snr_db: float) -> float:
    return float(10.0 ** (-snr_db / 10.0))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    kind: str
    gains: np.ndarray
    noise_variance: float
    block_length: int = 1

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise DomainError(f"unknown channel kind {self.kind!r}")
        if self.noise_variance < 0:
            raise DomainError("noise variance must be non-negative")
        if self.block_length < 1:
            raise DomainError("block length must be at least 1")

    def symbol_gains(self, num_symbols: int) -> np.ndarray:
        """Per-symbol complex gains, length ``num_symbols``."""
        g = np.asarray(self.gains, dtype=np.complex128)
        if self.kind == "fast_fading":
            if len(g) != num_symbols:
                raise InvalidShapeError(
                    f"realization holds {len(g)} gains for {num_symbols} symbols")
            return g
        return np.full(num_symbols, g[0])


@dataclass(frozen=True, eq=False)
class EqualizedOutput:
    """Receiver-side latent ``values = sqrt(1-d) f + sqrt(d) n`` per element."""
    values: np.ndarray
    noise_levels: np.ndarray
    signal_level: Optional[float] = None

    @property
    def uniform_level(self) -> float:
        d = np.asarray(self.noise_levels)
        if np.ptp(d) > 1e-12:
            raise DomainError("noise levels are not uniform across elements")
        return float(d.flat[0])


def rayleigh(rng: np.random.Generator, size) -> np.ndarray:
    """``CN(0, 1)`` gains."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def draw_channel(kind: str, snr_db: float, num_symbols: int, block_length: int = 1,
                 rng: Optional[np.random.Generator] = None,
                 fixed_gain: Optional[complex] = None) -> ChannelRealization:
    """Draw a channel realization.

    Fast fading draws one ``CN(0, 1)`` gain per block of ``block_length``
    symbols; a trailing partial block keeps its own gain.  ``fixed_gain``
    pins the slow-fading gain instead of drawing it.
    """
    if block_length < 1:
        raise DomainError("block length must be at least 1")
    sigma2 = snr_db_to_noise_variance(snr_db)
    if kind == "awgn":
        return ChannelRealization(kind, np.array([1.0 + 0.0j]), sigma2)
    if kind == "slow_fading":
        h = rayleigh(rng, 1) if fixed_gain is None else np.array([complex(fixed_gain)])
        return ChannelRealization(kind, h, sigma2)
    if kind == "fast_fading":
        n_blocks = -(-num_symbols // block_length)
        h = np.repeat(rayleigh(rng, n_blocks), block_length)[:num_symbols]
        return ChannelRealization(kind, h, sigma2, block_length)
    raise DomainError(f"unknown channel kind {kind!r}")


def transmit(z, ch: ChannelRealization, rng: np.random.Generator) -> np.ndarray:
    """``y_i = h_i z_i + n_i`` with ``n_i ~ CN(0, 2 sigma2)``."""
    z = np.asarray(z, dtype=np.complex128)
    if z.ndim != 1:
        raise InvalidShapeError("transmit expects a single complex vector")
    if ch.kind == "fast_fading" and len(ch.gains) != len(z):
        raise InvalidShapeError(f"{len(z)} symbols for a {len(ch.gains)}-symbol channel")
    h = ch.symbol_gains(len(z))
    sd = np.sqrt(ch.noise_variance)
    noise = sd * rng.standard_normal(len(z)) + 1j * sd * rng.standard_normal(len(z))
    return h * z + noise


def _phase_factor(h):
    mag = np.abs(h)
    return np.where(mag > 0, np.conj(h) / np.where(mag > 0, mag, 1.0), 1.0)


def _equalize_symbols(y, h, noise_variance):
    # shared by both paths so equal gains give bit-identical outputs
    power = np.abs(h) ** 2 + noise_variance
    if np.any(power <= 0):
        raise DegenerateChannelError("zero gain on a noiseless channel")
    eq = _phase_factor(h) * y / np.sqrt(power)
    return to_real(eq), noise_variance / power, power


def equalize_slow(y, h: complex, noise_variance: float) -> EqualizedOutput:
    """Remove the channel phase and normalize power by ``sqrt(|h|^2 + sigma2)``."""
    y = np.asarray(y, dtype=np.complex128)
    if abs(h) ** 2 + noise_variance <= 0:
        raise DegenerateChannelError("zero gain on a noiseless channel")
    values, d, _ = _equalize_symbols(y, np.full(y.shape[-1], complex(h)), noise_variance)
    alpha = abs(h) ** 2 / (abs(h) ** 2 + noise_variance)
    return EqualizedOutput(values, clamp_levels(np.concatenate([d, d])), alpha)


def equalize_fast(y, ch: ChannelRealization) -> EqualizedOutput:
    """Per-symbol equalization ``h_i* / (|h_i| sqrt(|h_i|^2 + sigma2)) y_i``.

    Receiver has perfect CSI.  The noise level of symbol ``i`` is shared by
    real elements ``i`` and ``i + M``.
    """
    y = np.asarray(y, dtype=np.complex128)
    values, d, _ = _equalize_symbols(y, ch.symbol_gains(len(y)), ch.noise_variance)
    return EqualizedOutput(values, clamp_levels(np.concatenate([d, d])))


def equalize(y, ch: ChannelRealization) -> EqualizedOutput:
    if ch.kind == "fast_fading":
        return equalize_fast(y, ch)
    return equalize_slow(y, complex(ch.gains[0]), ch.noise_variance)
