"""Token masking over latent token grids, plus reconstruction and estimation metrics."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidShapeError


@dataclass(frozen=True, eq=False)
class TokenGrid:
    tokens: np.ndarray
    kept: np.ndarray

    @classmethod
    def full(cls, tokens) -> "TokenGrid":
        tokens = np.asarray(tokens, dtype=np.float64)
        if tokens.ndim != 2:
            raise InvalidShapeError("tokens must be a (num_tokens, embed_dim) matrix")
        return cls(tokens, np.ones(len(tokens), dtype=bool))

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)

    @property
    def mask_ratio(self) -> float:
        return 1.0 - np.count_nonzero(self.kept) / self.num_tokens


def num_dropped(num_tokens: int, mr: float) -> int:
    # the small offset keeps e.g. 0.3 * 10 from rounding down to 2
    return int(np.floor(mr * num_tokens + 1e-9))


def mask_tokens(grid: TokenGrid, mr: float, strategy: str, rng=None) -> TokenGrid:
    """Drop ``floor(mr * num_tokens)`` tokens.

    ``random`` drops a uniformly chosen set; ``l2_norm`` drops the tokens
    with the smallest L2 norms, ties going to the lower index.
    """
    if not 0 <= mr < 1:
        raise DomainError("mask ratio must lie in [0, 1)")
    n = grid.num_tokens
    k = num_dropped(n, mr)
    if strategy == "random":
        if rng is None:
            raise DomainError("random masking needs a random generator")
        drop = rng.choice(n, size=k, replace=False)
    elif strategy == "l2_norm":
        norms = np.linalg.norm(grid.tokens, axis=1)
        drop = np.argsort(norms, kind="stable")[:k]
    else:
        raise DomainError(f"unknown masking strategy {strategy!r}")
    kept = np.ones(n, dtype=bool)
    kept[drop] = False
    return TokenGrid(grid.tokens, kept)


def to_tokens(latent, embed_dim: int) -> TokenGrid:
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 1 or latent.size % embed_dim:
        raise InvalidShapeError(f"latent of length {latent.size} does not split into {embed_dim}-dim tokens")
    return TokenGrid.full(latent.reshape(-1, embed_dim))


def element_mask(grid: TokenGrid) -> np.ndarray:
    """Boolean per-element mask of dropped positions in the flattened latent."""
    return np.repeat(~grid.kept, grid.tokens.shape[1])


def _check_shapes(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _check_shapes(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / mse)``; ``inf`` for identical inputs."""
    err = mse(a, b)
    if err == 0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / err))


def bce_dice_loss(pred, target, weight: float = 1.0, smooth: float = 1.0) -> float:
    """Mean binary cross entropy plus ``weight`` times the Dice loss."""
    pred, target = _check_shapes(pred, target)
    if np.any(pred < 0) or np.any(pred > 1):
        raise DomainError("predictions must lie in [0, 1]")
    eps = 1e-12
    bce = -np.mean(target * np.log(np.maximum(pred, eps))
                   + (1 - target) * np.log(np.maximum(1 - pred, eps)))
    dice = 1.0 - (2.0 * np.sum(pred * target) + smooth) / (np.sum(pred) + np.sum(target) + smooth)
    return float(bce + weight * dice)


def estimation_errors(estimates, truths):
    """Mean absolute alpha error and mean wrapped absolute phase error.

    ``estimates`` holds objects with ``alpha`` and ``phase`` attributes (or
    ``(alpha, phase)`` pairs); ``truths`` holds ``(alpha, phase)`` pairs.
    """
    if len(estimates) != len(truths):
        raise InvalidShapeError(f"{len(estimates)} estimates for {len(truths)} truths")
    if not estimates:
        return 0.0, 0.0
    est = np.array([(e.alpha, e.phase) if hasattr(e, "alpha") else tuple(e) for e in estimates],
                   dtype=np.float64)
    tru = np.asarray(truths, dtype=np.float64).reshape(-1, 2)
    d_phase = np.mod(est[:, 1] - tru[:, 1] + np.pi, 2 * np.pi) - np.pi
    return float(np.mean(np.abs(est[:, 0] - tru[:, 0]))), float(np.mean(np.abs(d_phase)))


def from_tokens(grid: TokenGrid) -> np.ndarray:
    return np.asarray(grid.tokens, dtype=np.float64).ravel()
