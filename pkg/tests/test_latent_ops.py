import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chandiff.errors import DomainError, InvalidShapeError
from chandiff.estimator import CsiEstimate
from chandiff.latent_ops import (TokenGrid, bce_dice_loss, element_mask, estimation_errors,
                                 from_tokens, mask_tokens, mse, num_dropped, psnr, to_tokens)


def test_mask_examples(rng):
    grid = TokenGrid.full(rng.standard_normal((256, 4)))
    assert mask_tokens(grid, 0.0, "random", rng).kept.all()
    half = mask_tokens(grid, 0.5, "random", rng)
    assert half.kept.sum() == 128 and half.mask_ratio == 0.5
    small = TokenGrid.full(np.array([[3.0], [1.0], [2.0]]))
    assert np.array_equal(mask_tokens(small, 1 / 3, "l2_norm").kept, [True, False, True])
    with pytest.raises(DomainError):
        mask_tokens(grid, 1.0, "random", rng)
    with pytest.raises(DomainError):
        mask_tokens(grid, 0.2, "biggest", rng)


def test_ties_go_to_lower_index():
    grid = TokenGrid.full(np.ones((5, 2)))
    assert np.array_equal(mask_tokens(grid, 0.4, "l2_norm").kept, [False, False, True, True, True])


def test_drop_count_rounds_down():
    assert num_dropped(10, 0.3) == 3
    assert num_dropped(10, 0.39) == 3
    assert num_dropped(7, 0.5) == 3


def test_token_round_trip(rng):
    v = rng.standard_normal(24)
    grid = to_tokens(v, 4)
    assert grid.tokens.shape == (6, 4)
    assert np.array_equal(from_tokens(grid), v)
    masked = mask_tokens(grid, 0.5, "l2_norm")
    assert element_mask(masked).sum() == 12
    with pytest.raises(InvalidShapeError):
        to_tokens(np.ones(10), 4)


def test_l2_strategy_keeps_more_energy(rng):
    wins = 0
    for _ in range(1000):
        grid = TokenGrid.full(rng.standard_normal((32, 4)) * rng.uniform(0.2, 2.0, (32, 1)))
        energy = lambda g: np.sum(g.tokens[g.kept] ** 2)
        wins += energy(mask_tokens(grid, 0.5, "l2_norm")) >= energy(mask_tokens(grid, 0.5, "random", rng))
    assert wins >= 950


def test_mse_and_psnr():
    assert mse([1.0, 0.0], [0.0, 0.0]) == 0.5
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse([1.0, -2.0], [0.5, 3.0]) == mse([0.5, 3.0], [1.0, -2.0])
    assert psnr([0.1], [0.0]) == pytest.approx(20.0, abs=1e-12)
    assert psnr([1.0], [1.0]) == float("inf")
    assert psnr([0.1], [0.0]) - psnr([0.1 * np.sqrt(2)], [0.0]) == pytest.approx(10 * np.log10(2), abs=1e-12)
    with pytest.raises(InvalidShapeError):
        mse([1.0], [1.0, 2.0])


def test_bce_dice_examples():
    t = np.array([1.0, 0.0, 1.0, 1.0])
    assert bce_dice_loss(t, t) == pytest.approx(0.0, abs=1e-10)
    half = bce_dice_loss(np.full(4, 0.5), t, weight=0.0)
    assert half == pytest.approx(np.log(2), abs=1e-15)
    assert bce_dice_loss(np.zeros(4), np.zeros(4)) == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(DomainError):
        bce_dice_loss(np.array([1.2, 0.0]), np.array([1.0, 0.0]))


@settings(max_examples=60)
@given(arrays(np.float64, 8, elements=st.floats(0, 1)),
       arrays(np.int8, 8, elements=st.integers(0, 1)))
def test_bce_dice_non_negative(pred, target):
    loss = bce_dice_loss(pred, target.astype(float))
    assert loss >= -1e-12
    if np.array_equal(pred, target):
        assert loss < 1e-10


def test_estimation_errors():
    est = [CsiEstimate(0.5, 0.1, 1, True), CsiEstimate(0.7, np.pi - 0.01, 2, True)]
    assert estimation_errors(est[:1], [(0.5, 0.1)]) == (0.0, 0.0)
    assert estimation_errors([(0.6, 0.0)], [(0.5, 0.0)])[0] == pytest.approx(0.1)
    a, p = estimation_errors(est[1:], [(0.7, -np.pi + 0.01)])
    assert a == 0.0 and p == pytest.approx(0.02, abs=1e-12)
    with pytest.raises(InvalidShapeError):
        estimation_errors(est, [(0.5, 0.1)])
