import numpy as np
import pytest

from chandiff.channel import (LEVEL_FLOOR, ChannelRealization, draw_channel, equalize,
                              equalize_fast, equalize_slow, transmit)
from chandiff.errors import DegenerateChannelError, DomainError, InvalidShapeError
from chandiff.signal import to_complex


def test_awgn_levels():
    ch = draw_channel("awgn", 0.0, 4)
    assert ch.noise_variance == 1.0
    d = equalize(np.ones(4, complex), ch).noise_levels
    assert np.allclose(d, 0.5, rtol=0, atol=1e-15)
    ch = draw_channel("awgn", 10.0, 4)
    assert equalize(np.ones(4, complex), ch).uniform_level == pytest.approx(1 / 11, rel=1e-14)


def test_block_structure(rng):
    ch = draw_channel("fast_fading", 0.0, 8, block_length=4, rng=rng)
    g = ch.symbol_gains(8)
    assert len(np.unique(g)) == 2
    assert np.all(g[:4] == g[0]) and np.all(g[4:] == g[4])


def test_partial_trailing_block(rng):
    ch = draw_channel("fast_fading", 0.0, 10, block_length=4, rng=rng)
    g = ch.symbol_gains(10)
    assert len(np.unique(g)) == 3
    assert np.all(g[8:] == g[8]) and g[8] != g[4]


def test_bad_block_length(rng):
    with pytest.raises(DomainError):
        draw_channel("fast_fading", 0.0, 8, block_length=0, rng=rng)


def test_transmit_examples(rng):
    z = np.array([1 + 2j, -0.5 + 0j])
    ch = ChannelRealization("awgn", np.array([1 + 0j]), 0.0)
    assert np.array_equal(transmit(z, ch, rng), z)
    ch = ChannelRealization("slow_fading", np.array([2 + 0j]), 0.0)
    assert np.array_equal(transmit(np.array([1 + 0j]), ch, rng), np.array([2 + 0j]))
    ch = ChannelRealization("awgn", np.array([1 + 0j]), 0.3)
    y = transmit(np.zeros(100000, complex), ch, rng)
    assert np.var(y.real) == pytest.approx(0.3, rel=0.03)
    assert np.var(y.imag) == pytest.approx(0.3, rel=0.03)
    fast = draw_channel("fast_fading", 0.0, 4, 2, rng)
    with pytest.raises(InvalidShapeError):
        transmit(np.zeros(6, complex), fast, rng)


def test_equalize_slow_examples(rng):
    out = equalize_slow(np.ones(3, complex), 1.0, 0.1)
    assert np.allclose(out.noise_levels, 0.1 / 1.1, rtol=1e-14)
    z = np.array([0.5 - 1j, 2 + 0.25j])
    clean = equalize_slow(z, 1.0, 0.0)
    assert np.allclose(clean.values, [0.5, 2.0, -1.0, 0.25], rtol=1e-15)
    assert np.all(clean.noise_levels == LEVEL_FLOOR)
    with pytest.raises(DegenerateChannelError):
        equalize_slow(z, 0.0, 0.0)
    for _ in range(100):
        h = complex(rng.standard_normal(), rng.standard_normal())
        s2 = rng.uniform(0.01, 5)
        d = s2 / (abs(h) ** 2 + s2)
        assert abs(h) / np.sqrt(abs(h) ** 2 + s2) == pytest.approx(np.sqrt(1 - d), abs=1e-15)


def test_equalize_fast_examples():
    ch = ChannelRealization("fast_fading", np.array([1.0 + 0j, 3.0 + 0j]), 1.0, 1)
    out = equalize_fast(np.zeros(2, complex), ch)
    assert np.allclose(out.noise_levels, [0.5, 0.1, 0.5, 0.1], rtol=1e-15)
    dead = ChannelRealization("fast_fading", np.array([0j, 1 + 0j]), 0.0, 1)
    with pytest.raises(DegenerateChannelError):
        equalize_fast(np.zeros(2, complex), dead)


def test_fast_with_equal_gains_matches_slow(rng):
    h = 0.7 - 0.4j
    y = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    ch = ChannelRealization("fast_fading", np.full(6, h), 0.2, 6)
    fast = equalize_fast(y, ch)
    slow = equalize_slow(y, h, 0.2)
    assert np.allclose(fast.values, slow.values, rtol=1e-15)
    assert np.array_equal(fast.noise_levels, slow.noise_levels)


def test_phase_invariance(rng):
    y0 = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    mag = 0.8
    ref = equalize_slow(y0, mag, 0.3).values
    assert np.array_equal(equalize_slow(y0 * np.exp(0j), mag * np.exp(0j), 0.3).values, ref)
    for phi in rng.uniform(-np.pi, np.pi, 10):
        rot = equalize_slow(y0 * np.exp(1j * phi), mag * np.exp(1j * phi), 0.3).values
        assert np.allclose(rot, ref, rtol=0, atol=1e-13)


def test_distributional_model(rng):
    f = rng.standard_normal(100000)
    ch = draw_channel("awgn", 0.0, 50000)
    out = equalize(transmit(to_complex(f), ch, rng), ch)
    d = out.uniform_level
    assert np.var(out.values - np.sqrt(1 - d) * f) == pytest.approx(d, rel=0.03)


def test_levels_pair_and_max(rng):
    ch = draw_channel("fast_fading", 3.0, 64, 4, rng)
    out = equalize_fast(np.zeros(64, complex), ch)
    d = out.noise_levels
    assert np.array_equal(d[:64], d[64:])
    weakest = np.argmin(np.abs(ch.gains))
    assert d[weakest] == d.max()
    assert np.all((1 - d) + d == 1.0)
