from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thermbath.rng import SplitMix64, derive_seed, mix64


def test_reference_stream():
    # published splitmix64 outputs for seed 1234567
    g = SplitMix64(1234567)
    assert [int(x) for x in g.next_u64(5)] == [6457827717110365317, 3203168211198807973, 9817491932198370423,
                                               4593380528125082431, 16408922859458223821]


def _scalar_stream(seed, n):
    out, state = [], seed
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) % 2**64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
        out.append(z ^ (z >> 31))
    return out


@given(st.integers(0, 2**64 - 1))
def test_vectorized_matches_scalar(seed):
    assert [int(x) for x in SplitMix64(seed).next_u64(6)] == _scalar_stream(seed, 6)


def test_blocks_concatenate():
    a = SplitMix64(9).next_u64(10)
    g = SplitMix64(9)
    b = np.concatenate([g.next_u64(3), g.next_u64(7)])
    assert np.array_equal(a, b)


@given(st.integers(0, 2**64 - 1), st.integers(0, 1000), st.integers(0, 1000))
def test_derive_seed_is_pure(master, i, j):
    assert derive_seed(master, i, j) == derive_seed(master, i, j)
    assert 0 <= derive_seed(master, i, j) < 2**64


def test_derive_seed_separates_items():
    seeds = {derive_seed(7, i, j) for i in range(20) for j in range(50)}
    assert len(seeds) == 1000


def test_mix64_is_bijective_on_sample():
    xs = {mix64(k) for k in range(5000)}
    assert len(xs) == 5000


def test_uniform_moments():
    u = SplitMix64(3).random(200_000)
    assert 0.0 <= u.min() and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 3e-3
    assert abs(u.var() - 1 / 12) < 2e-3


def test_normal_moments():
    z = SplitMix64(4).normal(200_000)
    assert abs(z.mean()) < 1e-2
    assert abs(z.std() - 1.0) < 1e-2


@pytest.mark.parametrize("probs", [[0.2, 0.8], [0.1, 0.3, 0.6], [1.0]])
def test_choice_frequencies(probs):
    draws = SplitMix64(5).choice(probs, 100_000)
    freq = np.bincount(draws, minlength=len(probs)) / draws.size
    assert np.allclose(freq, probs, atol=6e-3)


def test_dirichlet_on_simplex():
    x = SplitMix64(6).dirichlet_uniform(5)
    assert x.min() > 0 and abs(x.sum() - 1) < 1e-15
