from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermbath.entropy import (NonCommutingError, SupportError, dephase, dmax, dmax_region_curve, dmax_smooth,
                               infinite_time_average, reduce_equilibrium, smooth_dmax_classical)
from thermbath.lattice import ChainSpec, Region, build_chain_hamiltonian, diagonalize_chain, draw_realization, \
    neel_variant_state
from thermbath.linalg import (eig_hermitian, ket_to_density, partial_trace, random_density, random_hermitian,
                              random_unitary, trace_norm)
from thermbath.rng import SplitMix64
from thermbath.thermal import REDUCED_GLOBAL, REDUCED_HAMILTONIAN


# ---------------------------------------------------------------- equilibrium


def test_eigenvector_is_stationary():
    sd = eig_hermitian(random_hermitian(5, SplitMix64(1)))
    psi = sd.eigenvectors[:, 2]
    eq = infinite_time_average(psi, sd)
    assert np.allclose(eq.dense(), ket_to_density(psi), atol=1e-14)


def test_superposition_dephases():
    sd = eig_hermitian(random_hermitian(4, SplitMix64(2)))
    v1, v2 = sd.eigenvectors[:, 0], sd.eigenvectors[:, 1]
    eq = infinite_time_average((v1 + v2) / np.sqrt(2), sd)
    assert np.allclose(eq.dense(), 0.5 * (ket_to_density(v1) + ket_to_density(v2)), atol=1e-14)


def test_degenerate_coherence_survives():
    U = random_unitary(4, SplitMix64(3))
    H = U @ np.diag([0.0, 1.0, 1.0, 2.0]) @ U.conj().T
    sd = eig_hermitian(H)
    psi = (U[:, 1] + U[:, 2]) / np.sqrt(2)
    assert np.allclose(infinite_time_average(psi, sd).dense(), ket_to_density(psi), atol=1e-13)


@pytest.fixture(scope="module")
def chain6():
    real = draw_realization(ChainSpec(6, 2.0, seed=3), 0)
    H = build_chain_hamiltonian(real)
    cs = diagonalize_chain(real)
    psi = neel_variant_state(6)
    return real, H, cs, psi, infinite_time_average(psi, cs)


def test_sector_route_matches_dense_dephasing(chain6):
    real, H, cs, psi, eq = chain6
    dense = dephase(ket_to_density(psi), eig_hermitian(H))
    assert np.max(np.abs(eq.dense() - dense)) < 1e-12


def test_equilibrium_invariants(chain6):
    real, H, cs, psi, eq = chain6
    om = eq.dense()
    assert np.linalg.norm(om @ H - H @ om) < 1e-9 * np.linalg.norm(H)
    assert abs(np.trace(om @ H).real - psi @ H @ psi) < 1e-9
    assert abs(eq.energy - psi @ H @ psi) < 1e-9


def test_dephasing_idempotent_l4():
    real = draw_realization(ChainSpec(4, 1.0, seed=8), 0)
    sd = eig_hermitian(build_chain_hamiltonian(real))
    rho = ket_to_density(neel_variant_state(4))
    once = dephase(rho, sd)
    assert trace_norm(dephase(once, sd) - once) < 1e-12


@pytest.mark.parametrize("start,size", [(0, 1), (0, 3), (2, 2), (4, 3), (0, 6)])
def test_reduce_equilibrium_matches_partial_trace(chain6, start, size):
    real, H, cs, psi, eq = chain6
    region = Region(start, size)
    got = reduce_equilibrium(eq, region, 6, chunk=7)
    sites = region.sites(6)
    assert abs(np.trace(got) - 1) < 1e-10
    if size == 6:
        assert np.allclose(got, eq.dense(), atol=1e-12)
        return
    keep = [5 - s for s in reversed(sites)]
    if keep == sorted(keep):
        assert np.allclose(got, partial_trace(eq.dense(), [2] * 6, keep), atol=1e-11)


def test_bad_norm_rejected():
    sd = eig_hermitian(np.diag([0.0, 1.0]))
    with pytest.raises(ValueError, match="norm"):
        infinite_time_average(np.array([1.0, 1.0]), sd)


# ---------------------------------------------------------------- D_max


def test_dmax_examples():
    rho = random_density(3, SplitMix64(4))
    assert abs(dmax(rho, rho).value) < 1e-12
    assert dmax(np.diag([1.0, 0]), np.eye(2) / 2).value == pytest.approx(1.0, abs=1e-12)
    assert dmax(np.diag([0.75, 0.25]), np.eye(2) / 2).value == pytest.approx(math.log2(1.5), abs=1e-12)


def test_dmax_support_violation_reports_leakage():
    with pytest.raises(SupportError) as err:
        dmax(np.eye(2) / 2, np.diag([1.0, 0]))
    assert err.value.leakage == pytest.approx(0.5)


def test_dmax_on_restricted_support():
    sigma = np.diag([0.5, 0.5, 0.0])
    assert dmax(np.diag([1.0, 0, 0]), sigma).value == pytest.approx(1.0)


def test_dmax_operator_inequality_is_tight(rng):
    rho, sigma = random_density(3, rng), random_density(3, rng)
    lam = dmax(rho, sigma).value
    assert np.linalg.eigvalsh(2**lam * sigma - rho).min() > -1e-10
    assert np.linalg.eigvalsh(2 ** (lam - 1e-6) * sigma - rho).min() < 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_dmax_monotone_under_partial_trace(seed):
    g = SplitMix64(seed)
    rho, sigma = random_density(4, g), random_density(4, g)
    full = dmax(rho, sigma).value
    part = dmax(partial_trace(rho, [2, 2], [0]), partial_trace(sigma, [2, 2], [0])).value
    assert part <= full + 1e-9
    assert full >= -1e-12


def test_smooth_zero_eps_equals_dmax(rng):
    p, q = rng.dirichlet_uniform(3), rng.dirichlet_uniform(3)
    assert dmax_smooth(np.diag(p), np.diag(q), 0.0).value == dmax(np.diag(p), np.diag(q)).value


def test_smooth_canonical_example():
    res = dmax_smooth(np.diag([1.0, 0]), np.eye(2) / 2, 0.5)
    assert res.value == pytest.approx(math.log2(1.5), abs=1e-9)
    assert np.allclose(res.witness, np.diag([0.75, 0.25]), atol=1e-9)


def _grid_oracle(p, q, eps, n=400):
    best = math.inf
    for k in itertools.product(range(n + 1), repeat=len(p) - 1):
        if sum(k) > n:
            continue
        r = np.array(list(k) + [n - sum(k)]) / n
        if np.abs(r - p).sum() <= eps + 1e-12:
            with np.errstate(divide="ignore"):
                best = min(best, float(np.max(np.log2(r / q))))
    return best


@pytest.mark.parametrize("p,q,eps", [([0.9, 0.1], [0.5, 0.5], 0.2), ([0.6, 0.3, 0.1], [0.2, 0.3, 0.5], 0.1),
                                     ([0.5, 0.25, 0.25], [0.25, 0.25, 0.5], 0.5)])
def test_smooth_matches_grid_oracle(p, q, eps):
    # all optima sit on the 1/400 lattice for these instances
    lam, _ = smooth_dmax_classical(np.array(p), np.array(q), eps)
    assert lam == pytest.approx(_grid_oracle(np.array(p), np.array(q), eps), abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 4), st.floats(0.0, 0.95))
def test_smooth_witness_is_feasible(seed, d, eps):
    g = SplitMix64(seed)
    p, q = g.dirichlet_uniform(d), g.dirichlet_uniform(d)
    U = random_unitary(d, g)
    rho, sigma = U @ np.diag(p) @ U.conj().T, U @ np.diag(q) @ U.conj().T
    res = dmax_smooth(rho, sigma, eps)
    assert trace_norm(res.witness - rho) <= eps + 1e-9
    assert np.linalg.eigvalsh(2**res.value * sigma - res.witness).min() >= -1e-9
    assert abs(np.trace(res.witness) - 1) < 1e-12
    assert res.value >= -1e-12
    assert res.value <= dmax(rho, sigma).value + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 0.9), st.floats(0.0, 0.9))
def test_smooth_monotone_in_eps(seed, e1, e2):
    g = SplitMix64(seed)
    p, q = g.dirichlet_uniform(3), g.dirichlet_uniform(3)
    lo, hi = sorted((e1, e2))
    assert smooth_dmax_classical(p, q, lo)[0] >= smooth_dmax_classical(p, q, hi)[0] - 1e-9


def test_smooth_rejects_non_commuting():
    with pytest.raises(NonCommutingError, match="dmax"):
        dmax_smooth(np.array([[0.5, 0.5], [0.5, 0.5]]), np.diag([0.7, 0.3]), 0.1)


@pytest.mark.parametrize("eps", [-0.1, 1.0, 1.5])
def test_smooth_rejects_bad_eps(eps):
    with pytest.raises(ValueError):
        dmax_smooth(np.diag([0.6, 0.4]), np.eye(2) / 2, eps)


def test_smooth_degenerate_sigma_joint_basis():
    # sigma degenerate, rho not diagonal in sigma's computational basis
    U = random_unitary(2, SplitMix64(9))
    block = U @ np.diag([0.5, 0.1]) @ U.conj().T
    rho = np.zeros((3, 3), complex)
    rho[:2, :2] = block
    rho[2, 2] = 0.4
    sigma = np.diag([0.25, 0.25, 0.5])
    res = dmax_smooth(rho, sigma, 0.2)
    lam, _ = smooth_dmax_classical(np.array([0.5, 0.1, 0.4]), np.array([0.25, 0.25, 0.5]), 0.2)
    assert res.value == pytest.approx(lam, abs=1e-12)


# ---------------------------------------------------------------- curves


def test_curve_ordered_chain_is_finite():
    real = draw_realization(ChainSpec(6, 0.0, seed=1), 0)
    cs = diagonalize_chain(real)
    from thermbath.thermal import match_beta

    beta = match_beta(cs, neel_variant_state(6))
    for kind in (REDUCED_HAMILTONIAN, REDUCED_GLOBAL):
        pts = dmax_region_curve(real, beta, [1, 2, 3], kind, spectrum=cs)
        assert [p.size for p in pts] == [1, 2, 3]
        assert all(p.value is not None and 0 <= p.value < 10 for p in pts)


def test_curve_rejects_bad_sizes():
    real = draw_realization(ChainSpec(4, 1.0), 0)
    with pytest.raises(ValueError):
        dmax_region_curve(real, 0.5, [4], REDUCED_HAMILTONIAN)
