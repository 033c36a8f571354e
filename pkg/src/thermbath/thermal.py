"""Gibbs states, temperature matching, and local thermal targets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import (ChainSpectrum, DisorderRealization, Region, diagonalize_chain,
                      reduce_vectors, reduced_hamiltonian)
from .linalg import check_hermitian

REDUCED_HAMILTONIAN = "reduced_hamiltonian"
REDUCED_GLOBAL = "reduced_global"
TARGET_KINDS = (REDUCED_HAMILTONIAN, REDUCED_GLOBAL)


class BetaMatchError(ValueError):
    pass


def boltzmann_weights(energies: np.ndarray, beta: float) -> np.ndarray:
    """Normalized exp(-beta E), shifted by the extreme exponent."""
    if not math.isfinite(beta):
        raise ValueError("beta must be finite; use a ground/ceiling projector for beta = +-inf")
    x = -beta * np.asarray(energies, dtype=float)
    w = np.exp(x - x.max())
    return w / w.sum()


def gibbs_state(H: np.ndarray, beta: float) -> np.ndarray:
    """exp(-beta H) / Z via the spectral decomposition."""
    H = check_hermitian(H)
    w, V = np.linalg.eigh(H)
    p = boltzmann_weights(w, beta)
    rho = (V * p) @ V.conj().T
    return 0.5 * (rho + rho.conj().T)


def thermal_energy(energies: np.ndarray, beta: float) -> float:
    e = np.asarray(energies, dtype=float)
    return float(boltzmann_weights(e, beta) @ e)


def beta_for_energy(energies: np.ndarray, target: float, tol: float = 1e-8,
                    bracket: float = 64.0, max_iter: int = 200) -> float:
    """Bisection for E(beta) = target; E(beta) is strictly decreasing.

    Negative beta is returned when the target lies above the mean energy.
    """
    e = np.sort(np.asarray(energies, dtype=float))
    if not e[0] < target:
        raise BetaMatchError(f"target energy {target!r} is not above the ground energy {e[0]!r}")
    if not target < e[-1]:
        raise BetaMatchError(f"target energy {target!r} is not below the top energy {e[-1]!r}")
    lo, hi = -bracket, bracket
    # E(lo) must exceed the target and E(hi) fall below it
    for _ in range(60):
        if thermal_energy(e, lo) > target and thermal_energy(e, hi) < target:
            break
        lo *= 2.0
        hi *= 2.0
    else:
        raise BetaMatchError("could not bracket the target energy")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        E = thermal_energy(e, mid)
        if abs(E - target) <= tol:
            return mid
        if E > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            break
    mid = 0.5 * (lo + hi)
    if abs(thermal_energy(e, mid) - target) > tol:
        raise BetaMatchError(f"bisection stalled with residual {abs(thermal_energy(e, mid) - target):.3e}")
    return mid


def match_beta(H: np.ndarray | ChainSpectrum, psi0: np.ndarray, tol: float = 1e-8) -> float:
    """Inverse temperature whose Gibbs energy equals <psi0|H|psi0>.

    ``H`` may be a dense Hamiltonian or a :class:`ChainSpectrum`.
    """
    psi0 = np.asarray(psi0)
    if isinstance(H, ChainSpectrum):
        energies = H.energies()
        target = 0.0
        for basis, sd in H.sectors:
            c = sd.eigenvectors.conj().T @ psi0[basis.states]
            target += float(np.abs(c) ** 2 @ sd.eigenvalues)
    else:
        H = check_hermitian(H)
        energies = np.linalg.eigvalsh(H)
        target = float(np.vdot(psi0, H @ psi0).real)
    return beta_for_energy(energies, target, tol)


@dataclass(frozen=True)
class ThermalTarget:
    kind: str
    beta: float
    state: np.ndarray


def reduced_global_gibbs(spectrum: ChainSpectrum, sites, beta: float, chunk: int = 256) -> np.ndarray:
    """Tr_{R^c} of the full-chain Gibbs state, accumulated sector by sector."""
    energies = spectrum.energies()
    shift = (-beta * energies).max()
    logZ = shift + np.log(np.exp(-beta * energies - shift).sum())
    r = len(sites)
    out = np.zeros((2**r, 2**r), dtype=complex)
    for s, (basis, sd) in enumerate(spectrum.sectors):
        w = np.exp(-beta * sd.eigenvalues - logZ)
        for a in range(0, sd.dim, chunk):
            cols = np.arange(a, min(a + chunk, sd.dim))
            out += reduce_vectors(spectrum.embed(s, cols), spectrum.L, sites, w[cols])
    return 0.5 * (out + out.conj().T)


def thermal_target(real: DisorderRealization, region: Region, beta: float, kind: str,
                   spectrum: ChainSpectrum | None = None) -> ThermalTarget:
    """Either the Gibbs state of H_R or the reduction of the chain Gibbs state."""
    if kind == REDUCED_HAMILTONIAN:
        state = gibbs_state(reduced_hamiltonian(real, region), beta)
    elif kind == REDUCED_GLOBAL:
        if spectrum is None:
            spectrum = diagonalize_chain(real)
        state = reduced_global_gibbs(spectrum, region.sites(real.L), beta)
    else:
        raise ValueError(f"unknown target kind {kind!r}; expected one of {TARGET_KINDS}")
    return ThermalTarget(kind, float(beta), state)
