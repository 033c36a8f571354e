"""Infinite-time averages and (smooth) max-relative entropies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import ChainSpectrum, DisorderRealization, Region, neel_variant_state, reduce_vectors
from .linalg import SpectralDecomposition, check_hermitian
from .thermal import thermal_target

TOL_SUPP = 1e-10
TOL_LEAK = 1e-9


class SupportError(ValueError):
    """rho has weight outside the support of sigma."""

    def __init__(self, leakage: float):
        super().__init__(f"support(rho) is not inside support(sigma): rho weight outside is {leakage:.3e}")
        self.leakage = leakage


class NonCommutingError(ValueError):
    pass


@dataclass(frozen=True)
class DmaxResult:
    """Value in bits; ``witness`` is the smoothed state when epsilon > 0."""

    value: float
    epsilon: float = 0.0
    witness: np.ndarray | None = None

    @property
    def lam(self) -> float:
        return self.value


# ---------------------------------------------------------------- equilibrium


def dephase(rho: np.ndarray, spec: SpectralDecomposition) -> np.ndarray:
    """sum_g P_g rho P_g over the degenerate eigenspaces of ``spec``."""
    V = spec.eigenvectors
    labels = np.empty(spec.dim, dtype=int)
    for g, idx in enumerate(spec.groups):
        labels[idx] = g
    mask = labels[:, None] == labels[None, :]
    X = V.conj().T @ rho @ V
    return V @ (X * mask) @ V.conj().T


@dataclass
class EquilibriumState:
    """Time-averaged state of a pure initial vector, kept in factored form.

    ``blocks`` holds ``(states, eigenvectors)`` pairs; ``states`` lists the
    full-basis indices a block lives on (``None`` for the whole space).
    ``groups`` lists, per degenerate energy group, the ``(block, column,
    amplitude)`` triples that make up the projected vector ``P_g psi0``.
    """

    dim: int
    blocks: list
    groups: list
    energy: float
    provenance: tuple = ()

    def group_vectors(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Rows ``P_g psi0`` in the full basis for groups ``start:stop``."""
        sel = self.groups[start:stop]
        dtype = np.result_type(*[b[1].dtype for b in self.blocks], complex)
        out = np.zeros((len(sel), self.dim), dtype=dtype)
        for row, members in enumerate(sel):
            for b, col, amp in members:
                states, V = self.blocks[b]
                if states is None:
                    out[row] += amp * V[:, col]
                else:
                    out[row, states] += amp * V[:, col]
        return out

    def dense(self) -> np.ndarray:
        Phi = self.group_vectors()
        return Phi.T @ Phi.conj()


def infinite_time_average(psi0: np.ndarray, spec: SpectralDecomposition | ChainSpectrum,
                          provenance: tuple = ()) -> EquilibriumState:
    """omega = sum_g P_g |psi0><psi0| P_g.

    With a :class:`ChainSpectrum`, degeneracies are resolved across
    magnetization sectors with the common grouping tolerance, so coherences
    between degenerate states of different sectors survive.
    """
    psi0 = np.asarray(psi0)
    nrm = np.linalg.norm(psi0)
    if abs(nrm - 1.0) > 1e-10:
        raise ValueError(f"initial vector has norm {nrm!r}")
    if isinstance(spec, ChainSpectrum):
        blocks = [(basis.states, sd.eigenvectors) for basis, sd in spec.sectors]
        values = [sd.eigenvalues for _, sd in spec.sectors]
        tol = spec.sectors[0][1].tol_deg
    else:
        blocks = [(None, spec.eigenvectors)]
        values = [spec.eigenvalues]
        tol = spec.tol_deg

    entries = []  # (energy, block, col, amplitude)
    for b, (states, V) in enumerate(blocks):
        local = psi0 if states is None else psi0[states]
        if not np.any(local):
            continue
        amps = V.conj().T @ local
        for col in range(V.shape[1]):
            entries.append((float(values[b][col]), b, col, amps[col]))
    entries.sort(key=lambda t: (t[0], t[1], t[2]))

    groups, energy = [], 0.0
    last = None
    for e, b, col, amp in entries:
        if last is None or e - last > tol:
            groups.append([])
        groups[-1].append((b, col, amp))
        energy += abs(amp) ** 2 * e
        last = e
    return EquilibriumState(psi0.size, blocks, groups, energy, provenance)


def reduce_equilibrium(eq: EquilibriumState, region: Region, L: int, chunk: int = 128) -> np.ndarray:
    """omega_R accumulated group by group; never builds the full omega."""
    sites = region.sites(L)
    r = len(sites)
    out = np.zeros((2**r, 2**r), dtype=complex)
    for a in range(0, len(eq.groups), chunk):
        out += reduce_vectors(eq.group_vectors(a, a + chunk), L, sites)
    return 0.5 * (out + out.conj().T)


# ---------------------------------------------------------------- D_max


def _support_split(sigma: np.ndarray, tol_supp: float):
    w, V = np.linalg.eigh(sigma)
    keep = w > tol_supp
    return w, V, keep


def dmax(rho: np.ndarray, sigma: np.ndarray, tol_supp: float = TOL_SUPP,
         tol_leak: float = TOL_LEAK) -> DmaxResult:
    """log2 of the largest eigenvalue of sigma^{-1/2} rho sigma^{-1/2} on supp(sigma)."""
    rho = check_hermitian(rho, rtol=1e-10)
    sigma = check_hermitian(sigma, rtol=1e-10)
    if rho.shape != sigma.shape:
        raise ValueError("states have different dimensions")
    w, V, keep = _support_split(sigma, tol_supp)
    X = V.conj().T @ rho @ V
    leak = float(np.trace(X[np.ix_(~keep, ~keep)]).real) if np.any(~keep) else 0.0
    if leak > tol_leak:
        raise SupportError(leak)
    s = 1.0 / np.sqrt(w[keep])
    M = X[np.ix_(keep, keep)] * s[:, None] * s[None, :]
    lam_max = np.linalg.eigvalsh(0.5 * (M + M.conj().T))[-1]
    return DmaxResult(float(np.log2(lam_max)))


def dmax_classical(p: np.ndarray, q: np.ndarray, tol_supp: float = TOL_SUPP,
                   tol_leak: float = TOL_LEAK) -> float:
    """D_max for diagonal (commuting) states given as probability vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    keep = q > tol_supp
    leak = float(p[~keep].sum())
    if leak > tol_leak:
        raise SupportError(leak)
    return float(np.log2(np.max(p[keep] / q[keep])))


def _clipped_mass(p, q, lam):
    return float(np.maximum(p - 2.0**lam * q, 0.0).sum())


def smooth_dmax_classical(p: np.ndarray, q: np.ndarray, eps: float, tol: float = 1e-10):
    """Smallest lambda reachable by moving at most eps/2 of probability mass.

    Mass above the cap ``2^lambda q`` is clipped and poured into bins with room
    left, so the witness ``r`` satisfies ``||r - p||_1 <= eps`` and
    ``r <= 2^lambda q``.  Returns ``(lambda, r)``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if not 0.0 <= eps < 1.0:
        raise ValueError("smoothing parameter must satisfy 0 <= eps < 1")
    budget = eps / 2.0
    if float(p[q <= 0].sum()) > budget + 1e-15:
        raise SupportError(float(p[q <= 0].sum()))
    lo = -math.log2(q.sum())  # caps must hold total mass 1
    if _clipped_mass(p, q, lo) <= budget:
        hi = lo
    else:
        pos = q > 0
        hi = max(lo, float(np.log2(np.max(p[pos] / q[pos]))))
        while _clipped_mass(p, q, hi) > budget:
            hi += 1.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _clipped_mass(p, q, mid) <= budget:
                hi = mid
            else:
                lo = mid
    cap = 2.0**hi * q
    r = np.minimum(p, cap)
    deficit = 1.0 - r.sum()
    room = cap - r
    if deficit > 0 and room.sum() > 0:
        r = r + deficit * room / room.sum()
    return hi, r


def joint_eigenbasis(rho: np.ndarray, sigma: np.ndarray, tol_comm: float = 1e-9):
    """Common eigenbasis of two commuting Hermitian matrices.

    Returns ``(p, q, W)`` with ``rho = W diag(p) W^dagger`` and likewise for sigma.
    """
    comm = float(np.max(np.abs(rho @ sigma - sigma @ rho)))
    if comm > tol_comm:
        raise NonCommutingError(
            f"smooth D_max is only implemented for commuting pairs (||[rho, sigma]|| = {comm:.2e}); "
            "use dmax() for an upper bound")
    w, V = np.linalg.eigh(sigma)
    W = np.array(V, dtype=complex)
    cuts = np.flatnonzero(np.diff(w) > 1e-12) + 1
    for idx in np.split(np.arange(w.size), cuts):
        block = V[:, idx].conj().T @ rho @ V[:, idx]
        _, U = np.linalg.eigh(0.5 * (block + block.conj().T))
        W[:, idx] = V[:, idx] @ U
    p = np.real(np.einsum("ij,jk,ki->i", W.conj().T, rho, W))
    return np.clip(p, 0.0, None), np.clip(w, 0.0, None), W


def dmax_smooth(rho: np.ndarray, sigma: np.ndarray, eps: float, tol_comm: float = 1e-9) -> DmaxResult:
    """inf of D_max(rho~ || sigma) over the trace-norm ball ||rho~ - rho||_1 <= eps.

    Commuting pairs only; the optimum is then diagonal in the joint basis.
    """
    if eps == 0.0:
        res = dmax(rho, sigma)
        return DmaxResult(res.value, 0.0, np.asarray(rho))
    p, q, W = joint_eigenbasis(np.asarray(rho), np.asarray(sigma), tol_comm)
    q = np.where(q > TOL_SUPP, q, 0.0)
    lam, r = smooth_dmax_classical(p, q, eps)
    try:
        plain = dmax(rho, sigma).value
    except SupportError:
        plain = math.inf
    if plain <= lam:
        # bisection tolerance can leave lam just above the unsmoothed value
        return DmaxResult(plain, float(eps), np.asarray(rho))
    witness = (W * r) @ W.conj().T
    return DmaxResult(float(lam), float(eps), witness)


# ---------------------------------------------------------------- region curves


@dataclass(frozen=True)
class CurvePoint:
    size: int
    value: float | None
    error: str | None = None


def dmax_region_curve(real: DisorderRealization, beta: float, sizes, kind: str, *,
                      spectrum: ChainSpectrum | None = None,
                      equilibrium: EquilibriumState | None = None,
                      start: int = 0) -> list[CurvePoint]:
    """D_max(omega_R || target_R) for left-anchored windows of each size.

    Support violations become points with ``value=None`` and the reason.
    """
    from .lattice import diagonalize_chain

    L = real.L
    if spectrum is None:
        spectrum = diagonalize_chain(real)
    if equilibrium is None:
        equilibrium = infinite_time_average(neel_variant_state(L), spectrum)
    points = []
    for size in sorted(set(int(s) for s in sizes)):
        if not 1 <= size <= L - 1:
            raise ValueError(f"region sizes must lie in [1, {L - 1}]")
        region = Region(start, size)
        omega_r = reduce_equilibrium(equilibrium, region, L)
        target = thermal_target(real, region, beta, kind, spectrum)
        try:
            points.append(CurvePoint(size, dmax(omega_r, target.state).value))
        except SupportError as exc:
            points.append(CurvePoint(size, None, str(exc)))
    return points
