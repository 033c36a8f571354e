"""Disordered Heisenberg chain: Hamiltonians, magnetization sectors, regions.

Conventions: basis index bit ``i`` is site ``i`` (little endian); bit value 0
is spin up, so ``sigma^z`` on site ``i`` has eigenvalue ``1 - 2*bit_i``.  The
nearest-neighbour coupling is 1 and energies are dimensionless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .linalg import SpectralDecomposition, default_tol_deg, eig_hermitian, group_degenerate
from .rng import SplitMix64, derive_seed

MEMORY_BUDGET = 2 * 1024**3
L_MIN, L_MAX = 2, 14


class MemoryBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class ChainSpec:
    L: int
    delta: float
    boundary: str = "periodic"
    seed: int = 0
    # diagnostic knob: 0 removes every bond
    coupling: float = 1.0

    def __post_init__(self):
        if not (L_MIN <= self.L <= L_MAX):
            raise ValueError(f"L must be in [{L_MIN}, {L_MAX}], got {self.L}")
        if self.delta < 0:
            raise ValueError("disorder strength must be non-negative")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"boundary must be 'periodic' or 'open', got {self.boundary!r}")

    def bonds(self) -> list[tuple[int, int]]:
        if self.coupling == 0.0:
            return []
        b = [(i, i + 1) for i in range(self.L - 1)]
        if self.boundary == "periodic":
            b.append((self.L - 1, 0))
        return b


@dataclass(frozen=True)
class DisorderRealization:
    spec: ChainSpec
    fields: np.ndarray
    index: int = 0

    def __post_init__(self):
        h = np.asarray(self.fields, dtype=float)
        if h.shape != (self.spec.L,) or np.any(np.abs(h) > 1.0):
            raise ValueError("fields must be L values in [-1, 1]")
        object.__setattr__(self, "fields", h)

    @property
    def L(self) -> int:
        return self.spec.L


def realization_from_seed(spec: ChainSpec, seed: int, index: int = 0) -> DisorderRealization:
    h = SplitMix64(seed).uniform(-1.0, 1.0, spec.L)
    return DisorderRealization(spec, h, index)


def draw_realization(spec: ChainSpec, index: int) -> DisorderRealization:
    """Fields h_i ~ U[-1, 1], reproducible from ``(spec.seed, index)``."""
    return realization_from_seed(spec, derive_seed(spec.seed, index), index)


@dataclass(frozen=True)
class Region:
    """Contiguous window of ``size`` sites starting at ``start`` (wraps mod L)."""

    start: int
    size: int

    def sites(self, L: int) -> list[int]:
        if not 1 <= self.size <= L:
            raise ValueError(f"region size must be in [1, {L}], got {self.size}")
        return [(self.start + j) % L for j in range(self.size)]


@dataclass
class SectorBasis:
    magnetization: int
    states: np.ndarray
    _lookup: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.states.size

    def index_of(self, config: int) -> int:
        if not self._lookup:
            self._lookup.update({int(s): i for i, s in enumerate(self.states)})
        return self._lookup[int(config)]


def popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    c = np.zeros_like(x)
    while np.any(x):
        c += x & 1
        x = x >> 1
    return c


def magnetization_of(configs: np.ndarray, L: int) -> np.ndarray:
    return L - 2 * popcount(configs)


def sector_bases(L: int) -> list[SectorBasis]:
    """Sectors ordered by increasing magnetization; states sorted ascending."""
    configs = np.arange(2**L, dtype=np.int64)
    mags = magnetization_of(configs, L)
    return [SectorBasis(int(M), configs[mags == M]) for M in range(-L, L + 1, 2)]


def _check_memory(dim: int, itemsize: int = 8, budget: int = MEMORY_BUDGET):
    need = dim * dim * itemsize
    if need > budget:
        raise MemoryBudgetError(f"dense {dim}x{dim} operator needs {need} bytes, budget is {budget}")


def _diag_and_hops(real: DisorderRealization, configs: np.ndarray):
    """Diagonal energies and (bond, hoppable-mask) data for a config list."""
    spec = real.spec
    bits = (configs[:, None] >> np.arange(spec.L)) & 1
    sz = 1 - 2 * bits
    diag = spec.delta * (sz @ real.fields)
    hops = []
    for i, j in spec.bonds():
        diag = diag + spec.coupling * sz[:, i] * sz[:, j]
        hops.append((i, j, bits[:, i] != bits[:, j]))
    return diag.astype(float), hops


def build_chain_hamiltonian(real: DisorderRealization, budget: int = MEMORY_BUDGET) -> np.ndarray:
    """Dense 2^L Hamiltonian: Heisenberg bonds plus random z-fields.

    ``XX + YY`` flips an antiparallel pair with amplitude 2; ``ZZ`` and the
    fields are diagonal.
    """
    L = real.L
    dim = 2**L
    _check_memory(dim, budget=budget)
    configs = np.arange(dim, dtype=np.int64)
    diag, hops = _diag_and_hops(real, configs)
    H = np.zeros((dim, dim))
    H[configs, configs] = diag
    for i, j, mask in hops:
        src = configs[mask]
        dst = src ^ ((1 << i) | (1 << j))
        H[dst, src] += 2.0 * real.spec.coupling
    return H


def total_sz(L: int) -> np.ndarray:
    return np.diag(magnetization_of(np.arange(2**L), L).astype(float))


def sector_block(real: DisorderRealization, basis: SectorBasis) -> np.ndarray:
    """Hamiltonian restricted to one magnetization sector, built directly."""
    configs = basis.states
    diag, hops = _diag_and_hops(real, configs)
    H = np.diag(diag)
    pos = {int(s): k for k, s in enumerate(configs)}
    for i, j, mask in hops:
        for k in np.flatnonzero(mask):
            H[pos[int(configs[k]) ^ ((1 << i) | (1 << j))], k] += 2.0 * real.spec.coupling
    return H


def build_sector_blocks(H_V: np.ndarray, L: int, tol: float = 1e-12) -> list[tuple[SectorBasis, np.ndarray]]:
    """Cut a dense chain Hamiltonian into magnetization blocks.

    Rejects operators that do not commute with total ``sigma^z``.
    """
    H_V = np.asarray(H_V)
    if H_V.shape != (2**L, 2**L):
        raise ValueError(f"expected a {2**L}x{2**L} operator")
    mags = magnetization_of(np.arange(2**L), L)
    # [H, Sz]_{ab} = H_ab (M_b - M_a)
    comm = np.linalg.norm(H_V * (mags[None, :] - mags[:, None]))
    if comm > tol * max(1.0, np.linalg.norm(H_V)):
        raise ValueError(f"operator does not conserve magnetization: ||[H, Sz]||_F = {comm:.3e}")
    return [(b, H_V[np.ix_(b.states, b.states)]) for b in sector_bases(L)]


def neel_variant_state(L: int) -> np.ndarray:
    """(|Neel> + |anti-Neel> + |Neel with last spin flipped>) / sqrt(3).

    Neel means site 0 up, site 1 down, and so on.
    """
    if L < 3:
        raise ValueError("the Neel variant needs L >= 3")
    neel = sum(1 << i for i in range(L) if i % 2 == 1)
    anti = neel ^ ((1 << L) - 1)
    flipped = neel ^ (1 << (L - 1))
    psi = np.zeros(2**L)
    for c in (neel, anti, flipped):
        psi[c] += 1.0
    return psi / np.linalg.norm(psi)


def reduced_hamiltonian(real: DisorderRealization, region: Region) -> np.ndarray:
    """Terms of H_V supported inside the region, on 2^|R| dimensions.

    Region qubit ``j`` is chain site ``start + j``.  The wraparound bond only
    enters when the region is the whole periodic chain.
    """
    spec = real.spec
    sites = region.sites(spec.L)
    r = len(sites)
    if r == 1:
        return spec.delta * real.fields[sites[0]] * np.diag([1.0, -1.0])
    sub = DisorderRealization(ChainSpec(r, spec.delta, "open", spec.seed, spec.coupling),
                              real.fields[sites])
    H = build_chain_hamiltonian(sub)
    if r == spec.L and spec.boundary == "periodic" and spec.coupling != 0.0:
        H = H + _two_site_term(r, r - 1, 0, spec.coupling)
    return H


def _two_site_term(r: int, i: int, j: int, coupling: float) -> np.ndarray:
    dim = 2**r
    configs = np.arange(dim)
    bi = (configs >> i) & 1
    bj = (configs >> j) & 1
    H = np.diag(coupling * (1 - 2 * bi) * (1 - 2 * bj)).astype(float)
    src = configs[bi != bj]
    H[src ^ ((1 << i) | (1 << j)), src] += 2.0 * coupling
    return H


def region_axes(L: int, sites) -> tuple[list[int], list[int]]:
    """Tensor axes (C order, axis k = site L-1-k) for kept and traced sites.

    Kept axes are ordered so the region's first site is least significant.
    """
    sites = list(sites)
    keep = [L - 1 - s for s in reversed(sites)]
    rest = [a for a in range(L) if a not in keep]
    return keep, rest


def reduce_vectors(vectors: np.ndarray, L: int, sites, weights=None) -> np.ndarray:
    """sum_k w_k Tr_{R^c} |v_k><v_k| for the rows ``v_k`` of ``vectors``."""
    vectors = np.atleast_2d(vectors)
    keep, rest = region_axes(L, sites)
    r = len(keep)
    t = vectors.reshape((vectors.shape[0],) + (2,) * L)
    t = t.transpose([0] + [1 + a for a in rest] + [1 + a for a in keep])
    t = t.reshape(vectors.shape[0], 2 ** (L - r), 2**r)
    if weights is None:
        return np.einsum("kca,kcb->ab", t, t.conj())
    return np.einsum("k,kca,kcb->ab", np.asarray(weights), t, t.conj())


@dataclass
class ChainSpectrum:
    """Per-sector eigendecompositions of one disorder realization."""

    realization: DisorderRealization
    sectors: list  # of (SectorBasis, SpectralDecomposition)

    @property
    def L(self) -> int:
        return self.realization.L

    def energies(self) -> np.ndarray:
        return np.sort(np.concatenate([sd.eigenvalues for _, sd in self.sectors]))

    def spectral_range(self) -> float:
        e = self.energies()
        return float(e[-1] - e[0])

    def embed(self, s: int, cols=None) -> np.ndarray:
        """Sector eigenvectors as rows in the full 2^L basis."""
        basis, sd = self.sectors[s]
        V = sd.eigenvectors if cols is None else sd.eigenvectors[:, cols]
        out = np.zeros((V.shape[1], 2**self.L), dtype=V.dtype)
        out[:, basis.states] = V.T
        return out


def diagonalize_chain(real: DisorderRealization, tol_deg: float | None = None,
                      method: str = "lapack") -> ChainSpectrum:
    """Diagonalize every magnetization block; groups use a common tolerance."""
    blocks = [(b, sector_block(real, b)) for b in sector_bases(real.L)]
    sectors = [(b, eig_hermitian(H, tol_deg=np.inf, method=method)) for b, H in blocks]
    all_e = np.sort(np.concatenate([sd.eigenvalues for _, sd in sectors]))
    tol = default_tol_deg(all_e) if tol_deg is None else tol_deg
    regrouped = []
    for b, sd in sectors:
        regrouped.append((b, SpectralDecomposition(sd.eigenvalues, sd.eigenvectors,
                                                   group_degenerate(sd.eigenvalues, tol), tol)))
    return ChainSpectrum(real, regrouped)


def sector_dims(L: int) -> list[int]:
    return [comb(L, k) for k in range(L + 1)]
