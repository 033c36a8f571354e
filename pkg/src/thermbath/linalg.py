"""Dense complex linear algebra used throughout the package.

Operators are plain numpy arrays.  Density matrices are square Hermitian
arrays with unit trace; :func:`check_density` validates one.  Subsystem
ordering follows ``numpy.kron``: the first factor is the most significant
index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .eigensolver import eigh_native
from .rng import SplitMix64

MAX_DIM = 2**16
HERMITIAN_RTOL = 1e-12


class NotHermitianError(ValueError):
    """Raised when a matrix flagged Hermitian is not."""

    def __init__(self, asymmetry: float):
        super().__init__(f"matrix is not Hermitian: max |A - A^dagger| = {asymmetry:.3e}")
        self.asymmetry = asymmetry


class DimensionError(ValueError):
    pass


def asymmetry(A: np.ndarray) -> float:
    A = np.asarray(A)
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def check_hermitian(A: np.ndarray, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {A.shape}")
    asym = asymmetry(A)
    scale = float(np.max(np.abs(A)))
    if asym > rtol * scale:
        raise NotHermitianError(asym)
    return A


def check_density(rho: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Validate unit trace, Hermiticity and positivity (within ``tol``)."""
    rho = check_hermitian(rho, rtol=max(HERMITIAN_RTOL, tol))
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise ValueError(f"trace is {tr!r}, expected 1")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -tol:
        raise ValueError(f"state has negative eigenvalue {lo:.3e}")
    return rho


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs in ascending order plus degenerate clusters.

    ``groups`` partitions the eigenvalue indices: consecutive eigenvalues
    closer than ``tol_deg`` share a group (single linkage).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    groups: tuple
    tol_deg: float

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T

    def projector(self, g: int) -> np.ndarray:
        V = self.eigenvectors[:, self.groups[g]]
        return V @ V.conj().T

    def group_energies(self) -> np.ndarray:
        return np.array([self.eigenvalues[idx].mean() for idx in self.groups])


def default_tol_deg(eigenvalues: np.ndarray) -> float:
    spread = float(eigenvalues[-1] - eigenvalues[0]) if eigenvalues.size else 0.0
    return 1e-10 * spread


def group_degenerate(eigenvalues: np.ndarray, tol: float) -> tuple:
    """Split sorted eigenvalues wherever the gap exceeds ``tol``."""
    if eigenvalues.size == 0:
        return ()
    cuts = np.flatnonzero(np.diff(eigenvalues) > tol) + 1
    return tuple(np.split(np.arange(eigenvalues.size), cuts))


def eig_hermitian(A: np.ndarray, tol_deg: float | None = None,
                  method: str = "lapack") -> SpectralDecomposition:
    """Spectral decomposition of a Hermitian matrix.

    ``method="lapack"`` calls ``numpy.linalg.eigh``; ``method="native"`` uses
    the in-repo Householder/QL solver.  ``tol_deg`` defaults to 1e-10 times
    the spectral range.
    """
    A = check_hermitian(A)
    if method == "lapack":
        w, V = np.linalg.eigh(A)
    elif method == "native":
        w, V = eigh_native(A)
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")
    if tol_deg is None:
        tol_deg = default_tol_deg(w)
    return SpectralDecomposition(w, V, group_degenerate(w, tol_deg), float(tol_deg))


def kron(A: np.ndarray, B: np.ndarray, max_dim: int = MAX_DIM) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    rows, cols = A.shape[0] * B.shape[0], A.shape[1] * B.shape[1]
    if max(rows, cols) > max_dim:
        raise DimensionError(f"Kronecker product of size {rows}x{cols} exceeds max dimension {max_dim}")
    return np.kron(A, B)


def kron_all(mats, max_dim: int = MAX_DIM) -> np.ndarray:
    """Left fold of :func:`kron` over ``mats``."""
    return reduce(lambda a, b: kron(a, b, max_dim), mats)


def tensor_power(A: np.ndarray, n: int, max_dim: int = MAX_DIM) -> np.ndarray:
    if n < 1:
        raise ValueError("tensor power needs n >= 1")
    return kron_all([A] * n, max_dim)


def partial_trace(rho: np.ndarray, dims, keep) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Kept subsystems stay in their original relative order.
    """
    dims = [int(d) for d in dims]
    keep = sorted(set(int(k) for k in keep))
    rho = np.asarray(rho)
    total = int(np.prod(dims))
    if rho.shape != (total, total):
        raise DimensionError(f"dims {dims} imply dimension {total}, state has shape {rho.shape}")
    if not keep or keep[0] < 0 or keep[-1] >= len(dims):
        raise DimensionError(f"keep={keep} must be a non-empty subset of range({len(dims)})")
    n = len(dims)
    drop = [i for i in range(n) if i not in keep]
    t = rho.reshape(dims + dims)
    # bring (kept kets, dropped kets, kept bras, dropped bras) together
    perm = keep + drop + [n + i for i in keep] + [n + i for i in drop]
    dk = int(np.prod([dims[i] for i in keep]))
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    t = t.transpose(perm).reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def trace_norm(A: np.ndarray) -> float:
    """Sum of singular values; sum of |eigenvalues| for Hermitian input."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    scale = float(np.max(np.abs(A)))
    if scale == 0.0:
        return 0.0
    if A.shape[0] == A.shape[1] and asymmetry(A) <= HERMITIAN_RTOL * scale:
        return float(np.abs(np.linalg.eigvalsh(A)).sum())
    return float(np.linalg.svd(A, compute_uv=False).sum())


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Half the trace norm of the difference."""
    return 0.5 * trace_norm(np.asarray(rho) - np.asarray(sigma))


def psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(rho)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """F = || sqrt(rho) sqrt(sigma) ||_1, clipped into [0, 1]."""
    rho = np.asarray(rho)
    sigma = np.asarray(sigma)
    if rho.shape != sigma.shape:
        raise DimensionError("states have different dimensions")
    s = np.linalg.svd(psd_sqrt(rho) @ psd_sqrt(sigma), compute_uv=False).sum()
    return float(min(max(s, 0.0), 1.0))


def check_fuchs_van_de_graaf(rho: np.ndarray, sigma: np.ndarray, slack: float = 1e-9) -> bool:
    """1 - F <= D <= sqrt(1 - F^2), D the trace distance."""
    F = fidelity(rho, sigma)
    D = trace_distance(rho, sigma)
    return (1.0 - F <= D + slack) and (D <= np.sqrt(max(1.0 - F * F, 0.0)) + slack)


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def ket_to_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi)
    return np.outer(psi, psi.conj())


# random objects, all drawn from splitmix64


def random_unitary(d: int, rng: SplitMix64) -> np.ndarray:
    """Haar-random unitary: QR of a complex Gaussian with phase fix."""
    Z = rng.complex_normal((d, d))
    Q, R = np.linalg.qr(Z)
    ph = np.diagonal(R).copy()
    ph = np.where(np.abs(ph) > 0, ph / np.abs(ph), 1.0)
    return Q * ph[None, :]


def random_pure_state(d: int, rng: SplitMix64) -> np.ndarray:
    psi = rng.complex_normal(d)
    return psi / np.linalg.norm(psi)


def random_density(d: int, rng: SplitMix64, rank: int | None = None) -> np.ndarray:
    """Random mixed state (Hilbert-Schmidt measure for full rank)."""
    G = rng.complex_normal((d, rank or d))
    rho = G @ G.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def random_hermitian(d: int, rng: SplitMix64) -> np.ndarray:
    G = rng.complex_normal((d, d))
    return 0.5 * (G + G.conj().T)


def random_probabilities(d: int, rng: SplitMix64) -> np.ndarray:
    return rng.dirichlet_uniform(d)
