"""Dense Hermitian eigensolver: Householder tridiagonalization + implicit QL.

Pure numpy, deterministic for identical input bits.  Slower than LAPACK for
large matrices (the QL sweep rotates eigenvector columns one Givens rotation at
a time), so :func:`thermbath.linalg.eig_hermitian` only uses it on request.
"""

from __future__ import annotations

import math

import numpy as np

_EPS = np.finfo(float).eps


def tridiagonalize(A: np.ndarray):
    """Reduce Hermitian ``A`` to real symmetric tridiagonal form.

    Returns ``(diag, offdiag, Q)`` with ``A = Q T Q^dagger`` where ``T`` has
    ``diag`` on the diagonal and the non-negative ``offdiag`` beside it.
    """
    a = np.array(A, dtype=complex)
    n = a.shape[0]
    Q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = a[k + 1:, k]
        xnorm = np.linalg.norm(x)
        if xnorm == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        alpha = -phase * xnorm
        v = x.copy()
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        sub = a[k + 1:, k + 1:]
        p = sub @ v
        K = np.vdot(v, p).real
        w = p - K * v
        sub -= 2.0 * (np.outer(v, w.conj()) + np.outer(w, v.conj()))
        a[k + 1:, k] = 0.0
        a[k, k + 1:] = 0.0
        a[k + 1, k] = alpha
        a[k, k + 1] = np.conj(alpha)
        Q[:, k + 1:] -= 2.0 * np.outer(Q[:, k + 1:] @ v, v.conj())

    diag = a.diagonal().real.copy()
    sub = a.diagonal(-1).copy()
    # diagonal phase change making the off-diagonal real and non-negative
    phases = np.ones(n, dtype=complex)
    for k in range(n - 1):
        mag = abs(sub[k])
        phases[k + 1] = phases[k] * (sub[k] / mag if mag > 0 else 1.0)
    return diag, np.abs(sub), Q * phases[None, :]


def tridiagonal_ql(diag: np.ndarray, offdiag: np.ndarray, Z: np.ndarray | None = None,
                   max_iter: int = 60):
    """Implicit QL with Wilkinson-style shifts on a real symmetric tridiagonal.

    ``Z`` (n x n, rotated in place on a copy) accumulates eigenvectors; pass
    the Householder basis to get eigenvectors of the original matrix.
    Returns unsorted ``(eigenvalues, vectors)``.
    """
    d = np.array(diag, dtype=float)
    n = d.size
    e = np.zeros(n)
    e[: n - 1] = offdiag
    # rows of ZT are the columns of Z; rows are contiguous
    ZT = np.eye(n) if Z is None else np.array(Z).T.copy()
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= _EPS * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise np.linalg.LinAlgError("implicit QL did not converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = ZT[i].copy()
                ZT[i] = c * zi - s * ZT[i + 1]
                ZT[i + 1] = s * zi + c * ZT[i + 1]
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, ZT.T


def eigh_native(A: np.ndarray):
    """Eigenvalues (ascending) and orthonormal eigenvectors of Hermitian ``A``."""
    A = np.asarray(A)
    n = A.shape[0]
    if n == 1:
        return np.array([A[0, 0].real]), np.ones((1, 1), dtype=complex)
    diag, off, Q = tridiagonalize(A)
    w, V = tridiagonal_ql(diag, off, Q)
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]
