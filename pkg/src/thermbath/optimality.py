"""Energy subspace condition, fixed-weight optimal distances, and the
optimality checks for the uniform swap channel."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement

import numpy as np

from .collision import RandomUnitaryChannel, convex_split_channel, local_sum
from .linalg import DimensionError, kron_all, random_unitary, tensor_power, trace_norm
from .rng import SplitMix64, derive_seed

TOL_E = 1e-9
ESC_PAIR_BUDGET = 10**7
DENSE_ORACLE_MAX = 4096


class PreconditionError(ValueError):
    pass


class NonDiagonalError(ValueError):
    pass


# ---------------------------------------------------------------- ESC


def _as_exact(e):
    if isinstance(e, tuple):
        return Fraction(int(e[0]), int(e[1]))
    return Fraction(e)


def compositions(n: int, d: int) -> list[tuple]:
    """Occupation tuples (m_1..m_d) with sum n, lexicographic."""
    out = []
    for combo in combinations_with_replacement(range(d), n):
        m = [0] * d
        for k in combo:
            m[k] += 1
        out.append(tuple(m))
    return out


@dataclass
class EscReport:
    energies: tuple
    n_max: int
    tol_E: float
    exact: bool
    verdicts: dict = field(default_factory=dict)
    collisions: dict = field(default_factory=dict)
    complete: bool = True

    @property
    def checked_up_to(self) -> int:
        return max(self.verdicts, default=0)

    def passes(self, n: int | None = None) -> bool:
        """True when every n' <= n was checked and passed."""
        n = self.n_max if n is None else n
        return all(self.verdicts.get(k) is True for k in range(1, n + 1))

    @property
    def first_failure(self) -> int | None:
        bad = [n for n, v in self.verdicts.items() if not v]
        return min(bad) if bad else None


def check_esc(energies, n_max: int, tol_E: float = TOL_E, exact: bool = False,
              pair_budget: int = ESC_PAIR_BUDGET, max_report: int = 100) -> EscReport:
    """Look for distinct occupation tuples with (numerically) equal total energy.

    ``exact=True`` compares rationals (floats are converted exactly, and
    ``(num, den)`` pairs are accepted) with no tolerance.
    """
    if len(energies) < 1:
        raise ValueError("need at least one energy level")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    d = len(energies)
    if exact:
        E = [_as_exact(e) for e in energies]
    else:
        E = [float(e) for e in energies]
    report = EscReport(tuple(energies), n_max, 0.0 if exact else tol_E, exact)
    if d <= 2:
        # totals n E_0 + m_1 (E_1 - E_0) are distinct iff the gap is resolved
        gap = abs(E[-1] - E[0])
        ok = d == 1 or ((gap != 0) if exact else (gap > tol_E))
        for n in range(1, n_max + 1):
            report.verdicts[n] = ok
            report.collisions[n] = [] if ok or n > 1 else [((1, 0), (0, 1))]
        return report
    for n in range(1, n_max + 1):
        if report.first_failure is not None:
            # adding one level to both colliding tuples keeps them colliding
            report.verdicts[n] = False
            report.collisions[n] = []
            continue
        count = math.comb(n + d - 1, d - 1)
        if count * count > pair_budget:
            report.complete = False
            break
        comps = compositions(n, d)
        if exact:
            totals = [sum(m * e for m, e in zip(c, E)) for c in comps]
        else:
            totals = list(np.asarray(comps, dtype=float) @ np.asarray(E))
        order = sorted(range(len(comps)), key=lambda i: totals[i])
        found = []
        run = [order[0]]

        def flush(run):
            for a in range(len(run)):
                for b in range(a + 1, len(run)):
                    if len(found) < max_report:
                        found.append((comps[run[a]], comps[run[b]]))
            return len(run) > 1

        collided = False
        for prev, cur in zip(order, order[1:]):
            gap = totals[cur] - totals[prev]
            if (gap == 0) if exact else (gap <= tol_E):
                run.append(cur)
            else:
                collided |= flush(run)
                run = [cur]
        collided |= flush(run)
        report.verdicts[n] = not collided
        report.collisions[n] = found
    return report


# ---------------------------------------------------------------- subspace profiles


@dataclass(frozen=True)
class SubspaceProfile:
    """Type classes of n copies of a d-level system, grouped by total energy."""

    n: int
    energies: np.ndarray
    types: tuple
    dims: np.ndarray
    type_energies: np.ndarray
    subspaces: tuple  # tuples of type indices sharing an energy

    def product_weights(self, q) -> np.ndarray:
        """Weight of each type under q^{(x)n}."""
        q = np.asarray(q, dtype=float)
        return np.array([self.dims[k] * np.prod(q ** np.array(t)) for k, t in enumerate(self.types)])

    def rogue_weights(self, p, q) -> np.ndarray:
        """Weight of each type under p (x) q^{(x)(n-1)}, symmetrized over slots."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        n = self.n
        out = np.zeros(len(self.types))
        for k, t in enumerate(self.types):
            t = np.array(t)
            for i in range(p.size):
                if t[i] == 0 or p[i] == 0:
                    continue
                s = t.copy()
                s[i] -= 1
                out[k] += p[i] * _multinomial(n - 1, s) * np.prod(q**s)
        return out

    def subspace_weights(self, type_weights) -> np.ndarray:
        w = np.asarray(type_weights)
        return np.array([w[list(g)].sum() for g in self.subspaces])


def _multinomial(n: int, counts) -> int:
    out = math.factorial(n)
    for c in counts:
        out //= math.factorial(int(c))
    return out


def subspace_profile(energies, n: int, tol_E: float = TOL_E) -> SubspaceProfile:
    E = np.asarray(energies, dtype=float)
    types = tuple(compositions(n, E.size))
    dims = np.array([_multinomial(n, t) for t in types], dtype=float)
    tE = np.array([float(np.dot(t, E)) for t in types])
    order = np.argsort(tE, kind="stable")
    groups, run = [], [int(order[0])]
    for a, b in zip(order, order[1:]):
        if tE[b] - tE[a] <= tol_E:
            run.append(int(b))
        else:
            groups.append(tuple(run))
            run = [int(b)]
    groups.append(tuple(run))
    return SubspaceProfile(n, E, types, dims, tE, tuple(groups))


def _energy_basis(rho, sigma, H, tol: float = 1e-9):
    """Energies and populations of rho, sigma in the eigenbasis of H."""
    H = np.asarray(H)
    if H.ndim == 1:
        E, V = H.astype(float), np.eye(H.size)
    else:
        E, V = np.linalg.eigh(H)
    out = []
    for X in (rho, sigma):
        Y = V.conj().T @ np.asarray(X) @ V
        off = float(np.max(np.abs(Y - np.diag(np.diagonal(Y))))) if Y.size > 1 else 0.0
        if off > tol:
            raise NonDiagonalError(f"state is not diagonal in the energy eigenbasis (off-diagonal {off:.2e})")
        out.append(np.clip(np.diagonal(Y).real, 0.0, None))
    return E, out[0], out[1]


def optimal_distance_fixed_weights(rho, sigma, H, n: int, tol_E: float = TOL_E) -> float:
    """min ||X - sigma^{(x)n}||_1 over states X with the energy-subspace weights
    of rho (x) sigma^{(x)(n-1)}: the sum of weight mismatches over subspaces."""
    E, p, q = _energy_basis(rho, sigma, H)
    prof = subspace_profile(E, n, tol_E)
    w_rho = prof.subspace_weights(prof.rogue_weights(p, q))
    w_sig = prof.subspace_weights(prof.product_weights(q))
    return float(np.abs(w_rho - w_sig).sum())


def product_energies(E, n: int) -> np.ndarray:
    """Total energy of every product basis state (kron ordering)."""
    E = np.asarray(E, dtype=float)
    total = np.zeros(1)
    for _ in range(n):
        total = (total[:, None] + E[None, :]).reshape(-1)
    return total


def energy_subspaces(total: np.ndarray, tol_E: float = TOL_E) -> list[np.ndarray]:
    order = np.argsort(total, kind="stable")
    cuts = np.flatnonzero(np.diff(total[order]) > tol_E) + 1
    return [np.sort(g) for g in np.split(order, cuts)]


def dense_subspace_weights(state: np.ndarray, E, n: int, tol_E: float = TOL_E) -> np.ndarray:
    """Oracle: Tr[Pi_E state] per energy subspace, state in the product energy basis."""
    if len(E) ** n > DENSE_ORACLE_MAX:
        raise DimensionError(f"dense oracle is limited to dimension {DENSE_ORACLE_MAX}")
    diag = np.diagonal(state).real
    return np.array([diag[g].sum() for g in energy_subspaces(product_energies(E, n), tol_E)])


def uniformity_spread(state: np.ndarray, E, n: int) -> float:
    """Largest eigenvalue spread of state restricted to a single type class."""
    d = len(E)
    digits = np.array(np.unravel_index(np.arange(d**n), (d,) * n)).T
    counts = np.stack([(digits == k).sum(axis=1) for k in range(d)], axis=1)
    _, labels = np.unique(counts, axis=0, return_inverse=True)
    spread = 0.0
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        w = np.linalg.eigvalsh(state[np.ix_(idx, idx)])
        spread = max(spread, float(w[-1] - w[0]))
    return spread


# ---------------------------------------------------------------- optimality


def random_energy_preserving_channel(E, n: int, rng: SplitMix64, max_unitaries: int = 8,
                                     tol_E: float = TOL_E) -> RandomUnitaryChannel:
    """Dirichlet mixture of unitaries that are Haar random on each energy subspace."""
    subs = energy_subspaces(product_energies(E, n), tol_E)
    D = len(E) ** n
    k = 1 + rng.integers(max_unitaries)
    us = []
    for _ in range(k):
        U = np.zeros((D, D), dtype=complex)
        for g in subs:
            U[np.ix_(g, g)] = random_unitary(g.size, rng)
        us.append(U)
    return RandomUnitaryChannel(rng.dirichlet_uniform(k), us)


@dataclass(frozen=True)
class OptimalityReport:
    n: int
    esc_pass: bool
    mode: str
    channel_distance: float
    optimum: float
    equality_holds: bool
    trials: int
    best_sampled: float | None
    violations: int


def verify_optimality(rho, sigma, H, n: int, trials: int = 200, seed: int = 0,
                      tol: float = 1e-9) -> OptimalityReport:
    """Compare the uniform swap channel with the fixed-weight optimum and with
    sampled energy-preserving random unitary channels.

    Without the energy subspace condition nothing is asserted: the report is
    in ``counterexample-search`` mode and ``violations`` counts sampled
    channels that beat the swap channel.
    """
    E, p, q = _energy_basis(rho, sigma, H)
    esc = check_esc(E, n)
    rho_e, sig_e = np.diag(p), np.diag(q)
    start = kron_all([rho_e] + [sig_e] * (n - 1)) if n > 1 else rho_e
    target = tensor_power(sig_e, n)
    bar = trace_norm(convex_split_channel(n, len(E))(start) - target)
    opt = optimal_distance_fixed_weights(rho_e, sig_e, E, n)
    best, violations = None, 0
    for k in range(trials):
        ch = random_energy_preserving_channel(E, n, SplitMix64(derive_seed(seed, k)))
        dist = trace_norm(ch(start) - target)
        best = dist if best is None else min(best, dist)
        if bar > dist + tol:
            violations += 1
    mode = "assert" if esc.passes(n) else "counterexample-search"
    return OptimalityReport(n, esc.passes(n), mode, bar, opt, abs(bar - opt) <= tol,
                            trials, best, violations)


# ---------------------------------------------------------------- degenerate gaps


@dataclass(frozen=True)
class CounterexampleReport:
    beta: float
    populations: np.ndarray
    d_swap: float
    d_star: float
    predicted_change: float
    residual: float
    weights_preserved: bool
    strict: bool
    note: str = ""


def _half_norm(A) -> float:
    return 0.5 * trace_norm(A)


def degenerate_gap_example(energies, beta: float, allow_violation: bool = False,
                              tol: float = 1e-12) -> CounterexampleReport:
    """Four levels with E_2 - E_1 = E_4 - E_3, initial state |1><1|, one bath copy.

    Flattening the output of the swap channel on the energy subspace
    E_1 + E_4 = E_2 + E_3 changes the trace distance to tau^{(x)2} by
    p_4 (2 p_1 - 1), an improvement whenever p_1 < 1/2.
    """
    E = np.asarray(energies, dtype=float)
    if E.shape != (4,) or np.any(np.diff(E) < 0):
        raise ValueError("need four ascending energies")
    if abs((E[1] - E[0]) - (E[3] - E[2])) > 1e-12 * max(1.0, np.abs(E).max()):
        raise ValueError("energies must satisfy E_2 - E_1 = E_4 - E_3")
    if not beta >= 0:
        raise ValueError("beta must be non-negative so that level 1 is the most populated")
    w = np.exp(-beta * (E - E[0]))
    p = w / w.sum()
    if p[0] > 0.5 and not allow_violation:
        raise PreconditionError(f"p_1 = {p[0]:.6g} exceeds 1/2; the flattening cannot improve the distance")

    tau = np.diag(p)
    rho = np.diag([1.0, 0.0, 0.0, 0.0])
    rho2 = convex_split_channel(2, 4)(np.kron(rho, tau))
    target = np.kron(tau, tau)
    Pi = np.zeros((16, 16))
    for i, j in ((0, 3), (3, 0), (1, 2), (2, 1)):
        Pi[4 * i + j, 4 * i + j] = 1.0
    rho_star = rho2 - Pi @ rho2 @ Pi + (p[3] / 4.0) * Pi
    d2 = _half_norm(rho2 - target)
    ds = _half_norm(rho_star - target)
    predicted = float(p[3] * (2.0 * p[0] - 1.0))
    change = ds - d2
    if p[0] <= 0.5:
        residual = abs(change - predicted)
        note = ""
    else:
        residual = abs(change)
        note = f"p_1 = {p[0]:.6g} > 1/2: the flattened state is no closer (change {change:.3g})"
    weights_ok = bool(np.allclose(dense_subspace_weights(rho_star, E, 2),
                                  dense_subspace_weights(rho2, E, 2), atol=tol, rtol=0))
    return CounterexampleReport(float(beta), p, d2, ds, predicted, float(residual), weights_ok,
                                bool(change < -tol), note)


def beta_half(energies, hi: float = 1e3) -> float:
    """beta at which the ground population reaches 1/2 (bisection)."""
    E = np.asarray(energies, dtype=float)

    def p1(b):
        w = np.exp(-b * (E - E[0]))
        return 1.0 / w.sum()

    lo = 0.0
    if p1(hi) < 0.5:
        raise ValueError("ground population never reaches 1/2")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if p1(mid) <= 0.5:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------- trivial Hamiltonian


def weyl_unitaries(d: int) -> list[np.ndarray]:
    """The d^2 shift-and-phase operators X^a Z^b."""
    omega = np.exp(2j * np.pi / d)
    X = np.roll(np.eye(d), 1, axis=0)
    Z = np.diag(omega ** np.arange(d))
    out = []
    for a in range(d):
        for b in range(d):
            out.append(np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b))
    return out


@dataclass(frozen=True)
class TrivialHamiltonianReport:
    d: int
    n_used: int
    max_distance: float
    unitaries: int
    randomness_bits: float
    reference_bits: float


def trivial_hamiltonian_note(d: int, samples: int = 50, seed: int = 0) -> TrivialHamiltonianReport:
    """With H = 0 every unitary conserves energy, so uniform Weyl mixing sends
    any state to I/d without any bath copy."""
    from .linalg import random_density

    us = weyl_unitaries(d)
    ch = RandomUnitaryChannel(np.full(len(us), 1.0 / len(us)), us)
    if not ch.is_energy_preserving(local_sum(np.zeros((d, d)), 1)):
        raise AssertionError("Weyl channel must commute with H = 0")
    rng = SplitMix64(seed)
    worst = 0.0
    for _ in range(samples):
        rho = random_density(d, rng)
        worst = max(worst, trace_norm(ch(rho) - np.eye(d) / d))
    return TrivialHamiltonianReport(d, 1, worst, len(us), 2.0 * math.log2(d), math.log2(d))
