"""Collision models: random unitary channels, Poisson-series evolution,
trajectory sampling, the uniform swap channel and bath-size scans."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .linalg import MAX_DIM, DimensionError, check_hermitian, kron_all, tensor_power, trace_distance, trace_norm
from .rng import SplitMix64, derive_seed

UNITARY_TOL = 1e-10
PROB_TOL = 1e-12
SERIES_CAP = 10_000
TRAJ_CHUNK = 4096


class SeriesTruncationError(ValueError):
    pass


class NotFoundError(ValueError):
    """No bath size up to n_max reaches the requested distance."""

    def __init__(self, n_max: int, distance: float, certificate=None):
        super().__init__(f"no n <= {n_max} reaches the target; distance at n_max is {distance:.6g}")
        self.n_max = n_max
        self.distance = distance
        self.certificate = certificate


# ---------------------------------------------------------------- unitaries


def _as_permutation(U: np.ndarray):
    """Index map ``pi`` with ``U|x> = |pi[x]>`` if U is a permutation matrix."""
    if not np.all((U == 0) | (U == 1)):
        return None
    rows = np.argmax(U, axis=0)
    if not (np.all(U.sum(axis=0) == 1) and np.array_equal(np.sort(rows), np.arange(U.shape[0]))):
        return None
    return rows


def conjugate(U: np.ndarray, rho: np.ndarray, perm=None) -> np.ndarray:
    """U rho U^dagger, by reindexing when U is a permutation."""
    if perm is not None:
        inv = np.argsort(perm)
        return rho[np.ix_(inv, inv)]
    return U @ rho @ U.conj().T


def swap_permutation(n: int, d: int, i: int, j: int) -> np.ndarray:
    """Basis map of the swap of subsystems i and j among n d-level systems."""
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError("subsystem index out of range")
    idx = np.arange(d**n).reshape((d,) * n)
    axes = list(range(n))
    axes[i], axes[j] = axes[j], axes[i]
    return idx.transpose(axes).reshape(-1)


def permutation_matrix(perm: np.ndarray) -> np.ndarray:
    D = perm.size
    P = np.zeros((D, D))
    P[perm, np.arange(D)] = 1.0
    return P


def swap_unitary(n: int, d: int, i: int, j: int) -> np.ndarray:
    return permutation_matrix(np.argsort(swap_permutation(n, d, i, j)))


def local_sum(H_R: np.ndarray, n: int, max_dim: int = MAX_DIM) -> np.ndarray:
    """sum_i H_R acting on subsystem i of n copies."""
    d = H_R.shape[0]
    if d**n > max_dim:
        raise DimensionError(f"{n} copies of dimension {d} exceed max dimension {max_dim}")
    I = np.eye(d)
    total = np.zeros((d**n, d**n), dtype=np.result_type(H_R, float))
    for i in range(n):
        total = total + kron_all([H_R if k == i else I for k in range(n)], max_dim)
    return total


def energy_violation(U: np.ndarray, H: np.ndarray) -> float:
    return float(np.linalg.norm(U @ H - H @ U))


@dataclass
class RandomUnitaryChannel:
    """rho -> sum_k p_k U_k rho U_k^dagger."""

    probs: np.ndarray
    unitaries: list
    _perms: list = field(default=None, repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(self.unitaries) != p.size or p.size == 0:
            raise ValueError("need one probability per unitary")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities must be non-negative and sum to 1 (sum = {p.sum()!r})")
        self.probs = p
        self.unitaries = [np.asarray(U) for U in self.unitaries]
        D = self.unitaries[0].shape[0]
        for U in self.unitaries:
            if U.shape != (D, D):
                raise DimensionError("unitaries have inconsistent shapes")
            err = float(np.max(np.abs(U.conj().T @ U - np.eye(D))))
            if err > UNITARY_TOL:
                raise ValueError(f"operator is not unitary (max |U^dagger U - I| = {err:.2e})")
        self._perms = [_as_permutation(U) for U in self.unitaries]

    @property
    def dim(self) -> int:
        return self.unitaries[0].shape[0]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho)
        if rho.shape != (self.dim, self.dim):
            raise DimensionError(f"channel acts on dimension {self.dim}, state has shape {rho.shape}")
        out = np.zeros((self.dim, self.dim), dtype=np.result_type(rho, *self.unitaries))
        for p, U, perm in zip(self.probs, self.unitaries, self._perms):
            if p:
                out += p * conjugate(U, rho, perm)
        return out

    apply = __call__

    def compose(self, other: RandomUnitaryChannel) -> RandomUnitaryChannel:
        """self after other."""
        probs, us = [], []
        for p, U in zip(self.probs, self.unitaries):
            for q, V in zip(other.probs, other.unitaries):
                probs.append(p * q)
                us.append(U @ V)
        probs = np.array(probs)
        return RandomUnitaryChannel(probs / probs.sum(), us)

    def mix(self, other: RandomUnitaryChannel, w: float) -> RandomUnitaryChannel:
        """w * self + (1 - w) * other."""
        if not 0.0 <= w <= 1.0:
            raise ValueError("mixing weight must be in [0, 1]")
        probs = np.concatenate([w * self.probs, (1.0 - w) * other.probs])
        return RandomUnitaryChannel(probs / probs.sum(), self.unitaries + other.unitaries)

    def is_energy_preserving(self, H: np.ndarray, rtol: float = 1e-9) -> bool:
        scale = rtol * max(np.linalg.norm(H), 1.0)
        return all(energy_violation(U, H) <= scale for U in self.unitaries)


# ---------------------------------------------------------------- processes


@dataclass
class CollisionProcess:
    """n copies of a d-level system with Poisson-timed energy-preserving collisions."""

    H_R: np.ndarray
    n: int
    unitaries: list
    rates: np.ndarray
    energy_tol: float = 1e-9

    def __post_init__(self):
        self.H_R = check_hermitian(np.asarray(self.H_R))
        self.rates = np.asarray(self.rates, dtype=float)
        if len(self.unitaries) != self.rates.size or self.rates.size == 0:
            raise ValueError("need one rate per unitary")
        if np.any(~(self.rates > 0)):
            raise ValueError("rates must be strictly positive")
        self.H = local_sum(self.H_R, self.n)
        scale = self.energy_tol * max(np.linalg.norm(self.H), 1.0)
        for k, U in enumerate(self.unitaries):
            v = energy_violation(np.asarray(U), self.H)
            if v > scale:
                raise ValueError(f"unitary {k} does not conserve energy: ||[U, H]||_F = {v:.3e}")

    @property
    def d(self) -> int:
        return self.H_R.shape[0]

    @property
    def dim(self) -> int:
        return self.d**self.n

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    def mixing_channel(self) -> RandomUnitaryChannel:
        return RandomUnitaryChannel(self.rates / self.rates.sum(), list(self.unitaries))

    def generator(self, rho: np.ndarray) -> np.ndarray:
        """Right-hand side of the collision master equation."""
        out = -self.total_rate * rho
        for lam, U in zip(self.rates, self.unitaries):
            out = out + lam * (U @ rho @ U.conj().T)
        return out


def all_pairs_swap_process(H_R: np.ndarray, n: int, rate: float = 1.0) -> CollisionProcess:
    d = np.asarray(H_R).shape[0]
    us = [swap_unitary(n, d, i, j) for i in range(n) for j in range(i + 1, n)]
    return CollisionProcess(H_R, n, us, np.full(len(us), float(rate)))


# ---------------------------------------------------------------- series solution


def poisson_truncation(mean: float, tail_tol: float = 1e-10, cap: int = SERIES_CAP):
    """Poisson weights p(0..M) for the smallest M leaving tail <= tail_tol."""
    if mean < 0:
        raise ValueError("Poisson mean must be non-negative")
    weights = []
    total, comp = 0.0, 0.0
    m = 0
    log_mean = math.log(mean) if mean > 0 else -math.inf
    while True:
        if mean == 0:
            w = 1.0 if m == 0 else 0.0
        else:
            w = math.exp(-mean + m * log_mean - math.lgamma(m + 1))
        weights.append(w)
        # Kahan summation of the cumulative mass
        y = w - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if total >= 1.0 - tail_tol:
            break
        m += 1
        if m > cap:
            raise SeriesTruncationError(
                f"Poisson series needs more than {cap} terms (mean {mean:.3g}); use a smaller time or rates")
    return np.array(weights), max(0.0, 1.0 - total)


@dataclass
class SeriesSolution:
    order: int
    total_rate: float
    channel: RandomUnitaryChannel
    weights: np.ndarray
    tail: float
    state: np.ndarray
    powers: list | None = None


def series_solution(proc: CollisionProcess, rho0: np.ndarray, t: float, tail_tol: float = 1e-10,
                    cap: int = SERIES_CAP, keep_powers: bool = False) -> SeriesSolution:
    """rho(t) = sum_m Pois(m; lambda t) Lambda^m(rho0), truncated and renormalized."""
    if t < 0:
        raise ValueError("time must be non-negative")
    rho0 = np.asarray(rho0)
    lam = proc.total_rate
    weights, tail = poisson_truncation(lam * t, tail_tol, cap)
    channel = proc.mixing_channel()
    cur = np.array(rho0, dtype=complex)
    out = weights[0] * cur
    powers = [cur] if keep_powers else None
    for w in weights[1:]:
        cur = channel(cur)
        out = out + w * cur
        if keep_powers:
            powers.append(cur)
    out = out / weights.sum()
    return SeriesSolution(weights.size - 1, lam, channel, weights, tail, out, powers)


def evolve_series(proc: CollisionProcess, rho0: np.ndarray, t: float, tail_tol: float = 1e-10,
                  cap: int = SERIES_CAP) -> np.ndarray:
    if t == 0:
        return np.asarray(rho0)
    return series_solution(proc, rho0, t, tail_tol, cap).state


def evolve_rk4(proc: CollisionProcess, rho0: np.ndarray, t: float, dt: float | None = None) -> np.ndarray:
    """Classical RK4 on the master equation; default dt = min(0.01/lambda, t/1000)."""
    rho = np.array(rho0, dtype=complex)
    if t == 0:
        return rho
    if dt is None:
        dt = min(0.01 / proc.total_rate, t / 1000.0)
    steps = int(math.ceil(t / dt - 1e-12))
    h = t / steps
    f = proc.generator
    for _ in range(steps):
        k1 = f(rho)
        k2 = f(rho + 0.5 * h * k1)
        k3 = f(rho + 0.5 * h * k2)
        k4 = f(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


# ---------------------------------------------------------------- trajectories


def _trajectory_chunk(args) -> np.ndarray:
    """Sum of final states over one chunk of trajectories."""
    Us, rates, rho0, t, size, seed, sampler = args
    rng = SplitMix64(seed)
    K = rates.size
    lam = rates.sum()
    D = rho0.shape[0]
    ops = np.broadcast_to(np.eye(D, dtype=complex), (size, D, D)).copy()
    clock = np.zeros(size)
    alive = np.ones(size, dtype=bool)
    while np.any(alive):
        idx = np.flatnonzero(alive)
        m = idx.size
        if sampler == "competing":
            waits = rng.exponential(1.0, (m, K)) / rates[None, :]
            which = np.argmin(waits, axis=1)
            step = waits[np.arange(m), which]
        elif sampler == "aggregate":
            step = rng.exponential(lam, m)
            which = rng.choice(rates / lam, m)
        else:
            raise ValueError(f"unknown sampler {sampler!r}")
        clock[idx] += step
        fire = clock[idx] <= t
        hit = idx[fire]
        if hit.size:
            ops[hit] = Us[which[fire]] @ ops[hit]
        alive[idx[~fire]] = False
    finals = ops @ rho0 @ np.conj(np.swapaxes(ops, 1, 2))
    return finals.sum(axis=0)


def evolve_trajectories(proc: CollisionProcess, rho0: np.ndarray, t: float, n_traj: int, seed: int,
                        sampler: str = "competing", workers: int = 1,
                        chunk: int = TRAJ_CHUNK) -> np.ndarray:
    """Monte Carlo average over sampled collision histories.

    Trajectories are split into fixed chunks, chunk ``c`` seeded with
    ``derive_seed(seed, c)``, and summed in chunk order, so the estimate does
    not depend on ``workers``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    Us = np.array([np.asarray(U, dtype=complex) for U in proc.unitaries])
    rho0 = np.asarray(rho0, dtype=complex)
    jobs = []
    for c, start in enumerate(range(0, n_traj, chunk)):
        size = min(chunk, n_traj - start)
        jobs.append((Us, proc.rates, rho0, float(t), size, derive_seed(seed, c), sampler))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_trajectory_chunk, jobs))
    else:
        parts = [_trajectory_chunk(j) for j in jobs]
    total = np.zeros_like(rho0)
    for p in parts:
        total = total + p
    return total / n_traj


# ---------------------------------------------------------------- uniform swap channel


def convex_split_channel(n: int, d: int, max_dim: int = MAX_DIM) -> RandomUnitaryChannel:
    """(1/n) sum_i SWAP(1, i) . SWAP(1, i)^dagger with SWAP(1, 1) the identity."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if d**n > max_dim:
        raise DimensionError(f"{n} copies of dimension {d} exceed max dimension {max_dim}")
    us = [np.eye(d**n)] + [swap_unitary(n, d, 0, i) for i in range(1, n)]
    return RandomUnitaryChannel(np.full(n, 1.0 / n), us)


def convex_split_state(rho: np.ndarray, sigma: np.ndarray, n: int) -> np.ndarray:
    """(1/n) sum_m sigma^{(m-1)} (x) rho (x) sigma^{(n-m)}, built directly."""
    terms = []
    for m in range(n):
        terms.append(kron_all([rho if k == m else sigma for k in range(n)]) if n > 1 else np.asarray(rho))
    return sum(terms) / n


def verify_convex_split(rho: np.ndarray, sigma: np.ndarray, n: int, slack: float = 1e-9):
    """(measured, bound, holds) for ||E_n(rho (x) sigma^{n-1}) - sigma^{(x)n}||_1."""
    from .entropy import dmax

    D = dmax(rho, sigma).value
    d = np.asarray(rho).shape[0]
    start = kron_all([rho] + [sigma] * (n - 1)) if n > 1 else np.asarray(rho)
    out = convex_split_channel(n, d)(start)
    measured = trace_norm(out - tensor_power(sigma, n))
    bound = math.sqrt(2.0**D / n)
    return measured, bound, measured <= bound + slack


def _log_multinomial(n: int, counts) -> float:
    return math.lgamma(n + 1) - sum(math.lgamma(c + 1) for c in counts)


def _compositions(n: int, d: int):
    """All (t_0..t_{d-1}) with sum n, lexicographic."""
    if d == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, d - 1):
            yield (first,) + rest


def convex_split_distance(p, q, n: int) -> float:
    """||E_n(rho (x) sigma^{n-1}) - sigma^{(x)n}||_1 for commuting diagonal states.

    The output is diagonal and, on each type class t, equals sigma^{(x)n}
    times sum_i (t_i/n)(p_i/q_i); summing over types avoids d^n storage.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionError("distributions have different lengths")
    if np.any((q <= 0) & (p > 0)):
        from .entropy import SupportError
        raise SupportError(float(p[q <= 0].sum()))
    pos = q > 0
    p, q = p[pos], q[pos]
    ratio = p / q
    d = p.size
    logq = np.log(q)
    if d == 2:
        k = np.arange(n + 1)
        lf = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, n + 1)))])
        logw = lf[n] - lf[k] - lf[n - k] + (n - k) * logq[0] + k * logq[1]
        lik = ((n - k) * ratio[0] + k * ratio[1]) / n
        return float(np.sum(np.exp(logw) * np.abs(lik - 1.0)))
    total = 0.0
    for t in _compositions(n, d):
        logw = _log_multinomial(n, t) + float(np.dot(t, logq))
        total += math.exp(logw) * abs(float(np.dot(t, ratio)) / n - 1.0)
    return total


# ---------------------------------------------------------------- steady states


def symmetrize(rho: np.ndarray, n: int, d: int) -> np.ndarray:
    """Average of rho over all permutations of the n subsystems."""
    idx = np.arange(d**n).reshape((d,) * n)
    out = np.zeros_like(np.asarray(rho, dtype=complex))
    perms = list(permutations(range(n)))
    for p in perms:
        perm = idx.transpose(p).reshape(-1)
        out += rho[np.ix_(perm, perm)]
    return out / len(perms)


@dataclass(frozen=True)
class SteadyStateReport:
    times: tuple
    distances: tuple
    symmetrization_error: float

    @property
    def final(self) -> float:
        return self.distances[-1]


def steady_state_check(omega: np.ndarray, tau: np.ndarray, H_R: np.ndarray, n: int, t,
                       rate: float = 1.0, max_n: int = 5) -> SteadyStateReport:
    """Distance of the all-pairs swap evolution from the uniform rogue-slot mixture.

    ``t`` may be a single time or a sequence; distances are reported per time.
    """
    if n > max_n:
        raise DimensionError(f"steady-state check is capped at n = {max_n}")
    d = np.asarray(H_R).shape[0]
    proc = all_pairs_swap_process(H_R, n, rate)
    rho0 = kron_all([omega] + [tau] * (n - 1)) if n > 1 else np.asarray(omega)
    target = convex_split_state(omega, tau, n)
    times = tuple(float(x) for x in np.atleast_1d(t))
    dists = tuple(trace_distance(evolve_series(proc, rho0, s), target) for s in times)
    sym_err = float(np.max(np.abs(symmetrize(rho0, n, d) - target)))
    return SteadyStateReport(times, dists, sym_err)


# ---------------------------------------------------------------- bath size


def epsilon_thermalize_check(channel, omega: np.ndarray, tau: np.ndarray, n: int, eps: float) -> bool:
    """||E(omega (x) tau^{n-1}) - tau^{(x)n}||_1 <= eps."""
    omega = np.asarray(omega)
    tau = np.asarray(tau)
    if omega.shape != tau.shape:
        raise DimensionError("omega and tau have different dimensions")
    start = kron_all([omega] + [tau] * (n - 1)) if n > 1 else omega
    if getattr(channel, "dim", start.shape[0]) != start.shape[0]:
        raise DimensionError(f"channel dimension {channel.dim} does not match {start.shape[0]}")
    return trace_norm(channel(start) - tensor_power(tau, n)) <= eps


@dataclass(frozen=True)
class NEpsilonResult:
    n: int
    epsilon: float
    distances: tuple
    upper_bound: float
    lower_bound: float
    esc_verified: bool
    method: str

    @property
    def flag(self) -> str:
        return "exact-under-esc" if self.esc_verified else "upper-bound-only"


def find_n_epsilon(omega: np.ndarray, tau: np.ndarray, H_R: np.ndarray, eps: float,
                   n_max: int = 64) -> NEpsilonResult:
    """Smallest n <= n_max for which the uniform swap channel eps-thermalizes omega.

    Also reports the bounds 2^{D_max^{2 sqrt(eps)}} <= n_eps <= ceil(2^{D_max}/eps^2).
    The scan only uses the uniform swap channel; without the energy subspace
    condition on H_R the result is flagged as an upper bound.
    """
    from .entropy import dmax, dmax_smooth, joint_eigenbasis
    from .optimality import check_esc

    if not eps > 0:
        raise ValueError("eps must be positive")
    omega = np.asarray(omega)
    tau = np.asarray(tau)
    H_R = check_hermitian(np.asarray(H_R))
    levels = np.linalg.eigvalsh(H_R)
    D = dmax(omega, tau).value
    upper = math.ceil(2.0**D / eps**2 - 1e-12)
    s = 2.0 * math.sqrt(eps)
    lower = 2.0 ** dmax_smooth(omega, tau, s).value if s < 1.0 else 1.0

    commuting = float(np.max(np.abs(omega @ tau - tau @ omega))) <= 1e-9
    if commuting:
        p, q, _ = joint_eigenbasis(omega, tau)
        dist = lambda n: convex_split_distance(p, q, n)
        method = "combinatorial"
    else:
        d = omega.shape[0]
        dist = lambda n: trace_norm(convex_split_channel(n, d)(
            kron_all([omega] + [tau] * (n - 1)) if n > 1 else omega) - tensor_power(tau, n))
        method = "dense"
    distances = []
    for n in range(1, n_max + 1):
        distances.append(dist(n))
        if distances[-1] <= eps:
            return NEpsilonResult(n, eps, tuple(distances), upper, lower,
                                  check_esc(levels, n).passes(n), method)
    raise NotFoundError(n_max, distances[-1],
                        NEpsilonResult(-1, eps, tuple(distances), upper, lower,
                                       check_esc(levels, n_max).passes(n_max), method))
