"""Driving noise: Q-Wiener increments and a compensated Poisson random measure.

Every random draw comes from a counter-based Philox stream keyed by
``(master seed, purpose, particle index)``, so a particle's noise does not
depend on how many particles are simulated or on thread scheduling.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, MVCosineError
from .grid import TimeGrid

PURPOSES = {"initial": 0, "wiener": 1, "jumps": 2, "compensator": 3, "check": 4}


def stream(seed, purpose, particle=None):
    """Independent generator for ``(seed, purpose[, particle])``."""
    key = (PURPOSES[purpose],) if particle is None else (PURPOSES[purpose], int(particle))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class QWienerSpec:
    """Wiener process on R^k with covariance ``V diag(q) V^T``."""

    q_eigenvalues: np.ndarray
    basis: np.ndarray = None

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q_eigenvalues, dtype=float))
        if q.ndim != 1 or q.size == 0 or np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ContractError("q_eigenvalues must be a nonempty list of finite nonnegative numbers")
        k = q.size
        v = np.eye(k) if self.basis is None else np.asarray(self.basis, dtype=float)
        if v.shape != (k, k) or np.max(np.abs(v.T @ v - np.eye(k))) > 1e-10:
            raise ContractError("Wiener basis must be an orthogonal k x k matrix")
        object.__setattr__(self, "q_eigenvalues", q)
        object.__setattr__(self, "basis", v)

    @property
    def dim(self):
        return self.q_eigenvalues.size

    @property
    def trace(self):
        return float(self.q_eigenvalues.sum())

    @property
    def sqrt_cov(self):
        """``Q^{1/2}`` as a k x k matrix."""
        return self.basis * np.sqrt(self.q_eigenvalues)

    def hs_norm_sq(self, g):
        """Squared Hilbert-Schmidt norm of ``g`` restricted to ``Q^{1/2}(K)``; batched over leading axes."""
        m = np.asarray(g) @ self.sqrt_cov
        return np.sum(m * m, axis=(-2, -1))


MARK_KINDS = ("dirac", "gauss", "uniform")


@dataclass(frozen=True)
class JumpSpec:
    """Finite-intensity Poisson random measure with i.i.d. marks in R^m.

    Marks have i.i.d. coordinates drawn from ``dirac z0``, ``gauss m s`` or
    ``uniform a b``; ``intensity`` is ``nu(Z)``, the expected jumps per unit time.
    """

    intensity: float
    kind: str = "dirac"
    params: tuple = (1.0,)
    mark_dim: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.intensity) and self.intensity >= 0):
            raise ContractError(f"jump intensity must be finite and >= 0, got {self.intensity}")
        if self.kind not in MARK_KINDS:
            raise ContractError(f"unknown mark law {self.kind!r}; expected one of {MARK_KINDS}")
        need = {"dirac": 1, "gauss": 2, "uniform": 2}[self.kind]
        params = tuple(float(p) for p in self.params)
        if len(params) != need:
            raise ContractError(f"mark law {self.kind} takes {need} parameter(s), got {len(params)}")
        if self.kind == "gauss" and params[1] < 0:
            raise ContractError("gauss mark scale must be >= 0")
        if self.kind == "uniform" and params[1] < params[0]:
            raise ContractError("uniform mark bounds must satisfy a <= b")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "intensity", float(self.intensity))

    def sample_marks(self, rng, n):
        shape = (n, self.mark_dim)
        p = self.params
        if self.kind == "dirac":
            return np.full(shape, p[0])
        if self.kind == "gauss":
            return p[0] + p[1] * rng.standard_normal(shape)
        return rng.uniform(p[0], p[1], shape)

    def mark_mean(self):
        p = self.params
        m = {"dirac": p[0], "gauss": p[0], "uniform": 0.5 * (p[0] + p[1])}[self.kind]
        return np.full(self.mark_dim, m)

    def mark_second_moment(self):
        """``E ||Z||^2`` for one mark."""
        p = self.params
        if self.kind == "dirac":
            per = p[0] ** 2
        elif self.kind == "gauss":
            per = p[0] ** 2 + p[1] ** 2
        else:
            per = (p[0] ** 2 + p[0] * p[1] + p[1] ** 2) / 3.0
        return self.mark_dim * per

    @property
    def moment2(self):
        """``int ||z||^2 nu(dz)``."""
        return self.intensity * self.mark_second_moment()


@dataclass
class NoisePath:
    grid: TimeGrid
    wiener_increments: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    stream_id: tuple


def sample_wiener(spec, grid, seed, particle=0):
    """Increments of shape ``(n_steps, k)``; mode i has variance ``q_i h``."""
    rng = stream(seed, "wiener", particle)
    xi = rng.standard_normal((grid.n_steps, spec.dim))
    return (xi * np.sqrt(grid.h)) @ spec.sqrt_cov.T


def sample_jumps(spec, horizon, seed, particle=0):
    """Jump times (sorted, uniform on [0, T]) and marks for one particle."""
    if horizon < 0:
        raise ContractError("horizon must be >= 0")
    rng = stream(seed, "jumps", particle)
    if spec is None or spec.intensity == 0 or horizon == 0:
        m = 1 if spec is None else spec.mark_dim
        return np.empty(0), np.empty((0, m))
    count = rng.poisson(spec.intensity * horizon)
    times = np.sort(rng.uniform(0.0, horizon, count))
    return times, spec.sample_marks(rng, count)


def sample_path(wiener, jumps, grid, seed, particle=0):
    times, marks = sample_jumps(jumps, grid.T, seed, particle)
    return NoisePath(grid, sample_wiener(wiener, grid, seed, particle), times, marks, (int(seed), int(particle)))


@dataclass
class EnsembleNoise:
    """Noise for a whole particle ensemble, jumps flattened across particles.

    ``jump_particle[i]``, ``jump_time[i]``, ``jump_mark[i]`` describe jump
    ``i``; ``jump_step[i]`` is the grid step ``(t_j, t_{j+1}]`` holding it.
    """

    grid: TimeGrid
    seed: int
    wiener: np.ndarray
    jump_particle: np.ndarray
    jump_time: np.ndarray
    jump_mark: np.ndarray
    jump_step: np.ndarray

    @property
    def n_particles(self):
        return self.wiener.shape[0]

    def path(self, i):
        sel = self.jump_particle == i
        return NoisePath(self.grid, self.wiener[i], self.jump_time[sel], self.jump_mark[sel], (self.seed, i))


def sample_ensemble(wiener, jumps, grid, seed, n_particles, threads=1):
    """Sample ``n_particles`` independent noise paths; bitwise independent of ``threads``."""

    def one(i):
        return sample_path(wiener, jumps, grid, seed, i)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            paths = list(pool.map(one, range(n_particles)))
    else:
        paths = [one(i) for i in range(n_particles)]
    dw = np.stack([p.wiener_increments for p in paths]) if paths else np.empty((0, grid.n_steps, wiener.dim))
    m = 1 if jumps is None else jumps.mark_dim
    counts = np.array([p.jump_times.size for p in paths], dtype=int)
    particle = np.repeat(np.arange(n_particles), counts)
    times = np.concatenate([p.jump_times for p in paths]) if paths else np.empty(0)
    marks = np.concatenate([p.jump_marks for p in paths]).reshape(-1, m) if paths else np.empty((0, m))
    return EnsembleNoise(grid, int(seed), dw, particle, times, marks, grid.step_of(times))


def compensator_marks(jumps, seed, n_samples=10_000):
    """Shared Monte Carlo mark sample for compensator integrals."""
    return jumps.sample_marks(stream(seed, "compensator"), n_samples)


def compensated_integral(path, integrand, jumps, compensator=None, n_mark_samples=10_000, seed=0):
    """Per-step values of ``int int integrand(s, z) N~(ds, dz)`` along one path.

    Step ``j`` receives the sum of ``integrand(tau, z)`` over its jumps minus
    ``h * int integrand(t_j, z) nu(dz)``. The compensator comes from
    ``compensator(s)`` when supplied, else from a Monte Carlo mark sample.
    """
    grid = path.grid
    nodes, h = grid.nodes, grid.h
    steps = grid.step_of(path.jump_times)
    out = None
    for i, (tau, z) in enumerate(zip(path.jump_times, path.jump_marks)):
        try:
            val = np.atleast_1d(np.asarray(integrand(tau, z), dtype=float))
        except Exception as exc:
            raise MVCosineError(f"integrand failed at jump {i} (t={tau})") from exc
        if out is None:
            out = np.zeros((grid.n_steps, val.size))
        out[steps[i]] += val
    marks = None
    comp = []
    for j in range(grid.n_steps):
        if compensator is not None:
            c = np.atleast_1d(np.asarray(compensator(nodes[j]), dtype=float))
        else:
            if marks is None:
                marks = compensator_marks(jumps, seed, n_mark_samples)
            vals = np.array([np.atleast_1d(integrand(nodes[j], z)) for z in marks], dtype=float)
            c = jumps.intensity * vals.mean(axis=0)
        comp.append(c)
    comp = np.array(comp)
    if out is None:
        out = np.zeros_like(comp)
    return out - h * comp
