"""Particle solvers for the mild form of the damped second-order equation.

All schemes share one engine. At every grid step ``j`` the engine evaluates
the coefficients at an *argument state* (the current node for the mild
Euler scheme, the node ``1/k`` earlier for the Caratheodory scheme, the
previous iterate for Picard) together with the uniform empirical law of that
state, and scatters the step's contribution to every later node through the
cosine/sine kernels. Node ``m`` therefore holds the full convolution sum

    S(t_m) X1 + [C(t_m) - S(t_m) B] X0
      + sum_{j<m} C(t_m - t_j) B X_j h + S(t_m - t_j) (F_j h + G_j dW_j)
      + sum_{tau <= t_m} S(t_m - tau) J(tau, X_j(tau), mu_j, z) - compensator

with all sums accumulated in increasing ``j``. The compensator uses the exact
step integral of the sine kernel, so each step's jump term is a martingale
increment given the left-point state.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from .coefficients import eval_diffusion
from .exceptions import ConfigError, ContractError, SolverDivergence
from .grid import TimeGrid
from .measure import EmpiricalMeasure
from .noise import EnsembleNoise, JumpSpec, QWienerSpec, compensator_marks, sample_ensemble, stream

DIVERGENCE_GUARD = 1e12
SCHEMES = ("euler_mild", "caratheodory", "picard")


@dataclass(frozen=True)
class InitialLaw:
    """Independent Gaussian laws for ``X(0)`` and ``X'(0)``; a zero std gives a point mass."""

    x0_mean: np.ndarray = 0.0
    x0_std: float = 0.0
    x1_mean: np.ndarray = 0.0
    x1_std: float = 0.0

    def sample(self, seed, n_particles, dim):
        x0 = np.empty((n_particles, dim))
        x1 = np.empty((n_particles, dim))
        m0 = np.broadcast_to(np.asarray(self.x0_mean, dtype=float), (dim,))
        m1 = np.broadcast_to(np.asarray(self.x1_mean, dtype=float), (dim,))
        for i in range(n_particles):
            xi = stream(seed, "initial", i).standard_normal((2, dim))
            x0[i] = m0 + self.x0_std * xi[0]
            x1[i] = m1 + self.x1_std * xi[1]
        return x0, x1


@dataclass(frozen=True)
class SolveConfig:
    """Run configuration. ``k`` is the Caratheodory index, ``iters`` the Picard count."""

    grid: TimeGrid
    n_particles: int
    seed: int = 0
    scheme: str = "euler_mild"
    k: int = 1
    iters: int = 8
    wiener: Optional[QWienerSpec] = None
    jumps: Optional[JumpSpec] = None
    initial: InitialLaw = field(default_factory=InitialLaw)
    threads: int = 1
    compensator_samples: int = 10_000
    w2_mode: str = "exact"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.n_particles < 1:
            raise ConfigError("n_particles must be >= 1")
        if self.k < 0:
            raise ConfigError("k must be >= 0")

    def wiener_spec(self, dim):
        return self.wiener if self.wiener is not None else QWienerSpec(np.ones(dim))


def delay_steps(grid, k):
    """Number of grid steps in the delay ``1/k``; the delay must be a multiple of ``h``."""
    ratio = 1.0 / (k * grid.h)
    steps = int(round(ratio))
    if steps < 1 or abs(steps - ratio) > 1e-9 * ratio:
        nearest = 1.0 / (k * max(1, steps))
        raise ConfigError(f"delay 1/k = {1.0 / k} is not a multiple of h = {grid.h}; nearest valid h is {nearest}")
    return steps


@dataclass
class ParticleEnsemble:
    """Particle paths of shape ``(N, n_steps + 1, d)`` on ``grid``."""

    paths: np.ndarray
    grid: TimeGrid
    noise: EnsembleNoise
    x0: np.ndarray
    x1: np.ndarray
    scheme: str = "euler_mild"
    info: dict = field(default_factory=dict)

    @property
    def n_particles(self):
        return self.paths.shape[0]

    @property
    def dim(self):
        return self.paths.shape[2]

    def law(self, j):
        return EmpiricalMeasure(self.paths[:, j])

    def mean(self):
        return self.paths.mean(axis=0)

    def second_moment(self):
        """``E ||X(t_j)||^2`` per node."""
        return np.einsum("njd,njd->j", self.paths, self.paths) / self.n_particles

    def sup_sq(self, upto=None):
        """Per-particle ``max_{j <= upto} ||X(t_j)||^2``."""
        p = self.paths if upto is None else self.paths[:, : upto + 1]
        return np.max(np.einsum("njd,njd->nj", p, p), axis=1)

    def moments(self):
        """Columns: t, per-coordinate mean, second moment, E of the running sup of ||X||^2."""
        sq = np.einsum("njd,njd->nj", self.paths, self.paths)
        running = np.maximum.accumulate(sq, axis=1).mean(axis=0)
        return np.column_stack([self.grid.nodes, self.mean(), sq.mean(axis=0), running])


def prepare(cfg, dim):
    """Noise and initial data for ``cfg``; shared by every scheme run with the same seed."""
    noise = sample_ensemble(cfg.wiener_spec(dim), cfg.jumps, cfg.grid, cfg.seed, cfg.n_particles, cfg.threads)
    x0, x1 = cfg.initial.sample(cfg.seed, cfg.n_particles, dim)
    return noise, x0, x1


def homogeneous_paths(gen, grid, x0, x1):
    """``S(t) X1 + [C(t) - S(t) B] X0`` at every node; shape ``(N, n+1, d)``."""
    t = grid.nodes
    c, s = gen.cos_multiplier(t), gen.sin_multiplier(t)
    out = (
        s[None] * gen.to_modes(x1)[:, None, :]
        + c[None] * gen.to_modes(x0)[:, None, :]
        - s[None] * gen.to_modes(gen.apply_damping(x0))[:, None, :]
    )
    return gen.from_modes(out)


class _Engine:
    """Mild-form accumulation shared by every scheme."""

    def __init__(self, cs, fam, cfg, noise, x0, x1, drift_scale=1.0, noise_scale=1.0):
        gen = fam.generator
        if x0.shape[1] != gen.dim:
            raise ContractError(f"initial data has dimension {x0.shape[1]}, family has {gen.dim}")
        self.cs, self.gen, self.grid = cs, gen, cfg.grid
        self.noise, self.x0, self.x1 = noise, x0, x1
        self.jumps = cfg.jumps
        self.drift_scale = float(drift_scale)
        self.noise_scale = float(noise_scale)
        n, h = self.grid.n_steps, self.grid.h
        lags = np.arange(n + 1) * h
        self.cos_lag = gen.cos_multiplier(lags)
        self.sin_lag = gen.sin_multiplier(lags)
        self.sbar_lag = np.vstack([np.zeros((1, gen.dim)), gen.sin_step_integral(lags[:-1], lags[1:])])
        self.has_damping = bool(gen.damping.any())
        self.has_jumps = self.jumps is not None and self.jumps.intensity > 0 and self.noise_scale != 0.0
        self.comp_marks = None
        if self.has_jumps and cs.jump_compensator is None:
            self.comp_marks = compensator_marks(self.jumps, cfg.seed, cfg.compensator_samples)
        order = np.argsort(noise.jump_step, kind="stable")
        bounds = np.searchsorted(noise.jump_step[order], np.arange(n + 1))
        self.jumps_in_step = [order[bounds[j] : bounds[j + 1]] for j in range(n)]

    def _compensator(self, t, xa, law):
        if self.cs.jump_compensator is not None:
            return np.asarray(self.cs.jump_compensator(t, xa, law), dtype=float)
        total = np.zeros_like(xa)
        for z in self.comp_marks:
            total += self.cs.jump(t, xa, law, np.broadcast_to(z, (xa.shape[0], z.size)))
        return self.jumps.intensity * total / len(self.comp_marks)

    def run(self, argument):
        """Solve forward; ``argument(j, X)`` returns the argument state for step ``j``."""
        gen, grid, cs = self.gen, self.grid, self.cs
        n, h, nodes = grid.n_steps, grid.h, grid.nodes
        hom = gen.to_modes(homogeneous_paths(gen, grid, self.x0, self.x1))
        acc = np.zeros_like(hom)
        X = np.empty_like(hom)
        for j in range(n + 1):
            X[:, j] = gen.from_modes(hom[:, j] + acc[:, j])
            if not np.all(np.isfinite(X[:, j])) or np.max(np.abs(X[:, j])) > DIVERGENCE_GUARD:
                raise SolverDivergence(f"state left the divergence guard at step {j}; reduce h", step=j)
            if j == n:
                break
            xa = argument(j, X)
            law = EmpiricalMeasure(xa)
            t = nodes[j]
            ahead = slice(j + 1, n + 1)
            lag = slice(1, n - j + 1)
            if self.has_damping:
                yb = gen.to_modes(gen.apply_damping(xa)) * h
                acc[:, ahead] += self.cos_lag[lag][None] * yb[:, None, :]
            y = self.drift_scale * h * np.asarray(cs.drift(t, xa, law), dtype=float)
            if self.noise_scale != 0.0:
                g = eval_diffusion(cs, t, xa, law)
                y = y + self.noise_scale * np.einsum("ndk,nk->nd", g, self.noise.wiener[:, j])
            acc[:, ahead] += self.sin_lag[lag][None] * gen.to_modes(y)[:, None, :]
            if self.has_jumps:
                self._jumps(j, t, xa, law, acc)
        return X

    def _jumps(self, j, t, xa, law, acc):
        gen, n, nodes = self.gen, self.grid.n_steps, self.grid.nodes
        comp = self.noise_scale * self._compensator(t, xa, law)
        acc[:, j + 1 :] -= self.sbar_lag[1 : n - j + 1][None] * gen.to_modes(comp)[:, None, :]
        idx = self.jumps_in_step[j]
        if idx.size == 0:
            return
        who = self.noise.jump_particle[idx]
        tau = self.noise.jump_time[idx]
        val = self.noise_scale * np.asarray(self.cs.jump(tau, xa[who], law, self.noise.jump_mark[idx]), dtype=float)
        kern = gen.sin_multiplier(nodes[None, j + 1 :] - tau[:, None])
        contrib = kern * gen.to_modes(val)[:, None, :]
        np.add.at(acc, (who[:, None], np.arange(j + 1, n + 1)[None, :]), contrib)


def _setup(cs, fam, cfg, noise, initial):
    if noise is None or initial is None:
        fresh_noise, x0, x1 = prepare(cfg, fam.dim)
        noise = noise if noise is not None else fresh_noise
        if initial is None:
            initial = (x0, x1)
    return noise, initial


def solve_euler_mild(cs, fam, cfg, noise=None, initial=None, drift_scale=1.0, noise_scale=1.0):
    """Mild Euler scheme with left-point coefficients and laws."""
    noise, (x0, x1) = _setup(cs, fam, cfg, noise, initial)
    eng = _Engine(cs, fam, cfg, noise, x0, x1, drift_scale, noise_scale)
    paths = eng.run(lambda j, X: X[:, j])
    return ParticleEnsemble(paths, cfg.grid, noise, x0, x1, "euler_mild")


def solve_caratheodory(cs, fam, cfg, noise=None, initial=None, k=None):
    """Caratheodory delayed scheme with index ``k`` (``k = 0``: homogeneous part only).

    Coefficients at step ``j`` see the state ``1/k`` earlier, and ``X0`` for
    times in ``[-1, 0]``.
    """
    k = cfg.k if k is None else k
    noise, (x0, x1) = _setup(cs, fam, cfg, noise, initial)
    if k == 0:
        paths = homogeneous_paths(fam.generator, cfg.grid, x0, x1)
        return ParticleEnsemble(paths, cfg.grid, noise, x0, x1, "caratheodory", {"k": 0})
    lag = delay_steps(cfg.grid, k)
    eng = _Engine(cs, fam, cfg, noise, x0, x1)
    paths = eng.run(lambda j, X: X[:, j - lag] if j >= lag else x0)
    return ParticleEnsemble(paths, cfg.grid, noise, x0, x1, "caratheodory", {"k": k, "delay_steps": lag})


def _sup_sq_diff(a, b):
    d = a - b
    return np.max(np.einsum("njd,njd->nj", d, d), axis=1)


def picard_reference(cs, fam, cfg, iters=None, noise=None, initial=None):
    """Iterate the discrete mild-form map from the homogeneous guess.

    ``info["increments"]`` holds ``E sup_j ||Y_i - Y_{i-1}||^2`` per iteration.
    Iteration stops and ``info["diverged"]`` is set when the sup-norm of an
    iterate grows more than tenfold over its predecessor.
    """
    iters = cfg.iters if iters is None else iters
    if iters < 1:
        raise ContractError("iters must be >= 1")
    noise, (x0, x1) = _setup(cs, fam, cfg, noise, initial)
    eng = _Engine(cs, fam, cfg, noise, x0, x1)
    y = homogeneous_paths(fam.generator, cfg.grid, x0, x1)
    increments, diverged = [], False
    for _ in range(iters):
        prev = y
        y = eng.run(lambda j, X: prev[:, j])
        increments.append(float(_sup_sq_diff(y, prev).mean()))
        if np.max(np.abs(y)) > 10.0 * max(np.max(np.abs(prev)), np.finfo(float).tiny):
            diverged = True
            break
    info = {"iters": len(increments), "increments": increments, "diverged": diverged}
    return ParticleEnsemble(y, cfg.grid, noise, x0, x1, "picard", info)


def solve(cs, fam, cfg, noise=None, initial=None):
    if cfg.scheme == "euler_mild":
        return solve_euler_mild(cs, fam, cfg, noise, initial)
    if cfg.scheme == "caratheodory":
        return solve_caratheodory(cs, fam, cfg, noise, initial)
    return picard_reference(cs, fam, cfg, noise=noise, initial=initial)


@dataclass
class CauchyTable:
    pairs: list
    values: np.ndarray
    stderr: np.ndarray
    passed: bool

    def rows(self):
        return [(a, b, v, s) for (a, b), v, s in zip(self.pairs, self.values, self.stderr)]


def cauchy_diagnostic(cs, fam, cfg, k_list, noise=None, initial=None):
    """``D(k_{i+1}, k_i) = E sup_j ||X_{k_{i+1}} - X_{k_i}||^2`` under common noise.

    Passes when the column is nonincreasing up to three standard errors and
    the last value is at most a quarter of the first.
    """
    k_list = [int(k) for k in k_list]
    if len(k_list) < 2:
        raise ContractError("k_list needs at least two entries")
    noise, initial = _setup(cs, fam, cfg, noise, initial)
    runs = [solve_caratheodory(cs, fam, cfg, noise, initial, k=k).paths for k in k_list]
    pairs, vals, errs = [], [], []
    for i in range(len(k_list) - 1):
        s = _sup_sq_diff(runs[i + 1], runs[i])
        pairs.append((k_list[i + 1], k_list[i]))
        vals.append(float(s.mean()))
        errs.append(float(s.std(ddof=1) / np.sqrt(s.size)) if s.size > 1 else 0.0)
    vals, errs = np.array(vals), np.array(errs)
    slack = 3.0 * np.sqrt(errs[:-1] ** 2 + errs[1:] ** 2)
    ok = bool(np.all(vals[1:] <= vals[:-1] + slack)) and vals[-1] <= vals[0] / 4.0
    return CauchyTable(pairs, vals, errs, ok)


@dataclass
class UniformBoundReport:
    ks: list
    means: np.ndarray
    bound: float
    welch_p: float
    passed: bool


def uniform_bound_diagnostic(cs, fam, cfg, k_list, noise=None, initial=None, level=0.05, factor=1.5):
    """``E sup_j ||X_k(t_j)||^2`` across ``k``: no significant upward trend.

    A one-sided Welch test compares the per-particle sup samples at the
    largest and smallest ``k``; every mean must also stay below ``factor``
    times the first.
    """
    noise, initial = _setup(cs, fam, cfg, noise, initial)
    samples = [solve_caratheodory(cs, fam, cfg, noise, initial, k=k).sup_sq() for k in k_list]
    means = np.array([s.mean() for s in samples])
    p = float(stats.ttest_ind(samples[-1], samples[0], equal_var=False, alternative="greater").pvalue)
    if not np.isfinite(p):
        p = 1.0  # identical samples
    bound = factor * means[0]
    return UniformBoundReport(list(k_list), means, bound, p, bool(p >= level and np.all(means <= bound)))


def increment_diagnostic(ens, fam, pairs):
    """Max over ``(s, t)`` of ``E||X(t) - X(s)||^2 / (|t-s|^2 + ||S((t-s)/2)||^2 + |t-s|)``.

    Returns the maximum and the per-pair ratios.
    """
    nodes = ens.grid.nodes
    ratios = []
    for s, t in pairs:
        i, j = (int(round(v / ens.grid.h)) for v in (s, t))
        if min(i, j) < 0 or max(i, j) > ens.grid.n_steps or abs(nodes[i] - s) > 1e-9 or abs(nodes[j] - t) > 1e-9:
            raise ContractError(f"({s}, {t}) are not grid nodes")
        gap = abs(nodes[j] - nodes[i])
        if gap == 0:
            ratios.append(0.0)
            continue
        d = ens.paths[:, j] - ens.paths[:, i]
        num = float(np.mean(np.sum(d * d, axis=1)))
        den = gap**2 + float(fam.sine_norm(0.5 * gap)) ** 2 + gap
        ratios.append(num / den)
    ratios = np.array(ratios)
    return float(ratios.max()), ratios


def with_scheme(cfg, **changes):
    return replace(cfg, **changes)
