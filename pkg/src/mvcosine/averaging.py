"""Averaging principle: the epsilon-scaled equation against its time-averaged counterpart.

The standard equation multiplies the drift by ``eps`` and the diffusion and
jump integrands by ``sqrt(eps)``. The averaged equation replaces the
coefficients by their time averages. Both are solved on the same noise, so
``E sup ||X^eps - Z^eps||^2`` is estimated from a coupled ensemble.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad_vec

from .coefficients import CoefficientSet, Modulus, _constant, check_modulus, eval_diffusion
from .exceptions import ConfigError, ContractError
from .measure import EmpiricalMeasure
from .noise import QWienerSpec, compensator_marks, stream
from .solver import ParticleEnsemble, _Engine, _setup


def exp_decay_average(t1):
    """``(1 - e^{-2 T1}) / (2 T1)``: time average of ``e^{-2t}`` over ``[0, T1]``."""
    t1 = np.asarray(t1, dtype=float)
    return -np.expm1(-2.0 * t1) / (2.0 * t1)


@dataclass
class AveragedCoefficients:
    """Time-independent coefficients ``(F_bar, G_bar, J_bar)`` with decay rates ``phi`` and modulus ``psi``.

    ``drift(x, mu)``, ``diffusion(x, mu)`` and ``jump(x, mu, z)`` follow the
    batched convention of ``CoefficientSet`` without the time argument.
    """

    drift: Callable
    diffusion: Callable
    jump: Callable
    phi: tuple = (exp_decay_average,) * 3
    psi: Modulus = field(default_factory=Modulus)
    jump_compensator: Optional[Callable] = None
    k_bound: Callable = field(default_factory=lambda: _constant(1.0))
    modulus: Modulus = field(default_factory=Modulus)

    def as_coefficient_set(self):
        comp = None
        if self.jump_compensator is not None:
            comp = lambda t, x, mu: self.jump_compensator(x, mu)  # noqa: E731
        return CoefficientSet(
            lambda t, x, mu: self.drift(x, mu),
            lambda t, x, mu: self.diffusion(x, mu),
            lambda t, x, mu, z: self.jump(x, mu, z),
            k_bound=self.k_bound,
            modulus=self.modulus,
            jump_compensator=comp,
        )

    @classmethod
    def from_time_independent(cls, cs, **kw):
        """Wrap a coefficient set that ignores time; its average is itself."""
        comp = None
        if cs.jump_compensator is not None:
            comp = lambda x, mu: cs.jump_compensator(0.0, x, mu)  # noqa: E731
        return cls(
            lambda x, mu: cs.drift(0.0, x, mu),
            lambda x, mu: cs.diffusion(0.0, x, mu),
            lambda x, mu, z: cs.jump(0.0, x, mu, z),
            jump_compensator=comp,
            k_bound=cs.k_bound,
            modulus=cs.modulus,
            **kw,
        )


def make_averaging_model(a, b, kappa, c, sigma, j0, dim=1, wiener=None, jumps=None):
    """Model with drift ``(1 + e^{-t})(kappa x + c mean(mu))`` and its average.

    Diffusion ``sigma I`` and jump ``j0 z`` do not depend on time, so only the
    drift deviates from its average. With ``psi(u) = (kappa^2 + c^2) u`` the
    drift condition holds with ``phi_1(T1) = (1 - e^{-2 T1}) / (2 T1)``.
    Returns ``(cs, avg)``.
    """
    k_dim = dim if wiener is None else wiener.dim
    trace_q = float(k_dim) if wiener is None else wiener.trace
    m2 = 0.0 if jumps is None else jumps.moment2
    if jumps is not None and jumps.mark_dim != dim and j0 != 0:
        raise ContractError("averaging model needs marks of the state dimension when j0 != 0")
    gmat = sigma * np.eye(dim, k_dim)
    mark_mean = None if jumps is None else jumps.intensity * jumps.mark_mean()
    lip = kappa**2 + c**2
    noise_k = sigma**2 * trace_q + j0**2 * m2

    def avg_drift(x, mu):
        return kappa * x + c * mu.mean()

    def drift(t, x, mu):
        t = np.asarray(t, dtype=float)
        return (1.0 + np.exp(-t)) * avg_drift(x, mu)

    def diffusion(x, mu):
        return gmat

    def jump(x, mu, z):
        return j0 * np.asarray(z, dtype=float)

    def compensator(x, mu):
        if mark_mean is None:
            return np.zeros_like(x)
        return np.broadcast_to(j0 * mark_mean, x.shape)

    params = dict(model="averaging", a=a, b=b, kappa=kappa, c=c, sigma=sigma, j0=j0, dim=dim)
    cs = CoefficientSet(
        drift,
        lambda t, x, mu: diffusion(x, mu),
        lambda t, x, mu, z: jump(x, mu, z),
        k_bound=_constant(max(4.0 * lip, noise_k)),
        modulus=Modulus("linear", gamma=1.0),
        jump_compensator=lambda t, x, mu: compensator(x, mu),
        params=params,
    )
    avg = AveragedCoefficients(
        avg_drift,
        diffusion,
        jump,
        phi=(exp_decay_average,) * 3,
        psi=Modulus("linear", gamma=lip if lip > 0 else 1.0),
        jump_compensator=compensator,
        k_bound=_constant(max(lip, noise_k)),
        modulus=Modulus("linear", gamma=1.0),
    )
    return cs, avg


def eval_diffusion_avg(avg, x, mu):
    g = np.asarray(avg.diffusion(x, mu), dtype=float)
    if g.ndim == 2:
        g = np.broadcast_to(g, (x.shape[0],) + g.shape)
    return g


@dataclass
class TimeAverageReport:
    """``ratios[i, m]``: worst ratio of condition ``i`` at ``T1_list[m]``.

    ``envelope[i, m]`` is the worst time-averaged deviation divided by
    ``psi`` (an empirical ``phi_i``); it must not increase with ``T1``.
    """

    T1_list: list
    ratios: np.ndarray
    envelope: np.ndarray
    phi: np.ndarray
    psi_shape_ok: bool
    passed: bool


def _average_samples(rng, n, dim, cloud):
    out = [(np.zeros(dim), EmpiricalMeasure.dirac(np.zeros(dim)))]
    for s in range(1, n):
        scale = 10.0 ** rng.uniform(-2, 1)
        xi = scale * rng.standard_normal(dim)
        mu = EmpiricalMeasure(scale * rng.standard_normal((cloud, dim)) + rng.standard_normal(dim))
        out.append((xi, mu))
    return out


def check_time_averages(cs, avg, T1_list, samples=32, seed=0, wiener=None, jumps=None, dim=1, cloud_size=5, n_mark_samples=2000, tol=1e-9):
    """Check the three time-average conditions by adaptive quadrature over ``[0, T1]``.

    Samples include ``xi = 0`` with ``mu = delta_0``, where ``psi`` vanishes
    and the deviation must vanish too. ``samples`` may also be an explicit
    list of ``(xi, mu)`` pairs. The jump condition uses a Monte Carlo
    mark sample; three standard errors are granted as slack.
    """
    T1_list = [float(t) for t in T1_list]
    if any(b <= a for a, b in zip(T1_list, T1_list[1:])) or T1_list[0] <= 0:
        raise ContractError("T1_list must be positive and increasing")
    wiener = wiener if wiener is not None else QWienerSpec(np.ones(dim))
    rng = stream(seed, "check")
    marks = None
    if jumps is not None and jumps.intensity > 0:
        marks = compensator_marks(jumps, seed, n_mark_samples)
    ratios = np.zeros((3, len(T1_list)))
    env = np.zeros((3, len(T1_list)))
    slack = np.zeros((3, len(T1_list)))
    pairs = _average_samples(rng, samples, dim, cloud_size) if isinstance(samples, int) else samples
    for xi, mu in pairs:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        x = xi[None, :]
        size = xi @ xi + mu.second_moment()
        psi = float(avg.psi(size))
        fbar = np.asarray(avg.drift(x, mu), dtype=float)[0]
        gbar = eval_diffusion_avg(avg, x, mu)
        jbar = None if marks is None else np.asarray(avg.jump(np.repeat(x, len(marks), 0), mu, marks), dtype=float)

        def deviation(t):
            df = np.asarray(cs.drift(t, x, mu), dtype=float)[0] - fbar
            dg = eval_diffusion(cs, t, x, mu) - gbar
            out = [df @ df, wiener.hs_norm_sq(dg)[0], 0.0, 0.0]
            if marks is not None:
                dj = np.asarray(cs.jump(t, np.repeat(x, len(marks), 0), mu, marks), dtype=float) - jbar
                sq = np.einsum("md,md->m", dj, dj)
                out[2] = jumps.intensity * sq.mean()
                out[3] = jumps.intensity**2 * sq.var() / len(marks)
            return np.array(out)

        prev, total = 0.0, np.zeros(4)
        for m, t1 in enumerate(T1_list):
            total = total + quad_vec(deviation, prev, t1, epsabs=1e-14, epsrel=1e-10)[0]
            prev = t1
            mean_dev = total[:3] / t1
            se = math.sqrt(max(total[3], 0.0) / t1)
            for i in range(3):
                phi = float(avg.phi[i](t1))
                if psi > 0:
                    r = mean_dev[i] / (phi * psi)
                    ratios[i, m] = max(ratios[i, m], r)
                    env[i, m] = max(env[i, m], mean_dev[i] / psi)
                    if i == 2:
                        slack[i, m] = max(slack[i, m], 3.0 * se / (phi * psi))
                elif mean_dev[i] > tol:
                    ratios[i, m] = np.inf
    phis = np.array([[float(avg.phi[i](t)) for t in T1_list] for i in range(3)])
    shape_ok = check_modulus(avg.psi).ok
    within = bool(np.all(ratios <= 1.0 + tol + slack))
    decreasing = bool(np.all(np.diff(env, axis=1) <= tol * (1.0 + env[:, :-1])))
    return TimeAverageReport(T1_list, ratios, env, phis, shape_ok, within and decreasing and shape_ok)


def _check_eps(eps):
    if not 0.0 <= eps <= 1.0:
        raise ContractError(f"eps must lie in [0, 1], got {eps}")


def solve_standard(cs, fam, cfg, eps, noise=None, initial=None):
    """Mild Euler solve with drift scaled by ``eps`` and noise integrands by ``sqrt(eps)``."""
    _check_eps(eps)
    noise, (x0, x1) = _setup(cs, fam, cfg, noise, initial)
    eng = _Engine(cs, fam, cfg, noise, x0, x1, drift_scale=eps, noise_scale=math.sqrt(eps))
    paths = eng.run(lambda j, X: X[:, j])
    return ParticleEnsemble(paths, cfg.grid, noise, x0, x1, "euler_mild", {"eps": eps})


def solve_averaged(avg, fam, cfg, eps, noise=None, initial=None):
    return solve_standard(avg.as_coefficient_set(), fam, cfg, eps, noise, initial)


@dataclass
class AveragingReport:
    eps_list: list
    horizons: np.ndarray
    errors: np.ndarray
    ci: np.ndarray
    slope: float
    slope_ci: tuple
    alpha: float
    L: float
    monotone: bool
    passed: bool

    def rows(self):
        return [(e, h, v, lo, hi) for e, h, v, (lo, hi) in zip(self.eps_list, self.horizons, self.errors, self.ci)]


def _slope(eps, errors):
    x = np.log(eps)
    y = np.log(errors)
    return float(np.polyfit(x, y, 1)[0])


def averaging_sweep(cs, avg, fam, cfg, eps_list, alpha=0.5, L=None, n_boot=2000, level=0.95, min_slope=0.5, noise=None, initial=None):
    """Coupled ``eps``-sweep of ``E sup_{t <= L eps^-alpha} ||X^eps(t) - Z^eps(t)||^2``.

    Every ``eps`` uses the same noise and initial data, for both equations.
    ``L`` defaults to ``T * min(eps)^alpha`` so the longest horizon is ``T``.
    Confidence intervals come from a paired bootstrap over particles.
    Passes when consecutive errors decrease with ``eps`` at the given level
    and the lower confidence bound of the log-log slope is at least
    ``min_slope``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(not 0.0 < e <= 1.0 for e in eps_list):
        raise ConfigError("every eps must lie in (0, 1]")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    T = cfg.grid.T
    if L is None:
        L = T * min(eps_list) ** alpha
    horizons = np.array([L * e**-alpha for e in eps_list])
    if np.any(horizons > T * (1 + 1e-12)):
        raise ConfigError(f"horizon L eps^-alpha = {horizons.max()} exceeds T = {T}; reduce L")
    noise, initial = _setup(cs, fam, cfg, noise, initial)
    cs_avg = avg.as_coefficient_set()
    nodes = cfg.grid.nodes

    def one(e, hz):
        x = solve_standard(cs, fam, cfg, e, noise, initial).paths
        z = solve_standard(cs_avg, fam, cfg, e, noise, initial).paths
        keep = nodes <= hz * (1 + 1e-12)
        d = x[:, keep] - z[:, keep]
        return np.max(np.einsum("njd,njd->nj", d, d), axis=1)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            sups = list(pool.map(one, eps_list, horizons))
    else:
        sups = [one(e, hz) for e, hz in zip(eps_list, horizons)]
    sups = np.array(sups)
    errors = sups.mean(axis=1)
    n = sups.shape[1]
    rng = stream(cfg.seed, "check")
    boot = np.empty((n_boot, len(eps_list)))
    for r in range(n_boot):
        boot[r] = sups[:, rng.integers(0, n, n)].mean(axis=1)
    q = (1.0 - level) / 2.0
    ci = np.quantile(boot, [q, 1.0 - q], axis=0).T
    positive = np.all(errors > 0) and np.all(boot > 0)
    if positive and len(eps_list) > 1:
        slope = _slope(eps_list, errors)
        slopes = np.array([_slope(eps_list, b) for b in boot])
        slope_ci = tuple(float(v) for v in np.quantile(slopes, [q, 1.0 - q]))
    else:
        slope, slope_ci = float("nan"), (float("nan"), float("nan"))
    drops = boot[:, :-1] - boot[:, 1:]
    monotone = bool(np.all(np.quantile(drops, 1.0 - level, axis=0) > 0)) if len(eps_list) > 1 else True
    passed = bool(monotone and positive and slope_ci[0] >= min_slope)
    return AveragingReport(eps_list, horizons, errors, ci, slope, slope_ci, alpha, L, monotone, passed)
