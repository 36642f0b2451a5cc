"""Coefficient triples (F, G, J), concave moduli and the growth-condition spot check.

Coefficient callables are evaluated on batches of particles:

* ``drift(t, x, mu) -> (N, d)`` for ``x`` of shape ``(N, d)``,
* ``diffusion(t, x, mu) -> (N, d, k)`` or a shared ``(d, k)`` matrix,
* ``jump(t, x, mu, z) -> (J, d)`` for ``x`` of shape ``(J, d)``, marks
  ``z`` of shape ``(J, m)`` and ``t`` a scalar or a ``(J,)`` array.

``mu`` is an :class:`~mvcosine.measure.EmpiricalMeasure`. Callables must be
pure and reentrant.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .exceptions import ContractError
from .measure import EmpiricalMeasure, w2_exact
from .noise import stream

MODULUS_KINDS = ("linear", "log", "loglog", "custom")


@dataclass(frozen=True)
class Modulus:
    """Concave modulus ``Psi`` with ``Psi(0) = 0``.

    ``log`` is ``u log(1/u)`` and ``loglog`` is ``u log(1/u) log log(1/u)`` on
    ``[0, delta]``, both continued linearly past ``delta`` with the left
    derivative at ``delta``. ``custom`` wraps ``func``; give ``tail_slope``
    when the function is eventually affine so ``beta`` can use it.
    """

    kind: str = "linear"
    gamma: float = 1.0
    delta: float = 0.1
    func: Optional[Callable] = None
    tail_slope: Optional[float] = None

    def __post_init__(self):
        if self.kind not in MODULUS_KINDS:
            raise ContractError(f"unknown modulus kind {self.kind!r}")
        if self.kind == "linear" and not self.gamma > 0:
            raise ContractError("gamma must be positive")
        if self.kind in ("log", "loglog") and not 0 < self.delta < 1:
            raise ContractError("delta must lie in (0, 1)")
        if self.kind == "loglog" and self.delta >= np.exp(-1):
            # log log(1/u) < 0 on (1/e, 1), so the formula turns negative
            raise ContractError("loglog modulus needs delta < 1/e")
        if self.kind == "custom" and self.func is None:
            raise ContractError("custom modulus needs func")

    def _core(self, u):
        if self.kind == "log":
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(u > 0, -u * np.log(u), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            big_l = -np.log(u)
            return np.where(u > 0, u * big_l * np.log(big_l), 0.0)

    @property
    def slope_at_delta(self):
        """Left derivative ``Psi'(delta-)`` of the piecewise forms."""
        big_l = -np.log(self.delta)
        if self.kind == "log":
            return big_l - 1.0
        if self.kind == "loglog":
            return big_l * np.log(big_l) - np.log(big_l) - 1.0
        raise ContractError(f"{self.kind} modulus has no delta")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or np.any(np.isnan(u)):
            raise ContractError("modulus argument must be >= 0")
        if self.kind == "linear":
            return self.gamma * u
        if self.kind == "custom":
            return np.asarray(self.func(u), dtype=float)
        d = self.delta
        head = self._core(np.minimum(u, d))
        tail = self._core(np.array(d)) + self.slope_at_delta * (u - d)
        return np.where(u <= d, head, tail)

    @property
    def asymptotic_slope(self):
        if self.kind == "linear":
            return self.gamma
        if self.kind in ("log", "loglog"):
            return self.slope_at_delta
        return self.tail_slope


def modulus_eval(m, u):
    return float(m(u)) if np.ndim(u) == 0 else m(u)


def modulus_beta(m, upper=1e6, points=4000, inflate=1.05):
    """Grid-certified ``beta`` with ``Psi(u) <= beta (1 + u)``, inflated by ``inflate``.

    The grid is log-spaced on ``[1e-12, upper]`` plus ``0`` and ``delta``. For
    eventually affine moduli the limit slope also enters the maximum, since
    ``(a + b u)/(1 + u)`` tends to ``b``.
    """
    u = np.concatenate([[0.0], np.logspace(-12, np.log10(upper), points)])
    if m.kind in ("log", "loglog"):
        u = np.sort(np.append(u, m.delta))
    ratio = float(np.max(m(u) / (1.0 + u)))
    if m.asymptotic_slope is not None:
        ratio = max(ratio, float(m.asymptotic_slope))
    return inflate * ratio


@dataclass
class ModulusShape:
    nondecreasing: bool
    concave: bool
    positive: bool
    zero_at_origin: bool

    @property
    def ok(self):
        return self.nondecreasing and self.concave and self.positive and self.zero_at_origin


def check_modulus(m, upper=1.0, points=1000, tol=1e-12):
    """Discrete monotonicity, concavity and positivity of ``m`` on ``[0, upper]``."""
    u = np.linspace(0.0, upper, points)
    v = m(u)
    d1 = np.diff(v)
    d2 = np.diff(v, 2)
    scale = max(1.0, float(np.max(np.abs(v))))
    return ModulusShape(
        nondecreasing=bool(np.all(d1 >= -tol * scale)),
        concave=bool(np.all(d2 <= tol * scale)),
        positive=bool(np.all(v[1:] > 0)),
        zero_at_origin=float(m(0.0)) == 0.0,
    )


def osgood_integral(m, lower, upper=1.0):
    """``int_lower^upper du / Psi(u)``, integrated in ``log u``."""
    val, _ = quad(lambda y: np.exp(y) / float(m(np.exp(y))), np.log(lower), np.log(upper), limit=200)
    return val


def _constant(value):
    return lambda t: value


@dataclass
class CoefficientSet:
    """The triple (F, G, J) with the bound function ``K(t)`` and modulus ``Psi``.

    ``jump_compensator(t, x, mu)``, when given, returns ``int J(t, x, mu, z) nu(dz)``
    in closed form; otherwise solvers estimate it from a shared mark sample.
    """

    drift: Callable
    diffusion: Callable
    jump: Callable
    k_bound: Callable = field(default_factory=lambda: _constant(1.0))
    modulus: Modulus = field(default_factory=Modulus)
    jump_compensator: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    @classmethod
    def from_pointwise(cls, drift, diffusion, jump, **kw):
        """Wrap per-particle callables ``f(t, x, mu)`` into the batched contract."""

        def b_drift(t, x, mu):
            return np.array([drift(t, xi, mu) for xi in x], dtype=float).reshape(x.shape)

        def b_diff(t, x, mu):
            return np.array([diffusion(t, xi, mu) for xi in x], dtype=float)

        def b_jump(t, x, mu, z):
            ts = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
            return np.array([jump(ti, xi, mu, zi) for ti, xi, zi in zip(ts, x, z)], dtype=float).reshape(x.shape)

        return cls(b_drift, b_diff, b_jump, **kw)


def eval_diffusion(cs, t, x, mu):
    g = np.asarray(cs.diffusion(t, x, mu), dtype=float)
    if g.ndim == 2:
        g = np.broadcast_to(g, (x.shape[0],) + g.shape)
    return g


def linear_generator_eigenvalues(a, dim=1):
    return np.full(dim, -float(a) ** 2)


def make_linear_model(a, b, c, sigma, j0, dim=1, wiener=None, jumps=None):
    """Linear mean-field model with closed-form moments.

    ``F = c mean(mu)``, ``G = sigma I`` (d x k), ``J = j0 z``. The generator
    is ``A = -a^2 I`` with damping ``B = b I`` (see ``params``). ``K`` is the
    constant ``max(c^2, sigma^2 tr Q + j0^2 int |z|^2 nu(dz))`` with the
    linear modulus ``gamma = 1``; ``||mean mu - mean nu|| <= W_2(mu, nu)``
    gives the Lipschitz part.
    """
    k_dim = dim if wiener is None else wiener.dim
    trace_q = float(k_dim) if wiener is None else wiener.trace
    m2 = 0.0 if jumps is None else jumps.moment2
    if jumps is not None and jumps.mark_dim != dim and j0 != 0:
        raise ContractError("linear model needs marks of the state dimension when j0 != 0")
    gmat = sigma * np.eye(dim, k_dim)
    mark_mean = None if jumps is None else jumps.intensity * jumps.mark_mean()
    k_val = max(c**2, sigma**2 * trace_q + j0**2 * m2)

    def drift(t, x, mu):
        return np.broadcast_to(c * mu.mean(), x.shape)

    def diffusion(t, x, mu):
        return gmat

    def jump(t, x, mu, z):
        return j0 * np.asarray(z, dtype=float)

    def compensator(t, x, mu):
        if mark_mean is None:
            return np.zeros_like(x)
        return np.broadcast_to(j0 * mark_mean, x.shape)

    return CoefficientSet(
        drift,
        diffusion,
        jump,
        k_bound=_constant(k_val),
        modulus=Modulus("linear", gamma=1.0),
        jump_compensator=compensator,
        params=dict(model="linear", a=a, b=b, c=c, sigma=sigma, j0=j0, dim=dim, K=k_val),
    )


@dataclass
class GrowthLipschitzReport:
    worst_ratio: float
    lipschitz_ratio: float
    growth_ratio: float
    passed: bool
    worst_sample: dict = None
    error: str = None


def _jump_sq(cs, jumps, t, x, mu, y, nu, marks):
    """``intensity * mean_z ||J(t,x,mu,z) - J(t,y,nu,z)||^2`` and its standard error."""
    if jumps is None or jumps.intensity == 0:
        return 0.0, 0.0
    n = marks.shape[0]
    jx = cs.jump(t, np.repeat(x[None], n, 0), mu, marks)
    if y is None:
        diff = np.asarray(jx, dtype=float)
    else:
        diff = np.asarray(jx, dtype=float) - np.asarray(cs.jump(t, np.repeat(y[None], n, 0), nu, marks), dtype=float)
    sq = np.sum(diff * diff, axis=-1)
    return jumps.intensity * float(sq.mean()), jumps.intensity * float(sq.std() / np.sqrt(n))


def _sample_pair(rng, kind, dim, cloud):
    scale = 10.0 ** rng.uniform(-2, 1)
    x = scale * rng.standard_normal(dim)
    pts = scale * rng.standard_normal((cloud, dim))
    shift = scale * rng.standard_normal(dim)
    if kind == 0:
        y = scale * rng.standard_normal(dim)
        other = scale * rng.standard_normal((cloud, dim))
    elif kind == 1:
        y, other = x.copy(), pts + shift
    elif kind == 2:
        y, other = x + 1e-3 * scale * rng.standard_normal(dim), pts + shift
    else:
        y, other = x.copy(), pts.copy()
    return x, y, EmpiricalMeasure(pts), EmpiricalMeasure(other)


def check_growth_lipschitz(cs, wiener, jumps=None, trials=200, seed=0, horizon=1.0, dim=1, cloud_size=5, n_mark_samples=10_000, tol=1e-9):
    """Spot-check the Lipschitz-type and growth bounds of ``cs`` on random samples.

    Samples cycle through independent pairs, translated clouds with equal
    points, near-equal points, and identical arguments. The jump integral is
    a Monte Carlo mean over ``n_mark_samples`` marks; its standard error
    (three sigma) is granted as slack. Passes iff every ratio is at most
    ``1 + tol``.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    rng = stream(seed, "check")
    marks = None if jumps is None else jumps.sample_marks(rng, n_mark_samples)
    worst_lip, worst_growth, worst = 0.0, 0.0, None
    passed = True
    origin = EmpiricalMeasure.dirac(np.zeros(dim))
    zero = np.zeros((1, dim))
    sample = None
    try:
        for i in range(trials):
            t = rng.uniform(0.0, horizon)
            x, y, mu, nu = _sample_pair(rng, i % 4, dim, cloud_size)
            sample = dict(t=t, x=x, y=y, mu=mu.points, nu=nu.points)
            fd = cs.drift(t, x[None], mu) - cs.drift(t, y[None], nu)
            gd = eval_diffusion(cs, t, x[None], mu) - eval_diffusion(cs, t, y[None], nu)
            jd, se = _jump_sq(cs, jumps, t, x, mu, y, nu, marks)
            lhs = float(np.sum(fd * fd)) + float(wiener.hs_norm_sq(gd).sum()) + jd
            rhs = float(cs.k_bound(t)) * float(cs.modulus(np.sum((x - y) ** 2) + w2_exact(mu, nu) ** 2))
            if lhs > 0:
                r = lhs / rhs if rhs > 0 else np.inf
                if max(lhs - 3 * se, 0.0) > rhs * (1 + tol):
                    passed = False
                if r > worst_lip:
                    worst_lip, worst = r, sample
            f0 = cs.drift(t, zero, origin)
            g0 = eval_diffusion(cs, t, zero, origin)
            j0, se0 = _jump_sq(cs, jumps, t, np.zeros(dim), origin, None, None, marks)
            growth = float(np.sum(f0 * f0)) + float(wiener.hs_norm_sq(g0).sum()) + j0
            k = float(cs.k_bound(t))
            if growth > 0:
                r = growth / k if k > 0 else np.inf
                if max(growth - 3 * se0, 0.0) > k * (1 + tol):
                    passed = False
                worst_growth = max(worst_growth, r)
    except Exception as exc:  # coefficient failure is reported, not raised
        return GrowthLipschitzReport(np.nan, worst_lip, worst_growth, False, sample, f"{type(exc).__name__}: {exc}")
    return GrowthLipschitzReport(max(worst_lip, worst_growth), worst_lip, worst_growth, passed, worst)
