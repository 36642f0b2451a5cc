"""Numeric checkers for the elementary power inequality, Bihari, Gronwall and the p = 2 Doob bound."""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import quad, trapezoid

from .coefficients import Modulus
from .exceptions import ContractError
from .noise import stream


def power_inequality_check(a, b, p, r, rtol=1e-12):
    """``|a + b|^p <= (1 + r^{1/(p-1)})^{p-1} (|a|^p + |b|^p / r)``, elementwise.

    Returns ``(lhs, rhs, holds)``; ``holds`` allows a relative rounding slack ``rtol``.
    """
    a, b, p, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, p, r)))
    if np.any(p < 2):
        raise ContractError("power inequality needs p >= 2")
    if np.any(r <= 0):
        raise ContractError("power inequality needs r > 0")
    factor = (1.0 + r ** (1.0 / (p - 1.0))) ** (p - 1.0)
    with np.errstate(over="ignore", under="ignore"):
        lhs = np.abs(a + b) ** p
        rhs = factor * (np.abs(a) ** p + np.abs(b) ** p / r)
    # both sides are p-homogeneous in (a, b); compare at unit scale to avoid under/overflow
    scale = np.maximum(np.abs(a), np.abs(b))
    unit = np.where(scale > 0, scale, 1.0)
    sa, sb = a / unit, b / unit
    holds = np.abs(sa + sb) ** p <= factor * (np.abs(sa) ** p + np.abs(sb) ** p / r) * (1.0 + rtol)
    if lhs.ndim == 0:
        return float(lhs), float(rhs), bool(holds)
    return lhs, rhs, holds


def power_inequality_fuzz(n, seed=0, chunk=200_000):
    """Check the power inequality on ``n`` random tuples; returns ``(passed, failed)`` counts."""
    rng = stream(seed, "check")
    failed = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        scale = 10.0 ** rng.uniform(-2, 2, (2, m))
        a, b = scale * rng.standard_normal((2, m))
        p = rng.uniform(2.0, 8.0, m)
        r = 10.0 ** rng.uniform(-3, 3, m)
        failed += int(np.count_nonzero(~power_inequality_check(a, b, p, r)[2]))
        done += m
    return n - failed, failed


def _check_theta(theta, lo=1e-6, hi=1e6, n=400):
    """Grid check that ``theta`` is positive, nondecreasing and concave."""
    r = np.geomspace(lo, hi, n)
    th = np.array([float(theta(v)) for v in r])
    if not np.all(np.isfinite(th)) or np.any(th <= 0):
        raise ContractError("theta must be positive on (0, inf)")
    tol = 1e-10 * np.abs(th).max()
    if np.any(np.diff(th) < -tol):
        raise ContractError("theta must be nondecreasing")
    slopes = np.diff(th) / np.diff(r)
    if np.any(np.diff(slopes) > 1e-8 * np.abs(slopes).max()):
        raise ContractError("theta must be concave")


@dataclass
class BihariProblem:
    """Data for the Bihari bound ``u(t) <= G^{-1}(G(u0) + int_0^t v)``.

    ``v`` is either a callable or samples on ``nodes``; ``theta`` a callable
    or ``Modulus``. ``osgood`` states whether ``int_{0+} ds / theta(s)``
    diverges; it is inferred for built-in moduli and defaults to False
    otherwise.
    """

    u0: float
    v: Union[Callable, np.ndarray]
    theta: Union[Callable, Modulus]
    nodes: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    osgood: Optional[bool] = None

    def __post_init__(self):
        if self.u0 < 0:
            raise ContractError("u0 must be nonnegative")
        if not callable(self.v):
            self.v = np.asarray(self.v, dtype=float)
            if self.nodes is None or np.shape(self.nodes) != self.v.shape:
                raise ContractError("sampled v needs nodes of the same shape")
            if np.any(self.v < 0):
                raise ContractError("v must be nonnegative")
        if self.nodes is not None:
            self.nodes = np.asarray(self.nodes, dtype=float)
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=float)
            if self.nodes is None or self.u.shape != self.nodes.shape:
                raise ContractError("sampled u needs nodes of the same shape")
        _check_theta(self.theta)
        if self.osgood is None:
            self.osgood = isinstance(self.theta, Modulus)

    def v_integral(self, t):
        if callable(self.v):
            return quad(self.v, 0.0, t, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        keep = self.nodes <= t
        x = np.append(self.nodes[keep], t)
        y = np.append(self.v[keep], np.interp(t, self.nodes, self.v))
        return float(trapezoid(y, x))


# Largest log-radius explored for G; beyond it the argument counts as outside the domain of G^{-1}.
LOG_R_MAX = 690.0


class BihariInverse:
    """``G(r) = int_1^r ds / theta(s)`` and its inverse by bracketing and bisection in ``log r``."""

    def __init__(self, theta):
        self.theta = theta

    def G_log(self, y):
        """``G(e^y)``, integrating ``e^s / theta(e^s)`` over ``[0, y]``."""
        if y == 0.0:
            return 0.0
        f = lambda s: math.exp(s) / float(self.theta(math.exp(s)))  # noqa: E731
        return quad(f, 0.0, y, epsabs=0.0, epsrel=1e-13, limit=400)[0]

    def G(self, r):
        if r <= 0:
            raise ContractError("G is defined for r > 0")
        return self.G_log(math.log(r))

    def inverse(self, target):
        """``(r, in_domain)`` with ``G(r) = target``."""
        step = 1.0 if target >= 0 else -1.0
        lo = hi = 0.0
        g = 0.0
        while (g < target) if step > 0 else (g > target):
            if abs(hi) >= LOG_R_MAX:
                return (math.inf if step > 0 else 0.0), False
            lo = hi
            hi = step * min(max(1.0, 2.0 * abs(hi)), LOG_R_MAX)
            g = self.G_log(hi)
        a, b = (lo, hi) if step > 0 else (hi, lo)
        for _ in range(200):
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            if self.G_log(mid) < target:
                a = mid
            else:
                b = mid
        return math.exp(0.5 * (a + b)), True


def bihari_bound(pb, t):
    """``(bound, in_domain)`` at time ``t``; zero when ``u0 = 0`` under the Osgood condition."""
    vint = pb.v_integral(t)
    if pb.u0 == 0.0:
        if pb.osgood:
            return 0.0, True
        inv = BihariInverse(pb.theta)
        return inv.inverse(inv.G_log(-LOG_R_MAX) + vint)
    inv = BihariInverse(pb.theta)
    return inv.inverse(inv.G(pb.u0) + vint)


def bihari_check(pb):
    """Bounds at the sampled nodes and whether the sampled ``u`` stays below them."""
    if pb.u is None:
        raise ContractError("bihari_check needs sampled u")
    bounds = np.array([bihari_bound(pb, t)[0] for t in pb.nodes])
    return bounds, bool(np.all(pb.u <= bounds * (1 + 1e-8) + 1e-12))


def gronwall_bound(u0, v_integral):
    return u0 * math.exp(v_integral)


@dataclass
class GronwallCheck:
    gronwall: float
    bihari: float
    rel_diff: float
    holds: bool


def gronwall_check(u0, v, t, nodes=None, u=None):
    """Gronwall bound ``u0 exp(int_0^t v)`` beside the Bihari bound with ``theta(u) = u``.

    With samples ``u`` on ``nodes``, ``holds`` also requires ``u <= bound`` at every node up to ``t``.
    """
    pb = BihariProblem(u0, v, Modulus("linear", gamma=1.0), nodes=nodes)
    g = gronwall_bound(u0, pb.v_integral(t))
    bb, _ = bihari_bound(pb, t)
    rel = abs(bb - g) / max(abs(g), np.finfo(float).tiny)
    holds = True
    if u is not None:
        keep = np.asarray(nodes) <= t
        bounds = np.array([gronwall_bound(u0, pb.v_integral(s)) for s in np.asarray(nodes)[keep]])
        holds = bool(np.all(np.asarray(u)[keep] <= bounds * (1 + 1e-10)))
    return GronwallCheck(g, bb, rel, holds)


@dataclass
class KunitaCheck:
    """``E sup_t |M_t|^2`` against ``4 E|M_T|^2`` for a compensated Poisson integral."""

    sup_moment: float
    bound: float
    isometry: float
    terminal_moment: float
    holds: bool
    isometry_ok: bool


def kunita_p2_check(jumps, horizon, integrand=None, replicas=10_000, seed=0, n_mark_samples=100_000):
    """Simulate ``M_t = int_0^t int g(z) N~(ds, dz)`` and compare its sup-moment to the Doob bound.

    ``integrand`` maps an array of marks to scalar values (default 1). Between
    jumps ``M`` is affine, so its supremum is attained at 0, at ``T`` or at a
    jump time (before or after the jump); these are evaluated exactly.
    """
    g = integrand if integrand is not None else (lambda z: np.ones(z.shape[0]))
    rng = stream(seed, "check")
    ref = jumps.sample_marks(stream(seed, "compensator"), n_mark_samples)
    gref = np.asarray(g(ref), dtype=float)
    drift = jumps.intensity * float(gref.mean())
    iso = horizon * jumps.intensity * float(np.mean(gref**2))
    counts = rng.poisson(jumps.intensity * horizon, replicas)
    total = int(counts.sum())
    rep = np.repeat(np.arange(replicas), counts)
    times = rng.uniform(0.0, horizon, total)
    marks = jumps.sample_marks(rng, total)
    vals = np.asarray(g(marks), dtype=float) if total else np.empty(0)
    order = np.lexsort((times, rep))
    times, vals = times[order], vals[order]
    csum = np.concatenate([[0.0], np.cumsum(vals)])
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    after = csum[1:] - np.repeat(csum[start], counts) - drift * times
    before = after - vals
    sup = np.zeros(replicas)
    if total:
        np.maximum.at(sup, rep, np.maximum(after**2, before**2))
    group_sum = np.zeros(replicas)
    np.add.at(group_sum, rep, vals)
    terminal = group_sum - drift * horizon
    sup = np.maximum(sup, terminal**2)
    sup_moment = float(sup.mean())
    term_moment = float(np.mean(terminal**2))
    bound = 4.0 * iso
    iso_ok = abs(term_moment - iso) <= 0.05 * iso if iso > 0 else term_moment == 0.0
    return KunitaCheck(sup_moment, bound, iso, term_moment, sup_moment <= bound, bool(iso_ok))
