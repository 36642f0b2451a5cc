"""Cosine and sine operator families built from spectral data.

The state space is R^d. The generator ``A`` is self-adjoint with a
nonpositive spectrum, ``A = U diag(lambda) U^T``, so with
``omega_i = sqrt(-lambda_i)``::

    C(t)   = U diag(cos(omega t))            U^T
    S(t)   = U diag(sin(omega t) / omega)    U^T     (t on the kernel of A)
    A S(t) = U diag(-omega sin(omega t))     U^T

Every operator in this module acts on row vectors: an input of shape
``(..., d)`` returns the same shape.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import ContractError
from .noise import stream

ORTHOGONALITY_TOL = 1e-10


def _as_matrix(damping, dim):
    b = np.asarray(damping, dtype=float)
    if b.ndim == 0:
        return float(b) * np.eye(dim)
    if b.ndim == 1 and b.size == dim * dim:
        b = b.reshape(dim, dim)
    if b.shape != (dim, dim):
        raise ContractError(f"damping must be a scalar or a {dim}x{dim} matrix, got shape {b.shape}")
    return b


def operator_norm_power(matrix, iters=500, seed=0):
    """Spectral norm of ``matrix`` by power iteration on ``M^T M``."""
    m = np.asarray(matrix, dtype=float)
    if not m.any():
        return 0.0
    v = np.random.default_rng(seed).standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = m.T @ (m @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        est = np.sqrt(nw)
    return float(est)


@dataclass(frozen=True)
class SpectralGenerator:
    """Self-adjoint generator ``A`` plus the bounded damping operator ``B``.

    ``damping`` may be a scalar ``b`` (meaning ``B = b I``) or a ``d x d``
    matrix. ``damping_bound`` defaults to the spectral norm of ``B``.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray = None
    damping: np.ndarray = 0.0
    damping_bound: float = None

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.eigenvalues, dtype=float))
        if lam.ndim != 1 or lam.size == 0:
            raise ContractError("eigenvalues must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(lam)):
            raise ContractError("eigenvalues must be finite")
        if np.any(lam > 0):
            raise ContractError(f"eigenvalues must be <= 0, got max {lam.max()}")
        d = lam.size
        u = np.eye(d) if self.basis is None else np.asarray(self.basis, dtype=float)
        if u.shape != (d, d):
            raise ContractError(f"basis must be {d}x{d}, got {u.shape}")
        if np.max(np.abs(u.T @ u - np.eye(d))) > ORTHOGONALITY_TOL:
            raise ContractError("basis is not orthogonal to 1e-10")
        b = _as_matrix(self.damping, d)
        norm_b = float(np.linalg.norm(b, 2)) if b.any() else 0.0
        mb = norm_b if self.damping_bound is None else float(self.damping_bound)
        if mb < norm_b * (1 - 1e-12):
            raise ContractError(f"damping_bound {mb} is below the operator norm {norm_b} of B")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "basis", u)
        object.__setattr__(self, "damping", b)
        object.__setattr__(self, "damping_bound", mb)
        object.__setattr__(self, "_diagonal", bool(np.array_equal(u, np.eye(d))))

    @property
    def dim(self):
        return self.eigenvalues.size

    @property
    def frequencies(self):
        return np.sqrt(-self.eigenvalues)

    @property
    def is_diagonal(self):
        return self._diagonal

    def to_modes(self, x):
        """Coordinates of row vectors ``x`` in the eigenbasis."""
        return x if self.is_diagonal else x @ self.basis

    def from_modes(self, xe):
        return xe if self.is_diagonal else xe @ self.basis.T

    def apply_generator(self, x):
        x = self._check(x)
        return self.from_modes(self.to_modes(x) * self.eigenvalues)

    def apply_damping(self, x):
        return self._check(x) @ self.damping.T

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ContractError(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        return x

    # Diagonal multipliers. ``t`` may be an array; the result has shape t.shape + (d,).

    def cos_multiplier(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return np.cos(t * self.frequencies)

    def sin_multiplier(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        w = self.frequencies
        zero = w == 0.0
        safe = np.where(zero, 1.0, w)
        return np.where(zero, t, np.sin(t * w) / safe)

    def asin_multiplier(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        w = self.frequencies
        return -w * np.sin(t * w)

    def sin_step_integral(self, t0, t1):
        """Diagonal of ``int_{t0}^{t1} S(u) du``; exact, used by compensators."""
        t0 = np.asarray(t0, dtype=float)[..., None]
        t1 = np.asarray(t1, dtype=float)[..., None]
        w = self.frequencies
        zero = w == 0.0
        safe = np.where(zero, 1.0, w)
        osc = (np.cos(t0 * w) - np.cos(t1 * w)) / safe**2
        return np.where(zero, 0.5 * (t1**2 - t0**2), osc)


@dataclass(frozen=True)
class CosineFamily:
    """Cosine family on ``[0, horizon]`` with the bounds ``M_1`` and ``N_S``.

    ``m1_bound`` bounds ``sup_t ||S(t)||^2 + ||C(t)||^2`` and ``ns_bound`` is a
    Lipschitz constant of ``t -> S(t)``. Both are computed from the spectrum
    and cross-checked on a dense grid at construction.
    """

    generator: SpectralGenerator
    horizon: float
    m1_bound: float = field(default=None)
    ns_bound: float = field(default=None)
    check_points: int = 2001

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ContractError(f"horizon must be positive, got {self.horizon}")
        gen = self.generator
        w = gen.frequencies
        T = float(self.horizon)
        # per-mode sup of |sin(w t)/w| on [0, T]
        safe = np.where(w == 0.0, 1.0, w)
        peak = np.where(w * T >= np.pi / 2, 1.0 / safe, np.sin(w * T) / safe)
        peak = np.where(w == 0.0, T, peak)
        m1 = 1.0 + float(np.max(peak)) ** 2
        ns = 1.0  # ||d/dt S(t)|| = ||C(t)|| <= 1
        if self.m1_bound is not None:
            m1 = float(self.m1_bound)
        if self.ns_bound is not None:
            ns = float(self.ns_bound)
        ts = np.linspace(0.0, T, self.check_points)
        grid_m1 = self.sine_norm(ts) ** 2 + self.cosine_norm(ts) ** 2
        if np.max(grid_m1) > m1 * (1 + 1e-12):
            raise ContractError(f"m1_bound {m1} is below the grid maximum {np.max(grid_m1)}")
        object.__setattr__(self, "horizon", T)
        object.__setattr__(self, "m1_bound", m1)
        object.__setattr__(self, "ns_bound", ns)

    @property
    def dim(self):
        return self.generator.dim

    def cosine_norm(self, t):
        return np.max(np.abs(self.generator.cos_multiplier(t)), axis=-1)

    def sine_norm(self, t):
        return np.max(np.abs(self.generator.sin_multiplier(t)), axis=-1)

    def cosine_matrix(self, t):
        g = self.generator
        return (g.basis * g.cos_multiplier(t)) @ g.basis.T

    def sine_matrix(self, t):
        g = self.generator
        return (g.basis * g.sin_multiplier(t)) @ g.basis.T


def _apply(fam, multiplier, t, x):
    gen = fam.generator
    x = gen._check(x)
    t = float(t)
    if not np.isfinite(t):
        raise ContractError("time must be finite")
    return gen.from_modes(gen.to_modes(x) * multiplier(t))


def cosine_apply(fam, t, x):
    """``C(t) x``."""
    return _apply(fam, fam.generator.cos_multiplier, t, x)


def sine_apply(fam, t, x):
    """``S(t) x``; on the kernel of ``A`` this is ``t x``."""
    return _apply(fam, fam.generator.sin_multiplier, t, x)


def a_sine_apply(fam, t, x):
    """``A S(t) x`` evaluated spectrally."""
    return _apply(fam, fam.generator.asin_multiplier, t, x)


@dataclass
class IdentityResiduals:
    """Maximum absolute residual of each cosine-family identity."""

    dalembert: float
    product: float
    generator_integral: float
    sine_integral: float
    sine_lipschitz: float
    ns_bound: float
    m1_grid: float
    m1_bound: float

    def rows(self):
        return [
            ("dalembert", self.dalembert),
            ("cosine_difference_product", self.product),
            ("generator_sine_integral", self.generator_integral),
            ("sine_equals_cosine_integral", self.sine_integral),
        ]

    def passed(self, tol=1e-8):
        ok = all(v <= tol for _, v in self.rows())
        return ok and self.sine_lipschitz <= self.ns_bound * (1 + 1e-12) and self.m1_grid <= self.m1_bound


def _many(gen, mult, x):
    """Apply per-row multipliers ``mult`` (P, d) to vectors ``x`` (M, d) -> (P, M, d)."""
    return gen.from_modes(mult[:, None, :] * gen.to_modes(x)[None, :, :])


def identity_residuals(fam, grid, trials=32, seed=0, quad_points=64):
    """Evaluate the cosine-family identities on ``grid`` of ``(t, s)`` pairs.

    Random unit vectors (``trials`` of them) are drawn from ``seed``. Integral
    identities use ``quad_points``-point Gauss-Legendre quadrature.
    """
    grid = np.asarray(grid, dtype=float).reshape(-1, 2)
    if grid.shape[0] == 0:
        raise ContractError("grid must be nonempty")
    gen = fam.generator
    x = stream(seed, "check").standard_normal((trials, gen.dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    t, s = grid[:, 0], grid[:, 1]

    def norm_max(r):
        return float(np.max(np.linalg.norm(r, axis=-1)))

    cos, sin, asin = gen.cos_multiplier, gen.sin_multiplier, gen.asin_multiplier
    # C(t+s) + C(t-s) = 2 C(t) C(s)
    lhs = _many(gen, cos(t + s), x) + _many(gen, cos(t - s), x)
    cs_x = _many(gen, cos(s), x)
    rhs = 2.0 * gen.from_modes(cos(t)[:, None, :] * gen.to_modes(cs_x))
    dalembert = norm_max(lhs - rhs)
    # C(t+s) - C(t-s) = 2 A S(t) S(s)
    lhs = _many(gen, cos(t + s), x) - _many(gen, cos(t - s), x)
    ss_x = _many(gen, sin(s), x)
    rhs = 2.0 * gen.from_modes(asin(t)[:, None, :] * gen.to_modes(ss_x))
    product = norm_max(lhs - rhs)

    nodes, weights = leggauss(quad_points)
    lo, hi = np.minimum(t, s), np.maximum(t, s)
    half = 0.5 * (hi - lo)
    u = lo[:, None] + half[:, None] * (nodes[None, :] + 1.0)  # (P, Q)
    # A int_lo^hi S(u) x du = (C(hi) - C(lo)) x
    int_s = np.einsum("pqd,q->pd", sin(u), weights) * half[:, None]
    lhs = gen.from_modes(gen.to_modes(_many(gen, int_s, x)) * gen.eigenvalues)
    rhs = _many(gen, cos(hi), x) - _many(gen, cos(lo), x)
    gen_int = norm_max(lhs - rhs)
    # S(t) x = int_0^t C(u) x du
    half_t = 0.5 * t
    u = half_t[:, None] * (nodes[None, :] + 1.0)
    int_c = np.einsum("pqd,q->pd", cos(u), weights) * half_t[:, None]
    sine_int = norm_max(_many(gen, sin(t), x) - _many(gen, int_c, x))

    gap = np.abs(t - s)
    moved = gap > 0
    if np.any(moved):
        diff = _many(gen, sin(t[moved]) - sin(s[moved]), x)
        lip = float(np.max(np.linalg.norm(diff, axis=-1) / gap[moved][:, None]))
    else:
        lip = 0.0
    pts = np.unique(np.concatenate([t, s]))
    m1_grid = float(np.max(fam.sine_norm(pts) ** 2 + fam.cosine_norm(pts) ** 2))
    return IdentityResiduals(dalembert, product, gen_int, sine_int, lip, fam.ns_bound, m1_grid, fam.m1_bound)


def random_time_pairs(horizon, n, seed=0):
    """``n`` pairs ``(t, s)`` uniform on ``[0, horizon]^2``, plus the corner ``(horizon, horizon)``."""
    pairs = horizon * stream(seed, "check", 1).uniform(size=(n, 2))
    pairs[-1] = horizon
    return pairs


def scalar_family(eigenvalue, horizon=1.0, damping=0.0):
    """One-dimensional family with ``A = eigenvalue``."""
    return CosineFamily(SpectralGenerator([eigenvalue], damping=damping), horizon)
