"""Empirical measures and the Wasserstein-2 distance between them."""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .exceptions import ContractError, UnsupportedError

EXACT_CAP = 512


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud in R^d. Weights default to uniform."""

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ContractError(f"points must be a nonempty (N, d) array, got shape {pts.shape}")
        n = pts.shape[0]
        if self.weights is None:
            w = np.full(n, 1.0 / n)
            uniform = True
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,) or np.any(w < 0):
                raise ContractError("weights must be nonnegative with one entry per point")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ContractError(f"weights sum to {w.sum()}, expected 1")
            uniform = bool(np.all(w == w[0]))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_uniform", uniform)

    @classmethod
    def dirac(cls, at):
        return cls(np.atleast_2d(np.asarray(at, dtype=float)))

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def is_uniform(self):
        return self._uniform

    def mean(self):
        return self.weights @ self.points

    def second_moment(self):
        """``sum w_i ||x_i||^2``, which equals ``W_2(mu, delta_0)^2``."""
        return float(self.weights @ np.einsum("nd,nd->n", self.points, self.points))


def w2_to_origin(mu):
    return np.sqrt(mu.second_moment())


def _uniform_pair(mu, nu):
    if mu.dim != nu.dim:
        raise ContractError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if not (mu.is_uniform and nu.is_uniform):
        raise UnsupportedError("only uniformly weighted clouds are supported")
    if mu.size != nu.size:
        raise ContractError(f"size mismatch: {mu.size} vs {nu.size}")


def sq_cost_matrix(x, y):
    """Pairwise squared Euclidean distances, accumulated row by row."""
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijd,ijd->ij", diff, diff)


def w2_quantile_1d(mu, nu):
    """W_2 on the line via the monotone (sorted) coupling."""
    if mu.dim != 1 or nu.dim != 1:
        raise UnsupportedError("w2_quantile_1d requires one-dimensional clouds")
    _uniform_pair(mu, nu)
    x = np.sort(mu.points[:, 0])
    y = np.sort(nu.points[:, 0])
    return float(np.sqrt(np.mean((x - y) ** 2)))


def w2_exact(mu, nu, cap=EXACT_CAP):
    """Exact W_2 between equal-size uniform clouds by optimal assignment."""
    _uniform_pair(mu, nu)
    if mu.size > cap:
        raise UnsupportedError(f"cloud size {mu.size} exceeds exact cap {cap}; use w2_entropic")
    cost = sq_cost_matrix(mu.points, nu.points)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(max(cost[rows, cols].mean(), 0.0)))


def coupling_cost(mu, nu, perm):
    """Root-mean-square cost of the coupling ``x_i -> y_{perm[i]}``."""
    _uniform_pair(mu, nu)
    d = mu.points - nu.points[np.asarray(perm)]
    return float(np.sqrt(np.mean(np.einsum("nd,nd->n", d, d))))


@dataclass(frozen=True)
class EntropicW2:
    """Approximate W_2 from debiased Sinkhorn. Always flagged approximate."""

    value: float
    converged: bool
    residual: float
    approximate: bool = True

    def __float__(self):
        return self.value


def _sinkhorn_cost(a, b, cost, reg, iters, tol):
    """Entropic OT value (dual objective) in the log domain.

    The regularization is annealed geometrically from the cost scale down to
    ``reg`` with warm-started potentials; only iterations at ``reg`` count
    against ``iters``.
    """
    loga, logb = np.log(a), np.log(b)
    f = np.zeros_like(a)
    g = np.zeros_like(b)

    def sweep(eps):
        f = -eps * logsumexp((g[None, :] - cost) / eps + logb[None, :], axis=1)
        return f, -eps * logsumexp((f[:, None] - cost) / eps + loga[:, None], axis=0)

    eps = max(float(cost.max()), reg)
    while eps > reg:
        for _ in range(10):
            f, g = sweep(eps)
        eps = max(0.5 * eps, reg)
    residual = np.inf
    for it in range(iters):
        f, g = sweep(reg)
        if it % 10 == 9 or it == iters - 1:
            logp = (f[:, None] + g[None, :] - cost) / reg + loga[:, None] + logb[None, :]
            residual = float(np.abs(np.exp(logsumexp(logp, axis=1)) - a).sum())
            if residual < tol:
                break
    return float(a @ f + b @ g), residual


def _sinkhorn_self(a, cost, reg, iters, tol):
    """Symmetric entropic OT of a measure with itself (averaged fixed-point updates)."""
    loga = np.log(a)
    f = np.zeros_like(a)

    def half(eps, f):
        return 0.5 * (f - eps * logsumexp((f[None, :] - cost) / eps + loga[None, :], axis=1))

    eps = max(float(cost.max()), reg)
    while eps > reg:
        for _ in range(5):
            f = half(eps, f)
        eps = max(0.5 * eps, reg)
    residual = np.inf
    for it in range(iters):
        f = half(reg, f)
        if it % 10 == 9 or it == iters - 1:
            logp = (f[:, None] + f[None, :] - cost) / reg + loga[:, None] + loga[None, :]
            residual = float(np.abs(np.exp(logsumexp(logp, axis=1)) - a).sum())
            if residual < tol:
                break
    return float(2.0 * a @ f), residual


def w2_entropic(mu, nu, reg, iters=1000, tol=1e-4):
    """Debiased Sinkhorn divergence, square-rooted.

    ``reg`` is the absolute entropic regularization on the squared-distance
    cost. ``residual`` is the worst L1 marginal violation over the three
    transport problems; ``converged`` is ``residual < tol``.
    """
    if not reg > 0:
        raise ContractError(f"reg must be positive, got {reg}")
    if iters < 1:
        raise ContractError("iters must be >= 1")
    if mu.dim != nu.dim:
        raise ContractError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    x, y = mu.points, nu.points
    ot_xy, r1 = _sinkhorn_cost(mu.weights, nu.weights, sq_cost_matrix(x, y), reg, iters, tol)
    ot_xx, r2 = _sinkhorn_self(mu.weights, sq_cost_matrix(x, x), reg, iters, tol)
    ot_yy, r3 = _sinkhorn_self(nu.weights, sq_cost_matrix(y, y), reg, iters, tol)
    div = ot_xy - 0.5 * (ot_xx + ot_yy)
    residual = max(r1, r2, r3)
    return EntropicW2(float(np.sqrt(max(div, 0.0))), residual < tol, residual)


def read_cloud_csv(path):
    """Read a point cloud: one row per point, one column per coordinate.

    A first row that does not parse as numbers is treated as a header.
    """
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if i == 0 and not rows:
                    continue
                raise ContractError(f"{path}: row {i + 1} is not numeric")
    if not rows:
        raise ContractError(f"{path}: no points")
    if len({len(r) for r in rows}) != 1:
        raise ContractError(f"{path}: rows have differing numbers of coordinates")
    return EmpiricalMeasure(np.array(rows))


def write_cloud_csv(path, mu):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(mu.dim)])
        for p in mu.points:
            w.writerow([repr(float(v)) for v in p])
