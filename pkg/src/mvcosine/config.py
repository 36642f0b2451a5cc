"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment. Lists are comma
separated. Unknown and duplicate keys are errors, as are out-of-range
values. ``dim`` is required, plus either ``eigenvalues`` or the model
frequency ``a`` (which sets every eigenvalue to ``-a^2``).
"""

import importlib
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .averaging import AveragedCoefficients, make_averaging_model
from .coefficients import Modulus, linear_generator_eigenvalues, make_linear_model
from .cosine_family import CosineFamily, SpectralGenerator
from .exceptions import ConfigError, ContractError
from .grid import TimeGrid
from .noise import JumpSpec, QWienerSpec
from .solver import InitialLaw, SolveConfig

MODELS = ("linear", "averaging", "custom-plugin")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    out = []
    for v in text.split(","):
        if v.strip():
            f = float(v)
            if f != int(f):
                raise ValueError(f"{v.strip()} is not an integer")
            out.append(int(f))
    return out


def _int(text):
    vals = _ints(text)
    if len(vals) != 1:
        raise ValueError("expected one integer")
    return vals[0]


def _scalar_or_list(text):
    vals = _floats(text)
    return vals[0] if len(vals) == 1 else vals


@dataclass
class ExperimentConfig:
    dim: int = None
    eigenvalues: Optional[list] = None
    basis: Optional[list] = None
    damping: object = None
    damping_bound: Optional[float] = None
    T: float = 1.0
    n_steps: int = 100
    n_particles: int = 1000
    seed: int = 0
    out_dir: str = "."
    scheme: str = "euler_mild"
    k: int = 1
    iters: int = 8
    k_list: list = field(default_factory=lambda: [4, 8, 16, 32])
    x0_mean: object = 0.0
    x0_std: float = 0.0
    x1_mean: object = 0.0
    x1_std: float = 0.0
    q_eigenvalues: Optional[list] = None
    jump_intensity: float = 0.0
    jump_mark: str = "dirac 0"
    model: str = "linear"
    plugin: Optional[str] = None
    a: Optional[float] = None
    b: Optional[float] = None
    c: float = 0.0
    sigma: float = 0.0
    j0: float = 0.0
    kappa: float = 0.0
    modulus: str = "linear"
    delta: float = 0.1
    gamma: float = 1.0
    eps: list = field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])
    alpha: float = 0.5
    L: Optional[float] = None
    w2_mode: str = "exact"
    compensator_samples: int = 10_000

    # Built objects

    def generator(self):
        lam = self.eigenvalues
        if lam is None:
            lam = linear_generator_eigenvalues(self.a, self.dim)
        damping = self.damping if self.damping is not None else (self.b or 0.0)
        basis = None if self.basis is None else np.asarray(self.basis, dtype=float).reshape(self.dim, self.dim)
        if isinstance(damping, list):
            damping = np.asarray(damping, dtype=float).reshape(self.dim, self.dim)
        return SpectralGenerator(lam, basis=basis, damping=damping, damping_bound=self.damping_bound)

    def family(self):
        return CosineFamily(self.generator(), self.T)

    def grid(self):
        return TimeGrid(self.T, self.n_steps)

    def wiener(self):
        q = self.q_eigenvalues if self.q_eigenvalues is not None else [1.0] * self.dim
        return QWienerSpec(q)

    def jumps(self):
        if self.jump_intensity == 0:
            return None
        kind, *params = self.jump_mark.split()
        return JumpSpec(self.jump_intensity, kind, tuple(float(p) for p in params), mark_dim=self.dim)

    def initial(self):
        return InitialLaw(self.x0_mean, self.x0_std, self.x1_mean, self.x1_std)

    def modulus_obj(self):
        return Modulus(self.modulus, gamma=self.gamma, delta=self.delta)

    def _plugin(self):
        mod_name, _, func = self.plugin.partition(":")
        try:
            factory = getattr(importlib.import_module(mod_name), func)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot load plugin {self.plugin!r}: {exc}", key="plugin") from exc
        return factory(self)

    def coefficients(self):
        """The coefficient set of the configured model."""
        if self.model == "custom-plugin":
            out = self._plugin()
            return out[0] if isinstance(out, tuple) else out
        if self.model == "averaging":
            return self.averaging_pair()[0]
        a = self.a if self.a is not None else math.sqrt(-self.generator().eigenvalues[0])
        cs = make_linear_model(a, self.b or 0.0, self.c, self.sigma, self.j0, self.dim, self.wiener(), self.jumps())
        if self.modulus != "linear" or self.gamma != 1.0:
            cs.modulus = self.modulus_obj()
        return cs

    def averaging_pair(self):
        """``(cs, avg)``; a time-independent model is its own average."""
        if self.model == "averaging":
            a = self.a if self.a is not None else 0.0
            return make_averaging_model(a, self.b or 0.0, self.kappa, self.c, self.sigma, self.j0, self.dim, self.wiener(), self.jumps())
        if self.model == "custom-plugin":
            out = self._plugin()
            if isinstance(out, tuple):
                return out
            return out, AveragedCoefficients.from_time_independent(out)
        cs = self.coefficients()
        return cs, AveragedCoefficients.from_time_independent(cs)

    def solve_config(self, threads=1, seed=None):
        return SolveConfig(
            self.grid(),
            self.n_particles,
            seed=self.seed if seed is None else seed,
            scheme=self.scheme,
            k=self.k,
            iters=self.iters,
            wiener=self.wiener(),
            jumps=self.jumps(),
            initial=self.initial(),
            threads=threads,
            compensator_samples=self.compensator_samples,
            w2_mode=self.w2_mode,
        )


PARSERS = {
    "dim": _int,
    "eigenvalues": _floats,
    "basis": _floats,
    "damping": _scalar_or_list,
    "damping_bound": float,
    "T": float,
    "n_steps": _int,
    "n_particles": _int,
    "seed": _int,
    "out_dir": str,
    "scheme": str,
    "k": _int,
    "iters": _int,
    "k_list": _ints,
    "x0_mean": _scalar_or_list,
    "x0_std": float,
    "x1_mean": _scalar_or_list,
    "x1_std": float,
    "q_eigenvalues": _floats,
    "jump_intensity": float,
    "jump_mark": str,
    "model": str,
    "plugin": str,
    "a": float,
    "b": float,
    "c": float,
    "sigma": float,
    "j0": float,
    "kappa": float,
    "modulus": str,
    "delta": float,
    "gamma": float,
    "eps": _floats,
    "alpha": float,
    "L": float,
    "w2_mode": str,
    "compensator_samples": _int,
}
assert set(PARSERS) == {f.name for f in fields(ExperimentConfig)}


def _check(cfg, lines):
    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", line=lines.get(key), key=key)

    if cfg.dim is None:
        raise ConfigError("missing required key 'dim'", key="dim")
    if cfg.eigenvalues is None and cfg.a is None:
        raise ConfigError("missing required key 'eigenvalues' (or model frequency 'a')", key="eigenvalues")
    if cfg.dim < 1:
        fail("dim", "must be >= 1")
    if cfg.eigenvalues is not None:
        if len(cfg.eigenvalues) != cfg.dim:
            fail("eigenvalues", f"expected {cfg.dim} values, got {len(cfg.eigenvalues)}")
        if any(v > 0 for v in cfg.eigenvalues):
            fail("eigenvalues", "must all be <= 0")
        if cfg.a is not None and not np.allclose(cfg.eigenvalues, -cfg.a**2, rtol=1e-12, atol=0):
            fail("a", "conflicts with eigenvalues (eigenvalues must equal -a^2)")
    if cfg.damping is not None and cfg.b is not None and cfg.damping != cfg.b:
        fail("b", "conflicts with damping")
    if isinstance(cfg.damping, list) and len(cfg.damping) != cfg.dim**2:
        fail("damping", f"a matrix needs {cfg.dim ** 2} row-major entries")
    if cfg.basis is not None and len(cfg.basis) != cfg.dim**2:
        fail("basis", f"needs {cfg.dim ** 2} row-major entries")
    if not (math.isfinite(cfg.T) and cfg.T > 0):
        fail("T", "must be > 0")
    if cfg.n_steps < 1:
        fail("n_steps", "must be >= 1")
    if cfg.n_particles < 1:
        fail("n_particles", "must be >= 1")
    if cfg.scheme not in ("euler_mild", "caratheodory", "picard"):
        fail("scheme", "must be euler_mild, caratheodory or picard")
    if cfg.k < 0:
        fail("k", "must be >= 0")
    if cfg.iters < 1:
        fail("iters", "must be >= 1")
    if any(k < 1 for k in cfg.k_list) or len(cfg.k_list) < 2:
        fail("k_list", "needs at least two integers >= 1")
    for key in ("x0_std", "x1_std", "jump_intensity"):
        if getattr(cfg, key) < 0:
            fail(key, "must be >= 0")
    for key in ("x0_mean", "x1_mean"):
        val = getattr(cfg, key)
        if isinstance(val, list) and len(val) != cfg.dim:
            fail(key, f"expected 1 or {cfg.dim} values")
    if cfg.q_eigenvalues is not None and any(q < 0 for q in cfg.q_eigenvalues):
        fail("q_eigenvalues", "must all be >= 0")
    kind, *params = cfg.jump_mark.split() or [""]
    need = {"dirac": 1, "gauss": 2, "uniform": 2}.get(kind)
    if need is None or len(params) != need:
        fail("jump_mark", "expected 'dirac z0', 'gauss m s' or 'uniform a b'")
    if cfg.model not in MODELS:
        fail("model", f"must be one of {', '.join(MODELS)}")
    if cfg.model == "custom-plugin" and not cfg.plugin:
        raise ConfigError("model = custom-plugin needs 'plugin = module:function'", key="plugin")
    if cfg.modulus not in ("linear", "log", "loglog"):
        fail("modulus", "must be linear, log or loglog")
    if any(not 0 < e <= 1 for e in cfg.eps):
        fail("eps", "values must lie in (0, 1]")
    if not 0 < cfg.alpha < 1:
        fail("alpha", "must lie in (0, 1)")
    if cfg.w2_mode not in ("exact", "entropic"):
        fail("w2_mode", "must be exact or entropic")
    try:
        cfg.generator()
        cfg.modulus_obj()
        cfg.wiener()
        cfg.jumps()
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text):
    """Parse and validate; the first error raises ``ConfigError`` with its line number."""
    values, lines = {}, {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=no)
        if key not in PARSERS:
            raise ConfigError(f"unknown key {key!r}", line=no, key=key)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", line=no, key=key)
        try:
            values[key] = PARSERS[key](value)
        except (ValueError, IndexError):
            raise ConfigError(f"bad value {value!r} for {key!r}", line=no, key=key) from None
        lines[key] = no
    cfg = ExperimentConfig(**values)
    _check(cfg, lines)
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
