"""Acceptance gate: one test per criterion, each recording a pass/fail line in the terminal summary."""

import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mvcosine import (
    BihariProblem,
    CosineFamily,
    EmpiricalMeasure,
    InitialLaw,
    JumpSpec,
    SolveConfig,
    SpectralGenerator,
    TimeGrid,
    averaging_sweep,
    bihari_bound,
    cauchy_diagnostic,
    check_growth_lipschitz,
    gronwall_check,
    identity_residuals,
    kunita_p2_check,
    make_averaging_model,
    make_linear_model,
    solve_euler_mild,
    solve_standard,
    uniform_bound_diagnostic,
    w2_exact,
    w2_quantile_1d,
)
from mvcosine.cli import main
from mvcosine.config import load_config, parse_config
from mvcosine.cosine_family import random_time_pairs
from mvcosine.inequalities import power_inequality_fuzz

from conftest import CONFIGS, brute_force_w2, linear_family, random_orthogonal, record_acceptance

# Two-dimensional linear model with a rotated eigenbasis; fixed before any run.
ROTATED_2D = """dim = 2
eigenvalues = -1, -4
basis = 0.8253356149, -0.5646424734, 0.5646424734, 0.8253356149
b = -0.5
c = 0.5
sigma = 0.3
j0 = 0.3
jump_intensity = 2.0
jump_mark = gauss 0 1
x0_mean = 1.0
x0_std = 0.2
x1_std = 0.2
n_steps = 128
n_particles = 4000
seed = 11
"""


def test_criterion_1_cosine_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst, ok = 0.0, True
    for d in (1, 4, 16):
        lam = -rng.uniform(0.0, 100.0, d)
        lam[0] = 0.0 if d > 1 else lam[0]
        fam = CosineFamily(SpectralGenerator(lam, basis=random_orthogonal(rng, d)), 1.0)
        res = identity_residuals(fam, random_time_pairs(1.0, 1000, seed=d), trials=32, seed=d)
        worst = max([worst] + [v for _, v in res.rows()])
        ok &= res.passed(1e-8)
    elapsed = time.perf_counter() - start
    passed = ok and worst <= 1e-8 and elapsed < 10
    record_acceptance(1, passed, f"max residual {worst:.2e} (tol 1e-8), {elapsed:.1f}s (< 10s)")
    assert passed


def test_criterion_2_w2_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_perm = 0.0
    for _ in range(200):
        n, d = rng.integers(1, 8), rng.integers(1, 4)
        x, y = rng.standard_normal((n, d)), rng.standard_normal((n, d)) + rng.standard_normal(d)
        worst_perm = max(worst_perm, abs(w2_exact(EmpiricalMeasure(x), EmpiricalMeasure(y)) - brute_force_w2(x, y)))
    worst_q = 0.0
    for _ in range(200):
        n = rng.integers(1, 60)
        mu, nu = EmpiricalMeasure(rng.standard_normal((n, 1))), EmpiricalMeasure(2 * rng.standard_normal((n, 1)) + 1)
        worst_q = max(worst_q, abs(w2_quantile_1d(mu, nu) - w2_exact(mu, nu)))
    elapsed = time.perf_counter() - start
    passed = worst_perm <= 1e-10 and worst_q <= 1e-10 and elapsed < 30
    record_acceptance(2, passed, f"vs permutations {worst_perm:.1e}, quantile vs exact {worst_q:.1e}, {elapsed:.1f}s (< 30s)")
    assert passed


def test_criterion_3_linear_mean_oracle():
    start = time.perf_counter()
    a = 2.0
    cs, fam = make_linear_model(a, 0.0, a * a, 0.0, 0.0), linear_family(a)
    init = InitialLaw(1.0, 0.5, 0.5, 0.5)
    truth = 1.0 + 0.5 * 1.0

    def run(h, n, seed):
        ens = solve_euler_mild(cs, fam, SolveConfig(TimeGrid(1.0, int(round(1 / h))), n, seed=seed, initial=init))
        m = ens.mean()[-1, 0]
        return abs(m - truth), abs(m - (ens.x0.mean() + ens.x1.mean()))

    # constant calibrated on coarser settings and seeds not used below
    cal = [run(h, n, s)[0] / (h + n**-0.5) for s in range(100, 105) for h, n in ((0.04, 250), (0.02, 500))]
    C = 1.5 * max(cal)
    results = [(h, n, *run(h, n, 7)) for h, n in ((1e-2, 1000), (5e-3, 4000))]
    within = all(tot <= C * (h + n**-0.5) for h, n, tot, _ in results)
    halving = results[0][3] / results[1][3]
    elapsed = time.perf_counter() - start
    passed = within and 1.6 <= halving <= 2.5 and elapsed < 120
    detail = ", ".join(f"h={h:g} N={n}: {tot:.4f} <= {C * (h + n ** -0.5):.4f}" for h, n, tot, _ in results)
    record_acceptance(3, passed, f"C={C:.2f}; {detail}; discretization ratio {halving:.2f}; {elapsed:.1f}s (< 120s)")
    assert passed


def test_criterion_4_cauchy_table():
    start = time.perf_counter()
    cfg = load_config(CONFIGS / "linear.cfg")
    table = cauchy_diagnostic(cfg.coefficients(), cfg.family(), cfg.solve_config(), [4, 8, 16, 32])
    d = table.values
    elapsed = time.perf_counter() - start
    passed = bool(np.all(np.diff(d) < 0)) and d[-1] <= d[0] / 2 and cfg.n_particles == 4000 and elapsed < 300
    record_acceptance(4, passed, f"D = {', '.join(f'{v:.3e}' for v in d)}; {elapsed:.1f}s (< 300s)")
    assert passed


def test_criterion_5_uniform_bound():
    models = [("1-D", load_config(CONFIGS / "linear.cfg")), ("2-D rotated", parse_config(ROTATED_2D))]
    parts, ok = [], True
    for name, cfg in models:
        cs = cfg.coefficients()
        bounds = check_growth_lipschitz(cs, cfg.wiener(), cfg.jumps(), dim=cfg.dim)
        rep = uniform_bound_diagnostic(cs, cfg.family(), cfg.solve_config(), [4, 8, 16, 32])
        ok &= bounds.passed and rep.passed
        parts.append(f"{name}: Welch p={rep.welch_p:.2f}, means {rep.means.min():.3f}..{rep.means.max():.3f}, growth/Lipschitz check {'ok' if bounds.passed else 'FAILED'}")
    record_acceptance(5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_averaging():
    start = time.perf_counter()
    a, b, kappa = 2.0, -0.5, 1.0
    eps_list = [0.1, 0.05, 0.025, 0.0125]
    cs, avg = make_averaging_model(a, b, kappa, 0.0, 0.0, 0.0)
    fam = linear_family(a, b)
    cfg = SolveConfig(TimeGrid(1.0, 2000), 1, initial=InitialLaw(1.0, 0.0, 0.0, 0.0))
    t = cfg.grid.nodes
    L = 1.0 * min(eps_list) ** 0.5
    oracle, sim = [], []
    for eps in eps_list:
        def rhs(extra, eps=eps):
            return lambda s, y: [y[1], -a * a * y[0] + b * y[1] + eps * kappa * (1 + extra(s)) * y[0]]

        x = solve_ivp(rhs(lambda s: math.exp(-s)), (0, 1), [1.0, 0.0], dense_output=True, rtol=1e-12, atol=1e-14).sol(t)[0]
        z = solve_ivp(rhs(lambda s: 0.0), (0, 1), [1.0, 0.0], dense_output=True, rtol=1e-12, atol=1e-14).sol(t)[0]
        keep = t <= L * eps**-0.5 * (1 + 1e-12)
        oracle.append(np.max((x - z)[keep] ** 2))
        d = solve_standard(cs, fam, cfg, eps).paths - solve_standard(avg.as_coefficient_set(), fam, cfg, eps).paths
        sim.append(np.max(d[0, keep, 0] ** 2))
    oracle, sim = np.array(oracle), np.array(sim)
    rel = float(np.max(np.abs(sim / oracle - 1)))
    det_ok = bool(np.all(np.diff(oracle) < 0)) and rel <= 0.01

    ncfg = load_config(CONFIGS / "averaging.cfg")
    ncs, navg = ncfg.averaging_pair()
    rep = averaging_sweep(ncs, navg, ncfg.family(), ncfg.solve_config(), ncfg.eps, alpha=ncfg.alpha)
    elapsed = time.perf_counter() - start
    passed = det_ok and rep.passed and ncfg.n_particles == 10_000 and elapsed < 600
    record_acceptance(
        6,
        passed,
        f"deterministic vs ODE max rel {rel:.2%}; noisy slope {rep.slope:.3f} CI ({rep.slope_ci[0]:.3f}, {rep.slope_ci[1]:.3f}), "
        f"monotone {rep.monotone}; {elapsed:.1f}s (< 600s)",
    )
    assert passed


def test_criterion_7_inequalities():
    passed_n, failed = power_inequality_fuzz(1_000_000, seed=7)
    rng = np.random.default_rng(7)
    worst_g = 0.0
    for _ in range(50):
        u0, c0, c1, t = rng.uniform(0.01, 10), rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0.01, 2)
        worst_g = max(worst_g, gronwall_check(u0, lambda s, c0=c0, c1=c1: c0 + c1 * s, t).rel_diff)
    worst_sq = 0.0
    for t in np.linspace(0, 5, 11):
        got, _ = bihari_bound(BihariProblem(1.0, lambda s: 1.0, np.sqrt), t)
        worst_sq = max(worst_sq, abs(got - (1 + t / 2) ** 2) / (1 + t / 2) ** 2)
    k = kunita_p2_check(JumpSpec(2.0, "gauss", (0.5, 1.0)), 1.0, integrand=lambda z: z[:, 0], replicas=10_000, seed=7)
    margin = k.sup_moment / k.bound
    passed = failed == 0 and worst_g <= 1e-10 and worst_sq <= 1e-8 and k.holds and k.isometry_ok and margin < 0.9
    record_acceptance(
        7,
        passed,
        f"fuzz {passed_n} ok / {failed} failed; Gronwall {worst_g:.1e}; sqrt case {worst_sq:.1e}; "
        f"Doob sup moment {k.sup_moment:.3f} vs bound {k.bound:.3f}",
    )
    assert passed


SMALL_LINEAR = """dim = 1
a = 2.0
b = -0.5
c = 1.0
sigma = 0.5
j0 = 0.5
jump_intensity = 2.0
jump_mark = gauss 0 1
x0_mean = 1.0
x0_std = 0.2
x1_std = 0.2
n_steps = 32
n_particles = 300
seed = 21
k_list = 2, 4, 8
"""

SMALL_AVERAGING = """dim = 1
model = averaging
a = 2.0
b = -0.5
kappa = 1.0
sigma = 0.5
j0 = 0.5
jump_intensity = 2.0
jump_mark = gauss 0 1
x0_mean = 1.0
x0_std = 0.2
n_steps = 40
n_particles = 500
seed = 22
eps = 0.1, 0.05, 0.025
"""


def _strip(text):
    return [line for line in text.splitlines() if not line.startswith("# wall_time=")]


def test_criterion_8_thread_determinism(tmp_path, capsys):
    lin, avg = tmp_path / "lin.cfg", tmp_path / "avg.cfg"
    lin.write_text(SMALL_LINEAR)
    avg.write_text(SMALL_AVERAGING)
    cloud_a, cloud_b = tmp_path / "a.csv", tmp_path / "b.csv"
    rng = np.random.default_rng(8)
    cloud_a.write_text("x0,x1\n" + "\n".join(f"{u!r},{v!r}" for u, v in rng.standard_normal((20, 2))) + "\n")
    cloud_b.write_text("x0,x1\n" + "\n".join(f"{u!r},{v!r}" for u, v in rng.standard_normal((20, 2)) + 1) + "\n")

    commands = {
        "identities": (["identities", "--config", str(lin), "--points", "200", "--trials", "8"], ["identities.csv"]),
        "simulate": (["simulate", "--config", str(lin)], ["paths.csv", "moments.csv"]),
        "cauchy": (["cauchy", "--config", str(lin)], ["cauchy.csv"]),
        "averaging": (["averaging", "--config", str(avg)], ["averaging.csv"]),
        "w2": (["w2", str(cloud_a), str(cloud_b), "--entropic", "0.1"], None),
        "check-inequalities": (["check-inequalities", "--fuzz", "1e5"], None),
    }
    mismatched = []
    for name, (args, files) in commands.items():
        outputs = []
        for threads in (1, 4, 8):
            run_dir = tmp_path / f"{name}-{threads}"
            extra = ["--seed", "5", "--threads", str(threads)]
            if files is not None:
                extra += ["--out", str(run_dir / files[0])]
                if name == "simulate":
                    extra += ["--moments", str(run_dir / files[1])]
            rc = main(args + extra)
            stdout = capsys.readouterr().out
            produced = [_strip((run_dir / f).read_text()) for f in files] if files else [_strip(stdout)]
            outputs.append((rc, produced))
        if not all(o == outputs[0] for o in outputs[1:]):
            mismatched.append(name)
    passed = not mismatched
    detail = f"{len(commands)} subcommands identical across threads 1/4/8" if passed else f"differs: {', '.join(mismatched)}"
    record_acceptance(8, passed, detail)
    assert passed


@pytest.mark.parametrize("threads", [1, 8])
def test_seed_fixed_runs_repeat(threads):
    cfg = parse_config(SMALL_LINEAR)
    sc = cfg.solve_config(threads=threads)
    first = solve_euler_mild(cfg.coefficients(), cfg.family(), sc).paths
    again = solve_euler_mild(cfg.coefficients(), cfg.family(), sc).paths
    assert first.tobytes() == again.tobytes()
