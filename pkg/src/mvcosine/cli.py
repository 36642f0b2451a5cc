"""Command line entry point.

Every subcommand writes a CSV with a header row and a ``#`` metadata footer
(seed, version, wall time). Exit status: 0 when the diagnostic passes, 1
when it fails, 2 on usage or configuration errors.
"""

import argparse
import csv
import io
import os
import sys
import time

import numpy as np

from . import __version__
from .averaging import averaging_sweep
from .config import load_config
from .cosine_family import CosineFamily, identity_residuals, random_time_pairs, scalar_family
from .exceptions import ConfigError, ContractError, MVCosineError
from .inequalities import BihariProblem, bihari_bound, gronwall_check, kunita_p2_check, power_inequality_fuzz
from .measure import read_cloud_csv, w2_entropic, w2_exact
from .noise import JumpSpec
from .solver import cauchy_diagnostic, solve

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows, seed, started, trailer=()):
    """Write rows, then optional trailer rows, then the metadata footer."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    for row in trailer:
        w.writerow([_fmt(v) for v in row])
    buf.write(f"# seed={seed}\n# version={__version__}\n# wall_time={time.perf_counter() - started:.3f}\n")
    if path == "-":
        sys.stdout.write(buf.getvalue())
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def _out(cfg, name, given):
    if given:
        return given
    return os.path.join(cfg.out_dir if cfg is not None else ".", name)


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_identities(args, started):
    if args.config:
        cfg = _config(args)
        fam = CosineFamily(cfg.generator(), cfg.T)
        seed = cfg.seed
    else:
        cfg = None
        fam = scalar_family(args.eigenvalue, args.horizon)
        seed = args.seed or 0
    res = identity_residuals(fam, random_time_pairs(fam.horizon, args.points, seed), trials=args.trials, seed=seed)
    rows = [(name, value, value <= args.tol) for name, value in res.rows()]
    rows.append(("sine_lipschitz_over_ns", res.sine_lipschitz / res.ns_bound, res.sine_lipschitz <= res.ns_bound * (1 + 1e-12)))
    rows.append(("m1_grid_over_bound", res.m1_grid / res.m1_bound, res.m1_grid <= res.m1_bound))
    write_csv(_out(cfg, "identities.csv", args.out), ["identity", "residual", "pass"], rows, seed, started)
    return EXIT_PASS if res.passed(args.tol) else EXIT_FAIL


def cmd_simulate(args, started):
    cfg = _config(args)
    scfg = cfg.solve_config(threads=args.threads)
    ens = solve(cfg.coefficients(), cfg.family(), scfg)
    d = ens.dim
    nodes = ens.grid.nodes
    rows = ((i, nodes[j], *ens.paths[i, j]) for i in range(ens.n_particles) for j in range(nodes.size))
    write_csv(_out(cfg, "paths.csv", args.out), ["particle", "t"] + [f"x{c}" for c in range(d)], rows, cfg.seed, started)
    header = ["t"] + [f"mean{c}" for c in range(d)] + ["second_moment", "esup_running"]
    write_csv(_out(cfg, "moments.csv", args.moments), header, ens.moments(), cfg.seed, started)
    return EXIT_PASS


def cmd_cauchy(args, started):
    cfg = _config(args)
    ks = _int_list(args.k) if args.k else cfg.k_list
    table = cauchy_diagnostic(cfg.coefficients(), cfg.family(), cfg.solve_config(threads=args.threads), ks)
    write_csv(_out(cfg, "cauchy.csv", args.out), ["k_next", "k_prev", "D", "stderr"], table.rows(), cfg.seed, started)
    return EXIT_PASS if table.passed else EXIT_FAIL


def cmd_averaging(args, started):
    cfg = _config(args)
    eps = _float_list(args.eps) if args.eps else cfg.eps
    alpha = args.alpha if args.alpha is not None else cfg.alpha
    cs, avg = cfg.averaging_pair()
    rep = averaging_sweep(cs, avg, cfg.family(), cfg.solve_config(threads=args.threads), eps, alpha=alpha, L=cfg.L)
    trailer = [("slope", "", rep.slope, rep.slope_ci[0], rep.slope_ci[1])]
    write_csv(_out(cfg, "averaging.csv", args.out), ["eps", "horizon", "error", "ci_low", "ci_high"], rep.rows(), cfg.seed, started, trailer)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_w2(args, started):
    mu, nu = read_cloud_csv(args.file_a), read_cloud_csv(args.file_b)
    if args.entropic is not None:
        res = w2_entropic(mu, nu, args.entropic)
        row = ("entropic", res.value, res.converged, res.residual)
        ok = res.converged
    else:
        row = ("exact", w2_exact(mu, nu), True, 0.0)
        ok = True
    write_csv(args.out or "-", ["method", "w2", "converged", "residual"], [row], args.seed or 0, started)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_inequalities(args, started):
    seed = args.seed or 0
    n = int(float(args.fuzz))
    passed, failed = power_inequality_fuzz(n, seed=seed)
    rows = [("power_inequality", passed, failed, failed == 0)]
    g = gronwall_check(2.0, lambda s: 1.0 + s, 1.5)
    rows.append(("bihari_vs_gronwall_rel", g.rel_diff, "", g.rel_diff <= 1e-10))
    sq, _ = bihari_bound(BihariProblem(1.0, lambda s: 1.0, np.sqrt), 2.0)
    err = abs(sq - 4.0) / 4.0
    rows.append(("bihari_sqrt_closed_form_rel", err, "", err <= 1e-8))
    k = kunita_p2_check(JumpSpec(2.0, "gauss", (0.5, 1.0)), 1.0, seed=seed)
    rows.append(("kunita_p2_sup_moment", k.sup_moment, k.bound, k.holds and k.isometry_ok))
    header = ["check", "value", "reference", "pass"]
    write_csv(args.out or "-", header, rows, seed, started)
    return EXIT_PASS if all(r[-1] for r in rows) else EXIT_FAIL


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--k expects comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")

    p = argparse.ArgumentParser(prog="mvcosine", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("identities", parents=[common], help="cosine-family identity residuals")
    s.add_argument("--config")
    s.add_argument("--eigenvalue", type=float, default=-1.0, help="scalar family used without --config")
    s.add_argument("--horizon", type=float, default=1.0)
    s.add_argument("--points", type=int, default=1000)
    s.add_argument("--trials", type=int, default=32)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--out")
    s.set_defaults(func=cmd_identities)

    s = sub.add_parser("simulate", parents=[common], help="particle simulation")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="paths CSV")
    s.add_argument("--moments", help="moments CSV")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("cauchy", parents=[common], help="delayed-scheme Cauchy table")
    s.add_argument("--config", required=True)
    s.add_argument("--k", help="comma-separated increasing indices")
    s.add_argument("--out")
    s.set_defaults(func=cmd_cauchy)

    s = sub.add_parser("averaging", parents=[common], help="averaging eps-sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--eps", help="comma-separated decreasing values")
    s.add_argument("--alpha", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_averaging)

    s = sub.add_parser("w2", parents=[common], help="W2 distance between two point-cloud CSVs")
    s.add_argument("file_a")
    s.add_argument("file_b")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", help="optimal assignment (default)")
    g.add_argument("--entropic", type=float, metavar="REG", help="debiased Sinkhorn with this regularization")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_w2)

    s = sub.add_parser("check-inequalities", parents=[common], help="inequality fuzz and bounds")
    s.add_argument("--fuzz", default="1e6", help="number of random tuples")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_inequalities)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    started = time.perf_counter()
    try:
        return args.func(args, started)
    except (ConfigError, ContractError, OSError) as exc:
        print(f"mvcosine {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MVCosineError as exc:
        print(f"mvcosine {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
