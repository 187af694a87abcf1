"""Command-line front end.

Exit codes: 0 success, 1 example checks failed, 2 config or usage error,
3 resource bound, 4 numeric contract violation, 5 estimator precondition.
"""
import argparse
import io
import sys

import numpy as np

from . import __version__
from . import attractor as at
from . import pressure as pr
from .config import load_config
from .errors import CodeTreeError, ConfigError

TOOL = "codetree-fractals"
AGREE_TOL = 1e-3


class UsageError(ConfigError):
    pass


# ---------------------------------------------------------------------------
# argument parsing helpers


def parse_alpha_grid(text: str) -> np.ndarray:
    """``a:b:step`` (inclusive), a single value, or a comma list."""
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(round((b - a) / step)) + 1
            grid = a + step * np.arange(n)
            return np.round(grid, 12)
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise UsageError(f"bad alpha grid {text!r}; use a:b:step or a comma list") from None


def parse_depths(text: str) -> list[int]:
    """``a..b`` (inclusive) or a comma list of positive integers."""
    try:
        if ".." in text:
            a, b = (int(x) for x in text.split(".."))
            out = list(range(a, b + 1))
        else:
            out = [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"bad depth list {text!r}; use a..b or a comma list") from None
    if not out or min(out) < 1:
        raise UsageError("depths must be positive")
    return sorted(set(out))


def parse_scales(text: str) -> np.ndarray:
    """Comma list, or ``geom:top:ratio:count``."""
    try:
        if text.startswith("geom:"):
            _, top, ratio, count = text.split(":")
            return float(top) * float(ratio) ** np.arange(int(count))
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise UsageError(f"bad scale list {text!r}") from None


def header_fields(args, cfg=None, seed=None) -> dict:
    argv = [a for a in getattr(args, "_argv", []) if a is not None]
    fields = {"tool": TOOL, "version": __version__, "command": " ".join(argv)}
    if cfg is not None:
        fields["config"] = cfg.source
        fields["config_sha256"] = cfg.digest
    fields["seed"] = seed
    return fields


def _strip_out(argv):
    """argv without output paths, so headers do not depend on where files go."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("--out", "--figure"):
            skip = True
            continue
        if a.startswith("--out=") or a.startswith("--figure="):
            continue
        out.append(a)
    return out


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout
    return open(path, "w", newline="")


def _emit_table(path, header, columns, rows):
    buf = io.StringIO()
    buf.write(at.format_header(header))
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(v) for v in r) + "\n")
    fh = _open_out(path)
    try:
        fh.write(buf.getvalue())
    finally:
        if fh is not sys.stdout:
            fh.close()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _seed(args, cfg):
    """Master seed: the flag, else the config's, else 0 (always explicit in headers)."""
    if args.seed is not None:
        return args.seed
    return cfg.seed if cfg.seed is not None else 0


def _threads(args):
    return args.threads if args.threads is not None else pr.default_threads()


# ---------------------------------------------------------------------------
# subcommands


def cmd_pressure(args):
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    tree = cfg.generator.build(seed=seed)
    alphas = parse_alpha_grid(args.alpha_grid)
    depths = parse_depths(args.depths)
    curve = pr.pressure_curve(tree, alphas, depths, limit=args.limit)
    # values are exact partition sums of the built tree, so the bracket is degenerate
    rows = [(a, k, v, v, v, 0.0) for a, k, v in curve.rows()]
    _emit_table(args.out, header_fields(args, cfg, seed),
                ["alpha", "depth", "value", "lower", "upper", "std_error"], rows)
    if args.figure:
        from .plotting import plot_pressure_curve

        plot_pressure_curve(curve, args.figure)
    return 0


def cmd_dimzero(args):
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    cat = cfg.catalog
    hint = pr.alpha_max_hint(cat)
    lines = []
    if args.mode == "montecarlo":
        run = pr.kingman_run(cfg.generator, args.trials, args.necks, seed=seed,
                             threads=_threads(args))
        z, stat, syst = run.zero(hint)
        lines += [("alpha0", z.alpha), ("residual", z.residual), ("std_error", stat),
                  ("systematic", syst), ("trials", args.trials), ("necks_per_trial", args.necks)]
        summary = f"alpha0 = {z.alpha:.9f} +/- {stat:.3g} (stat) +/- {syst:.3g} (bracket)"
    else:
        tree = cfg.generator.build(seed=seed)
        depth = args.depth
        if not cat.is_similarity:
            depth = min(depth, args.affine_depth)
        depths = list(range(1, depth + 1))
        lo, hi = pr.proxy_functions(tree, depths, limit=args.limit)
        z_inf = pr.zero_of_pressure(lo, hint)
        z_sup = pr.zero_of_pressure(hi, hint)
        converged = abs(z_sup.alpha - z_inf.alpha) <= args.agree_tol
        lines += [("zero_p_inf_proxy", z_inf.alpha), ("zero_p_sup_proxy", z_sup.alpha),
                  ("depth", depth), ("converged", converged)]
        if converged:
            z = pr.zero_of_pressure(lambda a: pr.log_partition_sum(tree, a, depth, args.limit) / depth,
                                    hint)
            lines += [("alpha0", z.alpha), ("residual", z.residual)]
            summary = f"alpha0 = {z.alpha:.9f} (residual {z.residual:.3g})"
        else:
            summary = (f"pressure does not converge: proxy zeros {z_inf.alpha:.6f} (liminf) "
                       f"and {z_sup.alpha:.6f} (limsup) differ by more than {args.agree_tol:g}")
    print(summary)
    if args.out:
        _emit_table(args.out, header_fields(args, cfg, seed), ["quantity", "value"], lines)
    return 0


def _translation(args, cfg, seed):
    spec = args.translation
    if spec is None or spec == "config":
        a = cfg.assignment()
        if a is None:
            raise UsageError("config has no translations; pass --translation sample:RHO:SEED")
        return a, seed
    if spec.startswith("sample:"):
        try:
            _, rho, tseed = spec.split(":")
            return at.sample_translation(cfg.catalog.scheme, float(rho), int(tseed)), int(tseed)
        except ValueError:
            raise UsageError(f"bad translation spec {spec!r}; use sample:RHO:SEED") from None
    try:
        vals = [float(x) for x in spec.replace(";", ",").split(",")]
    except ValueError:
        raise UsageError(f"bad translation vector {spec!r}") from None
    sch = cfg.catalog.scheme
    if len(vals) != sch.class_count * sch.dimension:
        raise UsageError(f"translation vector needs {sch.class_count * sch.dimension} numbers "
                         f"(slots {', '.join(sch.slot_names)})")
    return sch.assignment(vals), seed


def cmd_render(args):
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    tree = cfg.generator.build(seed=seed)
    a, _ = _translation(args, cfg, seed)
    cloud = at.point_cloud(tree, a, args.depth, sample_budget=args.sample_budget,
                           seed=seed, limit=args.limit)
    head = header_fields(args, cfg, seed)
    if args.format == "pgm":
        if cloud.dimension != 2:
            raise UsageError("pgm output needs a 2-dimensional catalog")
        if args.out in (None, "-"):
            raise UsageError("pgm output needs --out FILE")
        at.write_pgm(args.out, cloud, args.size, head)
    else:
        if args.out in (None, "-"):
            sys.stdout.write(at.cloud_csv_text(cloud, head))
        else:
            at.write_cloud_csv(args.out, cloud, head)
    if args.figure:
        from .plotting import plot_cloud

        plot_cloud(cloud, args.figure)
    print(f"{len(cloud)} points, depth {cloud.depth}, resolution bound {cloud.diameter:.4g}",
          file=sys.stderr)
    return 0


def cmd_boxdim(args):
    cloud = at.read_cloud_csv(args.points)
    scales = parse_scales(args.scales) if args.scales else None
    est = at.box_counting_dimension(cloud, scales)
    print(f"box-counting slope = {est.slope:.6f}  r2 = {est.r2:.6f}")
    print("scales = " + ",".join(f"{s:.6g}" for s in est.scales))
    print("counts = " + ",".join(str(c) for c in est.counts))
    if args.out:
        _emit_table(args.out, header_fields(args), ["scale", "count"],
                    list(zip(est.scales, est.counts)))
    if args.figure:
        from .plotting import plot_box_counts

        plot_box_counts(est, args.figure)
    return 0


def cmd_example(args):
    from .examples import evaluate, example_catalog, to_config

    ex = example_catalog(args.name)
    if args.export_config:
        import json

        with open(args.export_config, "w") as fh:
            json.dump(to_config(ex), fh, indent=2)
    rows = evaluate(ex, args.run)
    w = max([len(r.quantity) for r in rows] + [8])
    print(f"{'quantity':<{w}}  {'expected':>14}  {'got':>14}  {'tolerance':>10}  "
          f"{'provenance':<10}  result")
    for r in rows:
        print(f"{r.quantity:<{w}}  {r.expected:>14.8g}  {r.got:>14.8g}  {r.tol:>10.3g}  "
              f"{r.provenance:<10}  {'PASS' if r.passed else 'FAIL'}"
              + (f"  ({r.detail})" if r.detail else ""))
    if args.out:
        _emit_table(args.out, header_fields(args), ["quantity", "expected", "got", "tolerance",
                                                    "provenance", "passed"],
                    [(r.quantity, r.expected, r.got, r.tol, r.provenance, r.passed) for r in rows])
    return 0 if all(r.passed for r in rows) else 1


def cmd_experiment(args):
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    rep = at.dimension_experiment(cfg.generator, args.rho, args.depth, args.translations,
                                  seed=seed, sample_budget=args.sample_budget,
                                  mc_trials=args.trials, mc_necks=args.necks,
                                  threads=_threads(args))
    print(f"pressure zero alpha0 = {rep.alpha0:.6f} +/- {rep.alpha0_error:.2g}; "
          f"min(alpha0, D) = {rep.target:.6f}")
    print(f"box-counting slope over {len(rep.slopes)} translations: mean {rep.mean_slope:.4f}, "
          f"std {rep.std_slope:.4f}")
    if rep.outside_hypotheses:
        print("flag: max singular value >= 1/2, outside the hypotheses; "
              "equality with alpha0 is not expected")
    if args.out:
        head = header_fields(args, cfg, seed)
        head["alpha0"] = repr(rep.alpha0)
        head["outside_hypotheses"] = rep.outside_hypotheses
        _emit_table(args.out, head, ["translation", "box_slope", "r2"], list(rep.rows()))
    if args.figure:
        from .plotting import plot_dimension_report

        plot_dimension_report(rep, args.figure)
    return 0


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="codetree", description="Affine code tree fractals: pressure, "
                "pressure zeros, attractor rendering and box counting.")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help="JSON config file or example:NAME")
            sp.add_argument("--seed", type=int, default=None,
                            help="master seed (defaults to the config's generator seed)")
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default $CODETREE_THREADS or 1)")
        sp.add_argument("--limit", type=float, default=1e7,
                        help="maximum number of enumerated words")

    sp = sub.add_parser("pressure", help="log S(k, alpha)/k on a grid")
    common(sp)
    sp.add_argument("--alpha-grid", default="0:2:0.1")
    sp.add_argument("--depths", default="1..12")
    sp.add_argument("--figure", default=None, help="write a plot of the curves")
    sp.set_defaults(func=cmd_pressure)

    sp = sub.add_parser("dimzero", help="zero of the pressure")
    common(sp)
    sp.add_argument("--mode", choices=["exact", "montecarlo"], default="exact")
    sp.add_argument("--depth", type=int, default=4096,
                    help="deepest level for exact mode on similarity catalogs")
    sp.add_argument("--affine-depth", type=int, default=12,
                    help="deepest level for exact mode on affine catalogs")
    sp.add_argument("--agree-tol", type=float, default=AGREE_TOL,
                    help="max gap between the proxy zeros to report a single zero")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--necks", type=int, default=50, help="necks per Monte Carlo trial")
    sp.set_defaults(func=cmd_dimzero)

    sp = sub.add_parser("render", help="attractor point cloud as CSV or PGM")
    common(sp)
    sp.add_argument("--translation", default=None,
                    help="config | sample:RHO:SEED | comma list of D*A numbers")
    sp.add_argument("--depth", type=int, default=8)
    sp.add_argument("--format", choices=["csv", "pgm"], default="csv")
    sp.add_argument("--size", type=int, default=512, help="PGM width and height")
    sp.add_argument("--sample-budget", type=int, default=None,
                    help="random paths to draw when full enumeration is too large")
    sp.add_argument("--figure", default=None)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("boxdim", help="box-counting slope of a point CSV")
    common(sp, config=False)
    sp.add_argument("--points", required=True)
    sp.add_argument("--scales", default=None, help="comma list or geom:TOP:RATIO:COUNT")
    sp.add_argument("--figure", default=None)
    sp.set_defaults(func=cmd_boxdim)

    sp = sub.add_parser("example", help="check a built-in fixture")
    sp.add_argument("name")
    sp.add_argument("--run", choices=["all", "pressure", "dim", "render"], default="all")
    sp.add_argument("--export-config", default=None, help="also write the fixture as JSON")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_example)

    sp = sub.add_parser("experiment", help="box slopes over sampled translations vs alpha0")
    common(sp)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--depth", type=int, default=9)
    sp.add_argument("--translations", type=int, default=20)
    sp.add_argument("--sample-budget", type=int, default=200_000)
    sp.add_argument("--trials", type=int, default=400)
    sp.add_argument("--necks", type=int, default=64)
    sp.add_argument("--figure", default=None)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args._argv = _strip_out(argv)
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except CodeTreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.exit_code == 3:
            print("hint: lower --depth, or pass --sample-budget where available",
                  file=sys.stderr)
        return exc.exit_code
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
