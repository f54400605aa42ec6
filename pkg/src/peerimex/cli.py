"""``peerimex`` command line: tableau inspection, stability regions, S2 search, convergence studies."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .integrator import IntegrationError
from .io import atomic_write_text, fmt
from .optimizer import SEARCH_RAYS, optimize_s2
from .pde_bench import PROBLEMS, GridTooSmallError, convergence_study, default_dts
from .stability import BISECTION_TOL, StabilityError, implicit_angle, wedge_region
from .svg import render_svg
from .tableau import (TableauError, consistency_report, error_constants, load_tableau,
                      resolve, save_tableau)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("peerimex")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(Fraction(x.strip())) for x in text.split(",") if x.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _beta_list(text: str) -> list:
    out = []
    for x in text.split(","):
        x = x.strip()
        if not x:
            continue
        if x.lower() in ("alpha", "a"):
            out.append("alpha")
        else:
            try:
                out.append(float(x))
            except ValueError as exc:
                raise argparse.ArgumentTypeError(f"bad beta {x!r}") from exc
    return out


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="peerimex", description=__doc__)
    p.add_argument("--version", action="version", version=f"peerimex {__version__}")
    p.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def method_opts(sp, many=False):
        sp.add_argument("--method", default=None,
                        help="built-in name (imex-euler, imex-bdf2/3/4, imex-peer2) or tableau JSON path")
        sp.add_argument("--method-file", default=None, help="tableau JSON file")
        if many:
            sp.add_argument("--methods", default=None, help="comma-separated method list")

    def common(sp):
        sp.add_argument("--out", default=None, help="output file")
        sp.add_argument("--manifest", default=None, help="manifest path (default: OUT.manifest.json)")
        sp.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("tableau", help="print coefficients, residuals and error constants")
    method_opts(t)
    t.add_argument("--check", action="store_true", help="exit 1 if an order or consistency check fails")
    t.add_argument("--tol", type=float, default=1e-12)
    common(t)

    s = sub.add_parser("stability", help="stability regions of the explicit part")
    method_opts(s)
    s.add_argument("--beta", type=_beta_list, default=[0.0, "alpha"],
                   help="comma-separated wedge angles in degrees; 'alpha' = implicit angle")
    s.add_argument("--rays", type=_positive_int, default=360)
    s.add_argument("--tol", type=float, default=BISECTION_TOL)
    s.add_argument("--no-refine", action="store_true", help="skip the simplex refinement in y")
    s.add_argument("--svg", default=None)
    s.add_argument("--threads", type=_positive_int, default=1)
    common(s)

    a = sub.add_parser("angle", help="implicit angle alpha of L(alpha)-stability")
    method_opts(a)
    a.add_argument("--tol", type=float, default=0.05, help="angle resolution in degrees")
    common(a)

    o = sub.add_parser("optimize", help="search the extrapolation weights S2")
    method_opts(o)
    o.add_argument("--beta", type=_beta_list, default=["alpha"])
    o.add_argument("--rays", type=_positive_int, default=SEARCH_RAYS)
    o.add_argument("--restarts", type=int, default=0)
    o.add_argument("--max-evals", type=_positive_int, default=None)
    o.add_argument("--start", type=_float_list, default=None,
                   help="initial S2 entries row-wise (default: recent-value weights)")
    o.add_argument("--threads", type=_positive_int, default=1)
    common(o)

    c = sub.add_parser("converge", help="convergence study on a PDE benchmark")
    method_opts(c, many=True)
    c.add_argument("--problem", choices=sorted(PROBLEMS), required=True)
    c.add_argument("--m", type=_positive_int, default=None)
    c.add_argument("--dts", type=_float_list, default=None)
    c.add_argument("--svg", default=None)
    c.add_argument("--threads", type=_positive_int, default=1)
    common(c)
    return p


def _methods(args, many=False):
    names = []
    if getattr(args, "methods", None):
        names += [x.strip() for x in args.methods.split(",") if x.strip()]
    if args.method:
        names.append(args.method)
    tabs = [resolve(n) for n in names]
    if args.method_file:
        tabs.append(load_tableau(args.method_file))
    if not tabs:
        raise UsageError("no method given (--method, --method-file or --methods)")
    if not many and len(tabs) > 1:
        raise UsageError("give exactly one method")
    return tabs


def _matrix_text(name, A, exact=None) -> str:
    lines = [f"{name} ="]
    if exact is not None:
        rows = exact if isinstance(exact[0], (list, tuple)) else [exact]
        for row in rows:
            lines.append("  " + "  ".join(f"{str(x):>12}" for x in row))
    else:
        A = np.atleast_2d(A)
        for row in A:
            lines.append("  " + "  ".join(f"{x:12.8g}" for x in row))
    return "\n".join(lines)


def cmd_tableau(args, out):
    (t,) = _methods(args)
    rep = consistency_report(t)
    c_im, c_ex = error_constants(t)
    text = [f"method: {t.label}  s={t.s}  order={t.order}"]
    for key in ("c", "P", "R", "S1", "S2", "Qhat", "Rhat"):
        text.append(_matrix_text(key, getattr(t, key), t.exact.get(key)))
    text.append("eigenvalues(P): " + ", ".join(f"{z.real:.15g}{z.imag:+.15g}i" for z in rep.eigenvalues_P))
    text.append(f"zero stability: {rep.zero_stability}")
    text.append(f"stage order: {rep.stage_order}")
    for j, d in enumerate(rep.d, 1):
        text.append(f"|d_{j}|_inf = {np.max(np.abs(d)):.3e}")
    text.append(f"|Pe - e|_inf = {rep.preconsistency_residual:.3e}")
    V0 = np.vander(t.c, t.s, increasing=True)
    V1 = np.vander(t.c - 1.0, t.s, increasing=True)
    ext = float(np.max(np.abs(t.S1 @ V1 - (np.eye(t.s) - t.S2) @ V0)))
    text.append(f"|S1 V1 - (I - S2) V0|_inf = {ext:.3e}")
    text.append(f"c_im = {c_im:.6e}  c_ex = {c_ex:.6e}")
    print("\n".join(text), file=out)
    if args.out:
        save_tableau(t, args.out)
    summary = {"c_im": c_im, "c_ex": c_ex, "stage_order": rep.stage_order,
               "zero_stability": rep.zero_stability}
    if args.check:
        bad = []
        if max(float(np.max(np.abs(d))) for d in rep.d[:t.s]) >= args.tol:
            bad.append("order residuals")
        if rep.preconsistency_residual >= args.tol:
            bad.append("preconsistency")
        if ext >= args.tol:
            bad.append("extrapolation conditions")
        if rep.zero_stability == "unstable":
            bad.append("zero stability")
        summary["check"] = "fail: " + ", ".join(bad) if bad else "pass"
        print(f"check: {summary['check']}", file=out)
        if bad:
            return EXIT_INVALID, summary
    return EXIT_OK, summary


def _resolve_betas(betas, t):
    out, alpha = [], None
    for b in betas:
        if b == "alpha":
            if alpha is None:
                alpha = implicit_angle(t)
            out.append(float(alpha))
        else:
            if not 0.0 <= b <= 90.0:
                raise UsageError(f"beta must lie in [0, 90], got {b}")
            out.append(float(b))
    return out, alpha


def region_csv(polys) -> str:
    lines = ["beta_deg,ray_angle_deg,re_z0,im_z0"]
    for poly in polys:
        for ang, z in zip(poly.ray_angles, poly.vertices):
            lines.append(f"{fmt(poly.beta_deg)},{fmt(ang)},{fmt(z.real)},{fmt(z.imag)}")
    for poly in polys:
        failed = ";".join(fmt(a) for a in poly.failed_rays)
        lines.append(f"# beta={fmt(poly.beta_deg)} area={fmt(poly.area)} x_max={fmt(poly.x_max)}"
                     + (f" failed_rays={failed}" if failed else ""))
    return "\n".join(lines) + "\n"


def cmd_stability(args, out):
    (t,) = _methods(args)
    betas, alpha = _resolve_betas(args.beta, t)
    polys = []
    for b in betas:
        poly = wedge_region(t, b, args.rays, args.tol, refine=not args.no_refine, threads=args.threads)
        polys.append(poly)
        print(f"beta={b:g}  area={poly.area:.6g}  x_max={poly.x_max:.6g}"
              + (f"  failed_rays={len(poly.failed_rays)}" if poly.partial else ""), file=out)
    if args.out:
        atomic_write_text(args.out, region_csv(polys))
    if args.svg:
        render_svg(polys, args.svg, alpha_deg=alpha, title=t.label)
    summary = {"betas": betas, "areas": [p.area for p in polys], "x_max": [p.x_max for p in polys]}
    if any(p.partial for p in polys):
        print("warning: some rays found no boundary; areas are partial", file=sys.stderr)
    return EXIT_OK, summary


def cmd_angle(args, out):
    (t,) = _methods(args)
    alpha = implicit_angle(t, resolution=args.tol)
    print(f"{t.label}: alpha = {alpha:.2f} deg", file=out)
    if args.out:
        atomic_write_text(args.out, f"method,alpha_deg\n{t.label},{fmt(alpha)}\n")
    return EXIT_OK, {"alpha_deg": alpha}


def cmd_optimize(args, out):
    (t,) = _methods(args)
    betas, _ = _resolve_betas(args.beta, t)
    if len(betas) != 1:
        raise UsageError("optimize takes a single --beta")
    print("iter,value,area,c_ex,penalty", file=out)
    res = optimize_s2(t.base(), args.start, betas[0], n_rays=args.rays, restarts=args.restarts,
                      max_evals=args.max_evals, seed=args.seed,
                      progress=lambda line: print(line, file=out, flush=True),
                      label=f"{t.label}-opt")
    b = res.breakdown
    print(f"start: value={res.start.value:.10g} area={res.start.area:.6g} c_ex={res.start.c_ex:.6g}",
          file=out)
    print(f"best:  value={b.value:.10g} area={b.area:.6g} c_ex={b.c_ex:.6g} "
          f"p=[{', '.join(f'{x:.10g}' for x in res.p)}]", file=out)
    if args.out:
        save_tableau(res.tableau, args.out)
    return EXIT_OK, {"p": list(map(float, res.p)), "value": b.value, "area": b.area,
                     "c_ex": b.c_ex, "nfev": res.nfev, "converged": res.converged}


def cmd_converge(args, out):
    tabs = _methods(args, many=True)
    factory = PROBLEMS[args.problem]
    p = factory() if args.m is None else factory(args.m)
    dts = args.dts or default_dts(p)
    if any(not d > 0 for d in dts):
        raise UsageError("step sizes must be positive")
    print("problem,method,dt,error,observed_order", file=out)
    rep = convergence_study(p, tabs, dts, progress=lambda line: print(line, file=out, flush=True))
    if args.out:
        rep.write_csv(args.out)
    if args.svg:
        render_svg(rep, args.svg, orders={t.label: t.order for t in tabs},
                   title=f"{args.problem}, m={p.grid.m}")
    if rep.flagged:
        print(f"failed at every step size: {', '.join(rep.flagged)}", file=sys.stderr)
    summary = {"reference": rep.reference, "flagged": rep.flagged,
               "errors": {t.label: [float(e) for e in rep.errors(t.label)] for t in tabs}}
    return (EXIT_NUMERIC if rep.flagged else EXIT_OK), summary


COMMANDS = {"tableau": cmd_tableau, "stability": cmd_stability, "angle": cmd_angle,
            "optimize": cmd_optimize, "converge": cmd_converge}


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_manifest(args, argv, status, summary) -> None:
    opts = {k: v for k, v in vars(args).items() if k not in ("replay", "verbose")}
    data = _json_safe({"tool": "peerimex", "version": __version__, "argv": list(argv),
                       "options": opts, "exit_code": status, "result": summary,
                       "outputs": [x for x in (getattr(args, "out", None), getattr(args, "svg", None)) if x]})
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    path = args.manifest or (f"{args.out}.manifest.json" if args.out else None)
    if path:
        atomic_write_text(path, text)
    else:
        print("manifest: " + json.dumps(data, sort_keys=True), file=sys.stderr)


def run(argv=None, out=None) -> int:
    """Parse ``argv``, dispatch and return the exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.replay:
            recorded = json.loads(Path(args.replay).read_text())["argv"]
            return run(recorded, out)
        if args.command is None:
            raise UsageError("missing subcommand")
    except UsageError as exc:
        print(f"peerimex: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError, KeyError) as exc:
        print(f"peerimex: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.random.seed(args.seed)
    try:
        status, summary = COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"peerimex: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StabilityError, IntegrationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"peerimex: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TableauError, GridTooSmallError, OSError, ValueError, KeyError) as exc:
        print(f"peerimex: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    write_manifest(args, argv, status, summary)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
