"""Command-line front end.

Every subcommand takes ``--model`` (a model JSON file or one of the builtin
names R0, R1, R2).  Results go to stdout or ``--out``; a run header echoing
the effective flags goes to stderr.  Floats are printed with 17 significant
digits.  Exit status is 0 on success, 2 when the input or model is refused
and 1 when a numerical method fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from mmrw import __version__
from mmrw.decay import decay_rate, domain_contains, marginal_decay_rate
from mmrw.gamma import NoSectionError, UnboundedRegionError, extreme_points, trace_boundary
from mmrw.model import AssumptionError, ModelError, dump_model, load_model, validate
from mmrw.occupation import (
    OccupationError,
    empirical_decay,
    functional_equation_residual,
    mgf_partial,
    simulate_occupation,
    truncated_fundamental,
)
from mmrw.qbd import RateMatrixError, build_qbd, c_expand, cp_curve, cp_estimate, parse_alpha, solve_rate_matrix
from mmrw.spectral import PerronError, chi

EXIT_OK, EXIT_NUMERIC, EXIT_REFUSED = 0, 1, 2


def fmt(x):
    """Format a number with 17 significant digits (``1.0`` rather than ``1``)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = format(x, ".17g")
    if not any(ch in s for ch in ".e"):
        s += ".0"
    return s


def _pair(text, kind=float):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}")
    try:
        return tuple(kind(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r}") from None


def _triple(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x1,x2,j, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r}") from None


def _int_list(text):
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r}") from None


def _int_pair(text):
    return _pair(text, int)


class _Output:
    """Collects a table and writes it as CSV or JSON."""

    def __init__(self, args):
        self.args = args

    def table(self, header, rows, extra=None):
        if self.args.json:
            doc = {"columns": header, "rows": [[_jsonable(v) for v in r] for r in rows]}
            if extra:
                doc.update({k: _jsonable(v) for k, v in extra.items()})
            self._write(json.dumps(doc, indent=2) + "\n")
            return
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])
        self._write(buf.getvalue())

    def lines(self, values, keys=None):
        if self.args.json:
            doc = {k: _jsonable(v) for k, v in zip(keys, values)} if keys else [_jsonable(v) for v in values]
            self._write(json.dumps(doc, indent=2) + "\n")
            return
        self._write("".join((v if isinstance(v, str) else fmt(v)) + "\n" for v in values))

    def raw(self, text):
        self._write(text)

    def _write(self, text):
        out = getattr(self.args, "out", None)
        if out:
            with open(out, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def _header(args):
    skip = {"func", "command"}
    items = []
    for k, v in sorted(vars(args).items()):
        if k in skip or v is None:
            continue
        if isinstance(v, (list, tuple)):
            v = ",".join(fmt(x) if not isinstance(x, str) else x for x in v)
        elif isinstance(v, float):
            v = fmt(v)
        items.append(f"{k}={v}")
    print(f"# mmrw {args.command} " + " ".join(items), file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args, out):
    rep = validate(args.model_obj, window=args.window)
    d = rep.as_dict()
    if args.json:
        out.lines(list(d.values()), list(d.keys()))
        return EXIT_OK
    text = []
    for k, v in d.items():
        if isinstance(v, list):
            v = ",".join(fmt(x) for x in v)
        else:
            v = fmt(v)
        text.append(f"{k}={v}")
    out.raw("\n".join(text) + "\n")
    return EXIT_OK


def cmd_chi(args, out):
    out.lines([chi(args.model_obj, args.theta)], ["chi"])
    return EXIT_OK


def cmd_gamma_boundary(args, out):
    secs = trace_boundary(args.model_obj, args.points, eps=args.eps)
    out.table(["theta1", "zeta_lower", "zeta_upper"],
              [(s.theta1, s.zeta_lower, s.zeta_upper) for s in secs])
    return EXIT_OK


def cmd_extreme_points(args, out):
    geo = extreme_points(args.model_obj)
    rows = [(name, *pt) for name, pt in geo.as_dict().items()]
    out.table(["point", "theta1", "theta2"], rows, {"flat": list(geo.flat)})
    return EXIT_OK


def cmd_decay_rate(args, out):
    res = decay_rate(args.model_obj, args.c)
    if args.json:
        out.lines([res.rate, list(res.argmax), res.flat_segment], ["rate", "argmax", "flat_segment"])
    else:
        out.raw(f"{fmt(res.rate)}\n{fmt(res.argmax[0])},{fmt(res.argmax[1])}\n")
        if res.flat_segment:
            print("note: maximum reached at an end of the search interval (flat segment)",
                  file=sys.stderr)
    return EXIT_OK


def cmd_marginal_decay(args, out):
    out.lines([marginal_decay_rate(args.model_obj, args.c)], ["rate"])
    return EXIT_OK


def cmd_domain(args, out):
    out.lines([bool(domain_contains(args.model_obj, args.theta))], ["inside"])
    return EXIT_OK


def cmd_occupation(args, out):
    tab = truncated_fundamental(args.model_obj, args.origin, args.L, method=args.method)
    print(f"# sweeps={tab.sweeps} residual={fmt(tab.residual)} total={fmt(tab.total)}", file=sys.stderr)
    out.table(["x1p", "x2p", "jp", "value"], list(tab.rows(args.threshold)))
    return EXIT_OK


def cmd_simulate(args, out):
    est = simulate_occupation(args.model_obj, args.origin, args.paths, args.seed, L=args.L,
                              workers=args.workers)
    print(f"# capped_paths={est.capped_paths} cap_warning={fmt(est.cap_warning)}", file=sys.stderr)
    idx = zip(*np.nonzero(est.mean > 0))
    rows = [(int(a), int(b), int(j) + 1, est.mean[a, b, j], est.half_width[a, b, j]) for a, b, j in idx]
    out.table(["x1p", "x2p", "jp", "mean", "half_width"], rows)
    return EXIT_OK


def cmd_empirical_decay(args, out):
    res = empirical_decay(args.model_obj, args.origin, args.c, args.jto, args.kmin, args.kmax, args.L)
    if res.warning:
        print(f"warning: {res.warning}", file=sys.stderr)
    out.table(["k", "ratio"], sorted(res.ratios.items()),
              {"tail": res.tail, "truncated": res.truncated})
    return EXIT_OK


def cmd_mgf(args, out):
    m = mgf_partial(args.model_obj, args.origin, args.theta, args.L)
    out.table([f"j{k + 1}" for k in range(m.shape[1])], [list(r) for r in m])
    return EXIT_OK


def cmd_residual(args, out):
    out.lines([functional_equation_residual(args.model_obj, args.origin, args.theta, args.L)],
              ["residual"])
    return EXIT_OK


def cmd_rate_matrix(args, out):
    rate = solve_rate_matrix(build_qbd(args.model_obj, args.alpha, args.K))
    cp = cp_estimate(rate)
    print(f"# iterations={rate.iterations} residual={fmt(rate.residual)} "
          f"log_cp={fmt(math.log(cp))}", file=sys.stderr)
    n = rate.R.shape[0]
    out.table([f"c{k}" for k in range(n)], [list(r) for r in rate.R],
              {"iterations": rate.iterations, "residual": rate.residual, "log_cp": math.log(cp)})
    return EXIT_OK


def cmd_cp_curve(args, out):
    rows = cp_curve(args.model_obj, args.alpha, args.K)
    out.table(["K", "log_cp", "iterations", "residual"], rows)
    return EXIT_OK


def cmd_expand(args, out):
    ex = c_expand(args.model_obj, args.c)
    out.raw(dump_model(ex.expanded))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="mmrw",
        description="Decay rates and occupation measures of 2d skip-free "
                    "Markov-modulated random walks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_, csv_cols=None):
        desc = help_
        if csv_cols:
            desc += f"  Output columns: {csv_cols}."
        sp = sub.add_parser(name, help=help_, description=desc)
        sp.add_argument("--model", required=True, help="model JSON file or builtin R0, R1, R2")
        sp.add_argument("--json", action="store_true", help="emit JSON instead of CSV/text")
        sp.add_argument("--out", help="write output to this file instead of stdout")
        sp.set_defaults(func=func)
        return sp

    sp = add("validate", cmd_validate, "Structural checks and drift of a model.")
    sp.add_argument("--window", type=int, default=6, help="reachability window (default 6)")

    sp = add("chi", cmd_chi, "Perron root of the Feynman-Kac operator.")
    sp.add_argument("--theta", type=_pair, required=True, metavar="T1,T2")

    sp = add("gamma-boundary", cmd_gamma_boundary, "Trace the boundary chi = 1.",
             "theta1,zeta_lower,zeta_upper")
    sp.add_argument("--points", type=int, default=64)
    sp.add_argument("--eps", type=float, default=1e-6, help="inset from the tangency points")

    add("extreme-points", cmd_extreme_points, "Extreme points of the region chi <= 1.",
        "point,theta1,theta2")

    sp = add("decay-rate", cmd_decay_rate, "Decay rate in a positive integer direction.")
    sp.add_argument("--c", type=_int_pair, required=True, metavar="C1,C2")

    sp = add("marginal-decay", cmd_marginal_decay, "Marginal decay rate (coprime direction).")
    sp.add_argument("--c", type=_int_pair, required=True, metavar="C1,C2")

    sp = add("domain", cmd_domain, "Membership in the convergence domain.")
    sp.add_argument("--theta", type=_pair, required=True, metavar="T1,T2")

    sp = add("occupation", cmd_occupation, "Truncated occupation measure.", "x1p,x2p,jp,value")
    sp.add_argument("--origin", type=_triple, default=(0, 0, 1), metavar="X1,X2,J")
    sp.add_argument("--L", type=int, default=64)
    sp.add_argument("--method", choices=("iterative", "direct"), default="iterative")
    sp.add_argument("--threshold", type=float, default=0.0, help="only rows with value above this")

    sp = add("simulate", cmd_simulate, "Monte Carlo occupation estimate.",
             "x1p,x2p,jp,mean,half_width")
    sp.add_argument("--origin", type=_triple, default=(0, 0, 1), metavar="X1,X2,J")
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--L", type=int, default=64)
    sp.add_argument("--workers", type=int, default=None, help="threads (capped by QD_THREADS)")

    sp = add("empirical-decay", cmd_empirical_decay, "Log-ratios along a ray.", "k,ratio")
    sp.add_argument("--c", type=_int_pair, required=True, metavar="C1,C2")
    sp.add_argument("--origin", type=_triple, default=(0, 0, 1), metavar="X1,X2,J")
    sp.add_argument("--jto", type=int, default=1)
    sp.add_argument("--kmin", type=int, default=6)
    sp.add_argument("--kmax", type=int, default=12)
    sp.add_argument("--L", type=int, default=64)

    sp = add("mgf", cmd_mgf, "Truncated generating function matrix.", "j1..js0 per start phase")
    sp.add_argument("--theta", type=_pair, required=True, metavar="T1,T2")
    sp.add_argument("--origin", type=_triple, default=(0, 0, 1), metavar="X1,X2,J")
    sp.add_argument("--L", type=int, default=64)

    sp = add("residual", cmd_residual, "Generating-function identity residual.")
    sp.add_argument("--theta", type=_pair, required=True, metavar="T1,T2")
    sp.add_argument("--origin", type=_triple, default=(0, 0, 1), metavar="X1,X2,J")
    sp.add_argument("--L", type=int, default=64)

    sp = add("rate-matrix", cmd_rate_matrix, "Rate matrix of a QBD representation.", "c0..cN")
    sp.add_argument("--alpha", type=parse_alpha, default=(1,), help="1, 2 or 1,1")
    sp.add_argument("--K", type=int, default=40)

    sp = add("cp-curve", cmd_cp_curve, "log cp of the rate matrix over truncations.",
             "K,log_cp,iterations,residual")
    sp.add_argument("--alpha", type=parse_alpha, default=(1,), help="1, 2 or 1,1")
    sp.add_argument("--K", type=_int_list, default=[10, 20, 40], metavar="K1,K2,...")

    sp = add("expand", cmd_expand, "Re-block a model by a direction c (model JSON).")
    sp.add_argument("--c", type=_int_pair, required=True, metavar="C1,C2")
    return p


_VALUE_FLAGS = ("--theta", "--origin", "--c")


def _glue_negative_values(argv):
    # argparse reads "-5,-5" as an option; bind such values to their flag
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and nxt[1:2].isdigit() or \
                    (nxt is not None and nxt.startswith("-.")):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(tok)
    return out


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_glue_negative_values(argv))
    _header(args)
    try:
        args.model_obj = load_model(args.model)
    except (OSError, ModelError, KeyError) as exc:
        print(f"error: cannot load model {args.model!r}: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    out = _Output(args)
    try:
        return args.func(args, out)
    except (AssumptionError, ModelError, NoSectionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (PerronError, OccupationError, RateMatrixError, UnboundedRegionError,
            OverflowError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
