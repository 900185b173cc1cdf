"""Command line interface: ``phasehit {inspect,density,tail,simulate,verify}``.

Tables go to stdout as CSV (``--json`` gives a JSON array of the same
rows). Numbers are printed with 12 significant digits.

Region syntax: ``{2,3}<{1}`` means ``tau_2 = tau_3 < tau_1``.
Tail expressions join terms with ``&&``; a term is ``tau(k) > c``,
``tau(j) == tau(k)`` or ``tau(j) != tau(k)``.
Grids are ``lo:hi:n`` per region coordinate, comma separated.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .errors import ConsistencyError, ExpressionError, PhaseHitError
from .expmat import ExpmWorkspace, QuadratureRule
from .hitting import joint_density, joint_density_absorbing
from .modelfile import dump_model, load_model
from .partitions import classify, enumerate_partitions, parse, render
from .simkit import binned_density, grid_boxes, max_workers, simulate
from .tails import (
    Equal,
    NotEqual,
    Threshold,
    canonicalize,
    equality_prob,
    tail_p,
    tail_p_absorbing,
    tail_p_alt,
)
from .validation import SUITES, run_suite


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.12g}"
    return str(x)


class Table:
    def __init__(self, columns):
        self.columns = list(columns)
        self.rows: list[list] = []

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError("row width mismatch")
        self.rows.append(list(row))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([fmt(x) for x in r])
        return buf.getvalue()

    def to_json(self) -> str:
        def conv(x):
            if isinstance(x, (np.floating, float)):
                x = float(x)
                return x if math.isfinite(x) else fmt(x)
            if isinstance(x, np.integer):
                return int(x)
            if isinstance(x, np.bool_):
                return bool(x)
            return x
        return json.dumps([{c: conv(v) for c, v in zip(self.columns, r)} for r in self.rows],
                          indent=1) + "\n"


# -- tail expression grammar -------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<tau>tau)|(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
                    r"|(?P<op>&&|==|!=|>|\(|\)))")


def _tokens(text):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = len(text) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def parse_constraints(text: str) -> list:
    """Parse ``tau(1) > 0.5 && tau(2) == tau(3)`` into constraint objects."""
    toks = _tokens(text)
    i = 0

    def expect(kind, value=None):
        nonlocal i
        k, v, p = toks[i]
        if k != kind or (value is not None and v != value):
            want = value or {"num": "a number", "tau": "tau"}[kind]
            got = v or "end of input"
            raise ExpressionError(f"expected {want if kind == 'num' else repr(want)}, found {got!r}", p)
        i += 1
        return v, p

    def tau():
        expect("tau")
        expect("op", "(")
        v, p = expect("num")
        if not re.fullmatch(r"[-+]?\d+", v):
            raise ExpressionError(f"target key must be an integer, found {v!r}", p)
        expect("op", ")")
        return int(v)

    out = []
    while True:
        k = tau()
        kind, op, p = toks[i]
        if kind != "op" or op not in (">", "==", "!="):
            raise ExpressionError(f"expected '>', '==' or '!=', found {op or 'end of input'!r}", p)
        i += 1
        if op == ">":
            v, vp = expect("num")
            c = float(v)
            if c < 0:
                raise ExpressionError("thresholds must be nonnegative", vp)
            out.append(Threshold(k, c))
        else:
            j = tau()
            out.append(Equal(k, j) if op == "==" else NotEqual(k, j))
        kind, v, p = toks[i]
        if kind == "end":
            return out
        expect("op", "&&")


def parse_grid(text: str, dim: int):
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != dim:
        raise ValueError(f"grid needs {dim} 'lo:hi:n' specs, got {len(parts)}")
    axes = []
    for p in parts:
        try:
            lo, hi, n = p.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
        except ValueError:
            raise ValueError(f"bad grid spec {p!r}; use lo:hi:n") from None
        if n < 1 or not hi >= lo:
            raise ValueError(f"bad grid spec {p!r}")
        axes.append((lo, hi, n))
    return axes


def parse_times(text: str, keys) -> dict:
    """``1=0.5,2=0.7`` or a plain comma list matched to the model keys."""
    items = [x.strip() for x in text.split(",") if x.strip()]
    if all("=" in x for x in items):
        return {int(a): float(b) for a, b in (x.split("=", 1) for x in items)}
    vals = [float(x) for x in items]
    if len(vals) != len(keys):
        raise ValueError(f"{len(vals)} times for keys {list(keys)}")
    return dict(zip(keys, vals))


# -- commands ----------------------------------------------------------------

def _rule(args):
    return QuadratureRule(abs_tol=args.tol) if args.tol else QuadratureRule()


def cmd_inspect(model, args):
    if args.json:
        d = {
            "states": list(model.space.labels),
            "targets": {str(k): [model.space.labels[i] for i in g] for k, g in model.targets.items()},
            "alpha": {model.space.labels[i]: float(model.alpha[i]) for i in np.flatnonzero(model.alpha)},
            "absorbing_targets": [k for k in model.keys if model.is_absorbing(model.target(k))],
            "nonzero_rates": int(np.count_nonzero(model.intensity) - np.count_nonzero(np.diag(model.intensity))),
        }
        return json.dumps(d, indent=1) + "\n"
    head = [f"# states: {model.n}",
            "# targets: " + ", ".join(f"{k} ({len(g)} states)" for k, g in model.targets.items()),
            f"# alpha support: {np.count_nonzero(model.alpha)} states"]
    return "\n".join(head) + "\n" + dump_model(model)


def _density_fn(args):
    return joint_density_absorbing if args.absorbing else joint_density


def cmd_density(model, args):
    f = _density_fn(args)
    region = parse(args.region) if args.region else None
    if args.t is not None:
        tm = parse_times(args.t, model.keys)
        if region is not None:
            own = classify(tm)
            if len(own) != len(region):
                raise ConsistencyError(f"times classify into {render(own)}, which has {len(own)} "
                                       f"blocks; region {render(region)} has {len(region)}")
        val = f(model, tm, region)
        cols = ["region"] + [f"t{k}" for k in sorted(tm)] + ["density", "dimension"]
        tab = Table(cols)
        tab.add(render(val.region), *[tm[k] for k in sorted(tm)], val.value, val.dimension)
        return tab
    if region is None or args.grid is None:
        raise ValueError("give --t, or --region together with --grid")
    axes = parse_grid(args.grid, len(region))
    coords = [np.linspace(lo, hi, n) for lo, hi, n in axes]
    points = list(np.array(np.meshgrid(*coords, indexing="ij")).reshape(len(region), -1).T)

    def one(v):
        v = tuple(float(x) for x in v)
        if v[0] <= 0 or any(a >= b for a, b in zip(v, v[1:])):
            return math.nan
        tm = {k: v[i] for i, b in enumerate(region) for k in b}
        return f(model, tm, region).value

    with ThreadPoolExecutor(max_workers=max_workers()) as ex:
        vals = list(ex.map(one, points))
    tab = Table(["region"] + [f"v{i + 1}" for i in range(len(region))] + ["density"])
    rs = render(region)
    for v, d in zip(points, vals):
        tab.add(rs, *[float(x) for x in v], d)
    return tab


def _tail_method(name):
    return {"recursion": tail_p, "alt": tail_p_alt, "absorbing": tail_p_absorbing}[name]


def cmd_tail(model, args):
    cons = parse_constraints(args.expr)
    dec = canonicalize(cons)
    method = _tail_method(args.method)
    rule = _rule(args)
    ws = ExpmWorkspace()
    tab = Table(["row", "event", "probability", "method", "stderr"])
    total = 0.0
    for i, ev in enumerate(dec.events, 1):
        p = ev.probability(model, rule, ws, method)
        total += p
        tab.add(f"event{i}", str(ev), p, "analytic", "")
    if dec.contradictory:
        tab.add("note", dec.note, 0.0, "analytic", "")
    tab.add("total", args.expr.strip(), total, "analytic", "")
    eqs = [c for c in cons if isinstance(c, Equal)]
    if eqs and len(eqs) == len(cons):
        keys = sorted({k for c in eqs for k in (c.j, c.k)})
        if len(dec.events) == 1 and len(dec.events[0].pattern) == 1:
            q = equality_prob(model, *keys)
            tab.add("equality", args.expr.strip(), float(model.alpha @ q), "linear-system", "")
    if args.simulate:
        keys = sorted({getattr(c, a) for c in cons for a in ("key", "j", "k") if hasattr(c, a)})
        sample = simulate(model, args.simulate, args.horizon, args.seed, keys=keys)
        est = sample.frequency(sample.constraint_indicator(cons))
        tab.add("total", args.expr.strip(), est.value, "simulated", est.stderr)
    return tab


def cmd_simulate(model, args):
    if args.report == "regions":
        sample = simulate(model, args.n, args.horizon, args.seed)
        tab = Table(["region", "frequency", "stderr", "n", "censored"])
        distinct = np.zeros(sample.n, dtype=bool)
        for s in enumerate_partitions(model.keys):
            ind = sample.region_indicator(s)
            if len(s) == len(model.keys):
                distinct |= ind
            e = sample.frequency(ind)
            tab.add(render(s), e.value, e.stderr, e.n, e.censored)
        e = sample.frequency(distinct)
        tab.add("all-distinct", e.value, e.stderr, e.n, e.censored)
        return tab
    if args.report == "tails":
        if not args.expr:
            raise ValueError("--expr is required for the tails report")
        cons = parse_constraints(args.expr)
        sample = simulate(model, args.n, args.horizon, args.seed)
        e = sample.frequency(sample.constraint_indicator(cons))
        tab = Table(["event", "frequency", "stderr", "n", "censored"])
        tab.add(args.expr.strip(), e.value, e.stderr, e.n, e.censored)
        return tab
    if not (args.region and args.grid):
        raise ValueError("--region and --grid are required for the histogram report")
    region = parse(args.region)
    axes = parse_grid(args.grid, len(region))
    boxes = grid_boxes([a[0] for a in axes], [a[1] for a in axes], [a[2] for a in axes])
    est = binned_density(model, region, boxes, args.n, args.seed, args.horizon)
    m = len(region)
    tab = Table(["region"] + [f"lo{i + 1}" for i in range(m)] + [f"hi{i + 1}" for i in range(m)]
                + ["density", "stderr", "mass", "n"])
    rs = render(region)
    for b in est:
        tab.add(rs, *b.lo, *b.hi, b.density, b.density_stderr, b.mass.value, b.mass.n)
    return tab


def cmd_verify(model, args):
    report = run_suite(args.suite, model, budget=args.budget, seed=args.seed, rule=_rule(args))
    tab = Table(["suite", "check", "measured", "tolerance", "status"])
    for r in report:
        tab.add(args.suite, r.name, r.measured, r.tolerance, "pass" if r.passed else "fail")
    return tab


def build_parser():
    p = argparse.ArgumentParser(prog="phasehit", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"phasehit {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit a JSON array instead of CSV")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--tol", type=float, default=None, help="quadrature tolerance")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("inspect", parents=[common], help="print the expanded model")
    s.add_argument("model")

    s = sub.add_parser("density", parents=[common], help="joint density at a point or on a grid")
    s.add_argument("model")
    s.add_argument("--t", help="times, e.g. '1=0.5,2=0.5,3=1.2'")
    s.add_argument("--region", help="region, e.g. '{2,3}<{1}'")
    s.add_argument("--grid", help="'lo:hi:n' per region coordinate, comma separated")
    s.add_argument("--absorbing", action="store_true", help="use the absorbing-target formula")

    s = sub.add_parser("tail", parents=[common], help="probability of a tail expression")
    s.add_argument("model")
    s.add_argument("expr", help="e.g. 'tau(1) > 0.5 && tau(2) == tau(3)'")
    s.add_argument("--method", choices=["recursion", "alt", "absorbing"], default="recursion")
    s.add_argument("--simulate", type=int, default=0, metavar="N", help="add a simulated row")
    s.add_argument("--horizon", type=float, default=None)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo reports")
    s.add_argument("model")
    s.add_argument("-n", type=int, default=100000)
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--report", choices=["regions", "tails", "histogram"], default="regions")
    s.add_argument("--expr")
    s.add_argument("--region")
    s.add_argument("--grid")

    s = sub.add_parser("verify", parents=[common], help="run a built-in check suite")
    s.add_argument("model", nargs="?", default="example_s5")
    s.add_argument("--suite", choices=SUITES, default="special-cases")
    s.add_argument("--budget", type=int, default=20000, help="paths for the simulation suite")
    return p


COMMANDS = {"inspect": cmd_inspect, "density": cmd_density, "tail": cmd_tail,
            "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        model = load_model(args.model)
        out = COMMANDS[args.command](model, args)
    except (PhaseHitError, ValueError) as exc:
        print(f"phasehit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if isinstance(out, Table):
        out = out.to_json() if args.json else out.to_csv()
    sys.stdout.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
