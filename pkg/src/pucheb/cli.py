"""Command-line front end and the small expression language it reads.

Expressions use ``x``, ``pi``, numbers, ``+ - * / ^``, unary minus and the
functions sin, cos, tan, exp, log, tanh, sech, arctan, abs and sqrt. ``^``
binds tightest and groups to the right, so ``-x^2`` is ``-(x^2)`` and
``2^3^2`` is ``2^9``.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .bvpsolve import (
    BvpRefinementError,
    SingularSystemError,
    burgers_exact,
    burgers_problem,
    global_cheb_bvp,
    load_problem,
    refine_bvp,
)
from .chebcore import DEFAULT_TOL, Interval, NonFiniteSampleError, fit_global
from .puops import assemble, collect_point_sets, sparsity_ratio
from .putree import RefinementError, refine, tree_stats
from .puweights import FAMILIES

__all__ = [
    "Num",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "ExprSyntaxError",
    "parse_expr",
    "pretty",
    "evaluate",
    "compile_expr",
    "run",
    "main",
]


# -- expressions ---------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Union[Num, Const, Var, Neg, BinOp, Call]


def _sech(z):
    e = np.exp(-np.abs(z))
    return 2.0 * e / (1.0 + e * e)


FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "tanh": np.tanh,
    "sech": _sech,
    "arctan": np.arctan,
    "abs": np.abs,
    "sqrt": np.sqrt,
}
CONSTANTS = {"pi": np.pi}


class ExprSyntaxError(ValueError):
    """Malformed expression; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, src: str, pos: int):
        self.offset = len(src[:pos].encode("utf-8"))
        self.message = message
        super().__init__(f"{message} at offset {self.offset}")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    toks, pos = [], 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None:
            start = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {src[start]!r}", src, start)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise ExprSyntaxError(message, self.src, tok[2])

    def expect(self, op):
        tok = self.take()
        if tok[1] != op or tok[0] != "op":
            self.fail(f"expected {op!r}", tok)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text == "x":
                return Var()
            if text in CONSTANTS:
                return Const(text)
            if text in FUNCTIONS:
                if self.peek()[:2] != ("op", "("):
                    self.fail(f"expected '(' after {text}")
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            self.fail(f"unknown identifier {text!r}", tok)
        if tok[:2] == ("op", "("):
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "end":
            self.fail("unexpected end of expression", tok)
        self.fail(f"expected an operand, found {text!r}", tok)


def parse_expr(src: str) -> Expr:
    """Parse ``src`` into an expression tree.

    >>> pretty(parse_expr("-x^2 + 3*sin(pi*x)"))
    '-x^2 + 3*sin(pi*x)'
    """
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", src or "", 0)
    p = _Parser(src)
    tree = p.expr()
    if p.peek()[0] != "end":
        p.fail(f"unexpected {p.peek()[1]!r}")
    return tree


# binding strength of each construct, used to decide where parentheses go
_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _level(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _LEVEL[e.op]
    if isinstance(e, Neg):
        return _LEVEL["neg"]
    return _LEVEL["atom"]


def _wrap(e: Expr, need: int) -> str:
    s = pretty(e)
    return f"({s})" if _level(e) < need else s


def pretty(e: Expr) -> str:
    """Render with the fewest parentheses that reparse to the same tree."""
    if isinstance(e, Num):
        text = repr(e.value)
        return text[:-2] if text.endswith(".0") else text
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Call):
        return f"{e.fn}({pretty(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _wrap(e.operand, _LEVEL["neg"])
    if e.op in "+-":
        return f"{_wrap(e.left, 1)} {e.op} {_wrap(e.right, 2)}"
    if e.op in "*/":
        return f"{_wrap(e.left, 2)}{e.op}{_wrap(e.right, 3)}"
    return f"{_wrap(e.left, 5)}^{_wrap(e.right, 3)}"


def evaluate(e: Expr, x):
    """Evaluate on an array of points; domain errors come back as nan."""
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        return np.broadcast_to(_eval(e, x), x.shape).astype(float)


def _eval(e: Expr, x):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Const):
        return CONSTANTS[e.name]
    if isinstance(e, Var):
        return x
    if isinstance(e, Neg):
        return -_eval(e.operand, x)
    if isinstance(e, Call):
        return FUNCTIONS[e.fn](_eval(e.arg, x))
    a, b = _eval(e.left, x), _eval(e.right, x)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        return np.divide(a, b)
    return np.power(np.asarray(a, dtype=float), b)


def compile_expr(src: str) -> Callable:
    tree = parse_expr(src)
    return lambda x: evaluate(tree, x)


# -- commands ------------------------------------------------------------------


class UsageError(Exception):
    pass


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(stream, header, columns):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([_fmt(v) for v in row])


def _emit_json(obj, stream):
    stream.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv_target(args):
    return open(args.out_file, "w", encoding="utf-8", newline="") if args.out_file else None


def _emit(args, header, columns, stats, stdout):
    """CSV and stats share stdout only when one of them is requested."""
    stats_stream = stdout
    if args.out == "csv":
        f = _csv_target(args)
        if f is None:
            _write_csv(stdout, header, columns)
            stats_stream = sys.stderr
        else:
            with f:
                _write_csv(f, header, columns)
    if args.stats or args.out is None:
        _emit_json(stats, stats_stream)


def _build_tree(args) -> tuple[PuTree, Callable]:
    f = compile_expr(args.function)
    a, b = args.domain
    try:
        iv = Interval(a, b)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    tree = refine(
        f, iv, n_max=args.nmax, t=args.t, tol=args.tol, weight_family=args.weights, merge=not args.no_merge
    )
    if args.tree:
        with open(args.tree, "w", encoding="utf-8") as fh:
            fh.write(tree.to_json())
    return tree, f


def _cmd_approx(args, stdout) -> int:
    start = time.perf_counter()
    tree, f = _build_tree(args)
    elapsed = time.perf_counter() - start
    xs = np.linspace(tree.interval.a, tree.interval.b, args.samples)
    s = tree(xs)
    stats = tree_stats(tree)
    stats["sample_error"] = float(np.max(np.abs(s - f(xs))))
    stats["function"] = args.function
    stats["seconds"] = elapsed
    _emit(args, ["x", "value"], [xs, s], stats, stdout)
    return 0


def _cmd_diff(args, stdout) -> int:
    tree, _ = _build_tree(args)
    xs = np.linspace(tree.interval.a, tree.interval.b, args.samples)
    s = tree(xs)
    ds = tree.deriv(xs, args.order)
    stats = tree_stats(tree)
    ps = collect_point_sets(tree)
    stats["matrix_shape"] = list(ps.shape)
    stats["sparsity"] = {f"D{args.order}": sparsity_ratio(assemble(ps, args.order)), "M": sparsity_ratio(assemble(ps, 0))}
    stats["function"] = args.function
    _emit(args, ["x", "value", "deriv"], [xs, s, ds], stats, stdout)
    return 0


def _cmd_solve(args, stdout) -> int:
    if args.problem:
        with open(args.problem, encoding="utf-8") as fh:
            problem, settings = load_problem(fh)
        params = settings.get("burgers")
    else:
        problem = burgers_problem(args.nu, args.alpha, args.kappa)
        settings = {}
        params = {"nu": args.nu, "alpha": args.alpha, "kappa": args.kappa}
    t = settings.get("t", args.t)
    nmax = settings.get("nmax", args.nmax)
    tol = args.tol if args.tol is not None else settings.get("tol", 1e-10)
    tree, F, report = refine_bvp(problem, n_max=nmax, t=t, tol=tol, weight_family=args.weights)
    xs = np.linspace(tree.interval.a, tree.interval.b, args.samples)
    u, du = tree(xs), tree.deriv(xs, 1)
    stats = report.to_dict()
    stats["tree"] = tree_stats(tree)
    if params is not None:
        beta, ue = burgers_exact(params["nu"], params["alpha"], params["kappa"])
        stats["beta"] = beta
        stats["sup_error"] = float(np.max(np.abs(u - ue(xs))))
        stats["preset"] = "burgers"
        stats["parameters"] = params
    if args.tree:
        with open(args.tree, "w", encoding="utf-8") as fh:
            fh.write(tree.to_json())
    _emit(args, ["x", "value", "deriv"], [xs, u, du], stats, stdout)
    return 0


def _cmd_bench(args, stdout) -> int:
    rows = []
    f = compile_expr(args.function)
    start = time.perf_counter()
    tree = refine(f, Interval(-1.0, 1.0), n_max=args.nmax, t=args.t, tol=args.tol)
    pu_time = time.perf_counter() - start
    start = time.perf_counter()
    fit, tried = fit_global(f, Interval(-1.0, 1.0), args.tol)
    g_time = time.perf_counter() - start
    rows.append(
        {
            "problem": args.function,
            "pu_nodes": tree_stats(tree)["total_nodes"],
            "pu_leaves": len(tree.leaves()),
            "global_nodes": fit.degree + 1 if fit is not None else None,
            "global_degrees_tried": tried,
            "pu_seconds": pu_time,
            "global_seconds": g_time,
        }
    )
    if not args.skip_bvp:
        problem = burgers_problem(args.nu, args.alpha, args.kappa)
        start = time.perf_counter()
        _, _, report = refine_bvp(problem, n_max=args.nmax, t=args.t, tol=args.bvp_tol)
        pu_time = time.perf_counter() - start
        start = time.perf_counter()
        degree, grid_nodes, _ = global_cheb_bvp(problem, tol=args.bvp_tol)
        g_time = time.perf_counter() - start
        rows.append(
            {
                "problem": f"burgers(nu={args.nu:g}, alpha={args.alpha:g}, kappa={args.kappa:g})",
                "pu_nodes": report.total_nodes,
                "pu_leaves": report.leaves,
                "global_nodes": grid_nodes,
                "global_chopped_degree": degree,
                "pu_seconds": pu_time,
                "global_seconds": g_time,
            }
        )
    if args.json:
        _emit_json(rows, stdout)
        return 0
    stdout.write(f"{'problem':<44} {'PU nodes':>9} {'leaves':>7} {'global nodes':>13}\n")
    for r in rows:
        g = r["global_nodes"] if r["global_nodes"] is not None else "unresolved"
        stdout.write(f"{r['problem']:<44} {r['pu_nodes']:>9} {r['pu_leaves']:>7} {g!s:>13}\n")
    return 0


def _add_tree_flags(p, tol_default):
    p.add_argument("--t", type=float, default=0.1, help="overlap parameter (default 0.1)")
    p.add_argument("--nmax", type=int, default=128, help="largest leaf degree, a power of two (default 128)")
    p.add_argument("--tol", type=float, default=tol_default, help="chopping tolerance")
    p.add_argument("--weights", choices=FAMILIES, default="bump", help="weight family (default bump)")
    p.add_argument("--samples", type=int, default=2000, help="equispaced output samples (default 2000)")
    p.add_argument("--stats", action="store_true", help="print statistics as JSON")
    p.add_argument("--out", choices=["csv"], help="emit sample data")
    p.add_argument("--out-file", help="write the CSV here instead of stdout")
    p.add_argument("--tree", help="write the tree as JSON to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pucheb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (("approx", "adaptively approximate a function"), ("diff", "differentiate an approximation")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("-f", "--function", required=True, help="expression in x")
        p.add_argument("--domain", nargs=2, type=float, default=[-1.0, 1.0], metavar=("A", "B"))
        p.add_argument("--no-merge", action="store_true", help="disable leaf merging")
        _add_tree_flags(p, DEFAULT_TOL)
        if name == "diff":
            p.add_argument("--order", type=int, choices=[1, 2], default=1)

    p = sub.add_parser("solve", help="solve a boundary value problem adaptively")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=["burgers"])
    src.add_argument("-p", "--problem", help="JSON problem file")
    p.add_argument("--nu", type=float, default=5e-3)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=2.0)
    _add_tree_flags(p, None)
    p.set_defaults(tol=None)

    p = sub.add_parser("bench", help="compare PU and single-interval node counts")
    p.add_argument("-f", "--function", default="arctan((x-0.25)/0.001)")
    p.add_argument("--t", type=float, default=0.1)
    p.add_argument("--nmax", type=int, default=128)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--bvp-tol", type=float, default=1e-10)
    p.add_argument("--nu", type=float, default=5e-3)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=2.0)
    p.add_argument("--skip-bvp", action="store_true")
    p.add_argument("--json", action="store_true")
    return parser


_COMMANDS = {"approx": _cmd_approx, "diff": _cmd_diff, "solve": _cmd_solve, "bench": _cmd_bench}

NUMERICAL_ERRORS = (
    RefinementError,
    NonFiniteSampleError,
    BvpRefinementError,
    SingularSystemError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


def run(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    """Run one command; returns 0 on success, 1 on numerical failure, 2 on usage error."""
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args, stdout)
    except ExprSyntaxError as exc:
        sys.stderr.write(f"pucheb: bad expression: {exc}\n")
        return 2
    except UsageError as exc:
        sys.stderr.write(f"pucheb: {exc}\n")
        return 2
    except NUMERICAL_ERRORS as exc:
        sys.stderr.write(f"pucheb: numerical failure: {exc}\n")
        return 1
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"pucheb: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run())
