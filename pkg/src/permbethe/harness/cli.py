"""Command-line entry point: ``permbethe <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 numeric or domain error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import ast
import csv
import json
import math
import operator
import sys
from pathlib import Path

import numpy as np

from .. import permanent
from ..exceptions import (
    DomainError,
    NumericalDegeneracyError,
    SizeLimitError,
    UnsupportedMomentError,
)
from ..spa import InitMode, SpaConfig
from .sweep import SUMMARY_HEADER, SweepConfig, SweepMode, default_alphas, run_sweep
from .tables import CLOSED_FORM_HEADER, closed_form_table
from .verify import SUITES, verify

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2
EXIT_VERIFY = 3

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _eval_number(text: str) -> complex:
    """Evaluate a numeric literal allowing ``pi``, ``j`` suffixes and + - * /."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
            return node.value
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError(text)

    try:
        return ev(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def parse_alphas(text: str) -> tuple[float, ...]:
    """A bare integer is a count of equally spaced angles; otherwise a comma list."""
    text = text.strip()
    if "," not in text and text.isdigit():
        count = int(text)
        if count < 1:
            raise argparse.ArgumentTypeError("alpha count must be positive")
        return default_alphas(count)
    out = []
    for part in text.split(","):
        v = _eval_number(part)
        if isinstance(v, complex):
            raise argparse.ArgumentTypeError(f"alpha must be real: {part!r}")
        out.append(float(v))
    return tuple(out)


def parse_matrix(text: str) -> np.ndarray:
    """Rows separated by ``;`` (or newlines), entries by ``,`` or whitespace."""
    rows = [r for r in text.replace("\n", ";").split(";") if r.strip()]
    parsed = [[complex(_eval_number(x)) for x in r.replace(",", " ").split()] for r in rows]
    if not parsed or any(len(r) != len(parsed) for r in parsed):
        raise argparse.ArgumentTypeError("matrix must be square and non-empty")
    return np.array(parsed, dtype=np.complex128)


def _add_sweep_flags(p: argparse.ArgumentParser, cover: bool):
    p.add_argument("--n", type=int, required=True, help="matrix size")
    p.add_argument("--alphas", type=parse_alphas, default=default_alphas(), help="count or comma list")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--resume", action="store_true", help="continue from the manifest in --out")
    p.add_argument("--exclude-nonconverged", action="store_true", help="drop non-converged trials from summaries")
    p.add_argument("--damping", type=float, default=0.5, help="weight of the fresh message (1 = undamped)")
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--init", choices=[m.value for m in InitMode], default=InitMode.RANDOM_PSD_RANK2.value)
    if cover:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--cover-samples", type=int, default=None)
        g.add_argument("--exhaustive", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="permbethe", description="Permanents and their Bethe approximations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _add_sweep_flags(sub.add_parser("spa-sweep", help="SPA Bethe approximation over the ensemble"), cover=False)
    _add_sweep_flags(sub.add_parser("cover-sweep", help="degree-2 Bethe approximation over the ensemble"), cover=True)

    p = sub.add_parser("closed-form", help="exact and asymptotic closed-form table")
    p.add_argument("--n", type=int, required=True, help="largest n in the table")
    p.add_argument("--moments", default="gaussian", help="gaussian, real-gaussian, all-ones or alpha=<angle>")
    p.add_argument("--out", type=str, default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("perm", help="permanent of one matrix")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", type=parse_matrix, help='e.g. "1,2;3,4" or "1+1j,0;2,pi"')
    src.add_argument("--file", type=str, help="text file, one row per line")
    p.add_argument("--method", choices=("ryser", "naive"), default="ryser")

    p = sub.add_parser("verify", help="cross-module oracle checks")
    p.add_argument("--suite", choices=SUITES, default="fast")
    p.add_argument("--out", type=str, default=None, help="write the JSON report here")
    return parser


def _sweep_config(args, mode: SweepMode) -> SweepConfig:
    spa = SpaConfig(
        max_iters=args.max_iters,
        conv_tol=args.tol,
        damping=args.damping,
        init_mode=InitMode(args.init),
        seed=args.seed,
    )
    samples = getattr(args, "cover_samples", None)
    return SweepConfig(
        mode=mode,
        n=args.n,
        alphas=args.alphas,
        trials=args.trials,
        seed=args.seed,
        spa=spa,
        cover_samples=samples,
        output_path=args.out,
        threads=args.threads,
        include_nonconverged=not args.exclude_nonconverged,
        table_format=args.format,
    )


def _print_table(header, rows, fmt: str, stream):
    if fmt == "json":
        json.dump([dict(zip(header, r)) for r in rows], stream, indent=1)
        stream.write("\n")
        return
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["true" if v is True else "false" if v is False else repr(v) if isinstance(v, float) else v for v in r])


def _cmd_sweep(args, mode: SweepMode) -> int:
    _, summary = run_sweep(_sweep_config(args, mode), resume=args.resume)
    _print_table(SUMMARY_HEADER, [s.row() for s in summary], args.format, sys.stdout)
    return EXIT_OK


def _cmd_closed_form(args) -> int:
    rows = [[r[k] for k in CLOSED_FORM_HEADER] for r in closed_form_table(args.n, args.moments)]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            _print_table(CLOSED_FORM_HEADER, rows, args.format, fh)
    else:
        _print_table(CLOSED_FORM_HEADER, rows, args.format, sys.stdout)
    return EXIT_OK


def _cmd_perm(args) -> int:
    theta = args.matrix if args.matrix is not None else parse_matrix(Path(args.file).read_text())
    fn = permanent.perm_ryser if args.method == "ryser" else permanent.perm_naive
    p = complex(fn(theta))
    print(json.dumps({"n": theta.shape[0], "method": args.method, "perm_real": p.real, "perm_imag": p.imag, "abs2": abs(p) ** 2}))
    return EXIT_OK


def _cmd_verify(args) -> int:
    report = verify(args.suite)
    text = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        if args.command == "spa-sweep":
            return _cmd_sweep(args, SweepMode.SPA_SWEEP)
        if args.command == "cover-sweep":
            return _cmd_sweep(args, SweepMode.COVER_SWEEP)
        if args.command == "closed-form":
            return _cmd_closed_form(args)
        if args.command == "perm":
            return _cmd_perm(args)
        return _cmd_verify(args)
    except argparse.ArgumentTypeError as exc:
        print(f"permbethe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, SizeLimitError, UnsupportedMomentError, NumericalDegeneracyError, ArithmeticError) as exc:
        print(f"permbethe: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"permbethe: I/O error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
