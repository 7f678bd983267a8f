"""Command-line frontend.

Subcommands: verify (run the refuter), check-trace (model-check a concrete
trace against specs), encode (print the temporal formula for a hypothesized
message chain), spec-lint (parse and well-formedness diagnostics), and
oracle (bounded exhaustive concrete execution).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path
from typing import Optional

from . import combine, oracle, smtenc, verifier
from .cbcftl import (
    Spec,
    SpecError,
    VarGen,
    _Parser,
    _tokenize,
    format_formula,
    parse_spec,
)
from .ir import IRError, parse_program, parse_trace
from .mhist import cons_chain
from .cbcftl import models_spec

EX_USAGE = 64


class _Parser64(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: A003 - argparse API
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _load_specs(paths: list[str]) -> Spec:
    imps = []
    for p in paths:
        imps.extend(parse_spec(Path(p).read_text()).implications)
    return Spec(tuple(imps))


def _solver_config(args) -> smtenc.SolverConfig:
    cmd = args.solver_cmd or os.environ.get("CBREFUTE_SOLVER_CMD") or None
    return smtenc.SolverConfig(
        cmd=cmd, timeout_ms=args.smt_timeout_ms, dump_dir=args.dump_smt_dir
    )


def _add_solver_flags(sp) -> None:
    sp.add_argument("--solver-cmd", default=None, help="external SMT-LIB 2 solver command")
    sp.add_argument("--smt-timeout-ms", type=int, default=2000)
    sp.add_argument("--dump-smt-dir", default=None)


def main(argv: Optional[list[str]] = None) -> int:
    ap = _Parser64(prog="cbrefute")
    sub = ap.add_subparsers(dest="cmd", required=True)

    v = sub.add_parser("verify", help="refute reachability of an assertion failure")
    v.add_argument("--program", required=True)
    v.add_argument("--spec", action="append", default=[], help="spec file; repeatable")
    v.add_argument("--query", default=None, help="assert label (defaults to the only assert)")
    v.add_argument("--wall-timeout-s", type=float, default=600.0)
    v.add_argument("--max-depth", type=int, default=None)
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--dump-invariants", default=None)
    v.add_argument("--no-merge", action="store_true")
    _add_solver_flags(v)

    c = sub.add_parser("check-trace", help="does a concrete trace model the specs?")
    c.add_argument("--spec", action="append", default=[], required=True)
    c.add_argument("--trace", required=True)

    e = sub.add_parser("encode", help="temporal formula for a hypothesized message chain")
    e.add_argument("--spec", action="append", default=[])
    e.add_argument(
        "--message",
        action="append",
        default=[],
        help="abstract message in spec syntax, oldest first; repeatable",
    )
    e.add_argument("--smt-out", default=None, help="also write the SMT-LIB 2 script here")

    l = sub.add_parser("spec-lint", help="parse and check spec files")
    l.add_argument("--spec", action="append", default=[], required=True)

    o = sub.add_parser("oracle", help="bounded exhaustive concrete search")
    o.add_argument("--program", required=True)
    o.add_argument("--spec", action="append", default=[])
    o.add_argument("--query", default=None)
    o.add_argument("--max-callbacks", type=int, default=4)
    o.add_argument("--universe", type=int, default=2)
    o.add_argument("--max-int", type=int, default=0)

    args = ap.parse_args(argv)
    try:
        if args.cmd == "verify":
            return _cmd_verify(args)
        if args.cmd == "check-trace":
            return _cmd_check_trace(args)
        if args.cmd == "encode":
            return _cmd_encode(args)
        if args.cmd == "spec-lint":
            return _cmd_spec_lint(args)
        if args.cmd == "oracle":
            return _cmd_oracle(args)
    except (IRError, SpecError, verifier.VerifierError, smtenc.SolverError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EX_USAGE
    raise AssertionError(args.cmd)


def _pick_query(prog, label: Optional[str]):
    queries = prog.queries()
    if label:
        return prog.query(label)
    if len(queries) == 1:
        return queries[0]
    raise IRError(
        "program has %d asserts; pick one with --query" % len(queries)
    )


def _cmd_verify(args) -> int:
    prog = parse_program(Path(args.program).read_text())
    spec = _load_specs(args.spec)
    q = _pick_query(prog, args.query)
    cfg = verifier.VerifyConfig(
        max_callback_depth=args.max_depth,
        wall_timeout_s=args.wall_timeout_s,
        solver=_solver_config(args),
        merge_enabled=not args.no_merge,
        jobs=args.jobs,
    )
    t0 = time.monotonic()
    result = verifier.refute(prog, spec, q, cfg)
    dt = time.monotonic() - t0

    code: int
    if isinstance(result, verifier.Refuted):
        print("result: Refuted")
        code = 0
    elif isinstance(result, verifier.Alarm):
        tag = " (inconclusive)" if result.inconclusive else ""
        print(f"result: Alarm{tag}")
        for m in verifier.extract_witness(result):
            print(f"witness: {m!r}")
        code = 1
    elif isinstance(result, verifier.SafeToDepth):
        print(f"result: SafeToDepth({result.k})")
        code = 2
    else:
        print("result: Timeout")
        code = 3

    if args.dump_invariants and hasattr(result, "invariants"):
        Path(args.dump_invariants).write_text(result.invariants.dump())
    stats = cfg.solver.stats
    print(f"time: {dt:.2f}s", file=sys.stderr)
    print(
        "smt-calls: "
        + " ".join(f"{k}={v}" for k, v in sorted(stats.calls.items())),
        file=sys.stderr,
    )
    if hasattr(result, "stats"):
        rs = result.stats
        print(
            f"states: added={rs.states_added} merged={rs.states_merged} transfers={rs.transfers}",
            file=sys.stderr,
        )
    return code


def _cmd_check_trace(args) -> int:
    spec = _load_specs(args.spec)
    trace = parse_trace(Path(args.trace).read_text())
    ok = models_spec(trace, spec)
    print(f"models: {'true' if ok else 'false'}")
    return 0 if ok else 1


def _parse_abstract_message(text: str):
    p = _Parser(_tokenize(text), text)
    sm = p.parse_message()
    if p.peek() is not None:
        raise SpecError(f"trailing tokens in message {text!r}")
    return sm.body  # wildcards become plain (fresh-named) variables


def _cmd_encode(args) -> int:
    spec = _load_specs(args.spec)
    msgs = [_parse_abstract_message(m) for m in args.message]
    hist = cons_chain(msgs)
    gen = VarGen()
    formula = combine.encode_history(hist, spec, gen)
    print(format_formula(formula))
    if args.smt_out:
        env = smtenc.EncodingEnv()
        env.collect(formula)
        script = smtenc.emit_smtlib(
            smtenc.axioms(env) + [smtenc.to_fol(formula)], env
        )
        Path(args.smt_out).write_text(script)
    return 0


def _cmd_spec_lint(args) -> int:
    try:
        spec = _load_specs(args.spec)
    except SpecError as e:
        print(f"spec error: {e}")
        return 1
    print(f"ok: {len(spec.implications)} history implications")
    return 0


def _cmd_oracle(args) -> int:
    prog = parse_program(Path(args.program).read_text())
    spec = _load_specs(args.spec)
    q = _pick_query(prog, args.query) if prog.queries() else None
    bounds = oracle.Bounds(args.max_callbacks, args.universe, args.max_int)
    res = oracle.enumerate_executions(prog, spec, q, bounds)
    if isinstance(res, oracle.NoFailure):
        print("result: NoFailure")
        return 0
    print("result: Failure")
    from .ir import format_message

    for m in res.trace:
        print(format_message(m))
    return 1


if __name__ == "__main__":
    sys.exit(main())
