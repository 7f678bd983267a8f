"""First-order encoding of temporal formulas and the solver judgments.

Histories are modeled with uninterpreted sorts and functions: ``hist``
maps history indices to messages, ``msgname`` and ``msgargs`` expose a
message's name and argument values, and ``le`` is axiomatized as a total
order on indices with a least element ``zero``.  A distinguished constant
``len`` marks the history's end; excludes-initial asserts ``len = zero``.

Judgments run either through an external SMT-LIB 2 solver process
(``--solver-cmd``) or, by default, through the built-in decision engine
for the same fragment (see histsolver).
"""

from __future__ import annotations

import itertools
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from . import histsolver
from .cbcftl import (
    And,
    Eq,
    Exists,
    FalseF,
    Forall,
    Formula,
    HistNot,
    Neq,
    NotSince,
    Once,
    Or,
    SymVar,
    SymbolicMessage,
    TrueF,
    free_vars,
    simplify,
)
from .ir import BoolVal, IntVal, MethodSig, NullVal, Value


class SolverError(Exception):
    """Process spawn failures and malformed solver output."""


# ---------------------------------------------------------------------------
# FOL terms and formulas

HISTIDX = "HistIdx"
MSG = "Msg"
MSGNAME = "MsgName"
ARGIDX = "ArgIdx"
VAL = "Val"
SORTS = (HISTIDX, MSG, MSGNAME, ARGIDX, VAL)


@dataclass(frozen=True)
class FName:
    name: str


@dataclass(frozen=True)
class FApp:
    fn: str
    args: tuple["FTerm", ...]


FTerm = Union[FName, FApp]


@dataclass(frozen=True)
class FTrue:
    pass


@dataclass(frozen=True)
class FFalse:
    pass


@dataclass(frozen=True)
class FAnd:
    items: tuple["FOLFormula", ...]


@dataclass(frozen=True)
class FOr:
    items: tuple["FOLFormula", ...]


@dataclass(frozen=True)
class FNot:
    body: "FOLFormula"


@dataclass(frozen=True)
class FImp:
    lhs: "FOLFormula"
    rhs: "FOLFormula"


@dataclass(frozen=True)
class FEq:
    a: FTerm
    b: FTerm


@dataclass(frozen=True)
class FLe:
    a: FTerm
    b: FTerm


@dataclass(frozen=True)
class FDistinct:
    items: tuple[FTerm, ...]


@dataclass(frozen=True)
class FQuant:
    kind: str  # "forall" | "exists"
    vars: tuple[tuple[str, str], ...]  # (name, sort)
    body: "FOLFormula"


FOLFormula = Union[FTrue, FFalse, FAnd, FOr, FNot, FImp, FEq, FLe, FDistinct, FQuant]

ZERO = FName("zero")
LEN = FName("len")
RETV = "retv"


def _flt(a: FTerm, b: FTerm) -> FOLFormula:
    return FAnd((FLe(a, b), FNot(FEq(a, b))))


def val_const(v: Value) -> str:
    if isinstance(v, NullVal):
        return "val_null"
    if isinstance(v, BoolVal):
        return "val_true" if v.b else "val_false"
    if isinstance(v, IntVal):
        return f"val_i{v.n}" if v.n >= 0 else f"val_im{-v.n}"
    raise SolverError(f"cannot encode value {v!r}")


def name_const(sig: MethodSig) -> str:
    return f"mn_{sig.kind}_{sig.name}"


def sym_const(v: SymVar) -> str:
    return f"sv_{v.name}"


@dataclass
class EncodingEnv:
    """Finite enumerations backing one query: names, arg slots, literals."""

    msgnames: list[str] = field(default_factory=list)
    max_arity: int = 0
    literals: list[Value] = field(default_factory=list)
    free_consts: list[str] = field(default_factory=list)

    def add_sig(self, sig: MethodSig) -> None:
        n = name_const(sig)
        if n not in self.msgnames:
            self.msgnames.append(n)
        self.max_arity = max(self.max_arity, sig.arity)

    def add_literal(self, v: Value) -> None:
        if v not in self.literals:
            self.literals.append(v)

    def add_free(self, name: str) -> None:
        if name not in self.free_consts:
            self.free_consts.append(name)

    def collect(self, f: Formula, bound: frozenset[SymVar] = frozenset()) -> None:
        if isinstance(f, (Once, HistNot)):
            self._msg(f.msg, bound)
        elif isinstance(f, NotSince):
            self._msg(f.neg, bound)
            self._msg(f.pos, bound)
        elif isinstance(f, (And, Or)):
            for i in f.items:
                self.collect(i, bound)
        elif isinstance(f, (Exists, Forall)):
            self.collect(f.body, bound | set(f.vars))
        elif isinstance(f, (Eq, Neq)):
            for t in (f.a, f.b):
                if isinstance(t, Value):
                    self.add_literal(t)
                elif t not in bound:
                    self.add_free(sym_const(t))

    def _msg(self, sm: SymbolicMessage, bound: frozenset[SymVar]) -> None:
        self.add_sig(sm.body.sig)
        for t in sm.body.slots():
            if isinstance(t, Value):
                self.add_literal(t)
            elif t not in bound and t not in sm.locals:
                self.add_free(sym_const(t))

    def arg_consts(self) -> list[str]:
        return [f"arg{i}" for i in range(self.max_arity)] + [RETV]


# ---------------------------------------------------------------------------
# Axioms and translation


def axioms(env: EncodingEnv) -> list[FOLFormula]:
    """Total order on HistIdx with least element, plus finite enumerations."""
    i, j, k = FName("i"), FName("j"), FName("k")
    hv = lambda *vs: tuple((v.name, HISTIDX) for v in vs)
    out: list[FOLFormula] = [
        FQuant("forall", hv(i), FLe(i, i)),
        FQuant(
            "forall",
            hv(i, j, k),
            FImp(FAnd((FLe(i, j), FLe(j, k))), FLe(i, k)),
        ),
        FQuant("forall", hv(i, j), FImp(FAnd((FLe(i, j), FLe(j, i))), FEq(i, j))),
        FQuant("forall", hv(i, j), FOr((FLe(i, j), FLe(j, i)))),
        FQuant("forall", hv(i), FLe(ZERO, i)),
    ]
    names = [FName(n) for n in env.msgnames]
    if len(names) > 1:
        out.append(FDistinct(tuple(names)))
    argidx = [FName(a) for a in env.arg_consts()]
    if len(argidx) > 1:
        out.append(FDistinct(tuple(argidx)))
    lits = [FName(val_const(v)) for v in env.literals]
    if len(lits) > 1:
        out.append(FDistinct(tuple(lits)))
    return out


class _FolCtx:
    def __init__(self, bound: dict[SymVar, str]):
        self.bound = dict(bound)
        self.counter = itertools.count()

    def fresh(self, base: str) -> str:
        return f"{base}{next(self.counter)}"

    def term(self, t) -> FTerm:
        if isinstance(t, Value):
            return FName(val_const(t))
        if t in self.bound:
            return FName(self.bound[t])
        return FName(sym_const(t))


def _msg_at(idx: FTerm, sm: SymbolicMessage, ctx: _FolCtx, localmap: dict[SymVar, str]) -> FOLFormula:
    items: list[FOLFormula] = [
        FEq(FApp("msgname", (FApp("hist", (idx,)),)), FName(name_const(sm.body.sig)))
    ]
    slots = list(enumerate(sm.body.args)) + (
        [(-1, sm.body.ret)] if sm.body.ret is not None else []
    )
    for pos, t in slots:
        slot_name = RETV if pos == -1 else f"arg{pos}"
        cell = FApp("msgargs", (FApp("hist", (idx,)), FName(slot_name)))
        if isinstance(t, SymVar) and t in sm.locals:
            items.append(FEq(FName(localmap[t]), cell))
        else:
            items.append(FEq(ctx.term(t), cell))
    return FAnd(tuple(items))


def to_fol(f: Formula, bound_vars: Optional[dict[SymVar, str]] = None) -> FOLFormula:
    """Translate a well-formed temporal formula into sorted FOL."""
    ctx = _FolCtx(bound_vars or {})
    return _to_fol(f, ctx)


def _to_fol(f: Formula, ctx: _FolCtx) -> FOLFormula:
    if isinstance(f, TrueF):
        return FTrue()
    if isinstance(f, FalseF):
        return FFalse()
    if isinstance(f, Once):
        idx = FName(ctx.fresh("idx"))
        localmap = {v: ctx.fresh(f"l_{v.name}_") for v in sorted(f.msg.locals)}
        qvars = ((idx.name, HISTIDX),) + tuple((n, VAL) for n in localmap.values())
        rng = FAnd((FLe(ZERO, idx), _flt(idx, LEN)))
        return FQuant("exists", qvars, FAnd((rng, _msg_at(idx, f.msg, ctx, localmap))))
    if isinstance(f, HistNot):
        idx = FName(ctx.fresh("idx"))
        localmap = {v: ctx.fresh(f"l_{v.name}_") for v in sorted(f.msg.locals)}
        qvars = ((idx.name, HISTIDX),) + tuple((n, VAL) for n in localmap.values())
        rng = FAnd((FLe(ZERO, idx), _flt(idx, LEN)))
        return FQuant("forall", qvars, FImp(rng, FNot(_msg_at(idx, f.msg, ctx, localmap))))
    if isinstance(f, NotSince):
        idx = FName(ctx.fresh("idx"))
        u = FName(ctx.fresh("u"))
        pos_map = {v: ctx.fresh(f"l_{v.name}_") for v in sorted(f.pos.locals)}
        neg_map = {v: ctx.fresh(f"l_{v.name}_") for v in sorted(f.neg.locals)}
        inner_vars = ((u.name, HISTIDX),) + tuple((n, VAL) for n in neg_map.values())
        inner = FQuant(
            "forall",
            inner_vars,
            FImp(FAnd((_flt(idx, u), _flt(u, LEN))), FNot(_msg_at(u, f.neg, ctx, neg_map))),
        )
        outer_vars = ((idx.name, HISTIDX),) + tuple((n, VAL) for n in pos_map.values())
        rng = FAnd((FLe(ZERO, idx), _flt(idx, LEN)))
        return FQuant(
            "exists", outer_vars, FAnd((rng, _msg_at(idx, f.pos, ctx, pos_map), inner))
        )
    if isinstance(f, And):
        return FAnd(tuple(_to_fol(i, ctx) for i in f.items))
    if isinstance(f, Or):
        return FOr(tuple(_to_fol(i, ctx) for i in f.items))
    if isinstance(f, Eq):
        return FEq(ctx.term(f.a), ctx.term(f.b))
    if isinstance(f, Neq):
        return FNot(FEq(ctx.term(f.a), ctx.term(f.b)))
    if isinstance(f, (Exists, Forall)):
        names = {}
        for v in f.vars:
            names[v] = ctx.fresh(f"q_{v.name}_")
        sub_ctx = _FolCtx({**ctx.bound, **names})
        sub_ctx.counter = ctx.counter
        body = _to_fol(f.body, sub_ctx)
        kind = "exists" if isinstance(f, Exists) else "forall"
        return FQuant(kind, tuple((n, VAL) for n in names.values()), body)
    raise TypeError(f)


# ---------------------------------------------------------------------------
# SMT-LIB 2 emission


def _emit_term(t: FTerm) -> str:
    if isinstance(t, FName):
        return t.name
    args = " ".join(_emit_term(a) for a in t.args)
    return f"({t.fn} {args})"


def _emit_formula(f: FOLFormula) -> str:
    if isinstance(f, FTrue):
        return "true"
    if isinstance(f, FFalse):
        return "false"
    if isinstance(f, FAnd):
        if not f.items:
            return "true"
        return "(and " + " ".join(_emit_formula(i) for i in f.items) + ")"
    if isinstance(f, FOr):
        if not f.items:
            return "false"
        return "(or " + " ".join(_emit_formula(i) for i in f.items) + ")"
    if isinstance(f, FNot):
        return f"(not {_emit_formula(f.body)})"
    if isinstance(f, FImp):
        return f"(=> {_emit_formula(f.lhs)} {_emit_formula(f.rhs)})"
    if isinstance(f, FEq):
        return f"(= {_emit_term(f.a)} {_emit_term(f.b)})"
    if isinstance(f, FLe):
        return f"(le {_emit_term(f.a)} {_emit_term(f.b)})"
    if isinstance(f, FDistinct):
        return "(distinct " + " ".join(_emit_term(t) for t in f.items) + ")"
    if isinstance(f, FQuant):
        vs = " ".join(f"({n} {s})" for n, s in f.vars)
        return f"({f.kind} ({vs}) {_emit_formula(f.body)})"
    raise TypeError(f)


def emit_smtlib(formulas: list[FOLFormula], env: EncodingEnv) -> str:
    """Deterministic SMT-LIB 2 script for the given assertions."""
    lines = ["(set-logic UF)"]
    for s in SORTS:
        lines.append(f"(declare-sort {s} 0)")
    lines.append(f"(declare-fun hist ({HISTIDX}) {MSG})")
    lines.append(f"(declare-fun msgname ({MSG}) {MSGNAME})")
    lines.append(f"(declare-fun msgargs ({MSG} {ARGIDX}) {VAL})")
    lines.append(f"(declare-fun le ({HISTIDX} {HISTIDX}) Bool)")
    lines.append(f"(declare-const zero {HISTIDX})")
    lines.append(f"(declare-const len {HISTIDX})")
    for n in sorted(env.msgnames):
        lines.append(f"(declare-const {n} {MSGNAME})")
    for a in env.arg_consts():
        lines.append(f"(declare-const {a} {ARGIDX})")
    for v in sorted(val_const(l) for l in env.literals):
        lines.append(f"(declare-const {v} {VAL})")
    for c in sorted(env.free_consts):
        lines.append(f"(declare-const {c} {VAL})")
    for f in formulas:
        lines.append(f"(assert {_emit_formula(f)})")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Solver process driving


@dataclass(frozen=True)
class SolverVerdict:
    status: str  # "unsat" | "sat" | "unknown"
    reason: str = ""


def solve(script: str, timeout_ms: int, cmd: str) -> SolverVerdict:
    """Run one solver process on the script; kill it past the deadline."""
    argv = shlex.split(cmd)
    use_file = any("{file}" in a for a in argv)
    tmp: Optional[tempfile.NamedTemporaryFile] = None
    try:
        if use_file:
            tmp = tempfile.NamedTemporaryFile("w", suffix=".smt2", delete=False)
            tmp.write(script)
            tmp.close()
            argv = [a.replace("{file}", tmp.name) for a in argv]
            stdin_data = None
        else:
            stdin_data = script
        try:
            proc = subprocess.run(
                argv,
                input=stdin_data,
                capture_output=True,
                text=True,
                timeout=timeout_ms / 1000.0,
            )
        except FileNotFoundError as e:
            raise SolverError(f"cannot spawn solver {argv[0]!r}: {e}") from e
        except subprocess.TimeoutExpired:
            return SolverVerdict("unknown", "timeout")
        for line in proc.stdout.splitlines():
            line = line.strip()
            if line == "unsat":
                return SolverVerdict("unsat")
            if line == "sat":
                return SolverVerdict("sat")
            if line == "unknown":
                return SolverVerdict("unknown", "solver reported unknown")
        raise SolverError(
            f"malformed solver output (rc={proc.returncode}): {proc.stdout[:200]!r} {proc.stderr[:200]!r}"
        )
    finally:
        if tmp is not None:
            Path(tmp.name).unlink(missing_ok=True)


# ---------------------------------------------------------------------------
# Judgments


@dataclass
class SolverStats:
    calls: dict[str, int] = field(default_factory=dict)
    verdicts: dict[str, int] = field(default_factory=dict)
    total_time: float = 0.0

    def record(self, kind: str, verdict: str, dt: float) -> None:
        self.calls[kind] = self.calls.get(kind, 0) + 1
        key = f"{kind}:{verdict}"
        self.verdicts[key] = self.verdicts.get(key, 0) + 1
        self.total_time += dt


@dataclass
class SolverConfig:
    cmd: Optional[str] = None  # None selects the built-in engine
    timeout_ms: int = 2000
    dump_dir: Optional[str] = None
    stats: SolverStats = field(default_factory=SolverStats)
    cache: dict = field(default_factory=dict, repr=False)  # per-run scratch
    _dump_count: int = 0

    def dump(self, kind: str, script: str) -> None:
        if not self.dump_dir:
            return
        d = Path(self.dump_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{self._dump_count:04d}_{kind}.smt2").write_text(script)
        self._dump_count += 1


YES = "yes"
NO = "no"
UNKNOWN = "unknown"

_VERDICT = {"unsat": YES, "sat": NO, "unknown": UNKNOWN}


def _budget_for(cfg: SolverConfig) -> int:
    # Rough work-unit budget so the built-in engine respects the timeout's
    # spirit; units are search-tree nodes, not milliseconds.
    return max(10_000, cfg.timeout_ms * 150)


def _script_for(f: Formula, extra: list[FOLFormula]) -> tuple[str, EncodingEnv]:
    env = EncodingEnv()
    env.collect(f)
    psi = to_fol(f)
    return emit_smtlib(axioms(env) + [psi] + extra, env), env


def judge_unsatisfiable(f: Formula, cfg: SolverConfig) -> str:
    f = simplify(f)
    start = time.monotonic()
    if cfg.cmd:
        script, _ = _script_for(f, [])
        cfg.dump("unsat", script)
        verdict = _VERDICT[solve(script, cfg.timeout_ms, cfg.cmd).status]
    else:
        if cfg.dump_dir:
            cfg.dump("unsat", _script_for(f, [])[0])
        res = histsolver.find_model(f, budget_limit=_budget_for(cfg))
        verdict = {"unsat": YES, "sat": NO, "unknown": UNKNOWN}[res.status]
    cfg.stats.record("unsatisfiable", verdict, time.monotonic() - start)
    return verdict


def judge_excludes_initial(f: Formula, cfg: SolverConfig) -> str:
    f = simplify(f)
    start = time.monotonic()
    if cfg.cmd:
        script, _ = _script_for(f, [FEq(LEN, ZERO)])
        cfg.dump("exclinit", script)
        verdict = _VERDICT[solve(script, cfg.timeout_ms, cfg.cmd).status]
    else:
        if cfg.dump_dir:
            cfg.dump("exclinit", _script_for(f, [FEq(LEN, ZERO)])[0])
        res = histsolver.find_empty_history_model(f, budget_limit=_budget_for(cfg))
        verdict = {"unsat": YES, "sat": NO, "unknown": UNKNOWN}[res.status]
    cfg.stats.record("excludes_initial", verdict, time.monotonic() - start)
    return verdict


def judge_entails(f1: Formula, f2: Formula, cfg: SolverConfig, search: bool = True) -> str:
    """Yes iff every history of f1 is one of f2.

    Free variables appearing in both formulas are shared; f2-only free
    variables are universally quantified under the negation (reading them
    existentially on the unnegated side).
    """
    f1 = simplify(f1)
    f2 = simplify(f2)
    start = time.monotonic()
    if cfg.cmd:
        script = _entail_script(f1, f2)
        cfg.dump("entails", script)
        verdict = _VERDICT[solve(script, cfg.timeout_ms, cfg.cmd).status]
    else:
        if cfg.dump_dir:
            cfg.dump("entails", _entail_script(f1, f2))
        res = histsolver.check_entails(f1, f2, budget_limit=_budget_for(cfg), search=search)
        verdict = {"yes": YES, "no": NO, "unknown": UNKNOWN}[res]
    cfg.stats.record("entails", verdict, time.monotonic() - start)
    return verdict


def _entail_script(f1: Formula, f2: Formula) -> str:
    env = EncodingEnv()
    env.collect(f1)
    env.collect(f2)
    only = sorted(free_vars(f2) - free_vars(f1))
    bound = {v: f"uv_{v.name}" for v in only}
    psi1 = to_fol(f1)
    psi2 = to_fol(f2, bound_vars=bound)
    neg: FOLFormula = FNot(psi2)
    if bound:
        neg = FQuant("forall", tuple((bound[v], VAL) for v in only), FNot(psi2))
    # f2-only constants must not be declared (they are bound above).
    env.free_consts = [c for c in env.free_consts if c not in {sym_const(v) for v in only}]
    return emit_smtlib(axioms(env) + [psi1, neg], env)
