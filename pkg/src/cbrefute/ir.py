"""Application-only transition-system IR.

A program is the control-flow graph of each callback, stitched to a single
framework location ``fwk`` by boundary transitions: callback invocations
(fwk -> entry), callback returns (exit -> fwk), and callin invocations
(app -> app self-steps that cross into the framework and back).  Executing
a boundary transition appends a message to the run's message history.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union


# ---------------------------------------------------------------------------
# Values


class Value:
    """Base class for run-time values (null, booleans, ints, addresses)."""

    __slots__ = ()


@dataclass(frozen=True)
class NullVal(Value):
    def __repr__(self) -> str:
        return "null"


@dataclass(frozen=True)
class BoolVal(Value):
    b: bool

    def __repr__(self) -> str:
        return "true" if self.b else "false"


@dataclass(frozen=True)
class IntVal(Value):
    n: int

    def __repr__(self) -> str:
        return str(self.n)


@dataclass(frozen=True)
class Addr(Value):
    """Opaque object identity; equality is identity of the allocation."""

    ident: int

    def __repr__(self) -> str:
        return f"@{self.ident}"


NULL = NullVal()
TRUE = BoolVal(True)
FALSE = BoolVal(False)


def parse_literal(tok: str) -> Optional[Value]:
    if tok == "null":
        return NULL
    if tok == "true":
        return TRUE
    if tok == "false":
        return FALSE
    if re.fullmatch(r"-?\d+", tok):
        return IntVal(int(tok))
    return None


# ---------------------------------------------------------------------------
# Signatures and messages

CB = "cb"
CBRET = "cbret"
CI = "ci"
KINDS = (CB, CBRET, CI)


@dataclass(frozen=True)
class MethodSig:
    kind: str  # cb | cbret | ci
    name: str
    arity: int  # receiver counts as parameter 0
    has_ret: bool

    def __post_init__(self) -> None:
        assert self.kind in KINDS
        # Callback invocations carry no return value; returns and callins do.
        assert self.has_ret == (self.kind != CB)

    def __repr__(self) -> str:
        return f"{self.kind}:{self.name}/{self.arity}"


def cb_sig(name: str, arity: int) -> MethodSig:
    return MethodSig(CB, name, arity, False)


def cbret_sig(name: str, arity: int) -> MethodSig:
    return MethodSig(CBRET, name, arity, True)


def ci_sig(name: str, arity: int) -> MethodSig:
    return MethodSig(CI, name, arity, True)


@dataclass(frozen=True)
class Message:
    sig: MethodSig
    args: tuple[Value, ...]
    ret: Optional[Value]

    def __post_init__(self) -> None:
        assert len(self.args) == self.sig.arity
        assert (self.ret is not None) == self.sig.has_ret

    def values(self) -> tuple[Value, ...]:
        return self.args + ((self.ret,) if self.ret is not None else ())

    def __repr__(self) -> str:
        return format_message(self)


# A message history is simply an ordered sequence of messages.
MessageHistory = tuple[Message, ...]


def format_message(m: Message) -> str:
    ret = ""
    if m.sig.has_ret and m.ret != NULL:
        ret = f"{m.ret!r} = "
    if m.args:
        recv, rest = m.args[0], m.args[1:]
        inner = ", ".join(repr(a) for a in rest)
        return f"{m.sig.kind} {ret}{recv!r}.{m.sig.name}({inner})"
    return f"{m.sig.kind} {ret}{m.sig.name}()"


_MSG_RE = re.compile(
    r"^(cbret|cb|ci)\s+(?:(\S+)\s*=\s*)?"
    r"(?:(\S+)\s*\.\s*)?([A-Za-z_][A-Za-z0-9_]*)\s*\(([^)]*)\)$"
)


def _parse_value(tok: str) -> Value:
    tok = tok.strip()
    if tok.startswith("@"):
        return Addr(int(tok[1:]))
    v = parse_literal(tok)
    if v is None:
        raise IRError(f"bad value {tok!r} in trace")
    return v


def parse_message(line: str) -> Message:
    m = _MSG_RE.match(line.strip())
    if not m:
        raise IRError(f"bad message syntax: {line!r}")
    kind, ret_tok, recv_tok, name, args_tok = m.groups()
    args: list[Value] = []
    if recv_tok:
        args.append(_parse_value(recv_tok))
    if args_tok.strip():
        args.extend(_parse_value(t) for t in args_tok.split(","))
    ret: Optional[Value]
    if kind == CB:
        if ret_tok:
            raise IRError(f"callback invocation cannot bind a return: {line!r}")
        ret = None
    else:
        ret = _parse_value(ret_tok) if ret_tok else NULL
    sig = MethodSig(kind, name, len(args), kind != CB)
    return Message(sig, tuple(args), ret)


def parse_trace(text: str) -> MessageHistory:
    """Parse a message-history dump (one message per line, # comments)."""
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append(parse_message(line))
    return tuple(out)


def format_trace(hist: Iterable[Message]) -> str:
    return "\n".join(format_message(m) for m in hist) + "\n"


# ---------------------------------------------------------------------------
# Locations, commands, transitions


@dataclass(frozen=True)
class Loc:
    id: str
    kind: str  # "fwk" | "app"


# Conditions compare a local against a local or a literal.
CondSide = Union[str, Value]  # variable name or literal


@dataclass(frozen=True)
class Cond:
    lhs: CondSide
    op: str  # "==" | "!="
    rhs: CondSide

    def negate(self) -> "Cond":
        return Cond(self.lhs, "!=" if self.op == "==" else "==", self.rhs)

    def __repr__(self) -> str:
        return f"{_side(self.lhs)} {self.op} {_side(self.rhs)}"


def _side(s: CondSide) -> str:
    return repr(s) if isinstance(s, Value) else s


COND_TRUE = Cond(TRUE, "==", TRUE)
COND_FALSE = Cond(TRUE, "!=", TRUE)


class AppCommand:
    __slots__ = ()


@dataclass(frozen=True)
class Assign(AppCommand):
    x: str
    y: str

    def __repr__(self) -> str:
        return f"assign {self.x} := {self.y}"


@dataclass(frozen=True)
class Load(AppCommand):
    x: str
    y: str
    fld: str

    def __repr__(self) -> str:
        return f"load {self.x} := {self.y}.{self.fld}"


@dataclass(frozen=True)
class Store(AppCommand):
    x: str
    fld: str
    src: CondSide  # variable or literal

    def __repr__(self) -> str:
        return f"store {self.x}.{self.fld} := {_side(self.src)}"


@dataclass(frozen=True)
class Const(AppCommand):
    x: str
    lit: Value

    def __repr__(self) -> str:
        return f"const {self.x} := {self.lit!r}"


@dataclass(frozen=True)
class New(AppCommand):
    x: str

    def __repr__(self) -> str:
        return f"new {self.x}"


@dataclass(frozen=True)
class Assume(AppCommand):
    cond: Cond

    def __repr__(self) -> str:
        return f"assume {self.cond!r}"


@dataclass(frozen=True)
class Assert(AppCommand):
    cond: Cond
    label: str = ""

    def __repr__(self) -> str:
        suffix = f" @{self.label}" if self.label else ""
        return f"assert {self.cond!r}{suffix}"


class Payload:
    __slots__ = ()


@dataclass(frozen=True)
class App(Payload):
    cmd: AppCommand


@dataclass(frozen=True)
class CbInvoke(Payload):
    sig: MethodSig
    params: tuple[str, ...]


@dataclass(frozen=True)
class CbReturn(Payload):
    sig: MethodSig
    params: tuple[str, ...]
    retvar: Optional[str]


@dataclass(frozen=True)
class CiInvoke(Payload):
    sig: MethodSig
    retvar: str
    argvars: tuple[CondSide, ...]  # variables or literals


@dataclass(frozen=True)
class Transition:
    pre: str
    post: str
    payload: Payload
    idx: int = 0  # stable ordering for determinism


@dataclass
class CallbackDecl:
    name: str
    params: tuple[str, ...]
    entry: str
    exit: str
    retvar: Optional[str]

    @property
    def sig(self) -> MethodSig:
        return cb_sig(self.name, len(self.params))

    @property
    def ret_sig(self) -> MethodSig:
        return cbret_sig(self.name, len(self.params))


@dataclass
class Program:
    locs: dict[str, Loc]
    callbacks: dict[str, CallbackDecl]
    transitions: list[Transition]
    fwk: str

    @property
    def max_arity(self) -> int:
        arities = [0]
        for t in self.transitions:
            p = t.payload
            if isinstance(p, (CbInvoke, CbReturn, CiInvoke)):
                arities.append(p.sig.arity)
        return max(arities)

    def sigs(self) -> dict[tuple[str, str], MethodSig]:
        out: dict[tuple[str, str], MethodSig] = {}
        for t in self.transitions:
            p = t.payload
            if isinstance(p, (CbInvoke, CbReturn, CiInvoke)):
                out[(p.sig.kind, p.sig.name)] = p.sig
        return out

    def transitions_into(self, loc: str) -> list[Transition]:
        if loc not in self.locs:
            raise IRError(f"unknown location {loc!r}")
        return [t for t in self.transitions if t.post == loc]

    def transitions_from(self, loc: str) -> list[Transition]:
        if loc not in self.locs:
            raise IRError(f"unknown location {loc!r}")
        return [t for t in self.transitions if t.pre == loc]

    def queries(self) -> list["Query"]:
        out = []
        for t in self.transitions:
            if isinstance(t.payload, App) and isinstance(t.payload.cmd, Assert):
                out.append(Query(t))
        return out

    def query(self, label: str) -> "Query":
        for q in self.queries():
            if q.label == label:
                return q
        raise IRError(f"no assert labeled {label!r}")


@dataclass(frozen=True)
class Query:
    target: Transition

    @property
    def cond(self) -> Cond:
        assert isinstance(self.target.payload, App)
        cmd = self.target.payload.cmd
        assert isinstance(cmd, Assert)
        return cmd.cond

    @property
    def error_cond(self) -> Cond:
        return self.cond.negate()

    @property
    def label(self) -> str:
        assert isinstance(self.target.payload, App)
        cmd = self.target.payload.cmd
        assert isinstance(cmd, Assert)
        return cmd.label


class IRError(Exception):
    """Raised on malformed programs, traces, or lookups."""

    def __init__(self, msg: str, line: Optional[int] = None, col: Optional[int] = None):
        if line is not None:
            msg = f"line {line}: {msg}" if col is None else f"line {line}, col {col}: {msg}"
        super().__init__(msg)
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Program text format


_LOC_RE = re.compile(r"^loc\s+(\S+)(\s+fwk)?$")
_CB_RE = re.compile(
    r"^cb\s+([A-Za-z_][A-Za-z0-9_]*)\s*\(([^)]*)\)"
    r"(?:\s+returns\s+([A-Za-z_][A-Za-z0-9_]*))?"
    r"\s+entry\s+(\S+)\s+exit\s+(\S+)$"
)
_EDGE_RE = re.compile(r"^edge\s+(\S+)\s*->\s*(\S+)\s*:\s*(.+)$")
_CI_RE = re.compile(
    r"^ci\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?:(\S+?)\s*\.\s*)?"
    r"([A-Za-z_][A-Za-z0-9_]*)\s*\(([^)]*)\)$"
)
_ASSIGN_RE = re.compile(r"^assign\s+(\w+)\s*(?::=|=)\s*(\w+)$")
_CONST_RE = re.compile(r"^const\s+(\w+)\s*(?::=|=)\s*(\S+)$")
_NEW_RE = re.compile(r"^new\s+(\w+)$")
_LOAD_RE = re.compile(r"^load\s+(\w+)\s*(?::=|=)\s*(\w+)\s*\.\s*(\w+)$")
_STORE_RE = re.compile(r"^store\s+(\w+)\s*\.\s*(\w+)\s*(?::=|=)\s*(\S+)$")
_ASSUME_RE = re.compile(r"^assume\s+(.+)$")
_ASSERT_RE = re.compile(r"^assert\s+(.+?)(?:\s+@(\w+))?$")
_COND_RE = re.compile(r"^(\S+)\s*(==|!=)\s*(\S+)$")


def _parse_cond(text: str, line: int) -> Cond:
    text = text.strip()
    if text == "true":
        return COND_TRUE
    if text == "false":
        return COND_FALSE
    m = _COND_RE.match(text)
    if not m:
        raise IRError(f"bad condition {text!r}", line)
    lhs_t, op, rhs_t = m.groups()
    lhs = parse_literal(lhs_t) if parse_literal(lhs_t) is not None else lhs_t
    rhs = parse_literal(rhs_t) if parse_literal(rhs_t) is not None else rhs_t
    return Cond(lhs, op, rhs)


def _parse_ci_arg(tok: str) -> CondSide:
    tok = tok.strip()
    lit = parse_literal(tok)
    return lit if lit is not None else tok


def parse_command(text: str, line: int = 0) -> AppCommand | CiInvoke:
    text = text.strip()
    if m := _CI_RE.match(text):
        ret, recv, name, args_t = m.groups()
        args: list[CondSide] = []
        if recv:
            args.append(_parse_ci_arg(recv))
        if args_t.strip():
            args.extend(_parse_ci_arg(t) for t in args_t.split(","))
        return CiInvoke(ci_sig(name, len(args)), ret, tuple(args))
    if m := _ASSIGN_RE.match(text):
        return Assign(m.group(1), m.group(2))
    if m := _CONST_RE.match(text):
        lit = parse_literal(m.group(2))
        if lit is None:
            raise IRError(f"bad literal {m.group(2)!r}", line)
        return Const(m.group(1), lit)
    if m := _NEW_RE.match(text):
        return New(m.group(1))
    if m := _LOAD_RE.match(text):
        return Load(m.group(1), m.group(2), m.group(3))
    if m := _STORE_RE.match(text):
        src = _parse_ci_arg(m.group(3))
        return Store(m.group(1), m.group(2), src)
    if m := _ASSERT_RE.match(text):
        return Assert(_parse_cond(m.group(1), line), m.group(2) or "")
    if m := _ASSUME_RE.match(text):
        return Assume(_parse_cond(m.group(1), line))
    raise IRError(f"bad command {text!r}", line)


def parse_program(text: str) -> Program:
    """Parse the line-oriented program format (or its JSON mirror)."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _program_from_json(json.loads(text))

    locs: dict[str, Loc] = {}
    callbacks: dict[str, CallbackDecl] = {}
    edges: list[tuple[str, str, str, int]] = []
    fwk: Optional[str] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := _LOC_RE.match(line):
            lid, is_fwk = m.group(1), bool(m.group(2))
            if lid in locs:
                raise IRError(f"duplicate location id {lid!r}", lineno)
            locs[lid] = Loc(lid, "fwk" if is_fwk else "app")
            if is_fwk:
                if fwk is not None:
                    raise IRError("second fwk location", lineno)
                fwk = lid
        elif m := _CB_RE.match(line):
            name, params_t, retvar, entry, exit_ = m.groups()
            params = tuple(p.strip() for p in params_t.split(",") if p.strip())
            if name in callbacks:
                raise IRError(f"duplicate callback {name!r}", lineno)
            callbacks[name] = CallbackDecl(name, params, entry, exit_, retvar)
        elif m := _EDGE_RE.match(line):
            edges.append((m.group(1), m.group(2), m.group(3), lineno))
        else:
            raise IRError(f"cannot parse {line!r}", lineno)

    if fwk is None:
        raise IRError("no fwk location declared")

    transitions: list[Transition] = []
    idx = 0
    for cb in callbacks.values():
        transitions.append(Transition(fwk, cb.entry, CbInvoke(cb.sig, cb.params), idx))
        idx += 1
        transitions.append(
            Transition(cb.exit, fwk, CbReturn(cb.ret_sig, cb.params, cb.retvar), idx)
        )
        idx += 1
    for pre, post, cmd_t, lineno in edges:
        for lid in (pre, post):
            if lid not in locs:
                raise IRError(f"unknown location {lid!r}", lineno)
        cmd = parse_command(cmd_t, lineno)
        payload = cmd if isinstance(cmd, CiInvoke) else App(cmd)
        transitions.append(Transition(pre, post, payload, idx))
        idx += 1

    prog = Program(locs, callbacks, transitions, fwk)
    _check_variables(prog)
    return prog


def _program_from_json(doc: dict) -> Program:
    text_lines = []
    for loc in doc.get("locs", []):
        text_lines.append(f"loc {loc['id']}" + (" fwk" if loc.get("kind") == "fwk" else ""))
    for cb in doc.get("callbacks", []):
        params = ", ".join(cb.get("params", []))
        ret = f" returns {cb['returns']}" if cb.get("returns") else ""
        text_lines.append(f"cb {cb['name']}({params}){ret} entry {cb['entry']} exit {cb['exit']}")
    for e in doc.get("edges", []):
        text_lines.append(f"edge {e['pre']} -> {e['post']}: {e['command']}")
    return parse_program("\n".join(text_lines))


def print_program(p: Program) -> str:
    """Canonical text form; parse_program(print_program(p)) round-trips."""
    lines = []
    for loc in p.locs.values():
        lines.append(f"loc {loc.id}" + (" fwk" if loc.kind == "fwk" else ""))
    for cb in p.callbacks.values():
        params = ", ".join(cb.params)
        ret = f" returns {cb.retvar}" if cb.retvar else ""
        lines.append(f"cb {cb.name}({params}){ret} entry {cb.entry} exit {cb.exit}")
    for t in p.transitions:
        if isinstance(t.payload, (CbInvoke, CbReturn)):
            continue  # regenerated from the callback declarations
        cmd = t.payload.cmd if isinstance(t.payload, App) else t.payload
        lines.append(f"edge {t.pre} -> {t.post}: {_format_cmd(cmd)}")
    return "\n".join(lines) + "\n"


def _format_cmd(cmd: AppCommand | CiInvoke) -> str:
    if isinstance(cmd, CiInvoke):
        args = [(_side(a)) for a in cmd.argvars]
        if cmd.sig.arity:
            return f"ci {cmd.retvar} = {args[0]}.{cmd.sig.name}({', '.join(args[1:])})"
        return f"ci {cmd.retvar} = {cmd.sig.name}()"
    return repr(cmd)


def _callback_regions(p: Program) -> dict[str, set[str]]:
    """Locations reachable from each callback entry via app/callin edges."""
    succ: dict[str, list[str]] = {}
    for t in p.transitions:
        if isinstance(t.payload, (App, CiInvoke)):
            succ.setdefault(t.pre, []).append(t.post)
    regions = {}
    for cb in p.callbacks.values():
        seen = {cb.entry}
        stack = [cb.entry]
        while stack:
            loc = stack.pop()
            for nxt in succ.get(loc, []):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        regions[cb.name] = seen
    return regions


def _cmd_uses(cmd: AppCommand | CiInvoke) -> set[str]:
    def side_vars(s: CondSide) -> set[str]:
        return {s} if isinstance(s, str) else set()

    if isinstance(cmd, Assign):
        return {cmd.y}
    if isinstance(cmd, Load):
        return {cmd.y}
    if isinstance(cmd, Store):
        return {cmd.x} | side_vars(cmd.src)
    if isinstance(cmd, (Assume, Assert)):
        return side_vars(cmd.cond.lhs) | side_vars(cmd.cond.rhs)
    if isinstance(cmd, CiInvoke):
        out: set[str] = set()
        for a in cmd.argvars:
            out |= side_vars(a)
        return out
    return set()


def _cmd_defs(cmd: AppCommand | CiInvoke) -> set[str]:
    if isinstance(cmd, (Assign, Load, Const, New)):
        return {cmd.x}
    if isinstance(cmd, CiInvoke):
        return {cmd.retvar}
    return set()


def _check_variables(p: Program) -> None:
    regions = _callback_regions(p)
    for cb in p.callbacks.values():
        defined = set(cb.params)
        region = regions[cb.name]
        body = [
            t
            for t in p.transitions
            if isinstance(t.payload, (App, CiInvoke)) and t.pre in region
        ]
        for t in body:
            cmd = t.payload.cmd if isinstance(t.payload, App) else t.payload
            defined |= _cmd_defs(cmd)
        if cb.retvar:
            if cb.retvar not in defined:
                raise IRError(f"unknown variable {cb.retvar!r} in callback {cb.name}")
        for t in body:
            cmd = t.payload.cmd if isinstance(t.payload, App) else t.payload
            for v in _cmd_uses(cmd):
                if v not in defined:
                    raise IRError(f"unknown variable {v!r} in callback {cb.name}")


# ---------------------------------------------------------------------------
# Validation


def validate_program(p: Program) -> list[str]:
    """Check program invariants; returns one diagnostic per violation."""
    diags: list[str] = []
    fwks = [l.id for l in p.locs.values() if l.kind == "fwk"]
    if len(fwks) != 1:
        diags.append(f"expected exactly one fwk location, found {len(fwks)}")
    for t in p.transitions:
        for lid in (t.pre, t.post):
            if lid not in p.locs:
                diags.append(f"transition {t.idx}: unknown location {lid!r}")
                break
        else:
            pre_k = p.locs[t.pre].kind
            post_k = p.locs[t.post].kind
            pay = t.payload
            if isinstance(pay, CbInvoke) and (pre_k, post_k) != ("fwk", "app"):
                diags.append(f"transition {t.idx}: cb invoke must go fwk -> app")
            if isinstance(pay, CbReturn) and (pre_k, post_k) != ("app", "fwk"):
                diags.append(f"transition {t.idx}: cb return must go app -> fwk")
            if isinstance(pay, (CiInvoke, App)) and (pre_k, post_k) != ("app", "app"):
                diags.append(f"transition {t.idx}: app/callin edge must stay in app")
    invoke_sigs = {
        t.payload.sig.name for t in p.transitions if isinstance(t.payload, CbInvoke)
    }
    for t in p.transitions:
        if isinstance(t.payload, CbReturn) and t.payload.sig.name not in invoke_sigs:
            diags.append(
                f"transition {t.idx}: cb return {t.payload.sig.name!r} has no matching invoke"
            )
    # Arity consistency: one arity per (kind, name).
    seen_sigs: dict[tuple[str, str], int] = {}
    for t in p.transitions:
        pay = t.payload
        if isinstance(pay, (CbInvoke, CbReturn, CiInvoke)):
            key = (pay.sig.kind, pay.sig.name)
            if key in seen_sigs and seen_sigs[key] != pay.sig.arity:
                diags.append(f"inconsistent arity for {key[0]} {key[1]}")
            seen_sigs[key] = pay.sig.arity
    regions = _callback_regions(p)
    for cb in p.callbacks.values():
        if cb.entry not in p.locs or cb.exit not in p.locs:
            diags.append(f"callback {cb.name}: entry/exit location missing")
            continue
        if cb.exit not in regions[cb.name]:
            diags.append(f"callback {cb.name}: exit not reachable from entry")
    return diags
