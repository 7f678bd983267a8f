"""Temporal specification language over message histories.

A spec is a conjunction of history implications ``target -> formula``: every
time a message matching the target occurs, the history strictly before it
must satisfy the formula.  Formulas are past-time temporal constraints over
finite histories: ``O m`` (m occurred), ``HN m`` (m never occurred), and
``NS(m2, m1)`` (m1 occurred and m2 has not occurred since), plus positive
boolean structure, (dis)equalities, and quantifiers over message values.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Union

from .ir import (
    CB,
    CBRET,
    CI,
    KINDS,
    Message,
    MessageHistory,
    MethodSig,
    NULL,
    Value,
    parse_literal,
)


class SpecError(Exception):
    """Raised on malformed specs or misused semantic operations."""


# ---------------------------------------------------------------------------
# Terms, abstract and symbolic messages


@dataclass(frozen=True, order=True)
class SymVar:
    name: str

    def __repr__(self) -> str:
        return self.name


Term = Union[SymVar, Value]


class VarGen:
    """Fresh-variable source; unique names for one verifier run."""

    def __init__(self, prefix: str = ""):
        self._count = itertools.count()
        self._prefix = prefix

    def fresh(self, base: str = "v") -> SymVar:
        return SymVar(f"{self._prefix}{base}{next(self._count)}")


_MODULE_GEN = VarGen("g_")


def default_gen() -> VarGen:
    return _MODULE_GEN


@dataclass(frozen=True)
class AbstractMessage:
    """A message shape with symbolic or literal slots, all free."""

    sig: MethodSig
    args: tuple[Term, ...]
    ret: Optional[Term]

    def __post_init__(self) -> None:
        assert len(self.args) == self.sig.arity
        assert (self.ret is not None) == self.sig.has_ret

    def slots(self) -> tuple[Term, ...]:
        return self.args + ((self.ret,) if self.ret is not None else ())

    def vars(self) -> list[SymVar]:
        return [t for t in self.slots() if isinstance(t, SymVar)]

    def __repr__(self) -> str:
        return format_abstract_message(self)


@dataclass(frozen=True)
class SymbolicMessage:
    """An abstract message with local existentials for don't-care slots."""

    locals: frozenset[SymVar]
    body: AbstractMessage

    def __post_init__(self) -> None:
        occurrences = [v for v in self.body.vars() if v in self.locals]
        if set(occurrences) != set(self.locals) or len(occurrences) != len(self.locals):
            raise SpecError(
                f"each local of {self.body!r} must occur in exactly one slot"
            )

    def free_vars(self) -> set[SymVar]:
        return {v for v in self.body.vars() if v not in self.locals}

    def __repr__(self) -> str:
        return format_symbolic_message(self)


# ---------------------------------------------------------------------------
# Formulas


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class TrueF(Formula):
    def __repr__(self) -> str:
        return "true"


@dataclass(frozen=True)
class FalseF(Formula):
    def __repr__(self) -> str:
        return "false"


TRUEF = TrueF()
FALSEF = FalseF()


@dataclass(frozen=True)
class Once(Formula):
    msg: SymbolicMessage

    def __repr__(self) -> str:
        return f"O {self.msg!r}"


@dataclass(frozen=True)
class HistNot(Formula):
    msg: SymbolicMessage

    def __repr__(self) -> str:
        return f"HN {self.msg!r}"


@dataclass(frozen=True)
class NotSince(Formula):
    neg: SymbolicMessage
    pos: SymbolicMessage

    def __repr__(self) -> str:
        return f"NS({self.neg!r}, {self.pos!r})"


@dataclass(frozen=True)
class And(Formula):
    items: tuple[Formula, ...]

    def __repr__(self) -> str:
        return " && ".join(_wrap(i) for i in self.items)


@dataclass(frozen=True)
class Or(Formula):
    items: tuple[Formula, ...]

    def __repr__(self) -> str:
        return " || ".join(_wrap(i, in_or=True) for i in self.items)


@dataclass(frozen=True)
class Eq(Formula):
    a: Term
    b: Term

    def __repr__(self) -> str:
        return f"{self.a!r} == {self.b!r}"


@dataclass(frozen=True)
class Neq(Formula):
    a: Term
    b: Term

    def __repr__(self) -> str:
        return f"{self.a!r} != {self.b!r}"


@dataclass(frozen=True)
class Exists(Formula):
    vars: tuple[SymVar, ...]
    body: Formula

    def __repr__(self) -> str:
        vs = ", ".join(v.name for v in self.vars)
        return f"exists {vs}. {self.body!r}"


@dataclass(frozen=True)
class Forall(Formula):
    vars: tuple[SymVar, ...]
    body: Formula

    def __repr__(self) -> str:
        vs = ", ".join(v.name for v in self.vars)
        return f"forall {vs}. {self.body!r}"


def _wrap(f: Formula, in_or: bool = False) -> str:
    if isinstance(f, (Exists, Forall)):
        return f"({f!r})"
    if isinstance(f, Or) and not in_or:
        return f"({f!r})"
    if isinstance(f, And) and in_or:
        return f"({f!r})"
    return repr(f)


def conj(items: Sequence[Formula]) -> Formula:
    items = tuple(items)
    if not items:
        return TRUEF
    if len(items) == 1:
        return items[0]
    return And(items)


def disj(items: Sequence[Formula]) -> Formula:
    items = tuple(items)
    if not items:
        return FALSEF
    if len(items) == 1:
        return items[0]
    return Or(items)


@dataclass(frozen=True)
class HistoryImplication:
    target: AbstractMessage
    consequent: Formula

    def __repr__(self) -> str:
        return f"{self.target!r} -> {self.consequent!r}"


@dataclass(frozen=True)
class Spec:
    implications: tuple[HistoryImplication, ...] = ()

    def __repr__(self) -> str:
        return "\n".join(repr(i) for i in self.implications)


# An assignment maps symbolic variables to concrete values.
Assignment = dict[SymVar, Value]


# ---------------------------------------------------------------------------
# Structural helpers


_FV_CACHE: dict[int, tuple[Formula, frozenset]] = {}


def free_vars(f: Formula) -> frozenset[SymVar]:
    """Free variables; cached by identity (formulas are immutable)."""
    hit = _FV_CACHE.get(id(f))
    if hit is not None and hit[0] is f:
        return hit[1]
    out = frozenset(_free_vars(f))
    if len(_FV_CACHE) > 400_000:
        _FV_CACHE.clear()
    _FV_CACHE[id(f)] = (f, out)
    return out


def _free_vars(f: Formula) -> set[SymVar]:
    if isinstance(f, (TrueF, FalseF)):
        return set()
    if isinstance(f, Once):
        return f.msg.free_vars()
    if isinstance(f, HistNot):
        return f.msg.free_vars()
    if isinstance(f, NotSince):
        return f.neg.free_vars() | f.pos.free_vars()
    if isinstance(f, And) or isinstance(f, Or):
        out: set[SymVar] = set()
        for i in f.items:
            out |= free_vars(i)
        return out
    if isinstance(f, (Eq, Neq)):
        return {t for t in (f.a, f.b) if isinstance(t, SymVar)}
    if isinstance(f, (Exists, Forall)):
        return set(free_vars(f.body)) - set(f.vars)
    raise TypeError(f)


def _subst_term(t: Term, sub: dict[SymVar, Term]) -> Term:
    if isinstance(t, SymVar) and t in sub:
        return sub[t]
    return t


def _subst_msg(m: SymbolicMessage, sub: dict[SymVar, Term], gen: VarGen) -> SymbolicMessage:
    # Locals are renamed fresh to stay capture-free.
    ren = {v: gen.fresh("w") for v in m.locals}
    inner = {**sub, **ren}
    body = AbstractMessage(
        m.body.sig,
        tuple(_subst_term(t, inner) for t in m.body.args),
        _subst_term(m.body.ret, inner) if m.body.ret is not None else None,
    )
    return SymbolicMessage(frozenset(ren.values()), body)


def subst(f: Formula, sub: dict[SymVar, Term], gen: Optional[VarGen] = None) -> Formula:
    """Capture-avoiding substitution of free variables by terms."""
    gen = gen or default_gen()
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, Once):
        return Once(_subst_msg(f.msg, sub, gen))
    if isinstance(f, HistNot):
        return HistNot(_subst_msg(f.msg, sub, gen))
    if isinstance(f, NotSince):
        return NotSince(_subst_msg(f.neg, sub, gen), _subst_msg(f.pos, sub, gen))
    if isinstance(f, And):
        return And(tuple(subst(i, sub, gen) for i in f.items))
    if isinstance(f, Or):
        return Or(tuple(subst(i, sub, gen) for i in f.items))
    if isinstance(f, Eq):
        return Eq(_subst_term(f.a, sub), _subst_term(f.b, sub))
    if isinstance(f, Neq):
        return Neq(_subst_term(f.a, sub), _subst_term(f.b, sub))
    if isinstance(f, (Exists, Forall)):
        # Rename every binder fresh; cheap and uniformly capture-free.
        ren = {v: gen.fresh(v.name.rstrip("0123456789") or "v") for v in f.vars}
        inner = {k: v for k, v in sub.items() if k not in f.vars}
        inner.update(ren)
        body = subst(f.body, inner, gen)
        cls = Exists if isinstance(f, Exists) else Forall
        return cls(tuple(ren[v] for v in f.vars), body)
    raise TypeError(f)


def freshen(f: Formula, gen: Optional[VarGen] = None) -> Formula:
    """Rename all bound variables (binders and message locals) fresh."""
    return subst(f, {}, gen)


_SIMP_CACHE: dict[int, tuple[Formula, Formula]] = {}


def simplify(f: Formula) -> Formula:
    """Constant folding and unit laws; semantics-preserving. Cached."""
    hit = _SIMP_CACHE.get(id(f))
    if hit is not None and hit[0] is f:
        return hit[1]
    out = _simplify(f)
    if len(_SIMP_CACHE) > 400_000:
        _SIMP_CACHE.clear()
    _SIMP_CACHE[id(f)] = (f, out)
    _SIMP_CACHE[id(out)] = (out, out)
    return out


def _simplify(f: Formula) -> Formula:
    if isinstance(f, And):
        items: list[Formula] = []
        for i in f.items:
            si = simplify(i)
            if isinstance(si, FalseF):
                return FALSEF
            if isinstance(si, TrueF):
                continue
            if isinstance(si, And):
                items.extend(si.items)
            else:
                items.append(si)
        return conj(items)
    if isinstance(f, Or):
        items = []
        for i in f.items:
            si = simplify(i)
            if isinstance(si, TrueF):
                return TRUEF
            if isinstance(si, FalseF):
                continue
            if isinstance(si, Or):
                items.extend(si.items)
            else:
                items.append(si)
        return disj(items)
    if isinstance(f, (Eq, Neq)):
        if isinstance(f.a, Value) and isinstance(f.b, Value):
            same = f.a == f.b
            hold = same if isinstance(f, Eq) else not same
            return TRUEF if hold else FALSEF
        if f.a == f.b:
            return TRUEF if isinstance(f, Eq) else FALSEF
        return f
    if isinstance(f, (Exists, Forall)):
        body = simplify(f.body)
        if isinstance(body, (TrueF, FalseF)):
            return body  # quantifier domain is never empty (null is present)
        live = tuple(v for v in f.vars if v in free_vars(body))
        if not live:
            return body
        cls = Exists if isinstance(f, Exists) else Forall
        return cls(live, body)
    return f


def _count_free(f: Formula, v: SymVar) -> int:
    if isinstance(f, (TrueF, FalseF)):
        return 0
    if isinstance(f, (Once, HistNot)):
        return sum(1 for t in f.msg.body.slots() if t == v and v not in f.msg.locals)
    if isinstance(f, NotSince):
        return _count_free(Once(f.neg), v) + _count_free(Once(f.pos), v)
    if isinstance(f, (And, Or)):
        return sum(_count_free(i, v) for i in f.items)
    if isinstance(f, (Eq, Neq)):
        return (f.a == v) + (f.b == v)
    if isinstance(f, (Exists, Forall)):
        return 0 if v in f.vars else _count_free(f.body, v)
    raise TypeError(f)


def _add_local(sm: SymbolicMessage, v: SymVar) -> SymbolicMessage:
    return SymbolicMessage(sm.locals | {v}, sm.body)


def _demote(f: Formula, v: SymVar, quant: str) -> Optional[Formula]:
    """Push a single-use binder variable into its message's locals.

    Existentials may sink into positively-matched messages (Once, the NS
    positive); universals into negatively-matched ones (HN, the NS
    negative).  Valid in our negation-free boolean contexts.
    """
    if isinstance(f, Once):
        if quant == "exists" and v in f.msg.free_vars():
            return Once(_add_local(f.msg, v))
        return None
    if isinstance(f, HistNot):
        if quant == "forall" and v in f.msg.free_vars():
            return HistNot(_add_local(f.msg, v))
        return None
    if isinstance(f, NotSince):
        if quant == "exists" and v in f.pos.free_vars():
            return NotSince(f.neg, _add_local(f.pos, v))
        if quant == "forall" and v in f.neg.free_vars():
            return NotSince(_add_local(f.neg, v), f.pos)
        return None
    if isinstance(f, (And, Or)):
        for i, item in enumerate(f.items):
            if _count_free(item, v):
                got = _demote(item, v, quant)
                if got is None:
                    return None
                items = f.items[:i] + (got,) + f.items[i + 1 :]
                return type(f)(items)
        return None
    if isinstance(f, (Exists, Forall)):
        got = _demote(f.body, v, quant)
        return type(f)(f.vars, got) if got is not None else None
    return None


def normalize_binders(f: Formula) -> Formula:
    """Canonical form for alpha comparison: single-use binders become
    message locals where polarity allows."""
    if isinstance(f, (And, Or)):
        return type(f)(tuple(normalize_binders(i) for i in f.items))
    if isinstance(f, (Exists, Forall)):
        body = normalize_binders(f.body)
        quant = "exists" if isinstance(f, Exists) else "forall"
        keep = []
        for v in f.vars:
            if _count_free(body, v) == 1:
                got = _demote(body, v, quant)
                if got is not None:
                    body = got
                    continue
            keep.append(v)
        if not keep:
            return body
        return type(f)(tuple(keep), body)
    return f


def alpha_equivalent(a: Formula, b: Formula) -> bool:
    """Equality modulo bound-variable names, And/Or order, and the choice
    between a single-use quantifier and a message-local existential."""
    na = normalize_binders(simplify(a))
    nb = normalize_binders(simplify(b))
    return _alpha(na, nb, {})


def _key(f: Formula) -> tuple:
    # Coarse shape key to curb backtracking in multiset matching.
    if isinstance(f, (And, Or)):
        return (type(f).__name__, len(f.items))
    if isinstance(f, (Once, HistNot)):
        return (type(f).__name__, f.msg.body.sig.kind, f.msg.body.sig.name)
    if isinstance(f, NotSince):
        return ("NotSince", f.pos.body.sig.name, f.neg.body.sig.name)
    if isinstance(f, (Exists, Forall)):
        return (type(f).__name__, len(f.vars))
    return (type(f).__name__,)


def _alpha_term(a: Term, b: Term, env: dict[SymVar, SymVar]) -> bool:
    if isinstance(a, SymVar) and isinstance(b, SymVar):
        return env.get(b, b) == a
    return a == b


def _alpha_msg(a: SymbolicMessage, b: SymbolicMessage, env: dict[SymVar, SymVar]) -> bool:
    if a.body.sig != b.body.sig:
        return False
    env2 = dict(env)  # local bindings do not escape the message
    for ta, tb in zip(a.body.slots(), b.body.slots()):
        la = isinstance(ta, SymVar) and ta in a.locals
        lb = isinstance(tb, SymVar) and tb in b.locals
        if la != lb:
            return False
        if la:
            if tb in env2 and env2[tb] != ta:
                return False
            env2[tb] = ta
        elif not _alpha_term(ta, tb, env2):
            return False
    return True


def _alpha(a: Formula, b: Formula, env: dict[SymVar, SymVar]) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, (TrueF, FalseF)):
        return True
    if isinstance(a, Once):
        return _alpha_msg(a.msg, b.msg, dict(env))
    if isinstance(a, HistNot):
        return _alpha_msg(a.msg, b.msg, dict(env))
    if isinstance(a, NotSince):
        e = dict(env)
        return _alpha_msg(a.neg, b.neg, e) and _alpha_msg(a.pos, b.pos, e)
    if isinstance(a, (Eq, Neq)):
        return _alpha_term(a.a, b.a, env) and _alpha_term(a.b, b.b, env)
    if isinstance(a, (Exists, Forall)):
        if len(a.vars) != len(b.vars):
            return False
        # Try binder correspondences; small arities keep this cheap.
        for perm in itertools.permutations(a.vars):
            e = dict(env)
            e.update({bv: av for av, bv in zip(perm, b.vars)})
            if _alpha(a.body, b.body, e):
                return True
        return False
    if isinstance(a, (And, Or)):
        if len(a.items) != len(b.items):
            return False
        return _alpha_multiset(list(a.items), list(b.items), env)
    raise TypeError(a)


def _alpha_multiset(xs: list[Formula], ys: list[Formula], env: dict[SymVar, SymVar]) -> bool:
    if not xs:
        return True
    x, rest = xs[0], xs[1:]
    for j, y in enumerate(ys):
        if _key(x) != _key(y):
            continue
        if _alpha(x, y, env):
            if _alpha_multiset(rest, ys[:j] + ys[j + 1 :], env):
                return True
    return False


# ---------------------------------------------------------------------------
# Concrete semantics (finite-trace model checking)


def _theta_get(theta: Assignment, v: SymVar) -> Value:
    try:
        return theta[v]
    except KeyError:
        raise SpecError(f"assignment misses free variable {v!r}") from None


def models_message(m: Message, theta: Assignment, sm: SymbolicMessage) -> bool:
    """Does concrete message m match sm under theta (extended on locals)?"""
    if m.sig != sm.body.sig:
        return False
    ext: dict[SymVar, Value] = {}
    mslots = m.args + ((m.ret,) if m.ret is not None else ())
    for t, v in zip(sm.body.slots(), mslots):
        if isinstance(t, SymVar):
            if t in sm.locals:
                if ext.setdefault(t, v) != v:
                    return False
            elif _theta_get(theta, t) != v:
                return False
        elif t != v:
            return False
    return True


def _prefix_universe(hist: MessageHistory, i: int, theta: Assignment) -> list[Value]:
    vals: list[Value] = [NULL]
    seen = {NULL}
    for m in hist[: i + 1]:
        for v in m.values():
            if v not in seen:
                seen.add(v)
                vals.append(v)
    for v in theta.values():
        if v not in seen:
            seen.add(v)
            vals.append(v)
    return vals


def models_formula(hist: MessageHistory, theta: Assignment, i: int, f: Formula) -> bool:
    """Satisfaction over the prefix hist[0..i]; i == -1 is the empty prefix.

    Quantifiers range over the values in the prefix, theta's range, and null.
    """
    if not (-1 <= i <= len(hist) - 1):
        raise SpecError(f"position {i} out of range for history of length {len(hist)}")
    return _models(hist, theta, i, f)


def _models(hist: MessageHistory, theta: Assignment, i: int, f: Formula) -> bool:
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Once):
        return any(models_message(hist[j], theta, f.msg) for j in range(i + 1))
    if isinstance(f, HistNot):
        return all(not models_message(hist[k], theta, f.msg) for k in range(i + 1))
    if isinstance(f, NotSince):
        for j in range(i + 1):
            if models_message(hist[j], theta, f.pos) and all(
                not models_message(hist[k], theta, f.neg) for k in range(j + 1, i + 1)
            ):
                return True
        return False
    if isinstance(f, And):
        return all(_models(hist, theta, i, x) for x in f.items)
    if isinstance(f, Or):
        return any(_models(hist, theta, i, x) for x in f.items)
    if isinstance(f, Eq) or isinstance(f, Neq):
        a = _theta_get(theta, f.a) if isinstance(f.a, SymVar) else f.a
        b = _theta_get(theta, f.b) if isinstance(f.b, SymVar) else f.b
        return (a == b) if isinstance(f, Eq) else (a != b)
    if isinstance(f, (Exists, Forall)):
        domain = _prefix_universe(hist, i, theta)
        combos = itertools.product(domain, repeat=len(f.vars))
        if isinstance(f, Exists):
            return any(
                _models(hist, {**theta, **dict(zip(f.vars, c))}, i, f.body)
                for c in combos
            )
        return all(
            _models(hist, {**theta, **dict(zip(f.vars, c))}, i, f.body) for c in combos
        )
    raise TypeError(f)


def match_target(m: Message, target: AbstractMessage) -> Optional[Assignment]:
    """Bind target variables from a concrete message, or None on mismatch."""
    if m.sig != target.sig:
        return None
    theta: Assignment = {}
    mslots = m.args + ((m.ret,) if m.ret is not None else ())
    for t, v in zip(target.slots(), mslots):
        if isinstance(t, SymVar):
            if theta.setdefault(t, v) != v:
                return None
        elif t != v:
            return None
    return theta


def models_spec(hist: MessageHistory, spec: Spec) -> bool:
    """Every matching position's preceding prefix satisfies the consequent."""
    for i, m in enumerate(hist):
        for imp in spec.implications:
            theta = match_target(m, imp.target)
            if theta is not None and not models_formula(hist, theta, i - 1, imp.consequent):
                return False
    return True


def models_spec_at(hist: MessageHistory, spec: Spec, i: int) -> bool:
    """Check only position i's implications (incremental re-check)."""
    m = hist[i]
    for imp in spec.implications:
        theta = match_target(m, imp.target)
        if theta is not None and not models_formula(hist, theta, i - 1, imp.consequent):
            return False
    return True


# ---------------------------------------------------------------------------
# Well-formedness


def check_wellformed(f: Formula) -> bool:
    """Forall bodies may only combine HN and (dis)equalities."""
    return _wf(f)


def _wf(f: Formula) -> bool:
    if isinstance(f, (Once, NotSince)):
        return True
    if isinstance(f, Exists):
        return _wf(f.body)
    if isinstance(f, And) or isinstance(f, Or):
        return all(_wf(i) for i in f.items)
    if isinstance(f, Forall):
        return _wf_univ(f.body)
    return _wf_univ(f)


def _wf_univ(f: Formula) -> bool:
    if isinstance(f, (HistNot, Eq, Neq, TrueF, FalseF)):
        return True
    if isinstance(f, And) or isinstance(f, Or):
        return all(_wf_univ(i) for i in f.items)
    return False


def check_implication(imp: HistoryImplication) -> None:
    tvars = imp.target.vars()
    if len(tvars) != len(set(tvars)):
        raise SpecError(f"repeated variable in target {imp.target!r}")
    if not check_wellformed(imp.consequent):
        raise SpecError(f"ill-formed consequent in {imp!r}")
    escaped = free_vars(imp.consequent) - set(tvars)
    if escaped:
        raise SpecError(f"free variables {sorted(v.name for v in escaped)} escape {imp.target!r}")


# ---------------------------------------------------------------------------
# Printing


def _fmt_term(t: Term, locals_: frozenset[SymVar] = frozenset()) -> str:
    if isinstance(t, SymVar):
        return "_" if t in locals_ else t.name
    return repr(t)


def format_abstract_message(am: AbstractMessage, locals_: frozenset[SymVar] = frozenset()) -> str:
    ret = ""
    if am.ret is not None:
        ret = f"{_fmt_term(am.ret, locals_)} = "
    if am.args:
        recv = _fmt_term(am.args[0], locals_)
        rest = ", ".join(_fmt_term(a, locals_) for a in am.args[1:])
        return f"{am.sig.kind} {ret}{recv}.{am.sig.name}({rest})"
    return f"{am.sig.kind} {ret}{am.sig.name}()"


def format_symbolic_message(sm: SymbolicMessage) -> str:
    return format_abstract_message(sm.body, sm.locals)


def format_formula(f: Formula) -> str:
    return repr(f)


def format_spec(spec: Spec) -> str:
    return "\n".join(repr(i) for i in spec.implications) + "\n"


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(->|==|!=|&&|\|\||[(),.=]|-?\d+|[A-Za-z_][A-Za-z0-9_]*|\S)"
)


def _tokenize(text: str) -> list[str]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            break
        toks.append(m.group(1))
        pos = m.end()
    return toks


class _Parser:
    def __init__(self, toks: list[str], line: str):
        self.toks = toks
        self.pos = 0
        self.line = line
        self.wild = itertools.count()

    def peek(self, k: int = 0) -> Optional[str]:
        return self.toks[self.pos + k] if self.pos + k < len(self.toks) else None

    def next(self) -> str:
        t = self.peek()
        if t is None:
            raise SpecError(f"unexpected end of input in {self.line!r}")
        self.pos += 1
        return t

    def expect(self, tok: str) -> None:
        t = self.next()
        if t != tok:
            raise SpecError(f"expected {tok!r}, got {t!r} in {self.line!r}")

    # -- messages ----------------------------------------------------------

    def parse_message(self) -> SymbolicMessage:
        kind = self.next()
        if kind not in KINDS:
            raise SpecError(f"expected message kind, got {kind!r} in {self.line!r}")
        locals_: set[SymVar] = set()

        def term(tok: str) -> Term:
            if tok == "_":
                v = SymVar(f"_w{next(self.wild)}")
                locals_.add(v)
                return v
            lit = parse_literal(tok)
            return lit if lit is not None else SymVar(tok)

        ret_tok: Optional[str] = None
        recv_tok: Optional[str] = None
        if self.peek(1) == "=":
            ret_tok = self.next()
            self.expect("=")
        if self.peek(1) == ".":
            recv_tok = self.next()
            self.expect(".")
        name = self.next()
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            raise SpecError(f"bad method name {name!r} in {self.line!r}")
        self.expect("(")
        args: list[Term] = []
        if recv_tok is not None:
            args.append(term(recv_tok))
        if self.peek() != ")":
            while True:
                args.append(term(self.next()))
                if self.peek() == ",":
                    self.next()
                else:
                    break
        self.expect(")")
        has_ret = kind != CB
        if ret_tok is not None and not has_ret:
            raise SpecError(f"cb message cannot bind a return in {self.line!r}")
        ret: Optional[Term] = None
        if has_ret:
            ret = term(ret_tok) if ret_tok is not None else term("_")
        sig = MethodSig(kind, name, len(args), has_ret)
        return SymbolicMessage(frozenset(locals_), AbstractMessage(sig, tuple(args), ret))

    # -- formulas ----------------------------------------------------------

    def parse_formula(self) -> Formula:
        return self._disj()

    def _disj(self) -> Formula:
        items = [self._conj()]
        while self.peek() == "||":
            self.next()
            items.append(self._conj())
        return disj(items)

    def _conj(self) -> Formula:
        items = [self._unary()]
        while self.peek() == "&&":
            self.next()
            items.append(self._unary())
        return conj(items)

    def _unary(self) -> Formula:
        t = self.peek()
        if t in ("exists", "forall"):
            self.next()
            vs = [SymVar(self.next())]
            while self.peek() == ",":
                self.next()
                vs.append(SymVar(self.next()))
            self.expect(".")
            body = self.parse_formula()  # body extends maximally right
            return (Exists if t == "exists" else Forall)(tuple(vs), body)
        if t == "(":
            self.next()
            f = self.parse_formula()
            self.expect(")")
            return f
        if t == "true":
            self.next()
            return TRUEF
        if t == "false":
            self.next()
            return FALSEF
        if t == "O":
            self.next()
            return Once(self._msg_arg())
        if t == "HN":
            self.next()
            return HistNot(self._msg_arg())
        if t == "NS":
            self.next()
            self.expect("(")
            neg = self.parse_message()
            self.expect(",")
            pos = self.parse_message()
            self.expect(")")
            return NotSince(neg, pos)
        # (dis)equality atom
        a = self._term()
        op = self.next()
        if op not in ("==", "!="):
            raise SpecError(f"expected comparison, got {op!r} in {self.line!r}")
        b = self._term()
        return Eq(a, b) if op == "==" else Neq(a, b)

    def _msg_arg(self) -> SymbolicMessage:
        if self.peek() == "(" and self.peek(1) in KINDS:
            self.next()
            m = self.parse_message()
            self.expect(")")
            return m
        return self.parse_message()

    def _term(self) -> Term:
        tok = self.next()
        lit = parse_literal(tok)
        if lit is not None:
            return lit
        if tok == "_":
            raise SpecError(f"wildcard not allowed in comparison in {self.line!r}")
        return SymVar(tok)


def parse_formula(text: str) -> Formula:
    p = _Parser(_tokenize(text), text)
    f = p.parse_formula()
    if p.peek() is not None:
        raise SpecError(f"trailing tokens {p.toks[p.pos:]} in {text!r}")
    return f


def parse_implication(line: str) -> HistoryImplication:
    p = _Parser(_tokenize(line), line)
    tgt_msg = p.parse_message()
    p.expect("->")
    body = p.parse_formula()
    if p.peek() is not None:
        raise SpecError(f"trailing tokens {p.toks[p.pos:]} in {line!r}")
    # Target wildcards become ordinary (unused) binder variables.
    target = tgt_msg.body
    imp = HistoryImplication(target, body)
    check_implication(imp)
    return imp


def parse_spec(text: str) -> Spec:
    imps = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            imps.append(parse_implication(line))
    return Spec(tuple(imps))


def spec_sigs(spec: Spec) -> dict[tuple[str, str], MethodSig]:
    out: dict[tuple[str, str], MethodSig] = {}

    def add(sig: MethodSig) -> None:
        key = (sig.kind, sig.name)
        if key in out and out[key] != sig:
            raise SpecError(f"inconsistent arity for {key[0]} {key[1]} in spec")
        out[key] = sig

    def walk(f: Formula) -> None:
        if isinstance(f, (Once, HistNot)):
            add(f.msg.body.sig)
        elif isinstance(f, NotSince):
            add(f.neg.body.sig)
            add(f.pos.body.sig)
        elif isinstance(f, (And, Or)):
            for i in f.items:
                walk(i)
        elif isinstance(f, (Exists, Forall)):
            walk(f.body)

    for imp in spec.implications:
        add(imp.target.sig)
        walk(imp.consequent)
    return out
