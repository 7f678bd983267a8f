"""Backwards abstract domain: histories, stores, stacks, pure constraints.

States are substitution-normalized: deduced equalities are applied on the
spot, so the pure part only carries disequalities and seen() marks.  The
heap is a set of separating points-to atoms ``recv.field -> value``; two
atoms never share a (receiver, field) cell.  Transfer functions run
backwards: crossing a boundary transition prepends the corresponding
hypothesized message onto the abstract history.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Union

from . import combine, smtenc
from .cbcftl import (
    AbstractMessage,
    And,
    Eq,
    Formula,
    Neq,
    Spec,
    SymVar,
    Term,
    VarGen,
    conj,
    simplify,
    subst as formula_subst,
)
from .ir import (
    App,
    Assert,
    Assign,
    Assume,
    CbInvoke,
    CbReturn,
    CiInvoke,
    Cond,
    CondSide,
    Const,
    FALSE,
    Load,
    New,
    Program,
    Query,
    Store,
    Transition,
    TRUE,
    Value,
    NULL,
    cb_sig,
)
from .mhist import AbsMsgHistory, Cons, OKHIST, cb_depth, format_hist


def _canon_pair(a: Term, b: Term) -> tuple[Term, Term]:
    return (a, b) if repr(a) <= repr(b) else (b, a)


@dataclass(frozen=True)
class AbsState:
    hist: AbsMsgHistory
    varmap: tuple[tuple[str, Term], ...]  # ordered; unique keys
    heap: tuple[tuple[SymVar, str, Term], ...]  # separating atoms
    stack: Optional[AbstractMessage]  # None is the unknown stack (top)
    neqs: frozenset[tuple[Term, Term]]
    seen: frozenset[SymVar]
    loc: str
    # app-allocated values: distinct from anything observed earlier in time
    allocated: frozenset[SymVar] = frozenset()

    # -- lookups ------------------------------------------------------------

    def var(self, x: str) -> Optional[Term]:
        for k, v in self.varmap:
            if k == x:
                return v
        return None

    def bind(self, x: str, t: Term) -> "AbsState":
        assert self.var(x) is None
        return replace(self, varmap=self.varmap + ((x, t),))

    def unbind(self, x: str) -> "AbsState":
        return replace(self, varmap=tuple((k, v) for k, v in self.varmap if k != x))

    def symvars(self) -> set[SymVar]:
        out: set[SymVar] = set()
        for _, v in self.varmap:
            if isinstance(v, SymVar):
                out.add(v)
        for r, _, v in self.heap:
            out.add(r)
            if isinstance(v, SymVar):
                out.add(v)
        if self.stack is not None:
            out.update(self.stack.vars())
        return out

    # -- equality reasoning ---------------------------------------------------

    def unify(self, a: Term, b: Term) -> Optional["AbsState"]:
        """Assert a == b; None when contradictory."""
        if a == b:
            return self
        if isinstance(a, Value) and isinstance(b, Value):
            return None
        if isinstance(b, SymVar) and not isinstance(a, SymVar):
            a, b = b, a
        # a is a SymVar; substitute it by b everywhere.
        assert isinstance(a, SymVar)
        if _canon_pair(a, b) in self.neqs:
            return None
        return self._apply({a: b})

    def _apply(self, sub: dict[SymVar, Term]) -> Optional["AbsState"]:
        def st(t: Term) -> Term:
            return sub.get(t, t) if isinstance(t, SymVar) else t

        def sm(m: AbstractMessage) -> AbstractMessage:
            return AbstractMessage(
                m.sig,
                tuple(st(x) for x in m.args),
                st(m.ret) if m.ret is not None else None,
            )

        def sh(h: AbsMsgHistory) -> AbsMsgHistory:
            if isinstance(h, Cons):
                return Cons(sh(h.tail), sm(h.next))
            return h

        varmap = tuple((k, st(v)) for k, v in self.varmap)
        stack = sm(self.stack) if self.stack is not None else None
        hist = sh(self.hist)
        neqs = set()
        for x, y in self.neqs:
            nx, ny = st(x), st(y)
            if nx == ny:
                return None
            if isinstance(nx, Value) and isinstance(ny, Value):
                continue  # distinct literals hold trivially
            neqs.add(_canon_pair(nx, ny))
        seen = frozenset(v2 for v2 in (st(v) for v in self.seen) if isinstance(v2, SymVar))
        allocated = frozenset(
            v2 for v2 in (st(v) for v in self.allocated) if isinstance(v2, SymVar)
        )
        # Heap: substitute; separating atoms never share a cell, so a
        # receiver collision on the same field is a contradiction.
        atoms: list[tuple[SymVar, str, Term]] = []
        for r, f, v in self.heap:
            nr, nv = st(r), st(v)
            if not isinstance(nr, SymVar):
                return None  # receiver collapsed to a literal: no such cell
            if any(a[0] == nr and a[1] == f for a in atoms):
                return None
            atoms.append((nr, f, nv))
        return AbsState(
            hist, varmap, tuple(atoms), stack, frozenset(neqs), seen, self.loc, allocated
        )

    def add_neq(self, a: Term, b: Term) -> Optional["AbsState"]:
        if a == b:
            return None
        if isinstance(a, Value) and isinstance(b, Value):
            return self
        return replace(self, neqs=self.neqs | {_canon_pair(a, b)})

    def neq_holds(self, a: Term, b: Term) -> bool:
        if isinstance(a, Value) and isinstance(b, Value):
            return a != b
        if _canon_pair(a, b) in self.neqs:
            return True
        # Separation: two atoms on the same field live at distinct receivers.
        if isinstance(a, SymVar) and isinstance(b, SymVar):
            fields_a = {f for r, f, _ in self.heap if r == a}
            fields_b = {f for r, f, _ in self.heap if r == b}
            if fields_a & fields_b:
                return True
        return False

    def atom(self, r: SymVar, f: str) -> Optional[Term]:
        for ar, af, av in self.heap:
            if ar == r and af == f:
                return av
        return None

    def drop_atom(self, r: SymVar, f: str) -> "AbsState":
        return replace(
            self, heap=tuple(a for a in self.heap if not (a[0] == r and a[1] == f))
        )

    def add_atom(self, r: SymVar, f: str, v: Term) -> "AbsState":
        assert self.atom(r, f) is None
        return replace(self, heap=self.heap + ((r, f, v),))

    def add_seen(self, terms: Iterable[Term]) -> "AbsState":
        extra = frozenset(t for t in terms if isinstance(t, SymVar))
        return replace(self, seen=self.seen | extra)

    def pure_formula(self) -> Formula:
        atoms = [Neq(a, b) for a, b in sorted(self.neqs, key=repr)]
        # Separation: same-field atoms live at distinct receivers.
        by_field: dict[str, list[SymVar]] = {}
        for r, f, _ in self.heap:
            by_field.setdefault(f, []).append(r)
        for f, rs in sorted(by_field.items()):
            for i in range(len(rs)):
                for j in range(i + 1, len(rs)):
                    atoms.append(Neq(*_canon_pair(rs[i], rs[j])))
        return conj(atoms)

    def __repr__(self) -> str:
        return format_state(self)


def format_state(s: AbsState) -> str:
    store = [f"{k}->{v!r}" for k, v in s.varmap]
    store += [f"{r!r}.{f}->{v!r}" for r, f, v in s.heap]
    pure = [f"{a!r}!={b!r}" for a, b in sorted(s.neqs, key=repr)]
    pure += [f"seen({v!r})" for v in sorted(s.seen)]
    parts = [format_hist(s.hist)]
    parts.append("store: " + (", ".join(store) if store else "T"))
    if s.stack is not None:
        parts.append(f"stack: {s.stack!r}")
    parts.append("pure: " + (", ".join(pure) if pure else "true"))
    return " | ".join(parts)


def empty_state(loc: str) -> AbsState:
    return AbsState(OKHIST, (), (), None, frozenset(), frozenset(), loc, frozenset())


# ---------------------------------------------------------------------------
# Error condition


def _materialize(st: AbsState, x: str, gen: VarGen) -> tuple[AbsState, Term]:
    v = st.var(x)
    if v is not None:
        return st, v
    nv = gen.fresh(x + "_")
    return st.bind(x, nv), nv


def _cond_side(st: AbsState, s: CondSide, gen: VarGen) -> tuple[AbsState, Term]:
    if isinstance(s, Value):
        return st, s
    return _materialize(st, s, gen)


def _apply_cond(st: AbsState, cond: Cond, gen: VarGen) -> Optional[AbsState]:
    st1, a = _cond_side(st, cond.lhs, gen)
    st2, b = _cond_side(st1, cond.rhs, gen)
    if cond.op == "==":
        return st2.unify(a, b)
    return st2.add_neq(a, b)


def init_error_state(q: Query, gen: VarGen) -> Optional[AbsState]:
    """State just before the assertion where the assertion may fail."""
    st = empty_state(q.target.pre)
    return _apply_cond(st, q.error_cond, gen)


# ---------------------------------------------------------------------------
# Backwards transfer: boundary transitions


def _sep_allocated(st: AbsState, msg: AbstractMessage) -> Optional[AbsState]:
    """Slots of this (earlier) message predate the state's allocations."""
    cur: Optional[AbsState] = st
    for a in st.allocated:
        for slot in msg.slots():
            if slot == a:
                return None  # an earlier message cannot mention a later allocation
            cur = cur.add_neq(a, slot)
            if cur is None:
                return None
    return cur


def pre_boundary(
    spec: Spec, st: AbsState, trans: Transition, gen: VarGen
) -> list[AbsState]:
    pay = trans.payload
    assert st.loc == trans.post, "post-state location must match the transition"
    if isinstance(pay, CbInvoke):
        return _pre_cb_invoke(st, trans, gen)
    if isinstance(pay, CbReturn):
        return _pre_cb_return(st, trans, gen)
    if isinstance(pay, CiInvoke):
        return _pre_ci_invoke(st, trans, gen)
    raise TypeError(pay)


def _pre_cb_invoke(st: AbsState, trans: Transition, gen: VarGen) -> list[AbsState]:
    pay = trans.payload
    assert isinstance(pay, CbInvoke)
    if st.stack is not None and st.stack.sig != pay.sig:
        return []  # some other callback is pending here
    cur = st
    # At the callback entry, each parameter's binding and the activation
    # slot denote the same value; materialize what is missing, then unify.
    for i, param in enumerate(pay.params):
        if cur.var(param) is None:
            act = cur.stack
            slot = act.args[i] if act is not None else gen.fresh(param + "_")
            cur = cur.bind(param, slot)
    nxt: Optional[AbsState] = cur
    for i, param in enumerate(pay.params):
        act = nxt.stack
        if act is not None:
            nxt = nxt.unify(nxt.var(param), act.args[i])
            if nxt is None:
                return []
    slots = tuple(nxt.var(p) for p in pay.params)
    msg = AbstractMessage(pay.sig, slots, None)
    sep = _sep_allocated(nxt, msg)
    if sep is None:
        return []
    out = replace(
        sep,
        hist=Cons(sep.hist, msg),
        varmap=(),
        stack=None,
        loc=trans.pre,
    )
    return [out.add_seen(slots)]


def _alias_splits(
    st: AbsState, fresh: list[SymVar]
) -> list[AbsState]:
    """Case-split each fresh value against the heap-atom receivers."""
    states = [st]
    for v in fresh:
        nxt: list[AbsState] = []
        for s in states:
            receivers = []
            for r, _, _ in s.heap:
                if r != v and r not in receivers:
                    receivers.append(r)
            for r in receivers:
                u = s.unify(v, r)
                if u is not None:
                    nxt.append(u)
            sep = s
            ok = True
            for r in receivers:
                res = sep.add_neq(v, r)
                if res is None:
                    ok = False
                    break
                sep = res
            if ok:
                nxt.append(sep)
        states = nxt
    return states


def _pre_cb_return(st: AbsState, trans: Transition, gen: VarGen) -> list[AbsState]:
    pay = trans.payload
    assert isinstance(pay, CbReturn)
    if st.stack is not None:
        return []  # at most one activation: cannot return under a pending one
    args = [gen.fresh(p + "_") for p in pay.params]
    ret: Term
    cur = st
    fresh = list(args)
    if pay.retvar is not None:
        rv = gen.fresh(pay.retvar + "_")
        ret = rv
        fresh.append(rv)
        cur = cur.bind(pay.retvar, rv)
    else:
        ret = NULL
    for p, a in zip(pay.params, args):
        cur = cur.bind(p, a)
    activation = AbstractMessage(cb_sig(pay.sig.name, pay.sig.arity), tuple(args), None)
    msg = AbstractMessage(pay.sig, tuple(args), ret)
    sep = _sep_allocated(cur, msg)
    if sep is None:
        return []
    cur = replace(
        sep,
        hist=Cons(sep.hist, msg),
        stack=activation,
        loc=trans.pre,
    )
    return _alias_splits(cur, fresh)


def _pre_ci_invoke(st: AbsState, trans: Transition, gen: VarGen) -> list[AbsState]:
    pay = trans.payload
    assert isinstance(pay, CiInvoke)
    ret = st.var(pay.retvar)
    cur = st.unbind(pay.retvar) if ret is not None else st
    if ret is None:
        ret = gen.fresh(pay.retvar + "_")
    args: list[Term] = []
    for a in pay.argvars:
        if isinstance(a, Value):
            args.append(a)
        else:
            cur, t = _materialize(cur, a, gen)
            args.append(t)
    msg = AbstractMessage(pay.sig, tuple(args), ret)
    sep = _sep_allocated(cur, msg)
    if sep is None:
        return []
    cur = replace(sep, hist=Cons(sep.hist, msg), loc=trans.pre)
    return [cur.add_seen([ret])]


# ---------------------------------------------------------------------------
# Backwards transfer: app commands


def pre_app(st: AbsState, trans: Transition, gen: VarGen) -> list[AbsState]:
    pay = trans.payload
    assert isinstance(pay, App)
    assert st.loc == trans.post
    cmd = pay.cmd
    out: list[AbsState]
    if isinstance(cmd, Assign):
        out = _pre_assign(st, cmd, gen)
    elif isinstance(cmd, Const):
        out = _pre_const(st, cmd)
    elif isinstance(cmd, New):
        out = _pre_new(st, cmd)
    elif isinstance(cmd, Load):
        out = _pre_load(st, cmd, gen)
    elif isinstance(cmd, Store):
        out = _pre_store(st, cmd, gen)
    elif isinstance(cmd, (Assume, Assert)):
        nxt = _apply_cond(st, cmd.cond, gen)
        out = [nxt] if nxt is not None else []
    else:
        raise TypeError(cmd)
    return [replace(s, loc=trans.pre) for s in out]


def _pre_assign(st: AbsState, cmd: Assign, gen: VarGen) -> list[AbsState]:
    v = st.var(cmd.x)
    if v is None:
        return [st]
    cur = st.unbind(cmd.x)
    y = cur.var(cmd.y)
    if y is None:
        return [cur.bind(cmd.y, v)]
    u = cur.unify(y, v)
    return [u] if u is not None else []


def _pre_const(st: AbsState, cmd: Const) -> list[AbsState]:
    v = st.var(cmd.x)
    if v is None:
        return [st]
    cur = st.unbind(cmd.x)
    u = cur.unify(v, cmd.lit)
    return [u] if u is not None else []


def _pre_new(st: AbsState, cmd: New) -> list[AbsState]:
    v = st.var(cmd.x)
    if v is None:
        return [st]
    cur: Optional[AbsState] = st.unbind(cmd.x)
    if isinstance(v, Value):
        return []  # a fresh address is never a literal
    # Freshly allocated: all fields null in the post-state of the allocation.
    for r, f, val in list(cur.heap):
        if r == v:
            cur = cur.drop_atom(r, f).unify(val, NULL)
            if cur is None:
                return []
    # Distinct from every value that existed before this allocation.
    others = cur.symvars() - {v}
    res: Optional[AbsState] = cur.add_neq(v, NULL)
    if res is not None:
        res = res.add_neq(v, TRUE)
    if res is not None:
        res = res.add_neq(v, FALSE)
    if res is None:
        return []
    for o in sorted(others):
        res = res.add_neq(v, o)
        if res is None:
            return []
    return [replace(res, allocated=res.allocated | {v})]


def _pre_load(st: AbsState, cmd: Load, gen: VarGen) -> list[AbsState]:
    xv = st.var(cmd.x)
    if xv is None:
        return [st]  # loaded value unobserved downstream
    cur = st.unbind(cmd.x)
    cur, yv = _materialize(cur, cmd.y, gen)
    if isinstance(yv, Value):
        return []  # load from a literal receiver is stuck
    out: list[AbsState] = []
    same_field = [(r, f, v) for r, f, v in cur.heap if f == cmd.fld]
    for r, _, v in same_field:
        aliased = cur.unify(yv, r)
        if aliased is None:
            continue
        got = aliased.unify(v, xv)  # the cell's content is the loaded value
        if got is not None:
            out.append(got)
    sep: Optional[AbsState] = cur
    for r, _, _ in same_field:
        sep = sep.add_neq(yv, r)
        if sep is None:
            break
    if sep is not None:
        out.append(sep.add_atom(yv, cmd.fld, xv))
    return out


def _pre_store(st: AbsState, cmd: Store, gen: VarGen) -> list[AbsState]:
    cur, xv = _materialize(st, cmd.x, gen)
    if isinstance(xv, Value):
        return []
    cur, sv = _cond_side(cur, cmd.src, gen)
    out: list[AbsState] = []
    same_field = [(r, f, v) for r, f, v in cur.heap if f == cmd.fld]
    for r, _, v in same_field:
        # The written cell's prior content is unconstrained: drop the atom
        # first, then require the post content to equal the stored value.
        base = cur.drop_atom(r, cmd.fld)
        aliased = base.unify(xv, r)
        if aliased is None:
            continue
        matched = aliased.unify(v, sv)
        if matched is not None:
            out.append(matched)
    sep: Optional[AbsState] = cur
    for r, _, _ in same_field:
        sep = sep.add_neq(xv, r)
        if sep is None:
            break
    if sep is not None:
        out.append(sep)  # write lands on a cell the state says nothing about
    return out


# ---------------------------------------------------------------------------
# Judgments over full states


def _mentions_allocated(msg, allocated: frozenset) -> bool:
    for t in msg.body.slots():
        if isinstance(t, SymVar) and t not in msg.locals and t in allocated:
            return True
    return False


def prune_fresh(f: Formula, allocated: frozenset) -> Formula:
    """Fold temporal atoms over app-allocated values.

    An allocated value cannot occur in the history before its allocation,
    so looking back for a message carrying it is vacuous: positives fold to
    false, negatives to true.  Exact over the state's concretizations.
    """
    from .cbcftl import (
        And as FAnd,
        Exists as FExists,
        Forall as FForall,
        HistNot as FHistNot,
        NotSince as FNotSince,
        Once as FOnce,
        Or as FOr,
        FALSEF,
        TRUEF,
    )

    if not allocated:
        return f
    if isinstance(f, FOnce):
        return FALSEF if _mentions_allocated(f.msg, allocated) else f
    if isinstance(f, FHistNot):
        return TRUEF if _mentions_allocated(f.msg, allocated) else f
    if isinstance(f, FNotSince):
        if _mentions_allocated(f.pos, allocated):
            return FALSEF
        if _mentions_allocated(f.neg, allocated):
            return FOnce(f.pos)  # the negative can never match
        return f
    if isinstance(f, (FAnd, FOr)):
        return type(f)(tuple(prune_fresh(i, allocated) for i in f.items))
    if isinstance(f, (FExists, FForall)):
        live = allocated - set(f.vars)
        return type(f)(f.vars, prune_fresh(f.body, live))
    return f


def state_history_formula(
    st: AbsState, spec: Spec, gen: VarGen, cache: Optional[dict] = None
) -> Formula:
    if cache is not None and id(st) in cache:
        return cache[id(st)]
    raw = conj([combine.encode_history(st.hist, spec, gen), st.pure_formula()])
    out = simplify(prune_fresh(raw, st.allocated))
    if cache is not None:
        cache[id(st)] = out
    return out


def excludes_initial_state(
    spec: Spec, st: AbsState, cfg: smtenc.SolverConfig, gen: VarGen
) -> str:
    """Can this fwk state describe the empty-history initial state?"""
    if st.stack is not None:
        return smtenc.YES  # the initial boundary stack is empty
    parts: list[Formula] = [combine.encode_history(st.hist, spec, gen), st.pure_formula()]
    # The initial heap has every field null.
    for _, _, v in st.heap:
        parts.append(Eq(v, NULL))
    return smtenc.judge_excludes_initial(simplify(conj(parts)), cfg)


def entails_state(
    spec: Spec,
    s1: AbsState,
    s2: AbsState,
    cfg: smtenc.SolverConfig,
    gen: VarGen,
) -> str:
    """Yes only if every concrete state of s1 is covered by s2.

    Each structural store/stack matching pins a candidate variable
    correspondence; a concrete state may be covered through any of them,
    so the history side must entail the disjunction over all matchings.
    """
    if s1.loc != s2.loc:
        return smtenc.NO
    matches = []
    for theta in _structural_matches(s1, s2):
        matches.append(theta)
        if len(matches) >= 8:  # fewer disjuncts only makes the check stricter
            break
    if not matches:
        return smtenc.NO
    phi1 = state_history_formula(s1, spec, gen, cfg.cache)
    phi2 = state_history_formula(s2, spec, gen, cfg.cache)
    from .cbcftl import free_vars

    goals = []
    for theta in matches:
        ren: dict[SymVar, Term] = dict(theta)
        for v in sorted(free_vars(phi2)):
            if v not in ren:
                ren[v] = gen.fresh("u_" + v.name)
        goals.append(prune_fresh(formula_subst(phi2, ren, gen), s1.allocated))
    from .cbcftl import disj as _disj

    # No and Unknown both keep the disjunct, so skip countermodel search.
    return smtenc.judge_entails(phi1, simplify(_disj(goals)), cfg, search=False)


def _structural_matches(s1: AbsState, s2: AbsState):
    """Maps from s2's symvars into s1's terms that make s2's store subsume s1."""
    theta: dict[SymVar, Term] = {}

    def assign(v2: Term, t1: Term) -> bool:
        if isinstance(v2, Value):
            return v2 == t1
        if v2 in theta:
            return theta[v2] == t1
        theta[v2] = t1
        return True

    # Stack correspondence.
    if s2.stack is not None:
        if s1.stack is None or s1.stack.sig != s2.stack.sig:
            return
        for v2, t1 in zip(s2.stack.slots(), s1.stack.slots()):
            if not assign(v2, t1):
                return
    # Var bindings of s2 must exist in s1.
    for x, v2 in s2.varmap:
        t1 = s1.var(x)
        if t1 is None or not assign(v2, t1):
            return
    # Injective heap matching.
    atoms1 = list(s1.heap)

    def match_heap(i: int, used: set[int], snapshot: dict[SymVar, Term]):
        if i == len(s2.heap):
            yield dict(theta)
            return
        r2, f2, v2 = s2.heap[i]
        for j, (r1, f1, v1) in enumerate(atoms1):
            if j in used or f1 != f2:
                continue
            saved = dict(theta)
            if assign(r2, r1) and assign(v2, v1):
                yield from match_heap(i + 1, used | {j}, saved)
            theta.clear()
            theta.update(saved)
        return

    base = dict(theta)
    # Disequalities and seen() marks ride along in the history formulas,
    # so the structural phase only pins the store/stack correspondence.
    yield from match_heap(0, set(), base)


# ---------------------------------------------------------------------------
# Invariant map


@dataclass
class InvariantMap:
    disjuncts: dict[str, list[AbsState]] = field(default_factory=dict)

    def at(self, loc: str) -> list[AbsState]:
        return self.disjuncts.setdefault(loc, [])

    def dump(self) -> str:
        lines = []
        for loc in sorted(self.disjuncts):
            lines.append(f"[{loc}]")
            for s in self.disjuncts[loc]:
                lines.append(f"  {format_state(s)}")
        return "\n".join(lines) + "\n"


def state_cb_depth(st: AbsState) -> int:
    return cb_depth(st.hist)


def state_key(st: AbsState) -> tuple:
    """Canonical fingerprint up to symbolic-variable renaming.

    Equal keys mean isomorphic states (identical concretizations); unequal
    keys carry no information.  Used to drop exact duplicates cheaply.
    """
    names: dict[SymVar, int] = {}

    def t(x: Term):
        if isinstance(x, SymVar):
            if x not in names:
                names[x] = len(names)
            return ("v", names[x])
        return ("l", repr(x))

    parts: list = [st.loc]
    from .mhist import messages_oldest_first

    for m in messages_oldest_first(st.hist):
        parts.append((m.sig, tuple(t(x) for x in m.slots())))
    if st.stack is not None:
        parts.append(("stack", st.stack.sig, tuple(t(x) for x in st.stack.slots())))
    else:
        parts.append(("stack", None))
    for k, v in sorted(st.varmap):
        parts.append(("var", k, t(v)))
    heap = sorted(st.heap, key=lambda a: (a[1], names.get(a[0], 1 << 30), repr(a[2])))
    for r, f, v in heap:
        parts.append(("heap", f, t(r), t(v)))
    neqs = sorted(
        (tuple(sorted((t(a), t(b)))) for a, b in st.neqs),
    )
    parts.append(("neqs", tuple(neqs)))
    parts.append(("seen", tuple(sorted(names.get(v, -1) for v in st.seen))))
    parts.append(("alloc", tuple(sorted(names.get(v, -1) for v in st.allocated))))
    return tuple(parts)
