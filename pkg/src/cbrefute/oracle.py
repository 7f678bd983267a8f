"""Bounded concrete executor: the brute-force ground truth.

Executes the application-only transition system exhaustively up to a
callback budget.  The framework's nondeterminism (callback arguments,
callin returns) ranges over a fixed pool of invented addresses plus the
basic literals, with fresh addresses introduced in canonical order.  Every
appended message is checked for realizability against the spec; an
execution that falsifies the queried assertion is returned as a Failure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Union

from .cbcftl import (
    AbstractMessage,
    And,
    Assignment,
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
    Spec,
    SymVar,
    SymbolicMessage,
    TrueF,
    free_vars,
    models_spec_at,
)
from .ir import (
    Addr,
    App,
    Assert,
    Assign,
    Assume,
    BoolVal,
    CbInvoke,
    CbReturn,
    CiInvoke,
    Cond,
    CondSide,
    Const,
    FALSE,
    IntVal,
    Load,
    Message,
    MessageHistory,
    MethodSig,
    New,
    NULL,
    Program,
    Query,
    Store,
    Transition,
    TRUE,
    Value,
)

POOL_BASE = 100  # framework-invented address identities
APP_BASE = 500  # app-allocated address identities


@dataclass(frozen=True)
class Bounds:
    max_callbacks: int
    value_universe: int  # framework address pool size
    max_int: int = 0  # framework may pick ints in [-max_int, max_int]

    def __post_init__(self) -> None:
        assert self.max_callbacks > 0 and self.value_universe > 0


@dataclass
class ConcreteState:
    hist: MessageHistory
    store: dict[str, Value]
    heap: dict[tuple[Addr, str], Value]
    stack: tuple[Message, ...]  # at most one activation
    loc: str


@dataclass(frozen=True)
class Failure:
    trace: MessageHistory
    state: ConcreteState


@dataclass(frozen=True)
class NoFailure:
    pass


EnumResult = Union[Failure, NoFailure]


# ---------------------------------------------------------------------------
# Spec monitor: incremental realizability with a dedupable state
#
# An atom's truth after each prefix is a function of which value tuples have
# matched it, which lets repeated exploration of equal framework states cut
# the search.  The monitor only handles specs where quantifiers are slot-
# guarded and every NS negative's variables occur in its positive (the whole
# shipped corpus); otherwise enumeration falls back to full rechecks.


def _pattern(sm: SymbolicMessage) -> tuple:
    slots = []
    for t in sm.body.slots():
        if isinstance(t, SymVar):
            slots.append("*" if t in sm.locals else ("v", t.name))
        else:
            slots.append(("l", t))
    return (sm.body.sig.kind, sm.body.sig.name, sm.body.sig.arity, tuple(slots))


def _atom_freevars(sm: SymbolicMessage) -> tuple[SymVar, ...]:
    seen: list[SymVar] = []
    for t in sm.body.slots():
        if isinstance(t, SymVar) and t not in sm.locals and t not in seen:
            seen.append(t)
    return tuple(seen)


def _match_tuple(sm: SymbolicMessage, m: Message) -> Optional[tuple[Value, ...]]:
    """Values for sm's free vars if m matches sm for some local extension."""
    if m.sig != sm.body.sig:
        return None
    binding: dict[SymVar, Value] = {}
    mslots = m.args + ((m.ret,) if m.ret is not None else ())
    for t, v in zip(sm.body.slots(), mslots):
        if isinstance(t, SymVar):
            if t in sm.locals:
                continue
            if binding.setdefault(t, v) != v:
                return None
        elif t != v:
            return None
    return tuple(binding[v] for v in _atom_freevars(sm))


def _guarded(f: Formula, pending: frozenset[SymVar] = frozenset()) -> bool:
    """Every quantified variable occurs in some message slot in scope."""
    if isinstance(f, (Once, HistNot)):
        return True
    if isinstance(f, NotSince):
        return True
    if isinstance(f, (And, Or)):
        return all(_guarded(i, pending) for i in f.items)
    if isinstance(f, (Exists, Forall)):
        body_msgs: set[SymVar] = set()

        def collect(g: Formula) -> None:
            if isinstance(g, (Once, HistNot)):
                body_msgs.update(g.msg.free_vars())
            elif isinstance(g, NotSince):
                body_msgs.update(g.neg.free_vars() | g.pos.free_vars())
            elif isinstance(g, (And, Or)):
                for i in g.items:
                    collect(i)
            elif isinstance(g, (Exists, Forall)):
                collect(g.body)

        collect(f.body)
        if not all(v in body_msgs for v in f.vars):
            return False
        return _guarded(f.body, pending)
    return True


class SpecMonitor:
    """Per-prefix atom states for one spec; copies are cheap and hashable."""

    def __init__(self, spec: Spec):
        self.spec = spec
        self.once_keys: list[tuple] = []
        self.ns_keys: list[tuple[tuple, tuple]] = []
        self.atoms_by_msg: dict[tuple, SymbolicMessage] = {}
        self.supported = True
        self.guarded = True
        for imp in spec.implications:
            self.guarded = self.guarded and _guarded(imp.consequent)
            self._compile(imp.consequent)
        # State: matched tuples per atom.
        self.once: dict[tuple, frozenset] = {k: frozenset() for k in self.once_keys}
        self.ns: dict[tuple, frozenset] = {k: frozenset() for k in self.ns_keys}
        self.values: frozenset[Value] = frozenset({NULL})

    def _compile(self, f: Formula) -> None:
        if isinstance(f, (Once, HistNot)):
            k = _pattern(f.msg)
            if k not in self.once_keys:
                self.once_keys.append(k)
                self.atoms_by_msg[k] = f.msg
        elif isinstance(f, NotSince):
            if not (set(_atom_freevars(f.neg)) <= set(_atom_freevars(f.pos))):
                self.supported = False
                return
            pk, nk = _pattern(f.pos), _pattern(f.neg)
            key = (nk, pk)
            if key not in self.ns_keys:
                self.ns_keys.append(key)
                self.atoms_by_msg.setdefault(pk, f.pos)
                self.atoms_by_msg.setdefault(nk, f.neg)
        elif isinstance(f, (And, Or)):
            for i in f.items:
                self._compile(i)
        elif isinstance(f, (Exists, Forall)):
            self._compile(f.body)

    def copy(self) -> "SpecMonitor":
        m = object.__new__(SpecMonitor)
        m.spec = self.spec
        m.once_keys = self.once_keys
        m.ns_keys = self.ns_keys
        m.atoms_by_msg = self.atoms_by_msg
        m.supported = self.supported
        m.guarded = self.guarded
        m.once = dict(self.once)
        m.ns = dict(self.ns)
        m.values = self.values
        return m

    def key(self) -> tuple:
        once = tuple(tuple(sorted(self.once[k], key=repr)) for k in self.once_keys)
        ns = tuple(tuple(sorted(self.ns[k], key=repr)) for k in self.ns_keys)
        return (once, ns)

    # -- appending ----------------------------------------------------------

    def admits(self, m: Message) -> bool:
        """Would appending m keep the history realizable?"""
        from .cbcftl import match_target

        for imp in self.spec.implications:
            theta = match_target(m, imp.target)
            if theta is not None and not self._eval(imp.consequent, theta):
                return False
        return True

    def push(self, m: Message) -> "SpecMonitor":
        out = self.copy()
        for k in self.once_keys:
            t = _match_tuple(self.atoms_by_msg[k], m)
            if t is not None:
                out.once[k] = out.once[k] | {t}
        for nk_pk in self.ns_keys:
            nk, pk = nk_pk
            cur = out.ns[nk_pk]
            neg_t = _match_tuple(self.atoms_by_msg[nk], m)
            if neg_t is not None:
                neg_vars = _atom_freevars(self.atoms_by_msg[nk])
                pos_vars = _atom_freevars(self.atoms_by_msg[pk])
                idx = [pos_vars.index(v) for v in neg_vars]
                cur = frozenset(
                    t for t in cur if tuple(t[i] for i in idx) != neg_t
                )
            pos_t = _match_tuple(self.atoms_by_msg[pk], m)
            if pos_t is not None:
                cur = cur | {pos_t}
            out.ns[nk_pk] = cur
        out.values = self.values | set(m.values())
        return out

    # -- consequent evaluation over the current prefix ------------------------

    def _eval(self, f: Formula, theta: Assignment) -> bool:
        if isinstance(f, TrueF):
            return True
        if isinstance(f, FalseF):
            return False
        if isinstance(f, And):
            return all(self._eval(i, theta) for i in f.items)
        if isinstance(f, Or):
            return any(self._eval(i, theta) for i in f.items)
        if isinstance(f, Eq) or isinstance(f, Neq):
            a = theta[f.a] if isinstance(f.a, SymVar) else f.a
            b = theta[f.b] if isinstance(f.b, SymVar) else f.b
            return (a == b) if isinstance(f, Eq) else (a != b)
        if isinstance(f, Once):
            return self._tuple_of(f.msg, theta) in self.once[_pattern(f.msg)]
        if isinstance(f, HistNot):
            return self._tuple_of(f.msg, theta) not in self.once[_pattern(f.msg)]
        if isinstance(f, NotSince):
            return self._tuple_of(f.pos, theta) in self.ns[(_pattern(f.neg), _pattern(f.pos))]
        if isinstance(f, (Exists, Forall)):
            domain = sorted(self.values | set(theta.values()), key=repr)
            combos = itertools.product(domain, repeat=len(f.vars))
            if isinstance(f, Exists):
                return any(
                    self._eval(f.body, {**theta, **dict(zip(f.vars, c))}) for c in combos
                )
            return all(
                self._eval(f.body, {**theta, **dict(zip(f.vars, c))}) for c in combos
            )
        raise TypeError(f)

    def _tuple_of(self, sm: SymbolicMessage, theta: Assignment) -> tuple:
        return tuple(theta[v] for v in _atom_freevars(sm))


# ---------------------------------------------------------------------------
# Framework value choices and slot pinning


def _literal_choices(b: Bounds) -> list[Value]:
    out: list[Value] = [NULL, TRUE, FALSE]
    if b.max_int > 0:
        out.extend(IntVal(n) for n in range(-b.max_int, b.max_int + 1))
    return out


def _choices(b: Bounds, pool_used: int) -> list[Value]:
    pool = [Addr(POOL_BASE + i) for i in range(pool_used)]
    if pool_used < b.value_universe:
        pool.append(Addr(POOL_BASE + pool_used))
    return _literal_choices(b) + pool


def _pool_used_after(pool_used: int, v: Value) -> int:
    if isinstance(v, Addr) and POOL_BASE <= v.ident < APP_BASE:
        return max(pool_used, v.ident - POOL_BASE + 1)
    return pool_used


def _spec_blind_slots(spec: Spec) -> dict[tuple[str, str], set[int]]:
    """(kind, name) -> slot indexes the spec can never distinguish.

    Slot index arity means the return slot.  A slot is visible when a
    target holds a literal or a consequent-used variable there, or when any
    consequent atom holds a non-local term there.
    """
    visible: dict[tuple[str, str], set[int]] = {}
    arities: dict[tuple[str, str], tuple[int, bool]] = {}

    def see(sig: MethodSig, idx: int) -> None:
        visible.setdefault((sig.kind, sig.name), set()).add(idx)

    def register(sig: MethodSig) -> None:
        arities[(sig.kind, sig.name)] = (sig.arity, sig.has_ret)

    def scan_msg(sm: SymbolicMessage) -> None:
        register(sm.body.sig)
        for i, t in enumerate(sm.body.slots()):
            if not (isinstance(t, SymVar) and t in sm.locals):
                see(sm.body.sig, i)

    def walk(f: Formula) -> None:
        if isinstance(f, (Once, HistNot)):
            scan_msg(f.msg)
        elif isinstance(f, NotSince):
            scan_msg(f.neg)
            scan_msg(f.pos)
        elif isinstance(f, (And, Or)):
            for i in f.items:
                walk(i)
        elif isinstance(f, (Exists, Forall)):
            walk(f.body)

    for imp in spec.implications:
        register(imp.target)
        used = free_vars(imp.consequent)
        for i, t in enumerate(imp.target.slots()):
            if isinstance(t, Value) or (isinstance(t, SymVar) and t in used):
                see(imp.target.sig, i)
        walk(imp.consequent)

    blind: dict[tuple[str, str], set[int]] = {}
    for key, (arity, has_ret) in arities.items():
        n = arity + (1 if has_ret else 0)
        blind[key] = set(range(n)) - visible.get(key, set())
    return blind


def _dead_vars(p: Program) -> set[str]:
    """Variables never read anywhere in the program (conservative)."""
    from .ir import _cmd_uses  # shared with the parser's checks

    used: set[str] = set()
    for t in p.transitions:
        if isinstance(t.payload, App):
            used |= _cmd_uses(t.payload.cmd)
        elif isinstance(t.payload, CiInvoke):
            used |= _cmd_uses(t.payload)
        elif isinstance(t.payload, CbReturn) and t.payload.retvar:
            used.add(t.payload.retvar)
    defined: set[str] = set()
    for t in p.transitions:
        if isinstance(t.payload, App):
            from .ir import _cmd_defs

            defined |= _cmd_defs(t.payload.cmd)
        elif isinstance(t.payload, CiInvoke):
            defined.add(t.payload.retvar)
        elif isinstance(t.payload, CbInvoke):
            defined |= set(t.payload.params)
    return defined - used


class _Pins:
    """Framework-choice slots that may soundly be pinned to null.

    A choice is invisible when no spec atom can distinguish its value (the
    slot is blind for both the message and, for callbacks, its return echo)
    and the receiving variable is never read by the app.
    """

    def __init__(self, p: Program, spec: Spec):
        blind = _spec_blind_slots(spec)
        dead = _dead_vars(p)
        mentioned = {k for k in blind}
        self.cb_args: dict[str, set[int]] = {}
        self.ci_rets: set[str] = set()
        for t in p.transitions:
            pay = t.payload
            if isinstance(pay, CbInvoke):
                pins = set()
                for i, param in enumerate(pay.params):
                    cb_key = ("cb", pay.sig.name)
                    ret_key = ("cbret", pay.sig.name)
                    cb_blind = cb_key not in mentioned or i in blind.get(cb_key, set())
                    ret_blind = ret_key not in mentioned or i in blind.get(ret_key, set())
                    if param in dead and cb_blind and ret_blind:
                        pins.add(i)
                self.cb_args[pay.sig.name] = pins
            elif isinstance(pay, CiInvoke):
                key = ("ci", pay.sig.name)
                ret_idx = pay.sig.arity
                blind_here = key not in mentioned or ret_idx in blind.get(key, set())
                if pay.retvar in dead and blind_here:
                    self.ci_rets.add(pay.sig.name)


# ---------------------------------------------------------------------------
# Enumeration


class OracleBudgetError(Exception):
    pass


class _Search:
    def __init__(
        self,
        p: Program,
        spec: Spec,
        q: Optional[Query],
        b: Bounds,
        step_cap: Optional[int] = None,
    ):
        self.p = p
        self.spec = spec
        self.q = q
        self.b = b
        self.pins = _Pins(p, spec)
        monitor = SpecMonitor(spec)
        self.use_monitor = monitor.supported
        self.dedup = monitor.supported and monitor.guarded
        self.init_monitor = monitor
        self.app_addr = itertools.count(APP_BASE)
        self.visited: dict[tuple, int] = {}
        self.failure: Optional[Failure] = None
        self.step_cap = step_cap
        self.steps = 0

    def _over_cap(self) -> bool:
        if self.step_cap is not None and self.steps > self.step_cap:
            raise OracleBudgetError(f"enumeration exceeded {self.step_cap} steps")
        return False

    # -- helpers -------------------------------------------------------------

    def admits(self, hist: list[Message], monitor: SpecMonitor, m: Message) -> bool:
        if self.use_monitor:
            return monitor.admits(m)
        return models_spec_at(tuple(hist) + (m,), self.spec, len(hist))

    def run(self) -> EnumResult:
        st = ConcreteState((), {}, {}, (), self.p.fwk)
        self._fwk(list(st.hist), st.heap, self.init_monitor, 0, 0)
        return self.failure if self.failure is not None else NoFailure()

    # -- at the framework location -------------------------------------------

    def _fwk(
        self,
        hist: list[Message],
        heap: dict,
        monitor: SpecMonitor,
        pool_used: int,
        cb_count: int,
    ) -> None:
        if self.failure is not None or self._over_cap():
            return
        remaining = self.b.max_callbacks - cb_count
        if remaining <= 0:
            return
        if self.dedup:
            key = (
                tuple(sorted(heap.items(), key=repr)),
                monitor.key(),
                pool_used,
            )
            prev = self.visited.get(key, -1)
            if prev >= remaining:
                return
            self.visited[key] = remaining
        for t in self.p.transitions:
            if not isinstance(t.payload, CbInvoke):
                continue
            pay = t.payload
            pins = self.pins.cb_args.get(pay.sig.name, set())
            self._invoke_args(hist, heap, monitor, pool_used, cb_count, t, pay, pins, [], pool_used)

    def _invoke_args(
        self, hist, heap, monitor, pool_used, cb_count, t, pay, pins, acc, pu
    ) -> None:
        if self.failure is not None:
            return
        i = len(acc)
        if i == pay.sig.arity:
            m = Message(pay.sig, tuple(acc), None)
            self.steps += 1
            if not self.admits(hist, monitor, m):
                return
            store = {x: v for x, v in zip(pay.params, acc)}
            self._app(
                hist + [m],
                store,
                dict(heap),
                (m,),
                t.post,
                monitor.push(m) if self.use_monitor else monitor,
                pu,
                cb_count + 1,
            )
            return
        options = [NULL] if i in pins else _choices(self.b, pu)
        for v in options:
            self._invoke_args(
                hist, heap, monitor, pool_used, cb_count, t, pay, pins,
                acc + [v], _pool_used_after(pu, v),
            )

    # -- inside a callback ----------------------------------------------------

    def _app(self, hist, store, heap, stack, loc, monitor, pool_used, cb_count) -> None:
        if self.failure is not None or self._over_cap():
            return
        self.steps += 1
        for t in self.p.transitions:
            if t.pre != loc:
                continue
            pay = t.payload
            if isinstance(pay, App):
                self._app_cmd(hist, store, heap, stack, monitor, pool_used, cb_count, t)
            elif isinstance(pay, CiInvoke):
                self._ci(hist, store, heap, stack, monitor, pool_used, cb_count, t)
            elif isinstance(pay, CbReturn):
                self._cbret(hist, store, heap, stack, monitor, pool_used, cb_count, t)

    def _side(self, store: dict, s: CondSide) -> Optional[Value]:
        if isinstance(s, Value):
            return s
        return store.get(s)

    def _eval_cond(self, store: dict, cond: Cond) -> Optional[bool]:
        a = self._side(store, cond.lhs)
        b = self._side(store, cond.rhs)
        if a is None or b is None:
            return None
        return (a == b) if cond.op == "==" else (a != b)

    def _app_cmd(self, hist, store, heap, stack, monitor, pool_used, cb_count, t) -> None:
        cmd = t.payload.cmd
        store2 = dict(store)
        heap2 = heap
        if isinstance(cmd, Assign):
            if cmd.y not in store:
                return
            store2[cmd.x] = store[cmd.y]
        elif isinstance(cmd, Const):
            store2[cmd.x] = cmd.lit
        elif isinstance(cmd, New):
            store2[cmd.x] = Addr(next(self.app_addr))
        elif isinstance(cmd, Load):
            base = store.get(cmd.y)
            if not isinstance(base, Addr):
                return  # null or non-address dereference: stuck
            store2[cmd.x] = heap.get((base, cmd.fld), NULL)
        elif isinstance(cmd, Store):
            base = store.get(cmd.x)
            v = self._side(store, cmd.src)
            if not isinstance(base, Addr) or v is None:
                return
            heap2 = dict(heap)
            heap2[(base, cmd.fld)] = v
        elif isinstance(cmd, Assume):
            ok = self._eval_cond(store, cmd.cond)
            if ok is not True:
                return
        elif isinstance(cmd, Assert):
            ok = self._eval_cond(store, cmd.cond)
            if ok is None:
                return
            if not ok:
                if self.q is not None and t.idx == self.q.target.idx:
                    st = ConcreteState(tuple(hist), dict(store), dict(heap), stack, t.pre)
                    self.failure = Failure(tuple(hist), st)
                return  # a crash elsewhere never reaches the queried assert
        else:
            raise TypeError(cmd)
        self._app(hist, store2, heap2, stack, t.post, monitor, pool_used, cb_count)

    def _ci(self, hist, store, heap, stack, monitor, pool_used, cb_count, t) -> None:
        pay = t.payload
        args = []
        for a in pay.argvars:
            v = self._side(store, a)
            if v is None:
                return
            args.append(v)
        pinned = pay.sig.name in self.pins.ci_rets
        rets = [NULL] if pinned else _choices(self.b, pool_used)
        for r in rets:
            if self.failure is not None:
                return
            m = Message(pay.sig, tuple(args), r)
            self.steps += 1
            if not self.admits(hist, monitor, m):
                continue
            store2 = dict(store)
            store2[pay.retvar] = r
            self._app(
                hist + [m],
                store2,
                heap,
                stack,
                t.post,
                monitor.push(m) if self.use_monitor else monitor,
                _pool_used_after(pool_used, r),
                cb_count,
            )

    def _cbret(self, hist, store, heap, stack, monitor, pool_used, cb_count, t) -> None:
        pay = t.payload
        if not stack:
            return
        act = stack[0]
        if act.sig.name != pay.sig.name:
            return
        # Parameters must still hold their entry values (calls and returns
        # carry the same argument vector).
        for x, v in zip(pay.params, act.args):
            if store.get(x) != v:
                return
        ret = NULL
        if pay.retvar is not None:
            if pay.retvar not in store:
                return
            ret = store[pay.retvar]
        m = Message(pay.sig, act.args, ret)
        self.steps += 1
        if not self.admits(hist, monitor, m):
            return
        self._fwk(
            hist + [m],
            heap,
            monitor.push(m) if self.use_monitor else monitor,
            pool_used,
            cb_count,
        )


def enumerate_executions(
    p: Program,
    spec: Spec,
    q: Optional[Query],
    b: Bounds,
    step_cap: Optional[int] = None,
) -> EnumResult:
    """Depth-first exhaustive execution up to the callback budget."""
    return _Search(p, spec, q, b, step_cap).run()


def check_refutation_sound(p: Program, spec: Spec, q: Query, b: Bounds, result) -> bool:
    """A Refuted verdict must mean no bounded execution fails the assert."""
    from .verifier import Refuted

    if not isinstance(result, Refuted):
        return True
    return isinstance(enumerate_executions(p, spec, q, b), NoFailure)
