"""Built-in decision procedures over the temporal fragment.

Used when no external SMT solver is configured.  Satisfiability of a
temporal formula is decided by searching histories up to a sound bound:
removing a history position can only falsify O/NS atoms (HN constraints and
value (dis)equalities survive deletion), so a satisfiable formula has a
model whose length is at most its count of positive temporal atoms.
Candidate values are enumerated up to symmetry: fresh addresses are
interchangeable, so only canonical introduction orders are tried.

Entailment is undecidable in general here; we search for bounded
counterexamples (definite "no") and prove containment structurally with a
small sound rule set (definite "yes"), answering unknown otherwise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .cbcftl import (
    And,
    Assignment,
    Eq,
    Exists,
    FALSEF,
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
    Term,
    TRUEF,
    TrueF,
    FalseF,
    alpha_equivalent,
    free_vars,
    models_formula,
    simplify,
)
from .ir import Addr, Message, MessageHistory, MethodSig, NULL, Value


class Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.spent = 0

    def tick(self, n: int = 1) -> bool:
        self.spent += n
        return self.spent <= self.limit


# ---------------------------------------------------------------------------
# Formula shape analysis


def positive_atoms(f: Formula) -> list[SymbolicMessage]:
    """Messages that may need a witness position (Once and NS positives)."""
    out: list[SymbolicMessage] = []

    def walk(g: Formula) -> None:
        if isinstance(g, Once):
            out.append(g.msg)
        elif isinstance(g, NotSince):
            out.append(g.pos)
        elif isinstance(g, (And, Or)):
            for i in g.items:
                walk(i)
        elif isinstance(g, (Exists, Forall)):
            walk(g.body)

    walk(f)
    return out


def message_sigs(f: Formula) -> list[MethodSig]:
    sigs: list[MethodSig] = []
    for sm in positive_atoms(f):
        if sm.body.sig not in sigs:
            sigs.append(sm.body.sig)
    return sigs


def literal_pool(f: Formula) -> list[Value]:
    vals: list[Value] = [NULL]

    def add(t: Term) -> None:
        if isinstance(t, Value) and t not in vals:
            vals.append(t)

    def walk(g: Formula) -> None:
        if isinstance(g, (Once, HistNot)):
            for t in g.msg.body.slots():
                add(t)
        elif isinstance(g, NotSince):
            for t in g.neg.body.slots() + g.pos.body.slots():
                add(t)
        elif isinstance(g, (And, Or)):
            for i in g.items:
                walk(i)
        elif isinstance(g, (Exists, Forall)):
            walk(g.body)
        elif isinstance(g, (Eq, Neq)):
            add(g.a)
            add(g.b)

    walk(f)
    return vals


# ---------------------------------------------------------------------------
# Bounded-complete satisfiability search

_FRESH_BASE = 900000  # address identities reserved for solver-invented values


def _value_choices(used: list[Value], literals: list[Value], fresh_count: int) -> Iterator[Value]:
    for v in used:
        yield v
    for v in literals:
        if v not in used:
            yield v
    yield Addr(_FRESH_BASE + fresh_count)


@dataclass
class SatResult:
    status: str  # "sat" | "unsat" | "unknown"
    witness: Optional[tuple[MessageHistory, Assignment]] = None


def find_model(f: Formula, budget_limit: int = 200_000) -> SatResult:
    """Search for (history, assignment) models of f.

    Lengths up to the positive-atom count are exhaustive, so an exhausted
    search proves unsatisfiability (unless the work budget ran out).
    """
    f = simplify(f)
    if isinstance(f, TrueF):
        return SatResult("sat", ((), {}))
    if isinstance(f, FalseF):
        return SatResult("unsat")
    bound = len(positive_atoms(f))
    sigs = message_sigs(f)
    literals = literal_pool(f)
    fvars = sorted(free_vars(f))
    budget = Budget(budget_limit)

    for length in range(bound + 1):
        res = _search_length(f, fvars, sigs, literals, length, budget)
        if res is not None:
            return SatResult("sat", res)
        if budget.spent > budget.limit:
            return SatResult("unknown")
    return SatResult("unsat")


def _search_length(
    f: Formula,
    fvars: list[SymVar],
    sigs: list[MethodSig],
    literals: list[Value],
    length: int,
    budget: Budget,
) -> Optional[tuple[MessageHistory, Assignment]]:
    # Value slots are filled depth-first with canonical fresh introduction.
    def fill_theta(i: int, used: list[Value], fresh: int, theta: Assignment):
        if not budget.tick():
            return None
        if i == len(fvars):
            return fill_pos(0, used, fresh, theta, [])
        for v in _value_choices(used, literals, fresh):
            nused = used + [v] if v not in used else used
            nfresh = fresh + (1 if isinstance(v, Addr) and v.ident >= _FRESH_BASE and v not in used else 0)
            r = fill_theta(i + 1, nused, nfresh, {**theta, fvars[i]: v})
            if r is not None:
                return r
        return None

    def fill_pos(p: int, used: list[Value], fresh: int, theta: Assignment, msgs: list[Message]):
        if not budget.tick():
            return None
        if p == length:
            hist = tuple(msgs)
            if models_formula(hist, theta, length - 1, f):
                return hist, theta
            return None
        for sig in sigs:
            nslots = sig.arity + (1 if sig.has_ret else 0)
            r = fill_slots(sig, nslots, [], p, used, fresh, theta, msgs)
            if r is not None:
                return r
        return None

    def fill_slots(sig, nslots, acc, p, used, fresh, theta, msgs):
        if len(acc) == nslots:
            args = tuple(acc[: sig.arity])
            ret = acc[sig.arity] if sig.has_ret else None
            m = Message(sig, args, ret)
            return fill_pos(p + 1, used, fresh, theta, msgs + [m])
        for v in _value_choices(used, literals, fresh):
            nused = used + [v] if v not in used else used
            nfresh = fresh + (1 if isinstance(v, Addr) and v.ident >= _FRESH_BASE and v not in used else 0)
            r = fill_slots(sig, nslots, acc + [v], p, used, fresh, theta, msgs)
            if r is not None:
                return r
        return None

    return fill_theta(0, [], 0, {})


def _at_empty(f: Formula) -> Formula:
    """Rewrite f as evaluated over the empty prefix (temporal atoms fold)."""
    if isinstance(f, Once) or isinstance(f, NotSince):
        return FALSEF
    if isinstance(f, HistNot):
        return TRUEF
    if isinstance(f, And):
        return And(tuple(_at_empty(i) for i in f.items))
    if isinstance(f, Or):
        return Or(tuple(_at_empty(i) for i in f.items))
    if isinstance(f, (Exists, Forall)):
        cls = Exists if isinstance(f, Exists) else Forall
        return cls(f.vars, _at_empty(f.body))
    return f


def find_empty_history_model(f: Formula, budget_limit: int = 200_000) -> SatResult:
    """Satisfiability of f over the empty history (assignments only).

    Temporal atoms are folded away first, so only the residual equality
    structure drives the decision; the structural prover handles the big
    propositionally-contradictory residues without value enumeration.
    """
    residue = simplify(_at_empty(f))
    if isinstance(residue, TrueF):
        return SatResult("sat", ((), {}))
    if isinstance(residue, FalseF):
        return SatResult("unsat")
    if prove_implies(residue, FALSEF, budget_limit):
        return SatResult("unsat")
    fvars = sorted(free_vars(residue))
    literals = literal_pool(residue)
    budget = Budget(budget_limit)
    res = _search_length(residue, fvars, [], literals, 0, budget)
    if res is not None:
        return SatResult("sat", res)
    if budget.spent > budget.limit:
        return SatResult("unknown")
    return SatResult("unsat")


# ---------------------------------------------------------------------------
# Structural implication prover (sound; incomplete)


@dataclass
class _Env:
    """Premise context: atoms, equalities, and universal facts."""

    atoms: list[Formula] = field(default_factory=list)
    eqs: list[tuple[Term, Term]] = field(default_factory=list)
    neqs: list[tuple[Term, Term]] = field(default_factory=list)
    foralls: list[Forall] = field(default_factory=list)
    ors: list[Or] = field(default_factory=list)
    contradictory: bool = False

    def clone(self) -> "_Env":
        return _Env(
            list(self.atoms),
            list(self.eqs),
            list(self.neqs),
            list(self.foralls),
            list(self.ors),
            self.contradictory,
        )


class _Skolem:
    def __init__(self) -> None:
        self.count = itertools.count()

    def fresh(self, base: str) -> SymVar:
        return SymVar(f"sk_{base}{next(self.count)}")


def _add_premise(env: _Env, f: Formula, sk: _Skolem) -> None:
    f = simplify(f)
    if isinstance(f, And):
        for i in f.items:
            _add_premise(env, i, sk)
    elif isinstance(f, Exists):
        ren = {v: sk.fresh(v.name) for v in f.vars}
        _add_premise(env, _rename_free(f.body, ren), sk)
    elif isinstance(f, Eq):
        env.eqs.append((f.a, f.b))
    elif isinstance(f, Neq):
        env.neqs.append((f.a, f.b))
    elif isinstance(f, Forall):
        env.foralls.append(f)
    elif isinstance(f, Or):
        env.ors.append(f)
    elif isinstance(f, TrueF):
        pass
    elif isinstance(f, FalseF):
        env.contradictory = True
    else:
        env.atoms.append(f)


def _rename_free(f: Formula, ren: dict[SymVar, SymVar]) -> Formula:
    from .cbcftl import subst  # late import to reuse capture-avoiding machinery

    return subst(f, dict(ren))


class _Cong:
    """Union-find over terms from premise equalities."""

    def __init__(self, eqs: list[tuple[Term, Term]], neqs: list[tuple[Term, Term]]):
        self.parent: dict[Term, Term] = {}
        for a, b in eqs:
            self.union(a, b)
        self.neqs = neqs
        self._neq_roots: set[frozenset] = set()
        self._bad = False
        for a, b in neqs:
            ra, rb = self.find(a), self.find(b)
            if ra == rb:
                self._bad = True
            self._neq_roots.add(frozenset((ra, rb)))

    def find(self, t: Term) -> Term:
        p = self.parent.get(t, t)
        if p == t:
            return t
        r = self.find(p)
        self.parent[t] = r
        return r

    def union(self, a: Term, b: Term) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        # Prefer literal representatives so value conflicts surface.
        if isinstance(ra, Value):
            self.parent[rb] = ra
        else:
            self.parent[ra] = rb

    def equal(self, a: Term, b: Term) -> bool:
        return self.find(a) == self.find(b)

    def distinct(self, a: Term, b: Term) -> bool:
        ra, rb = self.find(a), self.find(b)
        if isinstance(ra, Value) and isinstance(rb, Value):
            return ra != rb
        return frozenset((ra, rb)) in self._neq_roots

    def inconsistent(self) -> bool:
        return self._bad


def _msg_covers(wide: SymbolicMessage, narrow: SymbolicMessage, cong: _Cong) -> bool:
    """Every concrete message matching `narrow` also matches `wide`."""
    if wide.body.sig != narrow.body.sig:
        return False
    for tw, tn in zip(wide.body.slots(), narrow.body.slots()):
        if isinstance(tw, SymVar) and tw in wide.locals:
            continue
        if isinstance(tn, SymVar) and tn in narrow.locals:
            return False  # narrow is freer here than wide
        if not cong.equal(tw, tn):
            return False
    return True


def _atom_implies(p: Formula, g: Formula, cong: _Cong) -> bool:
    if isinstance(p, Once) and isinstance(g, Once):
        return _msg_covers(g.msg, p.msg, cong)
    if isinstance(p, HistNot) and isinstance(g, HistNot):
        return _msg_covers(p.msg, g.msg, cong)
    if isinstance(p, NotSince) and isinstance(g, NotSince):
        return _msg_covers(g.pos, p.pos, cong) and _msg_covers(p.neg, g.neg, cong)
    return False


def _atom_shapes(f: Formula) -> set[tuple]:
    """Shape keys of temporal atoms occurring anywhere in f."""
    out: set[tuple] = set()

    def walk(g: Formula) -> None:
        if isinstance(g, Once):
            out.add(("O", g.msg.body.sig))
        elif isinstance(g, HistNot):
            out.add(("HN", g.msg.body.sig))
        elif isinstance(g, NotSince):
            out.add(("NS", g.neg.body.sig, g.pos.body.sig))
        elif isinstance(g, (And, Or)):
            for i in g.items:
                walk(i)
        elif isinstance(g, (Exists, Forall)):
            walk(g.body)

    walk(f)
    return out


def _required_shapes(f: Formula) -> set[tuple]:
    """Atom shapes needed on every path through the goal."""
    if isinstance(f, (Once, HistNot)):
        return {("O" if isinstance(f, Once) else "HN", f.msg.body.sig)}
    if isinstance(f, NotSince):
        return {("NS", f.neg.body.sig, f.pos.body.sig)}
    if isinstance(f, And):
        out: set[tuple] = set()
        for i in f.items:
            out |= _required_shapes(i)
        return out
    if isinstance(f, Or):
        items = [_required_shapes(i) for i in f.items]
        common = items[0]
        for r in items[1:]:
            common = common & r
        return common
    if isinstance(f, (Exists, Forall)):
        return _required_shapes(f.body)
    return set()


def _shapes_available(premise: Formula, goal: Formula) -> bool:
    have = _atom_shapes(premise)
    for req in _required_shapes(goal):
        if req not in have:
            return False
    return True


def _conj_rank(g: Formula) -> int:
    if isinstance(g, (Once, NotSince, HistNot)):
        return 0
    if isinstance(g, (TrueF, FalseF, Eq)):
        return 1
    if isinstance(g, Neq):
        return 2
    return 3


class Prover:
    """Proves premise |= goal with weakening, case split, and congruence."""

    def __init__(self, budget_limit: int = 60_000):
        self.budget = Budget(budget_limit)
        self.sk = _Skolem()
        self._terms_cache: dict[int, list] = {}

    def implies(self, premise: Formula, goal: Formula) -> bool:
        goal = simplify(goal)
        if not _shapes_available(premise, goal):
            return False
        env = _Env()
        _add_premise(env, premise, self.sk)
        return self._prove(env, goal, depth=0)

    def _prove(self, env: _Env, goal: Formula, depth: int) -> bool:
        if not self.budget.tick():
            return False
        cong = _Cong(env.eqs, env.neqs)
        if env.contradictory or cong.inconsistent():
            return True
        # A direct proof often works without opening premise disjunctions.
        if self._prove_flat(env, cong, goal, depth):
            return True
        if env.ors and depth < 10:
            split, rest = env.ors[0], env.ors[1:]
            for branch in split.items:
                benv = env.clone()
                benv.ors = list(rest)
                _add_premise(benv, branch, self.sk)
                if not self._prove(benv, goal, depth + 1):
                    return False
            return True
        return False

    def _prove_flat(self, env: _Env, cong: _Cong, goal: Formula, depth: int) -> bool:
        if not self.budget.tick():
            return False
        goal = simplify(goal)
        if isinstance(goal, TrueF):
            return True
        if isinstance(goal, FalseF):
            return False
        if isinstance(goal, And):
            return all(self._prove_flat(env, cong, g, depth) for g in goal.items)
        if isinstance(goal, Or):
            return any(self._prove_flat(env, cong, g, depth) for g in goal.items)
        if isinstance(goal, Eq):
            return cong.equal(goal.a, goal.b)
        if isinstance(goal, Neq):
            return cong.distinct(goal.a, goal.b)
        if isinstance(goal, (Once, HistNot, NotSince)):
            return any(_atom_implies(p, goal, cong) for p in env.atoms)
        if isinstance(goal, Exists):
            return self._prove_exists(env, cong, goal, depth)
        if isinstance(goal, Forall):
            return self._prove_forall(env, cong, goal, depth)
        return False

    def _prove_exists(self, env: _Env, cong: _Cong, goal: Exists, depth: int) -> bool:
        evars = set(goal.vars)
        for _ in self._witnesses(env, cong, goal.body, evars, {}, depth):
            return True
        return False

    # Witness search: unification against premise atoms binds the
    # existential variables instead of enumerating all term tuples.

    def _resolve(self, t: Term, bnd: dict) -> Term:
        while isinstance(t, SymVar) and t in bnd:
            t = bnd[t]
        return t

    def _covers_bind(
        self,
        wide: SymbolicMessage,
        narrow: SymbolicMessage,
        evars: set,
        bnd: dict,
        cong: _Cong,
    ) -> Optional[dict]:
        """Bindings making every match of `narrow` also match `wide`."""
        if wide.body.sig != narrow.body.sig:
            return None
        for wt, nt in zip(wide.body.slots(), narrow.body.slots()):
            if isinstance(wt, SymVar) and wt in wide.locals:
                continue
            if isinstance(nt, SymVar) and nt in narrow.locals:
                return None  # the narrow side is freer here than the wide
            wt = self._resolve(wt, bnd)
            nt = self._resolve(nt, bnd)
            if wt == nt:
                continue
            if isinstance(wt, SymVar) and wt in evars:
                bnd = {**bnd, wt: nt}
            elif isinstance(nt, SymVar) and nt in evars:
                bnd = {**bnd, nt: wt}
            elif cong.equal(wt, nt):
                continue
            else:
                return None
        return bnd

    def _witnesses(self, env: _Env, cong: _Cong, f: Formula, evars: set, bnd: dict, depth: int):
        if not self.budget.tick():
            return
        if isinstance(f, TrueF):
            yield bnd
            return
        if isinstance(f, FalseF):
            return
        if isinstance(f, And):
            items = sorted(f.items, key=_conj_rank)
            yield from self._witness_seq(env, cong, items, evars, bnd, depth)
            return
        if isinstance(f, Or):
            for item in f.items:
                yield from self._witnesses(env, cong, item, evars, bnd, depth)
            return
        if isinstance(f, Once):
            for p in env.atoms:
                if isinstance(p, Once):
                    nb = self._covers_bind(f.msg, p.msg, evars, bnd, cong)
                    if nb is not None:
                        yield nb
            return
        if isinstance(f, HistNot):
            for p in env.atoms:
                if isinstance(p, HistNot):
                    nb = self._covers_bind(p.msg, f.msg, evars, bnd, cong)
                    if nb is not None:
                        yield nb
            return
        if isinstance(f, NotSince):
            for p in env.atoms:
                if isinstance(p, NotSince):
                    nb = self._covers_bind(f.pos, p.pos, evars, bnd, cong)
                    if nb is None:
                        continue
                    nb2 = self._covers_bind(p.neg, f.neg, evars, nb, cong)
                    if nb2 is not None:
                        yield nb2
            return
        if isinstance(f, Eq):
            a, b = self._resolve(f.a, bnd), self._resolve(f.b, bnd)
            if a == b:
                yield bnd
                return
            if isinstance(a, SymVar) and a in evars:
                yield {**bnd, a: b}
                return
            if isinstance(b, SymVar) and b in evars:
                yield {**bnd, b: a}
                return
            if cong.equal(a, b):
                yield bnd
            return
        if isinstance(f, Neq):
            a, b = self._resolve(f.a, bnd), self._resolve(f.b, bnd)
            a_free = isinstance(a, SymVar) and a in evars
            b_free = isinstance(b, SymVar) and b in evars
            if not a_free and not b_free:
                if cong.distinct(a, b):
                    yield bnd
                return
            # Pick existing, provably-distinct terms for the free side(s).
            terms = self._terms(env)
            emitted = 0
            if a_free and b_free:
                for c1 in terms:
                    for c2 in terms:
                        if cong.distinct(c1, c2):
                            yield {**bnd, a: c1, b: c2}
                            emitted += 1
                            if emitted >= 6:
                                return
                return
            free, other = (a, b) if a_free else (b, a)
            for cand in terms:
                if cong.distinct(cand, other):
                    yield {**bnd, free: cand}
                    emitted += 1
                    if emitted >= 6:
                        return
            return
        # Nested quantifier or other leaf: bind what it needs, then fall
        # back to the general prover on the instantiated leaf.
        leaf_vars = sorted(free_vars(f) & evars)
        unbound = [v for v in leaf_vars if self._resolve(v, bnd) == v]
        if unbound:
            for combo in itertools.product(self._terms(env), repeat=len(unbound)):
                if not self.budget.tick(len(unbound)):
                    return
                nb = {**bnd, **dict(zip(unbound, combo))}
                inst = _rename_or_subst(f, {v: self._resolve(v, nb) for v in leaf_vars})
                if self._prove_flat(env, cong, simplify(inst), depth + 1):
                    yield nb
            return
        inst = _rename_or_subst(f, {v: self._resolve(v, bnd) for v in leaf_vars})
        if self._prove_flat(env, cong, simplify(inst), depth + 1):
            yield bnd

    def _witness_seq(self, env: _Env, cong: _Cong, items: list, evars: set, bnd: dict, depth: int):
        if not items:
            yield bnd
            return
        first, rest = items[0], items[1:]
        for nb in self._witnesses(env, cong, first, evars, bnd, depth):
            yield from self._witness_seq(env, cong, rest, evars, nb, depth)

    def _prove_forall(self, env: _Env, cong: _Cong, goal: Forall, depth: int) -> bool:
        # Only derivable from a single premise universal of equal width.
        for p in env.foralls:
            if len(p.vars) != len(goal.vars):
                continue
            for perm in itertools.permutations(goal.vars):
                fresh = {v: SymVar(f"uv_{v.name}{next(self.sk.count)}") for v in p.vars}
                pbody = _rename_or_subst(p.body, dict(fresh))
                gbody = _rename_or_subst(goal.body, {gv: fresh[pv] for pv, gv in zip(p.vars, perm)})
                benv = env.clone()
                benv.foralls = [f for f in env.foralls if f is not p]
                _add_premise(benv, pbody, self.sk)
                if self._prove(benv, gbody, depth + 1):
                    return True
        return False

    def _terms(self, env: _Env) -> list[Term]:
        hit = self._terms_cache.get(id(env))
        if hit is not None:
            return hit
        out = self._terms_uncached(env)
        self._terms_cache[id(env)] = out
        return out

    def _terms_uncached(self, env: _Env) -> list[Term]:
        seen: list[Term] = [NULL]

        def add(t: Term) -> None:
            if t not in seen:
                seen.append(t)

        def msg_terms(sm: SymbolicMessage) -> None:
            for t in sm.body.slots():
                if not (isinstance(t, SymVar) and t in sm.locals):
                    add(t)

        for a in env.atoms:
            if isinstance(a, (Once, HistNot)):
                msg_terms(a.msg)
            elif isinstance(a, NotSince):
                msg_terms(a.neg)
                msg_terms(a.pos)
        for a, b in env.eqs + env.neqs:
            add(a)
            add(b)
        return seen


def _rename_or_subst(f: Formula, sub: dict[SymVar, Term]) -> Formula:
    from .cbcftl import subst

    return subst(f, sub)


def prove_implies(premise: Formula, goal: Formula, budget_limit: int = 60_000) -> bool:
    return Prover(budget_limit).implies(premise, goal)


# ---------------------------------------------------------------------------
# Entailment: structural yes, bounded-counterexample no


def check_entails(
    premise: Formula,
    consequent: Formula,
    search_len: int = 3,
    budget_limit: int = 60_000,
    search: bool = True,
) -> str:
    """Returns "yes", "no", or "unknown".

    Consequent free variables not shared with the premise are read
    existentially (the SMT rendering universally quantifies them under the
    negation).
    """
    premise = simplify(premise)
    consequent = simplify(consequent)
    only = tuple(sorted(free_vars(consequent) - free_vars(premise)))
    goal = Exists(only, consequent) if only else consequent
    if prove_implies(premise, goal, budget_limit):
        return "yes"
    if search and _find_countermodel(premise, goal, search_len, budget_limit):
        return "no"
    return "unknown"


def _find_countermodel(premise: Formula, goal: Formula, search_len: int, budget_limit: int) -> bool:
    sigs = message_sigs(premise) + [s for s in message_sigs(goal) if s not in message_sigs(premise)]
    for sm in _hn_atoms(goal):  # falsifying the goal may need one of these
        if sm.body.sig not in sigs:
            sigs.append(sm.body.sig)
    literals = literal_pool(And((premise, goal)))
    fvars = sorted(free_vars(premise) | free_vars(goal))
    budget = Budget(budget_limit)

    for length in range(search_len + 1):
        found = _search_counter(premise, goal, fvars, sigs, literals, length, budget)
        if found:
            return True
        if budget.spent > budget.limit:
            return False
    return False


def _hn_atoms(f: Formula) -> list[SymbolicMessage]:
    out: list[SymbolicMessage] = []

    def walk(g: Formula) -> None:
        if isinstance(g, HistNot):
            out.append(g.msg)
        elif isinstance(g, NotSince):
            out.append(g.neg)
        elif isinstance(g, (And, Or)):
            for i in g.items:
                walk(i)
        elif isinstance(g, (Exists, Forall)):
            walk(g.body)

    walk(f)
    return out


def _search_counter(premise, goal, fvars, sigs, literals, length, budget) -> bool:
    hit = []

    def fill_theta(i, used, fresh, theta):
        if not budget.tick():
            return False
        if i == len(fvars):
            return fill_pos(0, used, fresh, theta, [])
        for v in _value_choices(used, literals, fresh):
            nused = used + [v] if v not in used else used
            nfresh = fresh + (1 if isinstance(v, Addr) and v.ident >= _FRESH_BASE and v not in used else 0)
            if fill_theta(i + 1, nused, nfresh, {**theta, fvars[i]: v}):
                return True
        return False

    def fill_pos(p, used, fresh, theta, msgs):
        if not budget.tick():
            return False
        if p == length:
            hist = tuple(msgs)
            if models_formula(hist, theta, length - 1, premise) and not models_formula(
                hist, theta, length - 1, goal
            ):
                hit.append((hist, theta))
                return True
            return False
        for sig in sigs:
            nslots = sig.arity + (1 if sig.has_ret else 0)
            if fill_slots(sig, nslots, [], p, used, fresh, theta, msgs):
                return True
        return False

    def fill_slots(sig, nslots, acc, p, used, fresh, theta, msgs):
        if len(acc) == nslots:
            args = tuple(acc[: sig.arity])
            ret = acc[sig.arity] if sig.has_ret else None
            return fill_pos(p + 1, used, fresh, theta, msgs + [Message(sig, args, ret)])
        for v in _value_choices(used, literals, fresh):
            nused = used + [v] if v not in used else used
            nfresh = fresh + (1 if isinstance(v, Addr) and v.ident >= _FRESH_BASE and v not in used else 0)
            if fill_slots(sig, nslots, acc + [v], p, used, fresh, theta, msgs):
                return True
        return False

    return fill_theta(0, [], 0, {})
