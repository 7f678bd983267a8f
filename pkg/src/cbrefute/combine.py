"""Folding a spec into an abstract message history, one message at a time.

The backwards analysis records hypothesized future messages on an abstract
history.  ``encode_history`` turns that chain plus the spec into a single
temporal formula over the (unknown) concrete prefix: each hypothesized
message instantiates the implications that target it, and rewrites
("quotients") the constraints contributed by later messages to account for
one more message at the end of the prefix.
"""

from __future__ import annotations

from typing import Optional

from .cbcftl import (
    AbstractMessage,
    And,
    Eq,
    Exists,
    FALSEF,
    Forall,
    Formula,
    HistNot,
    HistoryImplication,
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
    VarGen,
    conj,
    default_gen,
    disj,
    simplify,
    subst,
)
from .ir import Value
from .mhist import AbsMsgHistory, Cons, OkHist

# A substitution maps an implication target's variables to the hypothesized
# message's slots (variables or literals), positionally.
Substitution = dict[SymVar, Term]


def match_constraint(sm: SymbolicMessage, am: AbstractMessage, positive: bool) -> Formula:
    """Slot-wise equality of sm against am (positive) or its negation.

    Different name or kind: False / True.  Otherwise a conjunction of
    equalities (or the dual disjunction of disequalities) over sm's
    non-quantified slots; locally quantified slots impose no constraint.
    """
    if sm.body.sig != am.sig:
        return FALSEF if positive else TRUEF
    eqs: list[Formula] = []
    neqs: list[Formula] = []
    for t, u in zip(sm.body.slots(), am.slots()):
        if isinstance(t, SymVar) and t in sm.locals:
            continue
        eqs.append(Eq(t, u))
        neqs.append(Neq(t, u))
    return simplify(conj(eqs)) if positive else simplify(disj(neqs))


def match(sm: SymbolicMessage, am: AbstractMessage) -> Formula:
    return match_constraint(sm, am, positive=True)


def not_match(sm: SymbolicMessage, am: AbstractMessage) -> Formula:
    return match_constraint(sm, am, positive=False)


def instantiate_one(
    imp: HistoryImplication, am: AbstractMessage, gen: Optional[VarGen] = None
) -> Formula:
    """Constraint on the history before a hypothesized message am.

    When am can match the implication's target, the consequent is carried
    over with target variables replaced by am's slots (fresh names for the
    consequent's own binders).  Slots where the target holds a literal
    guard the consequent: the implication only fires if the message's slot
    value equals that literal.
    """
    gen = gen or default_gen()
    if imp.target.sig != am.sig:
        return TRUEF
    sub: Substitution = {}
    guards: list[Formula] = []
    for t, u in zip(imp.target.slots(), am.slots()):
        if isinstance(t, SymVar):
            sub[t] = u
        elif isinstance(u, Value):
            if t != u:
                return TRUEF  # literal slots disagree; target can never match
        else:
            guards.append(Neq(u, t))
    body = subst(imp.consequent, sub, gen)
    return simplify(disj(guards + [body])) if guards else simplify(body)


def instantiate(am: AbstractMessage, spec: Spec, gen: Optional[VarGen] = None) -> Formula:
    gen = gen or default_gen()
    return simplify(conj([instantiate_one(imp, am, gen) for imp in spec.implications]))


def quotient(f: Formula, am: AbstractMessage, gen: Optional[VarGen] = None) -> Formula:
    """Rewrite f about history w;m (m matching am) into a formula about w."""
    gen = gen or default_gen()
    return simplify(_quotient(f, am, gen))


def _quotient(f: Formula, am: AbstractMessage, gen: VarGen) -> Formula:
    if isinstance(f, Once):
        return Or((match(f.msg, am), And((not_match(f.msg, am), f))))
    if isinstance(f, HistNot):
        return And((f, not_match(f.msg, am)))
    if isinstance(f, NotSince):
        released = match(f.pos, am)
        kept = And((not_match(f.pos, am), f, not_match(f.neg, am)))
        return Or((released, kept))
    if isinstance(f, And):
        return And(tuple(_quotient(i, am, gen) for i in f.items))
    if isinstance(f, Or):
        return Or(tuple(_quotient(i, am, gen) for i in f.items))
    if isinstance(f, (Exists, Forall)):
        # Binders never capture am's variables: instantiated formulas carry
        # fresh binders, but rename defensively if a collision sneaks in.
        if set(f.vars) & {t for t in am.slots() if isinstance(t, SymVar)}:
            renamed = subst(f, {}, gen)
            return _quotient(renamed, am, gen)
        cls = Exists if isinstance(f, Exists) else Forall
        return cls(f.vars, _quotient(f.body, am, gen))
    # true/false and (dis)equalities ignore the history
    return f


def encode_history(hist: AbsMsgHistory, spec: Spec, gen: Optional[VarGen] = None) -> Formula:
    """One temporal formula equivalent to the abstract history under spec."""
    gen = gen or default_gen()
    if isinstance(hist, OkHist):
        return TRUEF
    assert isinstance(hist, Cons)
    inst = instantiate(hist.next, spec, gen)
    rest = encode_history(hist.tail, spec, gen)
    return simplify(conj([inst, quotient(rest, hist.next, gen)]))
