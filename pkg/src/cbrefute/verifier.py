"""Goal-directed backwards fixpoint over the invariant map.

Starts from the error condition just before the queried assertion and
applies the backwards transfers along every incoming transition, merging
new disjuncts into weaker existing ones via entailment.  A framework-
location disjunct that cannot be shown to exclude the empty history is an
alarm; a fixpoint whose framework disjuncts all exclude it is a refutation.
"""

from __future__ import annotations

import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

from . import mhpl, smtenc
from .cbcftl import AbstractMessage, Spec, VarGen, spec_sigs
from .ir import App, CbInvoke, CbReturn, CiInvoke, Program, Query, Transition, validate_program
from .mhist import messages_oldest_first
from .mhpl import (
    AbsState,
    InvariantMap,
    entails_state,
    excludes_initial_state,
    state_cb_depth,
    state_key,
)


class VerifierError(Exception):
    pass


@dataclass
class VerifyConfig:
    max_callback_depth: Optional[int] = None
    wall_timeout_s: float = 600.0
    solver: smtenc.SolverConfig = field(default_factory=smtenc.SolverConfig)
    merge_enabled: bool = True
    jobs: int = 1

    def __post_init__(self) -> None:
        assert self.wall_timeout_s > 0
        assert self.max_callback_depth is None or self.max_callback_depth > 0


@dataclass
class RunStats:
    states_added: int = 0
    states_merged: int = 0
    transfers: int = 0


@dataclass
class Refuted:
    invariants: InvariantMap
    stats: RunStats = field(default_factory=RunStats)


@dataclass
class Alarm:
    witness: object  # AbsMsgHistory of the offending fwk disjunct
    state: AbsState
    inconclusive: bool = False
    stats: RunStats = field(default_factory=RunStats)


@dataclass
class SafeToDepth:
    k: int
    invariants: InvariantMap
    stats: RunStats = field(default_factory=RunStats)


@dataclass
class Timeout:
    stats: RunStats = field(default_factory=RunStats)


VerifyResult = Union[Refuted, Alarm, SafeToDepth, Timeout]


def _check_sig_consistency(p: Program, spec: Spec) -> None:
    ps = p.sigs()
    for key, sig in spec_sigs(spec).items():
        if key in ps and ps[key] != sig:
            raise VerifierError(
                f"arity mismatch for {key[0]} {key[1]}: program {ps[key].arity}, spec {sig.arity}"
            )


def refute(p: Program, spec: Spec, q: Query, cfg: VerifyConfig) -> VerifyResult:
    diags = validate_program(p)
    if diags:
        raise VerifierError("invalid program: " + "; ".join(diags))
    _check_sig_consistency(p, spec)

    gen = VarGen()
    stats = RunStats()
    deadline = time.monotonic() + cfg.wall_timeout_s

    err = mhpl.init_error_state(q, gen)
    inv = InvariantMap()
    if err is None:
        return Refuted(inv, stats)  # the assertion can never fail

    seen_keys: dict[str, set] = {err.loc: {state_key(err)}}
    inv.at(err.loc).append(err)
    work: deque[tuple[Transition, AbsState]] = deque(
        (t, err) for t in p.transitions_into(err.loc)
    )
    depth_hit = False
    pool = ThreadPoolExecutor(cfg.jobs) if cfg.jobs > 1 else None

    def transfer(t: Transition, post: AbsState) -> list[AbsState]:
        if isinstance(t.payload, App):
            return mhpl.pre_app(post, t, gen)
        return mhpl.pre_boundary(spec, post, t, gen)

    try:
        while work:
            if time.monotonic() > deadline:
                return Timeout(stats)
            batch = [work.popleft() for _ in range(min(len(work), max(1, cfg.jobs)))]
            batch = [(t, post) for t, post in batch if post in inv.at(post.loc)]
            if pool is not None:
                pres_list = list(pool.map(lambda tp: transfer(*tp), batch))
            else:
                pres_list = [transfer(t, post) for t, post in batch]
            for (t, _post), pres in zip(batch, pres_list):
                stats.transfers += 1
                for pre in pres:
                    if time.monotonic() > deadline:
                        return Timeout(stats)
                    res = _join(p, spec, q, cfg, gen, inv, work, pre, stats, seen_keys)
                    if isinstance(res, Alarm):
                        res.stats = stats
                        return res
                    depth_hit = depth_hit or res == "depth"
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    if depth_hit:
        assert cfg.max_callback_depth is not None
        return SafeToDepth(cfg.max_callback_depth, inv, stats)
    return Refuted(inv, stats)


def _join(
    p: Program,
    spec: Spec,
    q: Query,
    cfg: VerifyConfig,
    gen: VarGen,
    inv: InvariantMap,
    work: deque,
    pre: AbsState,
    stats: RunStats,
    seen_keys: dict[str, set],
) -> Optional[Union[str, Alarm]]:
    if cfg.max_callback_depth is not None and state_cb_depth(pre) > cfg.max_callback_depth:
        return "depth"
    key = state_key(pre)
    keys = seen_keys.setdefault(pre.loc, set())
    if key in keys:
        stats.states_merged += 1
        return None  # renaming of a state already covered
    keys.add(key)
    disjuncts = inv.at(pre.loc)
    if cfg.merge_enabled:
        for d in disjuncts:
            if entails_state(spec, pre, d, cfg.solver, gen) == smtenc.YES:
                stats.states_merged += 1
                return None  # covered by an existing, weaker disjunct
        keep = []
        for d in disjuncts:
            if entails_state(spec, d, pre, cfg.solver, gen) == smtenc.YES:
                stats.states_merged += 1
                continue  # the new disjunct is weaker; drop the old one
            keep.append(d)
        disjuncts[:] = keep
    if pre.loc == p.fwk:
        verdict = excludes_initial_state(spec, pre, cfg.solver, gen)
        if verdict != smtenc.YES:
            return Alarm(pre.hist, pre, inconclusive=(verdict == smtenc.UNKNOWN))
    disjuncts.append(pre)
    stats.states_added += 1
    for t in p.transitions_into(pre.loc):
        work.append((t, pre))
    return None


def extract_witness(result: Alarm) -> list[AbstractMessage]:
    """The hypothesized message chain, oldest first."""
    return messages_oldest_first(result.witness)
