"""Abstract message histories: hypothesized-future-message chains.

``OkHist`` stands for every history the framework can actually produce.
``Cons(tail, m)`` stands for the histories that, after appending a message
matching ``m``, satisfy ``tail`` (and stay producible).  Chains grow
outward as the backwards analysis crosses boundary transitions, so the
outermost message is the earliest hypothesized one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from .cbcftl import AbstractMessage, format_abstract_message
from .ir import CB


class AbsMsgHistory:
    __slots__ = ()


@dataclass(frozen=True)
class OkHist(AbsMsgHistory):
    def __repr__(self) -> str:
        return "okhist"


@dataclass(frozen=True)
class Cons(AbsMsgHistory):
    tail: AbsMsgHistory
    next: AbstractMessage

    def __repr__(self) -> str:
        return format_hist(self)


OKHIST = OkHist()


def messages_oldest_first(h: AbsMsgHistory) -> list[AbstractMessage]:
    out = []
    while isinstance(h, Cons):
        out.append(h.next)
        h = h.tail
    return out


def cons_chain(msgs_oldest_first: list[AbstractMessage]) -> AbsMsgHistory:
    h: AbsMsgHistory = OKHIST
    for m in reversed(msgs_oldest_first):
        h = Cons(h, m)
    return h


def cb_depth(h: AbsMsgHistory) -> int:
    """Number of hypothesized callback invocations on the chain."""
    return sum(1 for m in messages_oldest_first(h) if m.sig.kind == CB)


def format_hist(h: AbsMsgHistory) -> str:
    """Innermost-first rendering: ``okhist <~ m <~ m ...``."""
    parts = ["okhist"]
    parts.extend(
        format_abstract_message(m) for m in reversed(messages_oldest_first(h))
    )
    return " <~ ".join(parts)
