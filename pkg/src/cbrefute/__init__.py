"""Refute assertion reachability in event-driven programs.

The analysis reasons backwards from an assertion over *message histories*
(the sequence of callback invocations, callback returns, and callin calls
crossing the app/framework boundary), constrained by a user-supplied
temporal specification of which histories the framework can actually
produce.  If the backwards fixpoint at the framework location excludes the
empty history, the assertion failure is unreachable.
"""

__version__ = "0.1.0"
