"""Exception types shared across the package."""

from __future__ import annotations


class JoinFreeError(Exception):
    """Base class for every error raised by this package."""


class MalformedQuery(JoinFreeError, ValueError):
    """The query description is structurally invalid."""


class NotAcyclic(JoinFreeError):
    """No generalized join tree exists for the query."""


class NotFreeConnex(JoinFreeError):
    """No free-connex join tree exists for the query."""


class UnknownRelation(JoinFreeError, KeyError):
    """An update names a relation the plan does not contain."""


class CursorInvalidated(JoinFreeError, RuntimeError):
    """The engine changed while a cursor over it was open."""


class EngineBusy(JoinFreeError, RuntimeError):
    """An update was started before the previous one was finalized."""


class RingMismatch(JoinFreeError, TypeError):
    """An annotation does not belong to the engine's ring."""


class NotAResult(JoinFreeError, KeyError):
    """The tuple is not in the current query result."""


class OutputNotEmpty(JoinFreeError, ValueError):
    """A scalar aggregate was requested on a query with output attributes."""


class UnmappedRelation(JoinFreeError, KeyError):
    """A trace relation has no node in the join tree."""


class BadGraphFile(JoinFreeError, ValueError):
    """An edge-list file could not be parsed."""


class MixedTypes(JoinFreeError, TypeError):
    """A comparison mixed integer and string constants."""
