"""Exception hierarchy shared by every nkdna module."""

from __future__ import annotations


class NKDNAError(Exception):
    """Base class for all nkdna errors."""


# container / schema
class DuplicateId(NKDNAError):
    pass


class DanglingAction(NKDNAError):
    pass


class SchemaLocked(NKDNAError):
    pass


class SchemaMismatch(NKDNAError):
    pass


class UnknownState(NKDNAError):
    pass


class UnknownAction(NKDNAError):
    pass


class ActionNotAvailable(NKDNAError):
    pass


class DuplicateKey(NKDNAError):
    pass


class DuplicateName(NKDNAError):
    pass


class ShapeMismatch(NKDNAError):
    pass


# neural engine
class BadShape(NKDNAError):
    pass


class UnsupportedFramework(NKDNAError):
    pass


class MissingNetwork(NKDNAError, KeyError):
    pass


# agent / environment
class NoActions(NKDNAError):
    pass


class TerminalState(NKDNAError):
    pass


class MissingState(NKDNAError):
    pass


class Unreachable(NKDNAError):
    pass


# file formats
class FormatError(NKDNAError):
    """Anything wrong with bytes on disk (maps to CLI exit code 3)."""


class ParseError(FormatError):
    pass


class SchemaError(FormatError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownReference(FormatError):
    pass


class DigestMismatch(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class InvalidContainer(NKDNAError):
    """Container breaks one or more invariants; ``violations`` lists them all."""

    def __init__(self, violations, container=None):
        self.violations = list(violations)
        self.container = container
        lines = "; ".join(f"{v.kind}({v.offending_id}): {v.message}" for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s): {lines}")
