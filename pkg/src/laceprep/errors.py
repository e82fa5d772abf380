"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class LaceprepError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class UnsupportedBoundary(LaceprepError):
    pass


class ExtentTooSmall(LaceprepError):
    pass


class AmbiguousReference(LaceprepError):
    pass


class OutOfRange(LaceprepError):
    pass


class NoDominantShell(LaceprepError):
    pass


class UnknownSublattice(LaceprepError):
    pass


class SchemeMismatch(LaceprepError):
    exit_code = 2


class InfeasibleSyndrome(LaceprepError):
    exit_code = 2


class CertificationFailed(LaceprepError):
    exit_code = 2


class NonCliffordRequest(LaceprepError):
    pass


class DimensionCap(LaceprepError):
    exit_code = 3


class InfeasibleFrame(LaceprepError):
    exit_code = 2


class SynthesisMismatch(LaceprepError):
    exit_code = 2


class ConvergenceFailure(LaceprepError):
    exit_code = 2
