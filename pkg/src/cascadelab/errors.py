"""Exception types shared across the toolkit."""


class CascadeError(Exception):
    """Base class for all cascadelab errors."""


class InvalidParameter(CascadeError):
    """A model or configuration parameter is outside its legal range."""


class MeanNotOne(InvalidParameter):
    """A discrete weight law does not have unit mean."""


class MomentInfinite(CascadeError):
    """A requested weight moment E[W^q] is infinite."""


class NegativeMomentOfZeroAtom(MomentInfinite):
    """E[W^q] with q < 0 requested for a law with P[W = 0] > 0."""


class ZeroMoment(CascadeError):
    """E[W^q] = 0, so the tilted law is undefined."""


class DegenerateModel(CascadeError):
    """The cascade is degenerate, so the requested quantity is undefined."""


class DepthTooLarge(CascadeError):
    """ell**depth exceeds the materialization cap."""


class ZeroTotalMass(CascadeError):
    """The level carries no mass, so nothing can be sampled."""


class ZeroMassPath(CascadeError):
    """A local exponent was requested on an extinct interval."""


class ZeroMassEncountered(ZeroMassPath):
    """An extinct replica reached an operation that requires positive mass."""


class AllMassZero(ZeroTotalMass):
    """Every interval of the level is extinct."""


class InsufficientReplicas(CascadeError):
    """Too few replicas for the requested statistic."""


class InsufficientData(InsufficientReplicas):
    """Trace ensemble too small or too shallow for the probe."""


class DegenerateGrid(CascadeError):
    """A grid with fewer points than the transform requires."""


class BetaOutOfRange(CascadeError):
    """Requested exponent outside the attainable interval."""


class SnapshotError(CascadeError):
    """Base class for snapshot format violations."""


class BadMagic(SnapshotError):
    """The file does not start with the MCAS1 tag."""


class DigestMismatch(SnapshotError):
    """Payload bytes do not match the recorded SHA-256 digest."""


class TruncatedPayload(SnapshotError):
    """The file ends before the declared payload length."""


class IoFailure(CascadeError):
    """An OS-level read or write failed."""
