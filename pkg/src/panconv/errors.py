"""Exception hierarchy shared across the package."""


class PanError(Exception):
    """Base class for all structured errors raised by this package."""


class GraphIndexError(PanError):
    """An edge endpoint or node index is outside [0, n_nodes)."""


class SelfLoopError(PanError):
    """A self-loop appeared in an edge list that must not contain any."""


class OracleGuardError(PanError):
    """A brute-force enumeration guard was exceeded."""


class PowerIterationError(PanError):
    """Power iteration failed to converge; carries the last iterate."""

    def __init__(self, message, eigenvalue=None, eigenvector=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue
        self.eigenvector = eigenvector


class PropagatorConfigError(PanError):
    """Invalid propagator configuration (method id, weights, temperature, ...)."""


class EmptyMaskError(PanError):
    """An operation over masked nodes received an empty mask."""


class TrainingDivergedError(PanError):
    """Training produced a non-finite loss; carries the history up to failure."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class DataFormatError(PanError):
    """A dataset file or dataset object violates the on-disk contract."""


class VersionMismatchError(DataFormatError):
    """Dataset file has an unsupported format tag or version."""


class ChecksumError(DataFormatError):
    """A dataset file section failed its CRC32 check (corrupt or truncated)."""


class MaskOverlapError(DataFormatError):
    """Train/val/test masks are not pairwise disjoint."""
