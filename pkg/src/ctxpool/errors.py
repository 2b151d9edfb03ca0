"""Exception taxonomy shared across the package.

Every error raised on a contract violation derives from :class:`CtxpoolError`
and carries the process exit code the command line tool maps it to. Keeping
the mapping on the class means library code never needs to know about the
CLI and the CLI never needs a lookup table.
"""


class CtxpoolError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(CtxpoolError):
    """The tool was invoked incorrectly (bad flags, bad combinations)."""

    exit_code = 2


class FormatError(CtxpoolError):
    """An on-disk artifact violates its format contract."""

    exit_code = 4


class IntegrityError(FormatError):
    """Checksum mismatch or truncated payload."""


class VersionError(FormatError):
    """Artifact was written by an unknown format version."""


class SchemaError(FormatError):
    """Structured text (manifest, config, header) has missing, unknown,
    or ill-typed fields."""


class DimensionError(CtxpoolError):
    """Operand shapes are incompatible."""

    exit_code = 5


class ParameterError(CtxpoolError):
    """An argument is outside its documented domain."""

    exit_code = 5


class BatchError(CtxpoolError):
    """A training batch cannot support the loss (too few subjects, an
    anchor with no positive)."""

    exit_code = 5


class DatasetError(CtxpoolError):
    """A dataset failed validation at ingestion."""

    exit_code = 5


class DegenerateInputError(CtxpoolError):
    """Numerically meaningless input (zero-norm vector where a direction
    is required)."""

    exit_code = 6


class NonFiniteError(CtxpoolError):
    """A NaN or Inf appeared where finite values are guaranteed."""

    exit_code = 6


class GraphError(CtxpoolError):
    """The computation graph is malformed (cycle, missing root)."""

    exit_code = 6


class TrainingError(CtxpoolError):
    """Training aborted; carries a diagnostics dict for post-mortem."""

    exit_code = 6

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
