"""Exception taxonomy shared across the simulator.

The CLI maps these onto exit codes: configuration problems (bad parameters,
bad recipe files) exit 2, data/format problems exit 3, numerical failures
during a run exit 4.
"""


class TopoflowError(Exception):
    """Base class for all simulator errors."""


class ParameterError(TopoflowError, ValueError):
    """An operation was called with out-of-range or inconsistent arguments."""


class ConfigError(TopoflowError, ValueError):
    """An experiment recipe is missing fields, has unknown keys, or holds
    out-of-range values."""


class FormatError(TopoflowError, ValueError):
    """An input file (IDX corpus, CSV, edge list) does not match its format."""


class ProtocolError(TopoflowError, RuntimeError):
    """The communication protocol was driven with inconsistent state, e.g.
    a missing neighbor snapshot."""


class NumericsError(TopoflowError, ArithmeticError):
    """A NaN or Inf surfaced in model parameters during a run."""
