"""Exception types shared across the simulator."""


class DtnSimError(Exception):
    """Base class for all simulator errors."""


class ParseError(DtnSimError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(DtnSimError):
    """A structural invariant does not hold."""


class NotCyclic(DtnSimError):
    """Operation requires a periodic plan but none was given."""


class NoRoute(DtnSimError):
    """No feasible time-respecting route exists."""


class TooLarge(DtnSimError):
    """Input exceeds the exhaustive-search bound."""


class InvalidLevel(DtnSimError):
    """Requested hierarchy level outside [1, levels]."""


class ThresholdOutOfRange(DtnSimError):
    """Probability threshold outside the permitted [0.6, 0.8] band."""


class SameNode(DtnSimError):
    """Two distinct nodes were required."""


class Unreachable(DtnSimError):
    """Forwarding target cannot be reached with the available state."""


class NoGradient(DtnSimError):
    """No gradient path exists between source and sink."""


class NoAliveNeighbor(DtnSimError):
    """Every candidate next hop is dead or off-gradient."""


class AllPathsBroken(DtnSimError):
    """Every path of a path set is broken and re-discovery failed."""


class ConfigError(DtnSimError):
    """Scenario configuration is invalid."""


class ScenarioError(DtnSimError):
    """Scenario inputs are inconsistent (bad node ids, missing files...)."""


class SchemaError(DtnSimError):
    """A metrics file does not match the expected schema."""


class InvalidKind(DtnSimError):
    """Unknown generator kind."""
