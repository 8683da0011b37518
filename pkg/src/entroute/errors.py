"""Exception hierarchy shared by all entroute modules."""


class EntrouteError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EntrouteError, ValueError):
    """An argument lies outside the mathematical domain of a formula."""


class InvariantViolation(EntrouteError, ValueError):
    """Constructed or loaded data breaks a structural invariant."""


class ParseError(EntrouteError, ValueError):
    """A file could not be parsed; message carries line/field diagnostics."""


class ConnectivityFailure(EntrouteError, RuntimeError):
    """Random topology generation exhausted its retry budget without a
    connected graph."""


class InvalidDemand(EntrouteError, ValueError):
    """A demand is malformed (equal endpoints, threshold off the grid, ...)."""


class EmptyGrid(EntrouteError, ValueError):
    """A discretization grid required by an operation is empty."""


class NoDemand(EntrouteError, ValueError):
    """An operation that needs at least one demand received none."""


class SearchBudgetExceeded(EntrouteError, RuntimeError):
    """Exhaustive enumeration was asked to exceed its hard bounds."""


class AnnotationMismatch(EntrouteError, ValueError):
    """A stored tree annotation does not match its recomputed value.

    ``path`` locates the offending node, e.g. ``root.children[1]``.
    """

    def __init__(self, message, path=""):
        super().__init__(message)
        self.path = path


class NumericalFailure(EntrouteError, RuntimeError):
    """The internal LP solver cycled or hit its iteration cap; the model can
    still be exported and solved externally."""


class CyclicFlow(EntrouteError, RuntimeError):
    """Retained flow arcs contain a cycle; signals a corrupt LP solution."""


class StateSpaceExceeded(EntrouteError, ValueError):
    """A solver was asked for an instance above its state-space guard."""


class InfeasibleEdge(EntrouteError, RuntimeError):
    """A stage-1 virtual edge could not be established.

    ``terminal`` names the unreachable terminal node.
    """

    def __init__(self, message, terminal=""):
        super().__init__(message)
        self.terminal = terminal


class TreeMismatch(EntrouteError, ValueError):
    """A simulation report was compared against a different tree."""
