"""Exception hierarchy shared by all modules."""


class RPPAError(Exception):
    """Base class for domain errors raised by the package."""


class UnsupportedOperation(RPPAError):
    """The operation is undefined for this distribution variant."""


class DomainError(RPPAError, ValueError):
    """An argument lies outside the domain of the operation."""


class NoRootError(RPPAError):
    """The reserve-price equation has no sign change inside the search range."""


class DimensionError(RPPAError, ValueError):
    """Array or vector shapes do not agree."""


class InstanceTooLarge(RPPAError):
    """Exhaustive enumeration would exceed the configured search budget."""


class InfeasibleProgram(RPPAError):
    """No allocation satisfies the program's constraints."""
