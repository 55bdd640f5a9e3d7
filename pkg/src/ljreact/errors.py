"""Exception types raised across the package."""


class LJReactError(Exception):
    """Base class for all package errors."""


class ValidationError(LJReactError, ValueError):
    """A parameter violates a model invariant."""

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class ParseError(LJReactError, ValueError):
    """A configuration document could not be parsed."""

    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        where = f"line {line}" if line is not None else "config"
        super().__init__(f"{where}: {reason}")


class SingularError(LJReactError, ArithmeticError):
    """Two active particles overlap exactly (or the state became non-finite)."""

    def __init__(self, reason, step=None, pair=None, distance=None):
        self.reason = reason
        self.step = step
        self.pair = pair
        self.distance = distance
        parts = [reason]
        if step is not None:
            parts.append(f"step={step}")
        if pair is not None:
            parts.append(f"pair={tuple(int(p) for p in pair)}")
        if distance is not None:
            parts.append(f"distance={distance!r}")
        super().__init__(", ".join(parts))


class InactiveError(LJReactError):
    """An operation that needs a live particle received a dead one."""


class AlreadyDeadError(LJReactError):
    """A particle was killed twice."""


class DimensionMismatchError(LJReactError, ValueError):
    """Objects of different spatial dimension were combined."""


class StepOverrunError(LJReactError):
    """The integrator was asked to step past the time horizon."""


class InsufficientSamplesError(LJReactError, ValueError):
    """A statistical routine received fewer samples than it requires."""

    def __init__(self, needed, got):
        self.needed = needed
        self.got = got
        super().__init__(f"need at least {needed} samples, got {got}")
