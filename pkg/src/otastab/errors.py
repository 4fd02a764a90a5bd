"""Exception types shared across the toolkit."""


class OtaError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameter(OtaError):
    """A component value violates its constraint (sign, finiteness, count)."""

    def __init__(self, name, value, reason=""):
        self.name = name
        self.value = value
        msg = f"invalid parameter {name} = {value!r}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class ParseError(OtaError):
    """Malformed model file or value string. Carries key/line context."""

    def __init__(self, message, context=None):
        self.context = context
        super().__init__(f"{message} (at {context})" if context else message)


class CalibrationInfeasible(OtaError):
    """Calibration targets cannot be met by the default reconstruction."""


class SingularAtFrequency(OtaError):
    """The complex system matrix is numerically singular at a sweep point."""

    def __init__(self, freq_hz):
        self.freq_hz = freq_hz
        super().__init__(f"system matrix singular at f = {freq_hz} Hz")


class EigensolverFailure(OtaError):
    """Generalized eigenvalue extraction failed or returned unpaired values."""


class NoCrossover(OtaError):
    """Open-loop magnitude never crosses unity on the analysis grid."""


class NoSolution(OtaError):
    """A design-criterion inversion has no solution inside the bracket."""


class NoValidRange(OtaError):
    """No load interval satisfies both stability criteria."""


class ValidityViolated(OtaError):
    """Model/load pair fails the small-signal validity assumptions."""


class IntegratorStall(OtaError):
    """Adaptive step control underflowed during transient integration."""


class InconsistentEntry(OtaError):
    """A benchmark row's stored figure of merit disagrees with its raw inputs."""
