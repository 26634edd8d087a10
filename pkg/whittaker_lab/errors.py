"""Exception and warning types shared by every module.

Each exception carries the process exit code the CLI returns for it.
"""


class WhittakerLabError(Exception):
    """Base error; ``exit_code`` is what the CLI hands back to the shell."""

    exit_code = 1

    def __init__(self, message: str, exit_code: int = None):
        super().__init__(message)
        if exit_code is not None:
            self.exit_code = exit_code


# ===== VALIDATION (exit 2) =====

class ValidationError(WhittakerLabError):
    exit_code = 2


class AdmissibilityError(ValidationError):
    """Parameters outside the admissible family; message names the clause."""

    def __init__(self, message: str, clause: str):
        super().__init__(f"{message} [{clause}]")
        self.clause = clause


class GammaPoleError(ValidationError):
    def __init__(self, where):
        super().__init__(f"gamma function pole at {where}")
        self.where = where


class DegenerateParameterError(ValidationError):
    pass


class UnsupportedParameterError(ValidationError):
    pass


class GridError(ValidationError):
    pass


class DuplicatePointError(ValidationError):
    pass


class OrderCapError(ValidationError):
    pass


# ===== NUMERICS (exit 2) =====

class NumericalError(WhittakerLabError):
    exit_code = 2


class NonConvergenceError(NumericalError):
    pass


class NearSingularError(NumericalError):
    pass


class MissingInverseError(NearSingularError):
    def __init__(self, expression: str, condition: float):
        super().__init__(f"inverse of {expression} does not exist numerically (cond={condition:.3e})")
        self.expression = expression


class NegativeMinorError(NumericalError):
    def __init__(self, members, value):
        super().__init__(f"principal minor over {members} is {value!r}, expected real and nonnegative")
        self.members = members


class NonFiniteEntryError(NumericalError):
    def __init__(self, x, y):
        super().__init__(f"kernel is not finite at node pair ({x!r}, {y!r})")
        self.pair = (x, y)


class UnderflowGuardError(NumericalError):
    pass


# ===== VERIFICATION (exit 3) =====

class ToleranceFailure(WhittakerLabError):
    exit_code = 3


# ===== USAGE (exit 64) =====

class UsageError(WhittakerLabError):
    exit_code = 64


class ConfigError(UsageError):
    def __init__(self, message: str, line: int = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


# ===== WARNINGS =====

class NearLogarithmicWarning(UserWarning):
    """Order close enough to an integer that the epsilon-limit path is used."""


class PlancherelCutoffWarning(UserWarning):
    """The spectral integral was cut off before its tail fell below tolerance."""
