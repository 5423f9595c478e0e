"""Error hierarchy shared by the library and the CLI.

Library code raises; only `randadj_cli.py` turns an error into a one-line
message and a process exit code. Every class carries its exit code so the
mapping lives next to the error, not in the CLI:

  * 1 - input error (bad file, bad flag, bad argument)
  * 2 - estimation infeasible for the given data
  * 3 - internal invariant violation (a bug, never the user's fault)
"""
from typing import Iterable, Optional, Sequence


class RandAdjError(Exception):
    """Base class for every error raised on purpose by this package."""

    exit_code: int = 3


# --- Input errors (exit 1) ---


class InputError(RandAdjError):
    exit_code = 1


class CsvFormatError(InputError):
    """A CSV cell or row that cannot be read. `row` is the 1-based data row."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class ConfigError(InputError):
    """Mutually inconsistent flags or an unusable strategy registry entry."""


# --- Estimation infeasible (exit 2) ---


class EstimationInfeasible(RandAdjError):
    exit_code = 2


class DegenerateDesignError(EstimationInfeasible):
    """Every column pruned, or the treatment column collinear with the intercept."""


class EmptyArmError(EstimationInfeasible):
    def __init__(self, context: str, n_treated: int, n_control: int):
        self.context = context
        self.n_treated = n_treated
        self.n_control = n_control
        super().__init__(
            f"{context}: need both arms, got N1={n_treated}, N0={n_control}"
        )


class PatternSizeError(EstimationInfeasible):
    """A missingness pattern (or stratum) too small for the requested fit."""

    def __init__(
        self,
        pattern: str,
        n: int,
        n_treated: int,
        n_control: int,
        requirement: str,
    ):
        self.pattern = pattern
        self.n = n
        self.n_treated = n_treated
        self.n_control = n_control
        self.requirement = requirement
        super().__init__(
            f"pattern {pattern} too small (N={n}, N1={n_treated}, N0={n_control}); "
            f"requires {requirement}"
        )


class FullyMissingColumnError(EstimationInfeasible):
    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        super().__init__(f"no observed values in column(s): {', '.join(self.columns)}")


class DebiasUndefinedError(EstimationInfeasible):
    """Arm-wise observed rates coincide, so no imputation constant removes the bias."""

    def __init__(self, columns: Iterable[str]):
        self.columns = list(columns)
        super().__init__(
            "debiasing constant undefined (equal arm-wise observed rates) for "
            f"column(s): {', '.join(self.columns)}"
        )


class InsufficientClustersError(EstimationInfeasible):
    pass


class TooManyFailuresError(EstimationInfeasible):
    """Too many Monte Carlo replicates or randomization draws failed."""


# --- Internal (exit 3) ---


class InternalInvariantError(RandAdjError):
    exit_code = 3
