"""Exception hierarchy with machine-readable codes and CLI exit codes."""

from typing import Optional


class FedHpoError(Exception):
    """Base class for all fed-hpo failures."""

    code = "runtime_error"
    exit_code = 3


class ConfigError(FedHpoError, ValueError):
    """Invalid experiment configuration, spec or override."""

    code = "config_error"
    exit_code = 2


class DataFormatError(FedHpoError, ValueError):
    """A dataset or assignment file could not be parsed."""

    code = "data_format_error"


class DivergenceError(FedHpoError, ArithmeticError):
    """Local training produced non-finite parameters."""

    code = "divergence"

    def __init__(self, client_id: int, step: int, message: Optional[str] = None):
        """Initialize divergence error.

        Args:
            client_id: Client whose update diverged
            step: 1-based SGD step at which non-finite weights appeared
            message: Optional override of the default message
        """
        self.client_id = client_id
        self.step = step
        super().__init__(message or f"client {client_id} diverged at SGD step {step}")


class ConditioningError(FedHpoError, ArithmeticError):
    """Gaussian-process kernel matrix stayed singular after maximal jitter."""

    code = "gp_conditioning"


class MissingResultsError(FedHpoError, KeyError):
    """Result table lacks cells required for a comparison."""

    code = "missing_results"

    def __init__(self, gaps: list[tuple[int, str]]):
        """Initialize missing-results error.

        Args:
            gaps: (client id, approach) pairs without a result
        """
        self.gaps = gaps
        listing = ", ".join(f"client {client}/{approach}" for client, approach in gaps)
        super().__init__(f"missing results: {listing}")

    def __str__(self) -> str:
        # KeyError would otherwise repr() the message
        return str(self.args[0])
