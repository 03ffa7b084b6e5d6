from __future__ import annotations

from typing import Optional


class AgentLogitError(Exception):
    """
    Base class for all library errors.
    Each subclass carries the exit code the CLI reports for it.
    """

    exit_code: int = 1


class DatasetValidationError(AgentLogitError):
    exit_code = 2

    def __init__(
        self,
        message: str,
        agent_id: Optional[str] = None,
        column: Optional[str] = None,
    ) -> None:
        self.agent_id = agent_id
        self.column = column
        parts = [message]
        if agent_id is not None:
            parts.append(f"agent_id={agent_id!r}")
        if column is not None:
            parts.append(f"column={column!r}")
        super().__init__(" | ".join(parts))


class SpecError(AgentLogitError):
    exit_code = 2


class RankDeficiencyError(AgentLogitError):
    exit_code = 3

    def __init__(self, message: str, columns: tuple[str, ...] = ()) -> None:
        self.columns = columns
        if columns:
            message = f"{message}: dependent columns {', '.join(columns)}"
        super().__init__(message)


class IdentificationError(AgentLogitError):
    exit_code = 3


class EstimationError(AgentLogitError):
    exit_code = 3


class ConvergenceError(AgentLogitError):
    exit_code = 3

    def __init__(self, message: str, residual: float) -> None:
        self.residual = residual
        super().__init__(f"{message} (residual={residual:.3e})")


class OptimizationError(AgentLogitError):
    exit_code = 4
