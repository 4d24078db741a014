import math
from abc import abstractmethod
from typing import Any, Optional

from pydantic import BaseModel

from src.config import Configuration
from src.consts import RowStatus


class RowResult(BaseModel):
    index: int
    label: str
    status: RowStatus
    row: dict[str, Any]
    error: Optional[str] = None
    attempts: int = 1


class BaseExperiment:
    """One table: a list of input items, each turned into one output row."""

    columns: tuple[str, ...] = ()
    retryable: bool = True

    def __init__(self, settings: Configuration):
        self.settings = settings
        self._status = RowStatus.PENDING

    @abstractmethod
    def items(self) -> list[Any]:
        raise NotImplementedError("Subclasses must implement items method")

    @abstractmethod
    def run_row(self, item: Any, budget: int = 1) -> dict[str, Any]:
        """Compute the row for ``item``; ``budget`` scales the optimizer effort on retries."""
        raise NotImplementedError("Subclasses must implement run_row method")

    def check(self, row: dict[str, Any]) -> bool:
        """Whether the row satisfies the experiment's assertions."""
        return True

    def label(self, item: Any) -> str:
        return str(item)

    def failed_row(self, item: Any, error: Exception) -> dict[str, Any]:
        row = {column: math.nan for column in self.columns}
        row[self.columns[0]] = self.label(item)
        best = getattr(error, "best_so_far", None)
        if isinstance(best, dict):
            row.update({k: v for k, v in best.items() if k in row})
        return row

    @property
    def status(self) -> RowStatus:
        return self._status

    @status.setter
    def status(self, status: RowStatus):
        self._status = status

    @property
    def name(self) -> str:
        return self.__class__.__name__.lower()
