import asyncio
import logging
from typing import Any

import pandas as pd
from pydantic import BaseModel, ConfigDict

from src.consts import EXIT_FAILURE, EXIT_OK, RowStatus
from src.exceptions import ReinsuranceError
from src.experiments.base_experiment import BaseExperiment, RowResult

logger = logging.getLogger(__name__)

STATUS_COLUMNS = ("status", "error")


class ExperimentOutcome(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    frame: pd.DataFrame
    results: list[RowResult]
    exit_code: int


class ExperimentOrchestrator:
    """
    Runs every row of an experiment and assembles the table.
    Keeps going when a row fails: the row is retried with a larger optimizer
    budget and, if it still fails, reported with status ``failure``.
    """

    def __init__(
        self, experiment: BaseExperiment, parallel: bool = False, max_retries: int = 2
    ):
        self.experiment = experiment
        self.parallel = parallel
        self.max_retries = max_retries

    async def run(self) -> ExperimentOutcome:
        items = self.experiment.items()
        logger.info(
            f"{self.experiment.name}: {len(items)} row(s), "
            f"{'parallel' if self.parallel else 'sequential'}"
        )
        if self.parallel:
            results = await asyncio.gather(
                *[
                    asyncio.to_thread(self._run_row, index, item)
                    for index, item in enumerate(items)
                ]
            )
        else:
            results = [self._run_row(index, item) for index, item in enumerate(items)]

        retry_tasks = [
            (result, items[result.index])
            for result in results
            if result.status == RowStatus.FAILURE and self.experiment.retryable
        ]
        if retry_tasks and self.parallel:
            retried = await asyncio.gather(
                *[
                    asyncio.to_thread(self._retry_row, result, item)
                    for result, item in retry_tasks
                ]
            )
        else:
            retried = [self._retry_row(result, item) for result, item in retry_tasks]
        if retried:
            by_index = {result.index: result for result in retried}
            results = [by_index.get(result.index, result) for result in results]

        results = sorted(results, key=lambda result: result.index)
        failed = [r for r in results if r.status == RowStatus.FAILURE]
        self.experiment.status = RowStatus.FAILURE if failed else RowStatus.SUCCESS
        for result in failed:
            logger.error(f"{self.experiment.name}: row '{result.label}' failed: {result.error}")
        return ExperimentOutcome(
            frame=self._frame(results),
            results=results,
            exit_code=EXIT_FAILURE if failed else EXIT_OK,
        )

    def _frame(self, results: list[RowResult]) -> pd.DataFrame:
        columns = list(self.experiment.columns) + list(STATUS_COLUMNS)
        rows = [
            {**result.row, "status": result.status.value, "error": result.error or ""}
            for result in results
        ]
        return pd.DataFrame(rows, columns=columns)

    def _run_row(self, index: int, item: Any, budget: int = 1, attempts: int = 1) -> RowResult:
        label = self.experiment.label(item)
        try:
            row = self.experiment.run_row(item, budget=budget)
        except ReinsuranceError as e:
            logger.error(f"{label}: {e.title}: {e.detail}", exc_info=e)
            return RowResult(
                index=index,
                label=label,
                status=RowStatus.FAILURE,
                row=self.experiment.failed_row(item, e),
                error=e.detail,
                attempts=attempts,
            )
        passed = self.experiment.check(row)
        return RowResult(
            index=index,
            label=label,
            status=RowStatus.SUCCESS if passed else RowStatus.FAILURE,
            row=row,
            error=None if passed else "assertion failed",
            attempts=attempts,
        )

    def _retry_row(self, failed: RowResult, item: Any) -> RowResult:
        """
        Retry a failed row up to max_retries times, doubling the optimizer budget each time.
        """
        result = failed
        for attempt in range(1, self.max_retries + 1):
            budget = 2**attempt
            logger.info(
                f"Retrying {failed.label} (attempt {attempt}/{self.max_retries}, budget x{budget})"
            )
            result = self._run_row(failed.index, item, budget, attempts=attempt + 1)
            if result.status == RowStatus.SUCCESS:
                logger.info(f"{failed.label} succeeded on retry attempt {attempt}")
                return result

        logger.error(f"{failed.label} failed after {self.max_retries} retry attempts")
        return result
