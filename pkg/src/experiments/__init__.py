from src.experiments.bayes_table import Table3Experiment
from src.experiments.calibration import (
    CalibrateExperiment,
    Table1Experiment,
    Table2Experiment,
)
from src.experiments.verification import VerifyExperiment

__all__ = [
    "Table1Experiment",
    "Table2Experiment",
    "Table3Experiment",
    "CalibrateExperiment",
    "VerifyExperiment",
]
