import logging

from fastapi import APIRouter, Request
from fastapi.responses import JSONResponse

from src.config import config
from src.engine.numerics import RNG_ALGORITHM

logger = logging.getLogger(__name__)


router = APIRouter(
    prefix="/status",
)


@router.get("/am-i-up", status_code=200)
async def status_up(request: Request):
    """Endpoint used to check if the service is running.

    Returns:
        Returns "OK", with status_code=200
    """
    logger.debug("Service is running")
    return JSONResponse(
        content={"message": "Service is running", "service": config.logger.service_name}
    )


@router.get("/defaults", status_code=200)
async def experiment_defaults(request: Request):
    """Default alpha, omega, beta, severities and RNG used by the experiments."""
    experiment = config.experiment
    return JSONResponse(
        content={
            "alpha": experiment.alpha,
            "omega": experiment.omega,
            "beta": experiment.beta,
            "distributions": experiment.distributions,
            "calibration_mode": config.calibration.mode,
            "rng": RNG_ALGORITHM,
        }
    )
