import asyncio
import logging

from fastapi import APIRouter, status

from src.consts import Criterion
from src.datamodel.api import (
    CalibrateRequest,
    LadderRequest,
    LadderResponse,
    RiskReportRequest,
)
from src.datamodel.reports import CalibrationResult, RiskReport
from src.reinsurance.calibrate import (
    CalibrationProblem,
    UtilityCombination,
    VarianceCombination,
    calibrate,
)
from src.reinsurance.contracts import (
    LadderParams,
    build_ladder,
    is_feasible,
    parse_contract,
)
from src.reinsurance.distributions import parse_distribution
from src.reinsurance.risk import risk_report

logger = logging.getLogger(__name__)


risk_router = APIRouter(
    prefix="/api/v1",
)


@risk_router.post(
    "/risk/report",
    status_code=status.HTTP_200_OK,
    response_model=RiskReport,
)
async def get_risk_report(request: RiskReportRequest) -> RiskReport:
    logger.debug(f"Risk report for {request.contract} on {request.dist}")
    dist = parse_distribution(request.dist)
    contract = parse_contract(request.contract)
    return await asyncio.to_thread(
        risk_report,
        dist,
        contract,
        alpha=request.alpha,
        omega=request.omega,
        beta=request.beta,
        premium=request.premium,
    )


def _ladder_response(request: LadderRequest) -> LadderResponse:
    params = LadderParams(
        alpha=request.alpha, deductible=request.deductible, cuts=tuple(request.cuts)
    )
    contract = build_ladder(params)
    dist = parse_distribution(request.dist) if request.dist else None
    d_alpha = float(dist.quantile(1.0 - request.alpha)) if dist else request.deductible
    return LadderResponse(
        name=contract.name,
        breakpoints=list(contract.breakpoints),
        slopes=list(contract.slopes),
        text=contract.to_text(),
        d_alpha=d_alpha,
        feasibility=is_feasible(contract, d_alpha, dist=dist),
    )


@risk_router.post(
    "/contracts/ladder",
    status_code=status.HTTP_200_OK,
    response_model=LadderResponse,
)
async def get_ladder(request: LadderRequest) -> LadderResponse:
    logger.debug(f"Ladder d={request.deductible} cuts={request.cuts}")
    return await asyncio.to_thread(_ladder_response, request)


@risk_router.post(
    "/calibrate",
    status_code=status.HTTP_200_OK,
    response_model=CalibrationResult,
)
async def calibrate_ladder(request: CalibrateRequest) -> CalibrationResult:
    logger.debug(f"Calibrate {request.layers}-layer ladder on {request.dist}")
    if request.criterion == Criterion.VARIANCE:
        criterion = VarianceCombination(omega=request.omega)
    else:
        criterion = UtilityCombination(omega=request.omega, beta=request.beta)
    problem = CalibrationProblem(
        dist=parse_distribution(request.dist),
        alpha=request.alpha,
        layers=request.layers,
        criterion=criterion,
        mode=request.mode,
    )
    return await asyncio.to_thread(calibrate, problem)
