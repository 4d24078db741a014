import logging
import sys
from typing import Optional

import colorlog
import ecs_logging
import uvicorn
from dotenv import load_dotenv
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from src.config import Configuration, config
from src.exceptions import ReinsuranceError
from src.fastapi_app.http_exception import UnprocessableEntityHTTPError, error_payload
from src.fastapi_app.risk_router import risk_router
from src.fastapi_app.status_router import router as status_router

logger = logging.getLogger(__name__)

load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(settings: Configuration = config, level: Optional[str] = None):
    """Configure logging for the application. Everything goes to stderr."""
    level_name = (level or settings.logger.level).upper()
    log_level = getattr(logging, level_name, logging.INFO)

    handler = logging.StreamHandler(sys.stderr)
    if settings.logger.enable_structured_logging:
        handler.setFormatter(ecs_logging.StdlibFormatter())
    else:
        handler.setFormatter(colorlog.ColoredFormatter(f"%(log_color)s{LOG_FORMAT}"))

    # Configure root logger
    logging.basicConfig(
        level=log_level,
        handlers=[handler],
        force=True,  # Override any existing configuration
    )

    # Set log level for uvicorn
    logging.getLogger("uvicorn").setLevel(log_level)
    logging.getLogger("uvicorn.access").setLevel(log_level)
    logging.getLogger("uvicorn.error").setLevel(log_level)

    # Set log level for application loggers
    logging.getLogger("src").setLevel(log_level)

    logger.debug(f"Logging configured at {level_name} level")


async def reinsurance_error_handler(request: Request, exc: ReinsuranceError):
    logger.warning(f"{request.url.path}: {exc.title}: {exc.detail}")
    error = UnprocessableEntityHTTPError.from_error(exc)
    return JSONResponse(status_code=error.status_code, content=error_payload(error))


def create_app(settings: Configuration = config) -> FastAPI:
    app = FastAPI(
        title=settings.logger.service_name,
        servers=[{"url": settings.server.get_server_url()}],
        docs_url="/api/docs",
        root_path_in_servers=False,
    )

    app.include_router(risk_router)
    app.include_router(status_router)
    app.add_exception_handler(ReinsuranceError, reinsurance_error_handler)
    return app


def serve(settings: Configuration = config):
    setup_logging(settings)
    app = create_app(settings)
    uvicorn.run(
        app,
        host=settings.server.host,
        port=settings.server.port,
        log_level=settings.logger.level.lower(),  # Pass log level to uvicorn
        access_log=True,  # Enable access logs
    )


if __name__ == "__main__":
    serve()
