import math
from enum import Enum
from http import HTTPStatus
from typing import Any, Optional

from starlette.exceptions import HTTPException as StarletteHTTPException

from src.exceptions import ReinsuranceError

HTTPErrorType = Enum(
    "HTTPErrorType",
    [
        "UnprocessableEntityError",
        "HTTPError",
    ],
)


class HTTPError(StarletteHTTPException):
    def __init__(
        self,
        status_code: int,
        title: str,
        error_type: str,
        detail: str,
    ) -> None:
        super().__init__(status_code=status_code, detail=detail, headers=None)
        self.title = title
        self.error_type = error_type

    def getExtentionAttributes(self) -> dict:
        return {}


class UnprocessableEntityHTTPError(HTTPError):
    def __init__(
        self,
        detail: str,
        title: str = HTTPStatus.UNPROCESSABLE_ENTITY.phrase,
        error_type: str = HTTPErrorType.UnprocessableEntityError.name,
        errors: Optional[dict] = None,
    ) -> None:
        super().__init__(
            status_code=HTTPStatus.UNPROCESSABLE_ENTITY,
            title=title,
            error_type=error_type,
            detail=detail,
        )
        self.errors = errors or {}

    @classmethod
    def from_error(cls, error: ReinsuranceError) -> "UnprocessableEntityHTTPError":
        return cls(
            detail=error.detail,
            title=error.title,
            error_type=error.error_type.name,
            errors=error.extension_attributes(),
        )

    def getExtentionAttributes(self) -> dict:
        return dict(self.errors)


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def error_payload(error: HTTPError) -> dict:
    """``{"title", "type", "detail", **extension attributes}`` with non-finite floats as null."""
    return _json_safe(
        {
            "title": error.title,
            "type": error.error_type,
            "detail": error.detail,
            **error.getExtentionAttributes(),
        }
    )
