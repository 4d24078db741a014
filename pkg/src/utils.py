import logging
import pathlib
from typing import Optional

import pandas as pd

from src.consts import OutputFormat
from src.exceptions import ConfigError

logger = logging.getLogger(__name__)

MARKDOWN_FLOAT_FORMAT = ".4f"


def read_samples(file_path: str | pathlib.Path) -> list[float]:
    """Read newline-delimited decimals; blank lines and ``#`` comments are skipped."""
    path = pathlib.Path(file_path)
    if not path.exists():
        raise ConfigError(f"Sample file not found: {path}")
    values = []
    with open(path, "r") as file:
        for number, line in enumerate(file, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError as e:
                raise ConfigError(f"{path}:{number}: not a number: {text!r}") from e
    if not values:
        raise ConfigError(f"Sample file {path} holds no values")
    return values


def render_table(frame: pd.DataFrame, output_format: OutputFormat) -> str:
    """CSV at full precision, markdown rounded to four decimals."""
    if OutputFormat(output_format) == OutputFormat.MD:
        return frame.to_markdown(index=False, floatfmt=MARKDOWN_FLOAT_FORMAT) + "\n"
    return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def write_table(
    frame: pd.DataFrame,
    output_format: OutputFormat,
    output_path: Optional[str | pathlib.Path] = None,
) -> str:
    text = render_table(frame, output_format)
    if output_path is not None:
        path = pathlib.Path(output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info(f"Wrote {len(frame)} row(s) to {path}")
    return text
