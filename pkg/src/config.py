import configparser
import copy
import os
import pathlib
from typing import Any, Optional

import yaml
from dotenv import load_dotenv

from src.exceptions import ConfigError

OUTPUT_DIR_ENV = "REINSURANCE_OUTPUT_DIR"
LOG_LEVEL_ENV = "LOG_LEVEL"


def default_configs() -> dict:
    return {
        "environment": "local",
        "server": {
            "host": "0.0.0.0",
            "port": 8000,
        },
        "numerics": {
            "quad_abs": 1e-10,
            "quad_rel": 1e-8,
            "quad_limit": 200,
            "tail_prob": 1e-12,
            "root_tol": 1e-12,
            "max_iter": 500,
        },
        "monte_carlo": {
            "n_samples": 1_000_000,
            "workers": 1,
            "batches": 50,
        },
        "calibration": {
            "restarts": 5,
            "xatol": 1e-6,
            "fatol": 1e-10,
            "max_iter": 2000,
            "max_retries": 2,
            "mode": "strict",
        },
        "bayes": {
            "grid_points": 64,
            "prior_box_low": 0.0005,
            "prior_box_high": 0.9995,
            "atom_tol": 1e-9,
            "rounds": 10,
            "rel_change": 1e-6,
            "mh_samples": 20000,
            "mh_burn_in": 2000,
            "reps": 100,
            "sample_size": 100,
            "init": [0.20, 0.15, 0.02],
        },
        "experiment": {
            "alpha": 0.1,
            "omega": 0.2,
            "beta": 1.0,
            "seed": None,
            "format": "csv",
            "parallel": False,
            "distributions": [
                "exp(mean=10)",
                "exp(mean=8)",
                "exp(mean=4)",
                "weibull(scale=1, shape=2)",
                "weibull(scale=3, shape=2)",
            ],
        },
        "output": {
            "dir": ".",
        },
        "logger": {
            "level": "INFO",
            "enable_structured_logging": False,
            "service_name": "multilayer-reinsurance-service",
        },
    }


class Configuration:
    def __init__(self, configs: dict):
        self.environment = configs["environment"]
        self.server = Server(configs["server"])
        self.numerics = NumericsConfig(configs["numerics"])
        self.monte_carlo = MonteCarloConfig(configs["monte_carlo"])
        self.calibration = CalibrationConfig(configs["calibration"])
        self.bayes = BayesConfig(configs["bayes"])
        self.experiment = ExperimentDefaults(configs["experiment"])
        self.output = OutputConfig(configs["output"])
        self.logger = LoggerConfig(configs["logger"])


class Server:
    def __init__(self, configs: dict):
        self.host = configs["host"]
        self.port = configs["port"]

    def get_server_url(self) -> str:
        return f"http://{self.host}:{self.port}"


class NumericsConfig:
    def __init__(self, configs: dict):
        self.quad_abs = configs["quad_abs"]
        self.quad_rel = configs["quad_rel"]
        self.quad_limit = configs["quad_limit"]
        self.tail_prob = configs["tail_prob"]
        self.root_tol = configs["root_tol"]
        self.max_iter = configs["max_iter"]


class MonteCarloConfig:
    def __init__(self, configs: dict):
        self.n_samples = configs["n_samples"]
        self.workers = configs["workers"]
        self.batches = configs["batches"]


class CalibrationConfig:
    def __init__(self, configs: dict):
        self.restarts = configs["restarts"]
        self.xatol = configs["xatol"]
        self.fatol = configs["fatol"]
        self.max_iter = configs["max_iter"]
        self.max_retries = configs["max_retries"]
        self.mode = configs["mode"]


class BayesConfig:
    def __init__(self, configs: dict):
        self.grid_points = configs["grid_points"]
        self.prior_box = (configs["prior_box_low"], configs["prior_box_high"])
        self.atom_tol = configs["atom_tol"]
        self.rounds = configs["rounds"]
        self.rel_change = configs["rel_change"]
        self.mh_samples = configs["mh_samples"]
        self.mh_burn_in = configs["mh_burn_in"]
        self.reps = configs["reps"]
        self.sample_size = configs["sample_size"]
        self.init = [float(v) for v in configs["init"]]


class ExperimentDefaults:
    def __init__(self, configs: dict):
        self.alpha = configs["alpha"]
        self.omega = configs["omega"]
        self.beta = configs["beta"]
        self.seed = configs["seed"]
        self.format = configs["format"]
        self.parallel = configs["parallel"]
        self.distributions = list(configs["distributions"])


class OutputConfig:
    def __init__(self, configs: dict):
        self.dir = os.getenv(OUTPUT_DIR_ENV, configs["dir"])


class LoggerConfig:
    def __init__(self, configs: dict):
        self.level = os.getenv(LOG_LEVEL_ENV, configs["level"]).upper()
        self.enable_structured_logging = configs.get(
            "enable_structured_logging", False
        )
        self.service_name = configs["service_name"]


def _coerce(value: Any, default: Any, key: str) -> Any:
    """Coerce a raw file value to the type of its default."""
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, list):
            return [item.strip() for item in text.split(";") if item.strip()]
        if default is None and key.endswith("seed"):
            return None if text.lower() in ("", "none") else int(text)
    except ValueError as e:
        raise ConfigError(f"Invalid value for '{key}': {value!r}") from e
    return text


def _merge(base: dict, overrides: dict, path: str = "") -> dict:
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        where = f"{path}{key}"
        if key not in merged:
            raise ConfigError(f"Unknown configuration key '{where}'")
        if isinstance(merged[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Section '{where}' must be a mapping")
            merged[key] = _merge(merged[key], value, f"{where}.")
        else:
            merged[key] = _coerce(value, merged[key], where)
    return merged


def read_config_file(path: str | pathlib.Path) -> dict:
    """Read a `[section]` / `key = value` file, or YAML with the same nesting."""
    path = pathlib.Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    if path.suffix in (".yaml", ".yml"):
        with open(path) as f:
            content = yaml.safe_load(f) or {}
        if not isinstance(content, dict):
            raise ConfigError(f"Config file {path} must hold a mapping")
        return content
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e
    return {section: dict(parser[section]) for section in parser.sections()}


def load_configuration(
    path: Optional[str | pathlib.Path] = None, overrides: Optional[dict] = None
) -> Configuration:
    """Defaults, then the config file, then explicit overrides (CLI flags)."""
    load_dotenv()
    configs = default_configs()
    if path is not None:
        configs = _merge(configs, read_config_file(path))
    if overrides:
        configs = _merge(configs, overrides)
    return Configuration(configs)


config = Configuration(default_configs())
