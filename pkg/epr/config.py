"""
Run configuration.

Values are resolved in this order, first hit wins: command-line flags, the TOML
config file, EPR_* environment variables (a .env file is loaded at import), the
built-in defaults. The defaults reproduce the reference run.
"""

import math
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import load_dotenv

from epr.errors import ConfigError
from epr.geometry import Direction
from epr.source import DEFAULT_N_TRIALS, MASK64

# Load environment variables
load_dotenv()

MODES = ("local", "net")
ENV_KEYS = {
    "seed": "EPR_SEED",
    "n_trials": "EPR_N_TRIALS",
    "host": "EPR_HOST",
    "port_base": "EPR_PORT_BASE",
    "out_dir": "EPR_OUT_DIR",
}
# TOML table -> keys allowed in it
FILE_TABLES = {
    "run": {"a_rad", "b_rad", "c_rad", "n_trials", "seed", "mode", "share_stream", "out_dir", "out", "csv_dir"},
    "network": {"host", "port_base", "transcript_dir", "timeout_s"},
}


@dataclass(frozen=True)
class RunConfig:
    a_rad: float = 0.0
    b_rad: float = 0.3141593
    c_rad: float = 1.989675
    n_trials: int = DEFAULT_N_TRIALS
    seed: int = 1
    mode: str = "local"
    share_stream: bool = False
    out_dir: Path = field(default_factory=lambda: Path("results"))
    host: str = "127.0.0.1"
    port_base: int = 47100
    out: Optional[Path] = None
    csv_dir: Optional[Path] = None
    transcript_dir: Optional[Path] = None
    timeout_s: float = 30.0

    def __post_init__(self):
        for name in ("a_rad", "b_rad", "c_rad"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"{name} must be a finite angle in radians, got {value!r}")
        if isinstance(self.n_trials, bool) or not isinstance(self.n_trials, int) or self.n_trials < 1:
            raise ConfigError(f"n_trials must be an integer >= 1, got {self.n_trials!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed <= MASK64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.share_stream, bool):
            raise ConfigError(f"share_stream must be true or false, got {self.share_stream!r}")
        if not 1024 <= self.port_base <= 65535 - 2:
            raise ConfigError(f"port_base must leave room for three ports in 1024..65535, got {self.port_base!r}")
        if not (math.isfinite(self.timeout_s) and self.timeout_s > 0):
            raise ConfigError(f"timeout_s must be positive, got {self.timeout_s!r}")

    @property
    def directions(self):
        """(a, b, c) as canonical directions."""
        return tuple(Direction.from_angle(float(v)) for v in (self.a_rad, self.b_rad, self.c_rad))

    @property
    def report_path(self) -> Path:
        return Path(self.out) if self.out else Path(self.out_dir) / "bell_report.json"

    @property
    def trial_csv_dir(self) -> Path:
        return Path(self.csv_dir) if self.csv_dir else Path(self.out_dir)


def _coerce(name: str, raw: Any) -> Any:
    """Convert a string or TOML value to the type of RunConfig.<name>."""
    try:
        if name in ("a_rad", "b_rad", "c_rad", "timeout_s"):
            return float(raw)
        if name in ("n_trials", "seed", "port_base"):
            if isinstance(raw, str):
                return int(raw, 0)
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(f"{raw!r} is not an integer")
            return int(raw)
        if name == "share_stream":
            if isinstance(raw, bool):
                return raw
            lowered = str(raw).strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"{raw!r} is not a boolean")
        if name in ("out_dir", "out", "csv_dir", "transcript_dir"):
            return Path(raw)
        return str(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid value for {name}: {e}") from e


def from_env(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    values = {}
    for name, key in ENV_KEYS.items():
        raw = environ.get(key)
        if raw is not None and raw != "":
            values[name] = _coerce(name, raw)
    return values


def from_file(path: Path) -> Dict[str, Any]:
    """
    Read the [run] and [network] tables of a TOML config file.

    Raises:
        ConfigError: unreadable file, bad TOML, unknown table or key
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config file {path} is not valid TOML: {e}") from e

    values = {}
    for table, content in data.items():
        if table not in FILE_TABLES:
            raise ConfigError(f"unknown table [{table}] in {path}")
        if not isinstance(content, dict):
            raise ConfigError(f"[{table}] in {path} must be a table")
        unknown = set(content) - FILE_TABLES[table]
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)} in [{table}] of {path}")
        for name, raw in content.items():
            values[name] = _coerce(name, raw)
    return values


def load_run_config(overrides: Optional[Mapping[str, Any]] = None,
                    config_path: Optional[Path] = None,
                    environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Resolve a RunConfig from every layer.

    Args:
        overrides: Values given on the command line; None entries are ignored
        config_path: Optional TOML file
        environ: Environment mapping (os.environ by default)

    Returns:
        Validated RunConfig
    """
    values: Dict[str, Any] = {}
    values.update(from_env(environ))
    if config_path is not None:
        values.update(from_file(config_path))
    known = {f.name for f in fields(RunConfig)}
    for name, raw in (overrides or {}).items():
        if raw is None:
            continue
        if name not in known:
            raise ConfigError(f"unknown setting {name!r}")
        values[name] = _coerce(name, raw)
    return replace(RunConfig(), **values)
