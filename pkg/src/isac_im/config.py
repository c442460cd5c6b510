"""Sweep configuration: a flat ``key = value`` file plus command-line overrides.

Lines are ``key = value``; ``#`` starts a comment.  Lists are written with
commas (``rx_distance_range_m = 50, 100``).  Missing keys take the defaults
below, which follow the usual simulation table (1000 symbols, 100 trials,
30 dBm, path loss exponent 3.5, -5..35 dB in 5 dB steps).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

from .dof import FAMILIES
from .errors import ConfigError


@dataclass(frozen=True)
class SimConfig:
    scheme: str = "bia_ic"
    K: int = 3
    U: int = 1
    D: int = 2
    d: int = 3
    m: int = 4
    n: tuple = (2, 2)
    mode: str = "replace"
    snr_min: float = -5.0
    snr_max: float = 35.0
    snr_step: float = 5.0
    n_symbols: int = 1000
    n_trials: int = 100
    tx_power_dbm: float = 30.0
    pathloss_exponent: float = 3.5
    rx_distance_range_m: tuple = (50.0, 100.0)
    target_distance_range_m: tuple = (10.0, 50.0)
    power_split: tuple = (0.5, 0.5)
    seed: int = 0
    workers: int = 1
    max_degenerate_fraction: float = 0.01
    out_dir: str = "isac_out"
    plots: bool = True

    def __post_init__(self):
        self.validate()

    # -- derived ---------------------------------------------------------------
    @property
    def snr_db_range(self) -> list:
        count = int(math.floor((self.snr_max - self.snr_min) / self.snr_step + 1e-9)) + 1
        return [self.snr_min + i * self.snr_step for i in range(count)]

    @property
    def tx_power_w(self) -> float:
        return 10 ** ((self.tx_power_dbm - 30) / 10)

    @property
    def comm_fraction(self) -> float:
        return self.power_split[0]

    def scheme_params(self) -> dict:
        if self.scheme == "bia_ic":
            return {"K": self.K}
        if self.scheme == "bia_miso":
            return {"m": self.m, "K": self.K}
        if self.scheme == "bia_mimo":
            return {"m": self.m, "n": tuple(self.n)}
        if self.scheme == "tim_antidote":
            return {"K": self.K, "U": self.U, "D": self.D, "mode": self.mode}
        return {"K": self.K, "d": self.d, "mode": self.mode}

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    # -- checks ----------------------------------------------------------------
    def validate(self) -> None:
        if self.scheme not in FAMILIES:
            raise ConfigError(f"scheme: expected one of {', '.join(FAMILIES)}, got {self.scheme!r}")
        if self.mode not in ("replace", "add"):
            raise ConfigError(f"mode: expected 'replace' or 'add', got {self.mode!r}")
        if self.snr_step <= 0:
            raise ConfigError("snr_step: must be > 0")
        if self.snr_max < self.snr_min:
            raise ConfigError("snr range: snr_max must be >= snr_min")
        for name in ("n_symbols", "n_trials", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        for name in ("rx_distance_range_m", "target_distance_range_m"):
            lo, hi = _pair(name, getattr(self, name))
            if not 0 < lo <= hi:
                raise ConfigError(f"{name}: need 0 < low <= high, got {lo}, {hi}")
        c, s = _pair("power_split", self.power_split)
        if c < 0 or s < 0 or abs(c + s - 1) > 1e-9:
            raise ConfigError(f"power_split: communication and sensing shares must be >= 0 and sum to 1, got {c} + {s}")
        if s == 0:
            raise ConfigError("power_split: sensing share must be > 0")
        if not 0 <= self.max_degenerate_fraction < 1:
            raise ConfigError("max_degenerate_fraction: must lie in [0, 1)")
        if self.pathloss_exponent <= 0:
            raise ConfigError("pathloss_exponent: must be > 0")


def _pair(name: str, v) -> tuple:
    if len(v) != 2:
        raise ConfigError(f"{name}: expected two values, got {len(v)}")
    return float(v[0]), float(v[1])


_TYPES = {f.name: f.default for f in fields(SimConfig)}


def _coerce(key: str, raw: str, where: str):
    default = _TYPES[key]
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            conv = int if key == "n" else float
            return tuple(conv(p) for p in parts)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: bad value {raw.strip()!r} for {key}") from None


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse the file format into a dict of typed values."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if "=" not in body:
            raise ConfigError(f"{where}: expected 'key = value', got {body!r}")
        key, raw = (p.strip() for p in body.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, where)
    return values


def load_config(path=None, overrides: dict | None = None) -> SimConfig:
    """Read ``path`` (or nothing) and apply ``overrides``; flags win over the file."""
    values = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values = parse_config(fh.read(), str(path))
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in _TYPES:
            raise ConfigError(f"unknown setting {k!r}")
        values[k] = v
    try:
        return SimConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def with_overrides(cfg: SimConfig, **changes) -> SimConfig:
    return dataclasses.replace(cfg, **changes)
