"""Scenario configuration and its flat ``key = value`` file format.

Every key mirrors one simulation parameter.  Unknown keys are rejected so a
config file either reproduces a run exactly or fails loudly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any

SPEED_OF_LIGHT = 299_792_458.0

ESTIMATOR_NAMES = (
    "ls",
    "p-somp",
    "subarray-8",
    "subarray-32",
    "vr-hmm-p-somp",
    "genie",
)

# CLI axis shorthands -> config field
AXIS_ALIASES = {"snr": "snr_db", "snr_db": "snr_db", "L": "n_paths", "n_paths": "n_paths"}


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


KEY_HELP = {
    "n_antennas": "number of BS antennas N",
    "spacing": "antenna spacing d in meters",
    "carrier_frequency": "carrier frequency f_c in Hz",
    "bandwidth": "bandwidth B in Hz",
    "n_subcarriers": "number of subcarriers M",
    "n_pilots": "number of pilot symbols T",
    "n_paths": "number of dominant paths L",
    "snr_db": "channel SNR in dB ('inf' disables noise)",
    "r_min": "lower bound of scatterer distance in meters",
    "r_max": "upper bound of scatterer distance in meters",
    "theta_min": "lower bound of angle of arrival in radians",
    "theta_max": "upper bound of angle of arrival in radians",
    "theta_edge_max": "max diffraction-edge angular deviation in radians",
    "n_atoms": "polar dictionary size S (0 = n_antennas * rings)",
    "temperature": "sigmoid temperature of the VR emission model",
    "l_hat_factor": "detected paths per true path (L_hat = factor * L)",
    "p_switch": "VR state change probability ('auto' = 1/N)",
    "p_init_in": "initial probability of the in-VR state",
    "n_iter": "Monte Carlo trials per sweep point",
    "mask_mix": "stationary,binary,non-binary mask-case probabilities",
    "beta": "distance-ring coherence parameter of the polar grid",
    "rings": "distance rings per angle (including the far-field ring)",
    "seed": "master seed",
    "estimators": "comma-separated estimators: " + ",".join(ESTIMATOR_NAMES),
    "axis": "sweep axis, e.g. snr_db=-10:5:10 or n_paths=2,4,6",
    "residual_tol": "optional relative residual stop for greedy estimators (0 = off)",
    "snap_to_grid": "place sampled paths exactly on polar-grid atoms (true/false)",
    "dict_cache": "optional dictionary cache file path",
}


@dataclass(frozen=True)
class ScenarioConfig:
    n_antennas: int = 256
    spacing: float = 0.005
    carrier_frequency: float = 30e9
    bandwidth: float = 100e6
    n_subcarriers: int = 12
    n_pilots: int = 4
    n_paths: int = 6
    snr_db: float = 0.0
    r_min: float = 7.0
    r_max: float = 327.0
    theta_min: float = -math.pi / 3
    theta_max: float = math.pi / 3
    theta_edge_max: float = 0.006
    n_atoms: int = 2555
    temperature: float = 20.0
    l_hat_factor: int = 2
    p_switch: float | None = None
    p_init_in: float = 0.55
    n_iter: int = 500
    mask_mix: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    beta: float = 1.2
    rings: int = 10
    seed: int = 0
    estimators: tuple[str, ...] = ESTIMATOR_NAMES
    axis: str = "snr_db=-10:5:10"
    residual_tol: float = 0.0
    snap_to_grid: bool = False
    dict_cache: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def l_hat(self) -> int:
        return self.l_hat_factor * self.n_paths

    @property
    def switch_probability(self) -> float:
        return 1.0 / self.n_antennas if self.p_switch is None else self.p_switch

    @property
    def carrier_wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def theta_range(self) -> tuple[float, float]:
        return (self.theta_min, self.theta_max)

    def validate(self) -> None:
        for key in ("n_antennas", "n_subcarriers", "n_pilots", "n_paths",
                    "l_hat_factor", "n_iter", "rings"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be a positive integer", key)
        if self.n_atoms < 0:
            raise ConfigError("n_atoms must be >= 0", "n_atoms")
        if self.n_atoms > self.n_antennas * self.rings:
            raise ConfigError(
                f"n_atoms={self.n_atoms} exceeds n_antennas*rings="
                f"{self.n_antennas * self.rings}", "n_atoms")
        for key in ("spacing", "carrier_frequency", "temperature", "beta"):
            value = getattr(self, key)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{key} must be positive and finite", key)
        if not (math.isfinite(self.bandwidth) and 0 <= self.bandwidth < 2 * self.carrier_frequency):
            raise ConfigError("bandwidth must be in [0, 2*carrier_frequency)", "bandwidth")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigError("snr_db must be finite or +inf", "snr_db")
        if not 0 < self.r_min <= self.r_max:
            raise ConfigError("need 0 < r_min <= r_max", "r_min")
        if not -math.pi / 2 < self.theta_min < self.theta_max < math.pi / 2:
            raise ConfigError("need -pi/2 < theta_min < theta_max < pi/2", "theta_min")
        if not self.theta_edge_max >= 0:
            raise ConfigError("theta_edge_max must be >= 0", "theta_edge_max")
        if self.p_switch is not None and not 0 < self.p_switch < 1:
            raise ConfigError("p_switch must lie in (0, 1)", "p_switch")
        if not 0 < self.p_init_in < 1:
            raise ConfigError("p_init_in must lie in (0, 1)", "p_init_in")
        mix = self.mask_mix
        if len(mix) != 3 or any(p < 0 or not math.isfinite(p) for p in mix) \
                or abs(sum(mix) - 1) > 1e-9:
            raise ConfigError("mask_mix must be three non-negative probabilities summing to 1",
                              "mask_mix")
        for name in self.estimators:
            if name not in ESTIMATOR_NAMES:
                raise ConfigError(f"unknown estimator {name!r}", "estimators")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0", "seed")
        if self.residual_tol < 0:
            raise ConfigError("residual_tol must be >= 0", "residual_tol")
        parse_axis(self.axis)

    def replace(self, **changes: Any) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)

    def with_overrides(self, overrides: dict[str, str]) -> ScenarioConfig:
        """Apply textual ``key -> value`` overrides (as read from a file or CLI)."""
        return self.replace(**{k: _parse_value(k, v) for k, v in overrides.items()})

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
CONFIG_KEYS = tuple(_FIELD_TYPES)


def _parse_value(key: str, text: str) -> Any:
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}", key)
    kind = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if key == "p_switch":
            return None if text.lower() == "auto" else float(text)
        if key == "mask_mix":
            parts = tuple(float(p) for p in text.split(","))
            if len(parts) != 3:
                raise ValueError(text)
            total = sum(parts)
            return tuple(p / total for p in parts) if total > 0 else parts
        if key == "estimators":
            names = tuple(n.strip() for n in text.split(",") if n.strip())
            for name in names:
                if name not in ESTIMATOR_NAMES:
                    raise ConfigError(f"unknown estimator {name!r}", key)
            return names
        return text
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"invalid value {text!r} for {key}", key) from None


def _format_value(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str, source: str = "<text>") -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}", key)
        entries[key] = value
    return entries


def load_config(path: str | FsPath, overrides: dict[str, str] | None = None) -> ScenarioConfig:
    path = FsPath(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    entries = parse_config_text(text, str(path))
    entries.update(overrides or {})
    return ScenarioConfig().with_overrides(entries)


def parse_axis(spec: str) -> tuple[str, list[float]]:
    """Parse ``name=start:step:stop`` or ``name=v1,v2,...``.

    A range includes ``stop`` only when it is reached exactly (to rounding).
    """
    if "=" not in spec:
        raise ConfigError(f"axis {spec!r} must look like name=values", "axis")
    name, values_text = (s.strip() for s in spec.split("=", 1))
    if name not in AXIS_ALIASES:
        raise ConfigError(f"unknown sweep axis {name!r}", "axis")
    name = AXIS_ALIASES[name]
    try:
        if ":" in values_text:
            start, step, stop = (float(v) for v in values_text.split(":"))
            if step == 0 or (stop - start) / step < 0:
                raise ValueError
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [start + k * step for k in range(count)]
        else:
            values = [float(v) for v in values_text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"invalid axis values {values_text!r}", "axis") from None
    if not values or not all(math.isfinite(v) or (name == "snr_db" and v == math.inf)
                             for v in values):
        raise ConfigError("axis values must be non-empty and finite", "axis")
    if name == "n_paths" and any(v < 1 or v != int(v) for v in values):
        raise ConfigError("n_paths axis values must be positive integers", "axis")
    return name, values
