"""Near-field ULA geometry, visibility-region masks, channel synthesis and
pilot observations.

Antennas are indexed ``n = 0..N-1`` with centered offsets
``delta_n = (2n - N + 1) / 2`` in units of the spacing.  Stacked pilot
observations use row ``t * N + n``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vrsomp.config import SPEED_OF_LIGHT, ConfigError, ScenarioConfig

KNIFE_EDGE_NU_MIN = -0.78


class MaskCase(enum.Enum):
    STATIONARY = "stationary"
    BINARY = "binary"
    NON_BINARY = "non-binary"


MASK_CASES = (MaskCase.STATIONARY, MaskCase.BINARY, MaskCase.NON_BINARY)


@dataclass(frozen=True)
class ArrayGeometry:
    n_antennas: int
    spacing: float

    def __post_init__(self):
        if self.n_antennas < 1:
            raise ConfigError("n_antennas must be positive", "n_antennas")
        if not self.spacing > 0:
            raise ConfigError("spacing must be positive", "spacing")

    @property
    def element_offsets(self) -> np.ndarray:
        n = np.arange(self.n_antennas)
        return (2 * n - self.n_antennas + 1) / 2


@dataclass(frozen=True)
class Path:
    angle: float
    distance: float
    gain: complex
    mask_case: MaskCase = MaskCase.STATIONARY
    # BINARY: (first, last) antenna numbers in [1, N]; NON_BINARY: theta_edge
    mask_params: tuple[int, int] | float | None = None


@dataclass(frozen=True)
class PathSet:
    paths: tuple[Path, ...]
    carrier_wavenumber: float
    subcarrier_wavenumbers: np.ndarray

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ConfigError("a PathSet needs at least one path")
        k = np.asarray(self.subcarrier_wavenumbers, dtype=float)
        if np.any(k <= 0) or np.any(np.diff(k) <= 0):
            raise ConfigError("subcarrier wavenumbers must be positive and increasing")

    @property
    def n_subcarriers(self) -> int:
        return len(self.subcarrier_wavenumbers)

    @property
    def subcarrier_wavelengths(self) -> np.ndarray:
        return 2 * np.pi / np.asarray(self.subcarrier_wavenumbers, dtype=float)


@dataclass(frozen=True)
class PilotObservation:
    """Received pilots stacked pilot-major: ``stacked[t * N + n, m]``."""

    stacked: np.ndarray
    noise_variance: float
    n_antennas: int

    def __post_init__(self):
        if self.stacked.ndim != 2 or self.stacked.shape[0] % self.n_antennas:
            raise ValueError(
                f"stacked observation with {self.stacked.shape[0]} rows is not a "
                f"multiple of N={self.n_antennas}")

    @property
    def n_pilots(self) -> int:
        return self.stacked.shape[0] // self.n_antennas

    @property
    def n_subcarriers(self) -> int:
        return self.stacked.shape[1]

    def blocks(self) -> np.ndarray:
        """Observation as a (T, N, M) array."""
        return self.stacked.reshape(self.n_pilots, self.n_antennas, -1)


def element_distance(r, theta, delta, d):
    """Exact distance from a source at (r, theta) to the element at offset ``delta * d``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance r must be positive")
    x = np.asarray(delta, dtype=float) * d
    return np.sqrt(r**2 + x**2 - 2 * r * x * np.sin(theta))


def _path_difference(r, x, sin_t):
    # r_n - r without cancellation: (r_n^2 - r^2) / (r_n + r)
    num = x * x - 2 * r * x * sin_t
    return num / (np.sqrt(r * r + num) + r)


def steering_vector(theta: float, r: float, geom: ArrayGeometry, k_c: float) -> np.ndarray:
    """Unit-norm near-field steering vector; ``r = inf`` gives the plane-wave limit."""
    if r == math.inf:
        return far_field_steering_vector(theta, geom, k_c)
    if not r > 0:
        raise ValueError("distance r must be positive")
    path_difference = _path_difference(r, geom.element_offsets * geom.spacing, math.sin(theta))
    return np.exp(-1j * k_c * path_difference) / np.sqrt(geom.n_antennas)


def far_field_steering_vector(theta: float, geom: ArrayGeometry, k_c: float) -> np.ndarray:
    delta = geom.element_offsets
    return np.exp(1j * k_c * delta * geom.spacing * np.sin(theta)) / np.sqrt(geom.n_antennas)


def steering_matrix(thetas, rs, geom: ArrayGeometry, k_c: float) -> np.ndarray:
    """Column ``i`` is ``steering_vector(thetas[i], rs[i])``; infinite ``rs`` are plane waves."""
    thetas = np.asarray(thetas, dtype=float)
    rs = np.asarray(rs, dtype=float)
    x = geom.element_offsets[:, None] * geom.spacing
    far = np.isinf(rs)
    if np.any(rs[~far] <= 0):
        raise ValueError("distances must be positive")
    r_safe = np.where(far, 1.0, rs)
    sin_t = np.sin(thetas)
    near_diff = _path_difference(r_safe, x, sin_t)
    phase = np.where(far, -x * sin_t, near_diff)
    return np.exp(-1j * k_c * phase) / np.sqrt(geom.n_antennas)


def fresnel_nu(theta_edge, wavelength: float, d1: float, d2: float):
    """Fresnel diffraction parameter of a knife edge at angular deviation ``theta_edge``."""
    if not (wavelength > 0 and d1 > 0 and d2 > 0):
        raise ValueError("wavelength and distances must be positive")
    return np.asarray(theta_edge) * math.sqrt(2.0 / (wavelength * (1.0 / d1 + 1.0 / d2)))


def knife_edge_loss_db(nu):
    """Single knife-edge diffraction loss J(nu) in dB, zero for nu <= -0.78."""
    nu = np.asarray(nu, dtype=float)
    v = np.maximum(nu, KNIFE_EDGE_NU_MIN) - 0.1
    loss = 6.9 + 20 * np.log10(np.sqrt(v**2 + 1) + v)
    return np.where(nu > KNIFE_EDGE_NU_MIN, np.maximum(loss, 0.0), 0.0)


def knife_edge_gain(nu):
    """Linear amplitude gain ``10**(-J/20)`` of a knife edge, in (0, 1]."""
    gain = 10.0 ** (-knife_edge_loss_db(nu) / 20.0)
    return np.minimum(gain, 1.0)


def vr_mask(path: Path, geom: ArrayGeometry, wavelength: float) -> np.ndarray:
    n = geom.n_antennas
    case = path.mask_case
    if case is MaskCase.STATIONARY:
        if path.mask_params is not None:
            raise ConfigError("stationary mask takes no parameters")
        return np.ones(n)
    if case is MaskCase.BINARY:
        try:
            first, last = path.mask_params
        except (TypeError, ValueError):
            raise ConfigError("binary mask needs (first, last) endpoints") from None
        if not (1 <= first <= n and 1 <= last <= n):
            raise ConfigError(f"binary endpoints {path.mask_params} outside [1, {n}]")
        lo, hi = sorted((int(first), int(last)))
        mask = np.zeros(n)
        mask[lo - 1:hi] = 1.0
        return mask
    if case is MaskCase.NON_BINARY:
        if not isinstance(path.mask_params, (float, int)) or isinstance(path.mask_params, bool):
            raise ConfigError("non-binary mask needs a scalar theta_edge")
        transverse = geom.element_offsets * geom.spacing * math.cos(path.angle)
        theta_edge_n = path.mask_params - transverse / path.distance
        nu = fresnel_nu(theta_edge_n, wavelength, path.distance, path.distance)
        return knife_edge_gain(nu)
    raise ConfigError(f"unknown mask case {case!r}")


def synthesize_channel(pathset: PathSet, geom: ArrayGeometry) -> np.ndarray:
    """True channel ``H`` (N x M) as a sum of masked near-field paths."""
    n, n_paths = geom.n_antennas, len(pathset.paths)
    k_m = np.asarray(pathset.subcarrier_wavenumbers, dtype=float)
    wavelengths = pathset.subcarrier_wavelengths
    H = np.zeros((n, len(k_m)), dtype=complex)
    for path in pathset.paths:
        b = steering_vector(path.angle, path.distance, geom, pathset.carrier_wavenumber)
        phase = path.gain * np.exp(-1j * k_m * path.distance)
        if path.mask_case is MaskCase.NON_BINARY:
            masks = np.column_stack([vr_mask(path, geom, lam) for lam in wavelengths])
        else:
            masks = vr_mask(path, geom, wavelengths[0])[:, None]
        H += (b[:, None] * masks) * phase[None, :]
    return math.sqrt(n / n_paths) * H


def noise_variance(H: np.ndarray, snr_db: float) -> float:
    if snr_db == math.inf:
        return 0.0
    power = np.vdot(H, H).real / H.size
    if power <= 0:
        raise ValueError("cannot normalise noise to an all-zero channel")
    return float(power / 10 ** (snr_db / 10))


def observe_pilots(H: np.ndarray, snr_db: float, n_pilots: int,
                   rng: np.random.Generator) -> PilotObservation:
    if n_pilots < 1:
        raise ConfigError("number of pilots must be >= 1", "n_pilots")
    sigma2 = noise_variance(H, snr_db)
    n, m = H.shape
    stacked = np.tile(H, (n_pilots, 1))
    if sigma2 > 0:
        noise = rng.standard_normal((2, n * n_pilots, m))
        stacked = stacked + math.sqrt(sigma2 / 2) * (noise[0] + 1j * noise[1])
    return PilotObservation(stacked=stacked, noise_variance=sigma2, n_antennas=n)


def subcarrier_wavenumbers(carrier_frequency: float, bandwidth: float, n_subcarriers: int) -> np.ndarray:
    m = np.arange(1, n_subcarriers + 1)
    freqs = carrier_frequency + (m - (n_subcarriers + 1) / 2) * bandwidth / n_subcarriers
    return 2 * np.pi * freqs / SPEED_OF_LIGHT


def geometry_of(config: ScenarioConfig) -> ArrayGeometry:
    return ArrayGeometry(config.n_antennas, config.spacing)


def _sample_gain(rng: np.random.Generator) -> complex:
    while True:
        g = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        if abs(g) < 1:
            return g


def sample_paths(config: ScenarioConfig, rng: np.random.Generator) -> PathSet:
    n = config.n_antennas
    paths = []
    for _ in range(config.n_paths):
        r = rng.uniform(config.r_min, config.r_max)
        theta = rng.uniform(config.theta_min, config.theta_max)
        gain = _sample_gain(rng)
        case = MASK_CASES[rng.choice(3, p=config.mask_mix)]
        if case is MaskCase.BINARY:
            ends = np.rint(rng.uniform(1, n, size=2)).astype(int)
            params = (int(ends.min()), int(ends.max()))
        elif case is MaskCase.NON_BINARY:
            params = float(rng.uniform(-config.theta_edge_max, config.theta_edge_max))
        else:
            params = None
        paths.append(Path(theta, r, gain, case, params))
    return PathSet(
        paths=tuple(paths),
        carrier_wavenumber=2 * np.pi * config.carrier_frequency / SPEED_OF_LIGHT,
        subcarrier_wavenumbers=subcarrier_wavenumbers(
            config.carrier_frequency, config.bandwidth, config.n_subcarriers),
    )


def sample_scenario(config: ScenarioConfig, rng: np.random.Generator) -> tuple[PathSet, np.ndarray]:
    pathset = sample_paths(config, rng)
    return pathset, synthesize_channel(pathset, geometry_of(config))


def replace_paths(pathset: PathSet, paths: Sequence[Path]) -> PathSet:
    return PathSet(tuple(paths), pathset.carrier_wavenumber, pathset.subcarrier_wavenumbers)
