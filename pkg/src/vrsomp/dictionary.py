"""Polar-domain dictionary of near-field steering vectors.

Atoms are ordered ring-major: the far-field ring at every grid angle first,
then ring ``s = 1, 2, ...`` moving towards the array.  Truncating the atom
count therefore drops atoms from the closest ring first.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path as FsPath

import numpy as np

from vrsomp.config import ConfigError
from vrsomp.geometry import ArrayGeometry, Path, steering_matrix

log = logging.getLogger(__name__)

FAR_FIELD = math.inf
CACHE_MAGIC = b"VRSOMP-DICT\x01"


@dataclass(frozen=True, eq=False)
class PolarDictionary:
    atoms: np.ndarray          # N x S, unit-norm columns
    angles: np.ndarray         # S
    distances: np.ndarray      # S, FAR_FIELD for plane-wave atoms
    _stacked: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_antennas(self) -> int:
        return self.atoms.shape[0]

    @property
    def atom_params(self) -> list[tuple[float, float]]:
        return list(zip(self.angles.tolist(), self.distances.tolist()))

    def stacked(self, n_pilots: int) -> np.ndarray:
        if n_pilots not in self._stacked:
            self._stacked[n_pilots] = stack_for_pilots(self, n_pilots)
        return self._stacked[n_pilots]


def angular_grid(n: int, theta_range: tuple[float, float]) -> np.ndarray:
    """``n`` angles uniformly spaced in sin(theta), endpoints included."""
    lo, hi = theta_range
    if n < 1 or not lo < hi:
        raise ConfigError("angular grid needs n >= 1 and a non-empty range")
    if lo < -math.pi / 2 or hi > math.pi / 2:
        raise ConfigError("angular range must lie within [-pi/2, pi/2]")
    if n == 1:
        return np.array([math.asin((math.sin(lo) + math.sin(hi)) / 2)])
    return np.arcsin(np.linspace(math.sin(lo), math.sin(hi), n))


def distance_rings(theta: float, geom: ArrayGeometry, wavelength: float,
                   beta: float, rings: int) -> np.ndarray:
    """Far-field sentinel followed by ``rings - 1`` rings at
    ``N^2 d^2 cos^2(theta) / (2 beta^2 lambda s)``, strictly decreasing."""
    if rings < 1:
        raise ConfigError("rings must be >= 1", "rings")
    aperture2 = (geom.n_antennas * geom.spacing) ** 2
    s = np.arange(1, rings)
    near = aperture2 * math.cos(theta) ** 2 / (2 * beta**2 * wavelength * s)
    return np.concatenate(([FAR_FIELD], near))


def build_dictionary(geom: ArrayGeometry, k_c: float, theta_range: tuple[float, float],
                     beta: float = 1.2, rings: int = 10,
                     n_atoms: int | None = None) -> PolarDictionary:
    """Dictionary of ``N * rings`` atoms, optionally truncated to ``n_atoms``."""
    angles, distances = grid_params(geom, k_c, theta_range, beta, rings, n_atoms)
    atoms = steering_matrix(angles, distances, geom, k_c)
    return PolarDictionary(atoms=atoms, angles=angles, distances=distances)


def grid_params(geom: ArrayGeometry, k_c: float, theta_range: tuple[float, float],
                beta: float, rings: int, n_atoms: int | None = None):
    wavelength = 2 * math.pi / k_c
    grid = angular_grid(geom.n_antennas, theta_range)
    per_angle = np.stack([distance_rings(t, geom, wavelength, beta, rings) for t in grid])
    angles = np.tile(grid, rings)
    distances = per_angle.T.reshape(-1)
    if n_atoms:
        if n_atoms > angles.size:
            raise ConfigError(f"n_atoms={n_atoms} exceeds grid size {angles.size}", "n_atoms")
        angles, distances = angles[:n_atoms], distances[:n_atoms]
    return angles, distances


@lru_cache(maxsize=8)
def cached_dictionary(n_antennas: int, spacing: float, k_c: float,
                      theta_range: tuple[float, float], beta: float, rings: int,
                      n_atoms: int | None) -> PolarDictionary:
    """Process-wide memo of :func:`build_dictionary`; treat the result as read-only."""
    return build_dictionary(ArrayGeometry(n_antennas, spacing), k_c, theta_range,
                            beta, rings, n_atoms)


def stack_for_pilots(dictionary: PolarDictionary, n_pilots: int) -> np.ndarray:
    if n_pilots < 1:
        raise ConfigError("number of pilots must be >= 1", "n_pilots")
    return np.tile(dictionary.atoms, (n_pilots, 1))


def nearest_near_field_atom(dictionary: PolarDictionary, theta: float, r: float) -> int:
    """Index of the finite-distance atom closest to (theta, r) in (sin theta, 1/r)."""
    finite = np.isfinite(dictionary.distances)
    if not finite.any():
        raise ConfigError("dictionary has no near-field atoms to snap to", "rings")
    idx = np.flatnonzero(finite)
    d_sin = np.sin(dictionary.angles[idx]) - math.sin(theta)
    d_inv = 1 / dictionary.distances[idx] - 1 / r
    # nearest angle first; the down-weighted 1/r term picks the ring
    best = np.argmin(np.abs(d_sin) + np.abs(d_inv) * 1e-3)
    return int(idx[best])


def snap_paths_to_grid(paths, dictionary: PolarDictionary) -> list[Path]:
    snapped = []
    for p in paths:
        i = nearest_near_field_atom(dictionary, p.angle, p.distance)
        snapped.append(Path(float(dictionary.angles[i]), float(dictionary.distances[i]),
                            p.gain, p.mask_case, p.mask_params))
    return snapped


# -- cache file ---------------------------------------------------------------

def cache_key(geom: ArrayGeometry, carrier_frequency: float, beta: float, rings: int,
              theta_range: tuple[float, float], n_atoms: int | None) -> dict:
    return {
        "n_antennas": geom.n_antennas,
        "spacing": geom.spacing,
        "carrier_frequency": carrier_frequency,
        "beta": beta,
        "rings": rings,
        "theta_range": [float(theta_range[0]), float(theta_range[1])],
        "n_atoms": int(n_atoms or geom.n_antennas * rings),
    }


def write_cache(path: str | FsPath, key: dict, dictionary: PolarDictionary) -> None:
    """Write ``magic, header-length, JSON key, row-major complex64 atoms``."""
    header = json.dumps({"key": key, "shape": list(dictionary.atoms.shape)},
                        sort_keys=True).encode()
    payload = np.ascontiguousarray(dictionary.atoms, dtype="<c8").tobytes()
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(payload)


def read_cache(path: str | FsPath) -> tuple[dict, np.ndarray]:
    """Return ``(key, atoms)``; raises ``ValueError`` for malformed files."""
    data = FsPath(path).read_bytes()
    if not data.startswith(CACHE_MAGIC):
        raise ValueError("bad magic")
    pos = len(CACHE_MAGIC)
    hlen = int.from_bytes(data[pos:pos + 4], "little")
    pos += 4
    try:
        header = json.loads(data[pos:pos + hlen])
        rows, cols = header["shape"]
        key = header["key"]
    except (ValueError, KeyError, TypeError):
        raise ValueError("bad header") from None
    payload = data[pos + hlen:]
    if len(payload) != rows * cols * 8:
        raise ValueError("truncated payload")
    atoms = np.frombuffer(payload, dtype="<c8").reshape(rows, cols).astype(complex)
    return key, atoms


def load_or_build(path: str | FsPath, geom: ArrayGeometry, carrier_frequency: float,
                  k_c: float, theta_range: tuple[float, float], beta: float, rings: int,
                  n_atoms: int | None, force: bool = False) -> tuple[PolarDictionary, bool]:
    """Load a cached dictionary, rebuilding (and rewriting) it when missing,
    stale, corrupt or ``force``d.  Returns ``(dictionary, rebuilt)``."""
    key = cache_key(geom, carrier_frequency, beta, rings, theta_range, n_atoms)
    angles, distances = grid_params(geom, k_c, theta_range, beta, rings, n_atoms)
    path = FsPath(path)
    if not force and path.exists():
        try:
            stored_key, atoms = read_cache(path)
        except ValueError as exc:
            log.warning("dictionary cache %s is corrupt (%s); rebuilding", path, exc)
        else:
            if stored_key == key and atoms.shape == (geom.n_antennas, angles.size):
                return PolarDictionary(atoms, angles, distances), False
            log.warning("dictionary cache %s has a different key; rebuilding", path)
    fresh = PolarDictionary(steering_matrix(angles, distances, geom, k_c), angles, distances)
    write_cache(path, key, fresh)
    return fresh, True
