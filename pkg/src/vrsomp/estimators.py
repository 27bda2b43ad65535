"""Channel estimators operating on stacked pilot observations.

All greedy estimators share one loop: pick an atom by its summed correlation
energy across subcarriers, project the observation onto the selected atoms,
update the residual.  The VR-HMM variant additionally decodes a binary
visibility mask for every new atom and re-projects with the masked atom.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from vrsomp.config import ConfigError
from vrsomp.dictionary import PolarDictionary, cached_dictionary
from vrsomp.geometry import ArrayGeometry, PathSet, PilotObservation, steering_vector
from vrsomp.hmm import HmmParams, decode_mask

log = logging.getLogger(__name__)

RANK_TOL = 1e-10


@dataclass
class SupportSet:
    indices: list[int] = field(default_factory=list)
    # N x |support| atoms after VR masking (unstacked)
    atoms: np.ndarray | None = None

    def masked_atoms(self, n_pilots: int) -> np.ndarray:
        """Masked atoms stacked for ``n_pilots`` repetitions, (N*T) x |support|."""
        return np.tile(self.atoms, (n_pilots, 1))


@dataclass
class EstimateReport:
    channel_estimate: np.ndarray
    coefficients: np.ndarray
    support: SupportSet
    vr_masks: list[np.ndarray] = field(default_factory=list)
    events: list[str] = field(default_factory=list)


def ls_estimate(obs: PilotObservation) -> EstimateReport:
    """Least squares for unit pilots: the average of the T received blocks."""
    H = obs.blocks().mean(axis=0)
    return EstimateReport(channel_estimate=H, coefficients=np.zeros((0, H.shape[1]), complex),
                          support=SupportSet([], np.zeros((H.shape[0], 0), complex)))


def correlation_scores(W_stacked: np.ndarray, R: np.ndarray) -> np.ndarray:
    G = W_stacked.conj().T @ R
    return np.einsum("ij,ij->i", G.real, G.real) + np.einsum("ij,ij->i", G.imag, G.imag)


def _folded_scores(atoms: np.ndarray, R: np.ndarray, n_pilots: int) -> np.ndarray:
    # W_stacked^H R == W^H (sum_t R_t): avoids touching the T-fold dictionary
    n = atoms.shape[0]
    R_sum = R.reshape(n_pilots, n, -1).sum(axis=0)
    G = atoms.conj().T @ R_sum
    return np.einsum("ij,ij->i", G.real, G.real) + np.einsum("ij,ij->i", G.imag, G.imag)


def _argmax_excluding(scores: np.ndarray, exclude) -> int:
    if exclude:
        scores = scores.copy()
        scores[list(exclude)] = -np.inf
    return int(np.argmax(scores))


def somp_select(W_stacked: np.ndarray, R: np.ndarray, exclude=()) -> int:
    """Index of the atom with the largest correlation energy summed over columns.

    Ties go to the lowest index; indices in ``exclude`` are never returned.
    """
    return _argmax_excluding(correlation_scores(W_stacked, R), exclude)


def orthogonal_project(A: np.ndarray, Y: np.ndarray, events: list | None = None) -> np.ndarray:
    """Least-squares coefficients X minimising ||Y - A X||_F.

    All-zero columns are excluded and get zero coefficients; the remaining
    solve discards singular directions below ``RANK_TOL`` relative.
    """
    norms = np.linalg.norm(A, axis=0)
    keep = norms > 0
    X = np.zeros((A.shape[1], Y.shape[1]), dtype=complex)
    if not keep.all():
        msg = f"excluded {int((~keep).sum())} all-zero atom column(s) from projection"
        log.warning(msg)
        if events is not None:
            events.append(msg)
    if keep.any():
        X[keep] = np.linalg.lstsq(A[:, keep], Y, rcond=RANK_TOL)[0]
    return X


def _greedy(obs: PilotObservation, atoms: np.ndarray, l_hat: int,
            hmm: HmmParams | None = None, n_forced: int = 0,
            residual_tol: float = 0.0) -> EstimateReport:
    """Shared SOMP loop.

    ``atoms`` is the N x S selection dictionary.  The first ``n_forced``
    iterations skip selection and take atoms ``0..n_forced-1`` in order.
    With ``hmm`` each new atom is VR-masked.
    """
    if l_hat < 1:
        raise ConfigError("number of iterations must be >= 1", "l_hat_factor")
    Y = obs.stacked
    n, t = obs.n_antennas, obs.n_pilots
    if atoms.shape[0] != n:
        raise ValueError(f"dictionary has {atoms.shape[0]} rows, observation N={n}")
    n_iter = min(l_hat, atoms.shape[1])
    y_norm = np.linalg.norm(Y)

    indices: list[int] = []
    chosen = np.zeros((n, 0), dtype=complex)
    masks: list[np.ndarray] = []
    events: list[str] = []
    R = Y
    X = np.zeros((0, Y.shape[1]), dtype=complex)
    for it in range(n_iter):
        if it < n_forced:
            p = it
        else:
            scores = _folded_scores(atoms, R, t)
            p = _argmax_excluding(scores, indices)
            if scores[p] == 0:
                events.append(f"iteration {it}: zero correlation (degenerate residual)")
        indices.append(p)
        atom = atoms[:, p]
        chosen = np.column_stack([chosen, atom])
        A = np.tile(chosen, (t, 1))
        X = orthogonal_project(A, Y, events)

        if hmm is not None:
            Pi = np.outer(A[:, -1], X[-1])
            mask = decode_mask(R, R - Pi, n, hmm)
            if not mask.any():
                events.append(f"iteration {it}: empty VR mask, keeping unmasked atom")
                mask = np.ones(n)
            masks.append(mask)
            chosen[:, -1] = mask * atom
            A = np.tile(chosen, (t, 1))
            X = orthogonal_project(A, Y, events)

        R = Y - A @ X
        if residual_tol > 0 and np.linalg.norm(R) <= residual_tol * y_norm:
            break

    return EstimateReport(channel_estimate=chosen @ X, coefficients=X,
                          support=SupportSet(indices, chosen), vr_masks=masks, events=events)


def p_somp(obs: PilotObservation, dictionary: PolarDictionary, l_hat: int,
           residual_tol: float = 0.0) -> EstimateReport:
    return _greedy(obs, dictionary.atoms, l_hat, residual_tol=residual_tol)


def vr_hmm_p_somp(obs: PilotObservation, dictionary: PolarDictionary, l_hat: int,
                  hmm: HmmParams, residual_tol: float = 0.0) -> EstimateReport:
    """P-SOMP with a Viterbi-decoded binary VR mask applied to every selected atom.

    Masks only alter the stored support atoms; selection always correlates
    against the unmasked dictionary and never re-selects a support index.
    """
    return _greedy(obs, dictionary.atoms, l_hat, hmm=hmm, residual_tol=residual_tol)


def genie_vr_hmm_p_somp(obs: PilotObservation, true_paths: PathSet, geom: ArrayGeometry,
                        n_paths: int, hmm: HmmParams, dictionary: PolarDictionary | None = None,
                        l_hat: int | None = None) -> EstimateReport:
    """VR-HMM-P-SOMP whose first supports are the exact steering vectors of
    the true paths (strongest gain first) instead of grid atoms.

    Without a ``dictionary`` only those ``n_paths`` iterations run.  With one,
    iterations continue up to ``l_hat`` using ordinary grid selection; grid
    atom ``i`` is then reported as support index ``n_paths + i``.
    """
    if not true_paths.paths:
        raise ConfigError("genie needs at least one true path")
    ordered = sorted(true_paths.paths, key=lambda p: -abs(p.gain))[:n_paths]
    exact = np.column_stack([
        steering_vector(p.angle, p.distance, geom, true_paths.carrier_wavenumber)
        for p in ordered
    ])
    if dictionary is None:
        return _greedy(obs, exact, len(ordered), hmm=hmm, n_forced=len(ordered))
    atoms = np.hstack([exact, dictionary.atoms])
    l_hat = len(ordered) if l_hat is None else max(l_hat, len(ordered))
    return _greedy(obs, atoms, l_hat, hmm=hmm, n_forced=len(ordered))


def subarray_p_somp(obs: PilotObservation, geom: ArrayGeometry, n_subarrays: int, l_hat: int,
                    k_c: float, theta_range: tuple[float, float], beta: float = 1.2,
                    rings: int = 10, residual_tol: float = 0.0) -> EstimateReport:
    """Independent P-SOMP on contiguous subarrays, each with its own centered
    polar dictionary of ``(N / n_subarrays) * rings`` atoms."""
    n = geom.n_antennas
    if n_subarrays < 1 or n % n_subarrays:
        raise ConfigError(f"N={n} is not divisible into {n_subarrays} subarrays")
    size = n // n_subarrays
    sub_dict = cached_dictionary(size, geom.spacing, k_c, tuple(theta_range), beta, rings, None)
    blocks = obs.blocks()
    H = np.zeros((n, obs.n_subcarriers), dtype=complex)
    coefficients, indices, atoms, events = [], [], [], []
    for k in range(n_subarrays):
        rows = slice(k * size, (k + 1) * size)
        sub_obs = PilotObservation(blocks[:, rows].reshape(-1, obs.n_subcarriers),
                                   obs.noise_variance, size)
        report = _greedy(sub_obs, sub_dict.atoms, l_hat, residual_tol=residual_tol)
        H[rows] = report.channel_estimate
        coefficients.append(report.coefficients)
        indices.extend(k * sub_dict.n_atoms + i for i in report.support.indices)
        block_atoms = np.zeros((n, report.support.atoms.shape[1]), dtype=complex)
        block_atoms[rows] = report.support.atoms
        atoms.append(block_atoms)
        events.extend(f"subarray {k}: {e}" for e in report.events)
    return EstimateReport(channel_estimate=H, coefficients=np.vstack(coefficients),
                          support=SupportSet(indices, np.hstack(atoms)), events=events)
