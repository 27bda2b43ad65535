"""Two-state HMM over the antenna index for visibility-region decoding.

State 1 means the antenna sees the path ("in VR"), state 0 that it does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from vrsomp.config import ConfigError

IN, OUT = 1, 0


@dataclass(frozen=True)
class HmmParams:
    p_switch: float
    p_init_in: float = 0.55
    temperature: float = 20.0

    def __post_init__(self):
        if not 0 < self.p_switch < 1:
            raise ConfigError("p_switch must lie in (0, 1)", "p_switch")
        if not 0 < self.p_init_in < 1:
            raise ConfigError("p_init_in must lie in (0, 1)", "p_init_in")
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive", "temperature")

    @classmethod
    def for_array(cls, n_antennas: int, **kwargs) -> HmmParams:
        """Defaults with a switch probability of ``1/N``."""
        return cls(p_switch=1.0 / n_antennas, **kwargs)

    @property
    def p_stay(self) -> float:
        return 1.0 - self.p_switch

    @property
    def p_init_out(self) -> float:
        return 1.0 - self.p_init_in


def reshape_antenna_major(X: np.ndarray, n_antennas: int) -> np.ndarray:
    """Map a stacked ``(N*T, M)`` matrix to ``(N, T*M)``: out[n, t*M + m] = X[t*N + n, m]."""
    rows, m = X.shape
    if rows % n_antennas:
        raise ValueError(f"{rows} rows is not a multiple of N={n_antennas}")
    t = rows // n_antennas
    return X.reshape(t, n_antennas, m).transpose(1, 0, 2).reshape(n_antennas, t * m)


def reshape_pilot_major(X: np.ndarray, n_pilots: int) -> np.ndarray:
    """Inverse of :func:`reshape_antenna_major`."""
    n, tm = X.shape
    if tm % n_pilots:
        raise ValueError(f"{tm} columns is not a multiple of T={n_pilots}")
    m = tm // n_pilots
    return X.reshape(n, n_pilots, m).transpose(1, 0, 2).reshape(n_pilots * n, m)


def compute_observation(R: np.ndarray, R_pi: np.ndarray, n_antennas: int) -> np.ndarray:
    """Per-antenna mean drop in residual magnitude when the candidate path is removed."""
    if R.shape != R_pi.shape:
        raise ValueError(f"residual shapes differ: {R.shape} vs {R_pi.shape}")
    diff = np.abs(reshape_antenna_major(R, n_antennas)) - np.abs(reshape_antenna_major(R_pi, n_antennas))
    return diff.mean(axis=1)


def emission_log_probs(obs: np.ndarray, temperature: float) -> tuple[np.ndarray, np.ndarray]:
    # log sigmoid(x) = -softplus(-x), exact for any |x|
    x = temperature * np.asarray(obs, dtype=float)
    return -np.logaddexp(0.0, -x), -np.logaddexp(0.0, x)


def emission_probs(obs: np.ndarray, temperature: float) -> tuple[np.ndarray, np.ndarray]:
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    log_in, log_out = emission_log_probs(obs, temperature)
    return np.exp(log_in), np.exp(log_out)


def viterbi_log(log_in: np.ndarray, log_out: np.ndarray, params: HmmParams) -> np.ndarray:
    """Most likely state sequence from log emissions, antenna 1 -> N.

    Equal-score predecessors and final states resolve to "in VR".
    """
    e_out = np.asarray(log_out, dtype=float).tolist()
    e_in = np.asarray(log_in, dtype=float).tolist()
    n = len(e_in)
    log_stay, log_switch = math.log(params.p_stay), math.log(params.p_switch)
    s_out = math.log(params.p_init_out) + e_out[0]
    s_in = math.log(params.p_init_in) + e_in[0]
    back_out = [OUT] * n     # best predecessor of OUT at antenna i
    back_in = [IN] * n
    for i in range(1, n):
        # >= prefers IN on ties
        a, b = s_in + log_switch, s_out + log_stay
        if a >= b:
            back_out[i], new_out = IN, a
        else:
            back_out[i], new_out = OUT, b
        a, b = s_in + log_stay, s_out + log_switch
        if a >= b:
            back_in[i], new_in = IN, a
        else:
            back_in[i], new_in = OUT, b
        s_out, s_in = new_out + e_out[i], new_in + e_in[i]
    states = np.empty(n, dtype=int)
    state = IN if s_in >= s_out else OUT
    states[-1] = state
    for i in range(n - 1, 0, -1):
        state = back_in[i] if state == IN else back_out[i]
        states[i - 1] = state
    return states


def viterbi(p_in: np.ndarray, p_out: np.ndarray, params: HmmParams) -> np.ndarray:
    p_in, p_out = np.asarray(p_in, dtype=float), np.asarray(p_out, dtype=float)
    if p_in.shape != p_out.shape or p_in.ndim != 1 or p_in.size == 0:
        raise ValueError("emission vectors must be 1-D with equal, non-zero length")
    with np.errstate(divide="ignore"):
        return viterbi_log(np.log(p_in), np.log(p_out), params)


def decode_mask(R: np.ndarray, R_pi: np.ndarray, n_antennas: int, params: HmmParams) -> np.ndarray:
    """Observation, emissions and Viterbi in one step; returns a 0/1 float mask."""
    obs = compute_observation(R, R_pi, n_antennas)
    log_in, log_out = emission_log_probs(obs, params.temperature)
    return viterbi_log(log_in, log_out, params).astype(float)
