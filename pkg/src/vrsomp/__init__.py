"""Near-field, spatially non-stationary ELAA channel simulation and
greedy polar-domain channel estimation with HMM-based visibility regions."""

from vrsomp.config import ConfigError, ScenarioConfig
from vrsomp.geometry import ArrayGeometry, MaskCase, Path, PathSet, PilotObservation
from vrsomp.dictionary import PolarDictionary, build_dictionary
from vrsomp.hmm import HmmParams
from vrsomp.estimators import (
    EstimateReport,
    genie_vr_hmm_p_somp,
    ls_estimate,
    p_somp,
    subarray_p_somp,
    vr_hmm_p_somp,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "ConfigError",
    "EstimateReport",
    "HmmParams",
    "MaskCase",
    "Path",
    "PathSet",
    "PilotObservation",
    "PolarDictionary",
    "ScenarioConfig",
    "build_dictionary",
    "genie_vr_hmm_p_somp",
    "ls_estimate",
    "p_somp",
    "subarray_p_somp",
    "vr_hmm_p_somp",
]
