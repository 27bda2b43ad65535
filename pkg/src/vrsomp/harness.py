"""Monte Carlo evaluation: seeded trials, parameter sweeps, CSV and plot output."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path as FsPath

import numpy as np

from vrsomp.config import ConfigError, ScenarioConfig, parse_axis
from vrsomp.dictionary import PolarDictionary, cached_dictionary, load_or_build, snap_paths_to_grid
from vrsomp.estimators import (
    EstimateReport,
    genie_vr_hmm_p_somp,
    ls_estimate,
    p_somp,
    subarray_p_somp,
    vr_hmm_p_somp,
)
from vrsomp.geometry import (
    ArrayGeometry,
    PathSet,
    PilotObservation,
    geometry_of,
    observe_pilots,
    replace_paths,
    sample_paths,
    synthesize_channel,
    vr_mask,
)
from vrsomp.hmm import HmmParams

log = logging.getLogger(__name__)

NMSE_FLOOR_DB = -300.0
CSV_HEADER = ("axis", "estimator", "nmse_db", "stderr_db", "n_trials")


def nmse_db(H_true: np.ndarray, H_est: np.ndarray) -> float:
    if H_true.shape != H_est.shape:
        raise ValueError(f"shape mismatch {H_true.shape} vs {H_est.shape}")
    ref = np.vdot(H_true, H_true).real
    if ref <= 0:
        raise ValueError("NMSE undefined for an all-zero true channel")
    diff = H_true - H_est
    ratio = np.vdot(diff, diff).real / ref
    return NMSE_FLOOR_DB if ratio <= 0 else max(10 * math.log10(ratio), NMSE_FLOOR_DB)


def dictionary_for(config: ScenarioConfig) -> PolarDictionary:
    k_c = 2 * math.pi / config.carrier_wavelength
    n_atoms = config.n_atoms or None
    if config.dict_cache:
        return _cached_file_dictionary(config.dict_cache, config.n_antennas, config.spacing,
                                       config.carrier_frequency, k_c, config.theta_range,
                                       config.beta, config.rings, n_atoms)
    return cached_dictionary(config.n_antennas, config.spacing, k_c, config.theta_range,
                             config.beta, config.rings, n_atoms)


@lru_cache(maxsize=4)
def _cached_file_dictionary(path, n_antennas, spacing, fc, k_c, theta_range, beta, rings, n_atoms):
    dictionary, _ = load_or_build(path, ArrayGeometry(n_antennas, spacing), fc, k_c,
                                  theta_range, beta, rings, n_atoms)
    return dictionary


def hmm_params_for(config: ScenarioConfig) -> HmmParams:
    return HmmParams(p_switch=config.switch_probability, p_init_in=config.p_init_in,
                     temperature=config.temperature)


def run_estimator(name: str, config: ScenarioConfig, obs: PilotObservation,
                  pathset: PathSet) -> EstimateReport:
    geom = geometry_of(config)
    k_c = pathset.carrier_wavenumber
    tol = config.residual_tol
    if name == "ls":
        return ls_estimate(obs)
    if name == "p-somp":
        return p_somp(obs, dictionary_for(config), config.l_hat, tol)
    if name == "vr-hmm-p-somp":
        return vr_hmm_p_somp(obs, dictionary_for(config), config.l_hat, hmm_params_for(config), tol)
    if name == "genie":
        return genie_vr_hmm_p_somp(obs, pathset, geom, config.n_paths, hmm_params_for(config),
                                   dictionary_for(config), config.l_hat)
    if name.startswith("subarray-"):
        return subarray_p_somp(obs, geom, int(name.split("-")[1]), config.l_hat, k_c,
                               config.theta_range, config.beta, config.rings, tol)
    raise ConfigError(f"unknown estimator {name!r}", "estimators")


@dataclass
class TrialRecord:
    seed: int
    nmse_db: dict[str, float]
    errors: dict[str, str] = field(default_factory=dict)
    # only filled with keep_details=True
    pathset: PathSet | None = None
    channel: np.ndarray | None = None
    reports: dict[str, EstimateReport] = field(default_factory=dict)


def run_trial(config: ScenarioConfig, trial_seed: int, keep_details: bool = False) -> TrialRecord:
    """One channel realization and noise draw, every selected estimator on the same pilots."""
    rng = np.random.default_rng(trial_seed)
    geom = geometry_of(config)
    pathset = sample_paths(config, rng)
    if config.snap_to_grid:
        pathset = replace_paths(pathset, snap_paths_to_grid(pathset.paths, dictionary_for(config)))
    H = synthesize_channel(pathset, geom)
    obs = observe_pilots(H, config.snr_db, config.n_pilots, rng)
    record = TrialRecord(seed=trial_seed, nmse_db={})
    if keep_details:
        record.pathset, record.channel = pathset, H
    for name in config.estimators:
        try:
            report = run_estimator(name, config, obs, pathset)
            record.nmse_db[name] = nmse_db(H, report.channel_estimate)
        except Exception as exc:  # recorded per estimator, the trial goes on
            log.warning("estimator %s failed on seed %d: %s", name, trial_seed, exc)
            record.nmse_db[name] = math.nan
            record.errors[name] = f"{type(exc).__name__}: {exc}"
            continue
        if keep_details:
            record.reports[name] = report
    return record


def true_masks(pathset: PathSet, geom: ArrayGeometry) -> list[np.ndarray]:
    """Per-path masks at the centre subcarrier (for display)."""
    lam = pathset.subcarrier_wavelengths[pathset.n_subcarriers // 2]
    return [vr_mask(p, geom, lam) for p in pathset.paths]


def trial_seed(master_seed: int, point: int, trial: int) -> int:
    """Seed of trial ``trial`` at sweep point ``point``; independent of N_iter."""
    state = np.random.SeedSequence([master_seed, point, trial]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


@dataclass
class SweepResult:
    axis_name: str
    axis_values: list[float]
    estimators: list[str]
    nmse_db: dict[str, list[float]]
    stderr_db: dict[str, list[float]]
    n_trials: dict[str, list[int]]
    mean_of_db: dict[str, list[float]] = field(default_factory=dict)


def aggregate(values_db) -> tuple[float, float, int, float]:
    """Linear-domain mean NMSE in dB, its delta-method stderr in dB, the
    number of finite trials, and the plain mean of per-trial dB values."""
    v = np.asarray([x for x in values_db if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan, 0, math.nan
    lin = 10.0 ** (v / 10)
    mean = lin.mean()
    se_lin = lin.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
    mean_db = 10 * math.log10(mean) if mean > 0 else NMSE_FLOOR_DB
    se_db = 10 / math.log(10) * se_lin / mean if mean > 0 else 0.0
    return mean_db, se_db, int(v.size), float(v.mean())


def _axis_value(name: str, value: float):
    return int(value) if name == "n_paths" else float(value)


def _run_task(args):
    config, seed = args
    return run_trial(config, seed).nmse_db


def sweep(config: ScenarioConfig, axis: str | tuple[str, list[float]] | None = None,
          workers: int = 1, n_iter: int | None = None) -> SweepResult:
    """Run ``n_iter`` (default ``config.n_iter``) trials at every axis value."""
    if axis is None:
        axis = config.axis
    name, values = parse_axis(axis) if isinstance(axis, str) else axis
    if not values:
        raise ConfigError("sweep axis needs at least one value", "axis")
    n_iter = config.n_iter if n_iter is None else n_iter
    tasks = []
    for j, value in enumerate(values):
        point_config = config.replace(**{name: _axis_value(name, value)})
        tasks.extend((point_config, trial_seed(config.seed, j, i)) for i in range(n_iter))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        records = [_run_task(t) for t in tasks]

    names = list(config.estimators)
    result = SweepResult(name, [float(v) for v in values], names,
                         {e: [] for e in names}, {e: [] for e in names},
                         {e: [] for e in names}, {e: [] for e in names})
    for j in range(len(values)):
        chunk = records[j * n_iter:(j + 1) * n_iter]
        for e in names:
            mean_db, se_db, count, mean_of_db = aggregate([r[e] for r in chunk])
            result.nmse_db[e].append(mean_db)
            result.stderr_db[e].append(se_db)
            result.n_trials[e].append(count)
            result.mean_of_db[e].append(mean_of_db)
    return result


# -- output ------------------------------------------------------------------

def _g6(x: float) -> str:
    return f"{x:.6g}"


def csv_text(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for j, value in enumerate(result.axis_values):
        for e in result.estimators:
            writer.writerow([_g6(value), e, _g6(result.nmse_db[e][j]),
                             _g6(result.stderr_db[e][j]), result.n_trials[e][j]])
    return buf.getvalue()


def emit_csv(result: SweepResult, path: str | FsPath) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text(result))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write CSV {path}: {exc.strerror}") from exc


def load_csv(path: str | FsPath, axis_name: str = "axis") -> SweepResult:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[:1]}")
    axis_values: list[float] = []
    estimators: list[str] = []
    result = SweepResult(axis_name, axis_values, estimators, {}, {}, {})
    for axis, est, nmse, se, count in rows[1:]:
        value = float(axis)
        if not axis_values or axis_values[-1] != value:
            axis_values.append(value)
        if est not in estimators:
            estimators.append(est)
            result.nmse_db[est], result.stderr_db[est], result.n_trials[est] = [], [], []
        result.nmse_db[est].append(float(nmse))
        result.stderr_db[est].append(float(se))
        result.n_trials[est].append(int(count))
    return result


AXIS_LABELS = {"snr_db": "SNR (dB)", "n_paths": "L"}


def emit_plot(result: SweepResult, path: str | FsPath) -> None:
    """Line chart (SVG) of mean NMSE per estimator along the sweep axis."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not result.axis_values:
        raise ValueError("nothing to plot: empty sweep")
    markers = "osD^v<>ph*"
    with plt.rc_context({"svg.hashsalt": "vrsomp", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for i, e in enumerate(result.estimators):
            ax.plot(result.axis_values, result.nmse_db[e], marker=markers[i % len(markers)],
                    label=e)
        ax.set_xlabel(AXIS_LABELS.get(result.axis_name, result.axis_name))
        ax.set_ylabel("NMSE (dB)")
        ax.grid(True, alpha=0.3)
        if result.estimators:
            ax.legend()
        fig.tight_layout()
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise OSError(exc.errno, f"cannot write plot {path}: {exc.strerror}") from exc
        finally:
            plt.close(fig)


def format_summary(result: SweepResult) -> str:
    name = AXIS_LABELS.get(result.axis_name, result.axis_name)
    width = max([len(e) for e in result.estimators] + [9])
    lines = [f"{name:>10}  {'estimator':<{width}}  {'NMSE dB':>9}  {'+/-':>6}  "
             f"{'mean dB':>9}  {'trials':>6}"]
    for j, value in enumerate(result.axis_values):
        for e in result.estimators:
            mean_of_db = result.mean_of_db.get(e, [math.nan] * len(result.axis_values))[j]
            lines.append(f"{value:>10g}  {e:<{width}}  {result.nmse_db[e][j]:>9.3f}  "
                         f"{result.stderr_db[e][j]:>6.3f}  {mean_of_db:>9.3f}  "
                         f"{result.n_trials[e][j]:>6d}")
    return "\n".join(lines)
