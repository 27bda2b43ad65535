"""Acceptance checks at full (desk) scale.

Each test prints one ``PASS``/``FAIL`` line and then asserts.  The Monte Carlo
sweeps take several minutes on a single core; deselect them with
``-m "not slow"``.
"""

import itertools
import math
import statistics
import time

import numpy as np
import pytest

from vrsomp.cli import main as cli_main
from vrsomp.config import ScenarioConfig
from vrsomp.geometry import (
    ArrayGeometry,
    knife_edge_loss_db,
    observe_pilots,
    sample_paths,
    steering_vector,
    synthesize_channel,
)
from vrsomp.harness import dictionary_for, hmm_params_for, run_trial, sweep
from vrsomp.estimators import vr_hmm_p_somp
from vrsomp.hmm import HmmParams, viterbi_log

DEFAULT = ScenarioConfig()
NON_GENIE = ("ls", "p-somp", "subarray-8", "subarray-32")


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  {label}  {detail}")
        assert ok, f"{label}: {detail}"
    return emit


def test_geometry_properties(report):
    start = time.perf_counter()
    geom = ArrayGeometry(DEFAULT.n_antennas, DEFAULT.spacing)
    k_c = 2 * math.pi / DEFAULT.carrier_wavelength
    rng = np.random.default_rng(2024)
    thetas = rng.uniform(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3, 10_000)
    rs = 10 ** rng.uniform(0, 6, 10_000)
    worst_norm = max(abs(np.linalg.norm(steering_vector(t, r, geom, k_c)) - 1)
                     for t, r in zip(thetas, rs))

    plane = np.exp(1j * k_c * geom.element_offsets * geom.spacing * math.sin(0.4))
    plane /= math.sqrt(geom.n_antennas)
    errors = [np.max(np.abs(steering_vector(0.4, r, geom, k_c) - plane))
              for r in (1e3, 1e4, 1e5, 1e6)]
    monotone = all(a > b for a, b in zip(errors, errors[1:]))

    # value of the closed-form loss at nu = 0, computed by hand
    j0 = 6.9 + 20 * math.log10(math.sqrt(0.01 + 1) - 0.1)
    loss_err = abs(knife_edge_loss_db(0.0) - j0)
    elapsed = time.perf_counter() - start
    ok = worst_norm <= 1e-12 and monotone and abs(j0 - 6.03) < 0.01 and loss_err < 0.01 \
        and elapsed < 10
    report("geometry property suite", ok,
           f"max|norm-1|={worst_norm:.2e} monotone={monotone} J(0)={knife_edge_loss_db(0.0):.4f} dB "
           f"t={elapsed:.1f}s")


def _exhaustive(log_in, log_out, params):
    n = len(log_in)
    seqs = np.array(list(itertools.product((0, 1), repeat=n)), dtype=int)
    score = np.where(seqs[:, 0] == 1, math.log(params.p_init_in), math.log(params.p_init_out))
    score = score + np.where(seqs == 1, log_in, log_out).sum(axis=1)
    if n > 1:
        switches = (np.diff(seqs, axis=1) != 0).sum(axis=1)
        score = score + switches * math.log(params.p_switch) \
            + (n - 1 - switches) * math.log(params.p_stay)
    return seqs[int(np.argmax(score))]


def test_viterbi_oracle(report):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        params = HmmParams(float(rng.uniform(0.01, 0.99)), float(rng.uniform(0.01, 0.99)))
        p_in = rng.uniform(1e-6, 1 - 1e-6, n)
        log_in, log_out = np.log(p_in), np.log1p(-p_in)
        if not np.array_equal(viterbi_log(log_in, log_out, params),
                              _exhaustive(log_in, log_out, params)):
            mismatches += 1
    elapsed = time.perf_counter() - start
    report("Viterbi vs exhaustive search", mismatches == 0 and elapsed < 30,
           f"mismatches={mismatches}/1000 t={elapsed:.1f}s")


def test_exact_recovery(report):
    start = time.perf_counter()
    cfg = DEFAULT.replace(n_paths=1, mask_mix=(1.0, 0.0, 0.0), snr_db=math.inf, snap_to_grid=True,
                         estimators=("p-somp", "vr-hmm-p-somp"))
    record = run_trial(cfg, 12345, keep_details=True)
    masks = record.reports["vr-hmm-p-somp"].vr_masks
    all_ones = bool(np.all(masks[0] == 1))
    elapsed = time.perf_counter() - start
    ok = record.nmse_db["p-somp"] < -60 and record.nmse_db["vr-hmm-p-somp"] < -60 \
        and all_ones and elapsed < 5
    report("exact recovery (noiseless on-grid path)", ok,
           f"p-somp={record.nmse_db['p-somp']:.1f} dB vr={record.nmse_db['vr-hmm-p-somp']:.1f} dB "
           f"mask all ones={all_ones} t={elapsed:.2f}s")


@pytest.mark.slow
def test_stationary_no_harm(report):
    cfg = DEFAULT.replace(mask_mix=(1.0, 0.0, 0.0), estimators=("p-somp", "vr-hmm-p-somp"))
    result = sweep(cfg, ("snr_db", [0.0]), n_iter=200)
    vr, ps = result.nmse_db["vr-hmm-p-somp"][0], result.nmse_db["p-somp"][0]
    report("stationary no-harm", abs(vr - ps) <= 0.5,
           f"vr={vr:.3f} dB p-somp={ps:.3f} dB delta={vr - ps:+.3f} dB")


@pytest.fixture(scope="module")
def snr_result():
    return sweep(DEFAULT, ("snr_db", [-10.0, -5.0, 0.0, 5.0, 10.0]), n_iter=100)


def _row(result, name):
    return " ".join(f"{v:.2f}" for v in result.nmse_db[name])


@pytest.mark.slow
def test_snr_sweep_vr_not_worse_than_p_somp(snr_result, report):
    vr, ps = snr_result.nmse_db["vr-hmm-p-somp"], snr_result.nmse_db["p-somp"]
    worst = max(a - b for a, b in zip(vr, ps))
    report("SNR sweep (a): VR-HMM <= P-SOMP everywhere", worst <= 0,
           f"vr=[{_row(snr_result, 'vr-hmm-p-somp')}] p-somp=[{_row(snr_result, 'p-somp')}] "
           f"worst excess={worst:+.3f} dB")


@pytest.mark.slow
def test_snr_sweep_gain_at_5db(snr_result, report):
    j = snr_result.axis_values.index(5.0)
    gain = snr_result.nmse_db["p-somp"][j] - snr_result.nmse_db["vr-hmm-p-somp"][j]
    report("SNR sweep (b): gain over P-SOMP at 5 dB >= 1 dB", gain >= 1.0, f"gain={gain:.2f} dB")


@pytest.mark.slow
def test_snr_sweep_gain_over_subarray(snr_result, report):
    j = snr_result.axis_values.index(-5.0)
    best_sub = min(snr_result.nmse_db["subarray-8"][j], snr_result.nmse_db["subarray-32"][j])
    gain = best_sub - snr_result.nmse_db["vr-hmm-p-somp"][j]
    report("SNR sweep (c): gain over best subarray at -5 dB >= 3 dB", gain >= 3.0,
           f"gain={gain:.2f} dB")


@pytest.mark.slow
def test_snr_sweep_genie_bound(snr_result, report):
    worst = max(g - v for g, v in zip(snr_result.nmse_db["genie"], snr_result.nmse_db["vr-hmm-p-somp"]))
    report("SNR sweep (d): genie <= VR-HMM everywhere", worst <= 0,
           f"genie=[{_row(snr_result, 'genie')}] worst excess={worst:+.3f} dB")


@pytest.fixture(scope="module")
def paths_result():
    return sweep(DEFAULT, ("n_paths", [2, 4, 6, 8, 10]), n_iter=100)


@pytest.mark.slow
def test_path_sweep_monotone_in_paths(paths_result, report):
    drops = {}
    for name in paths_result.estimators:
        values = paths_result.nmse_db[name]
        drops[name] = max(max(values[:j]) - values[j] for j in range(1, len(values)))
    worst = max(drops.values())
    report("path sweep: NMSE non-decreasing in L (1 dB slack)", worst <= 1.0,
           " ".join(f"{k}:{v:+.2f}" for k, v in drops.items()))


@pytest.mark.slow
def test_path_sweep_vr_best_non_genie(paths_result, report):
    vr = paths_result.nmse_db["vr-hmm-p-somp"]
    margin = min(paths_result.nmse_db[name][j] - vr[j] for name in NON_GENIE for j in range(len(vr)))
    report("path sweep: VR-HMM <= every non-genie benchmark", margin >= 0,
           f"vr=[{_row(paths_result, 'vr-hmm-p-somp')}] p-somp=[{_row(paths_result, 'p-somp')}] "
           f"min margin={margin:+.3f} dB")


@pytest.mark.slow
def test_complexity_linear_in_dictionary_size(report):
    sizes = [640, 1280, 2560]
    rng = np.random.default_rng(3)
    medians = []
    for s in sizes:
        cfg = DEFAULT.replace(n_atoms=s)
        dictionary = dictionary_for(cfg)
        params = hmm_params_for(cfg)
        geom = ArrayGeometry(cfg.n_antennas, cfg.spacing)
        times = []
        for _ in range(9):
            H = synthesize_channel(sample_paths(cfg, rng), geom)
            obs = observe_pilots(H, 0.0, cfg.n_pilots, rng)
            t0 = time.perf_counter()
            vr_hmm_p_somp(obs, dictionary, cfg.l_hat, params)
            times.append(time.perf_counter() - t0)
        medians.append(statistics.median(times))
    slope, intercept = np.polyfit(sizes, medians, 1)
    fitted = slope * np.array(sizes) + intercept
    ss_res = float(np.sum((np.array(medians) - fitted) ** 2))
    ss_tot = float(np.sum((np.array(medians) - np.mean(medians)) ** 2))
    r2 = 1 - ss_res / ss_tot if ss_tot > 0 else 0.0
    report("runtime linear in dictionary size (R^2 >= 0.95)", r2 >= 0.95 and slope > 0,
           "medians=" + ",".join(f"{m * 1e3:.1f}ms" for m in medians) + f" R^2={r2:.4f}")


@pytest.mark.slow
def test_cli_sweep_deterministic(tmp_path, report):
    args = ["sweep", "--set", "n_iter=3", "--axis", "snr=-5,5"]
    outs = []
    for i, workers in enumerate(("1", "1", "2")):
        path = tmp_path / f"run{i}.csv"
        assert cli_main(args + ["--out", str(path), "--workers", workers]) == 0
        outs.append(path.read_bytes())
    same_twice, same_workers = outs[0] == outs[1], outs[0] == outs[2]
    report("sweep CSV byte-identical (repeat and --workers)", same_twice and same_workers,
           f"repeat={same_twice} workers={same_workers} bytes={len(outs[0])}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
