"""Command-line front end: ``vrsomp {sweep,trial,dict-cache,show-config}``.

Exit codes: 0 success, 2 invalid configuration, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time

import numpy as np

from vrsomp.config import KEY_HELP, ConfigError, ScenarioConfig, load_config, parse_axis
from vrsomp.dictionary import load_or_build
from vrsomp.geometry import MaskCase, geometry_of
from vrsomp.harness import (
    emit_csv,
    emit_plot,
    format_summary,
    run_trial,
    sweep,
    trial_seed,
    true_masks,
)

CONFIG_ENV = "VRSOMP_CONFIG"
EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def _keys_epilog() -> str:
    width = max(map(len, KEY_HELP))
    lines = ["config keys (config file lines 'key = value', or --set key=value):"]
    lines += [f"  {k:<{width}}  {v}" for k, v in KEY_HELP.items()]
    lines.append(f"\nThe config file defaults to ${CONFIG_ENV} when --config is omitted.")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (default: $%s or built-in "
                                         "defaults)" % CONFIG_ENV)
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="vrsomp", description="Near-field SnS channel estimation simulator.",
        epilog=_keys_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep over SNR or L",
                       epilog=_keys_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--axis", help="snr=START:STEP:STOP, L=2,4,6 ... (default: config 'axis')")
    p.add_argument("--out", default="sweep.csv", help="CSV output path")
    p.add_argument("--plot", help="optional SVG plot path")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("trial", parents=[common], help="run and print a single trial")
    p.add_argument("--seed", type=int,
                   help="trial seed (default: first sweep trial of the master seed)")
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("dict-cache", parents=[common], help="build the polar dictionary cache")
    p.add_argument("--out", help="cache path (default: config 'dict_cache' or polar_dict.bin)")
    p.add_argument("--force", action="store_true", help="rebuild even if up to date")
    p.set_defaults(func=cmd_dict_cache)

    p = sub.add_parser("show-config", parents=[common], help="print the effective config")
    p.set_defaults(func=cmd_show_config)
    return parser


def _parse_overrides(items: list[str]) -> dict[str, str]:
    overrides = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    return overrides


def resolve_config(args) -> ScenarioConfig:
    overrides = _parse_overrides(args.overrides)
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        return load_config(path, overrides)
    return ScenarioConfig().with_overrides(overrides)


def cmd_sweep(args) -> int:
    config = resolve_config(args)
    axis = parse_axis(args.axis) if args.axis else parse_axis(config.axis)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1", "workers")
    result = sweep(config, axis, workers=args.workers)
    emit_csv(result, args.out)
    if args.plot:
        emit_plot(result, args.plot)
    print(format_summary(result))
    return EXIT_OK


def _intervals(mask) -> str:
    on = np.flatnonzero(np.asarray(mask) > 0.5) + 1
    if on.size == 0:
        return "-"
    breaks = np.flatnonzero(np.diff(on) > 1)
    starts = np.concatenate(([on[0]], on[breaks + 1]))
    ends = np.concatenate((on[breaks], [on[-1]]))
    return ",".join(f"{a}-{b}" if a != b else f"{a}" for a, b in zip(starts, ends))


def cmd_trial(args) -> int:
    config = resolve_config(args)
    seed = args.seed if args.seed is not None else trial_seed(config.seed, 0, 0)
    record = run_trial(config, seed, keep_details=args.verbose > 0)
    for name in config.estimators:
        value = record.nmse_db[name]
        text = f"{value:.4f} dB" if math.isfinite(value) else f"failed ({record.errors[name]})"
        print(f"{name}: {text}")
    if args.verbose > 0:
        geom = geometry_of(config)
        print(f"seed: {seed}")
        print("true paths (antennas in VR, 1-based; non-binary: gain > 0.5):")
        for p, m in zip(record.pathset.paths, true_masks(record.pathset, geom)):
            extra = f" gain {m.min():.2f}..{m.max():.2f}" if p.mask_case is MaskCase.NON_BINARY else ""
            print(f"  theta={p.angle:+.4f} r={p.distance:7.2f} |g|={abs(p.gain):.3f} "
                  f"{p.mask_case.value}: {_intervals(m)}{extra}")
        for name in ("vr-hmm-p-somp", "genie"):
            report = record.reports.get(name)
            if report is None:
                continue
            print(f"{name} decoded masks:")
            for idx, mask in zip(report.support.indices, report.vr_masks):
                print(f"  atom {idx}: {_intervals(mask)}")
    return EXIT_OK


def cmd_dict_cache(args) -> int:
    config = resolve_config(args)
    path = args.out or config.dict_cache or "polar_dict.bin"
    k_c = 2 * math.pi / config.carrier_wavelength
    start = time.perf_counter()
    dictionary, rebuilt = load_or_build(path, geometry_of(config), config.carrier_frequency, k_c,
                                        config.theta_range, config.beta, config.rings,
                                        config.n_atoms or None, force=args.force)
    elapsed = time.perf_counter() - start
    state = "built" if rebuilt else "up to date"
    print(f"S = {dictionary.n_atoms}")
    print(f"{path}: {state} in {elapsed:.3f} s")
    return EXIT_OK


def cmd_show_config(args) -> int:
    sys.stdout.write(resolve_config(args).to_text())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose < 2 else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" [key: {exc.key}]" if exc.key else ""
        print(f"vrsomp: configuration error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"vrsomp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
