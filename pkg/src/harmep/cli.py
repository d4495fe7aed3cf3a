"""Command-line interface.

Subcommands: ``simulate``, ``calibrate``, ``limit-calibrate``, ``test``,
``power`` and ``verify``. Settings come from built-in defaults, then command
flags, then an optional ``--config`` JSON file (highest precedence).
Unknown config keys are rejected.

Exit codes: 0 success, 2 configuration error, 1 runtime error.

Results never depend on the worker count (``--workers`` or
``$HARMEP_WORKERS``); the worker count and output paths are therefore left
out of the provenance echoed into output files, which makes outputs
byte-identical across runs and across worker counts.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as hio
from ._version import __version__
from .alternatives import KINDS, AlternativeSpec
from .harmonics import AngularPowerSpectrum
from .parallel import resolve_workers
from .testing import CalibrationMismatch, DEFAULT_LEVELS, calibrate_null, gaussianity_test, power_study

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

# keys never echoed into outputs: they cannot change numerical results
_NON_PROVENANCE = {"workers", "out", "checkpoint", "config", "text_out"}


class ConfigError(ValueError):
    """Invalid command configuration (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# -- settings -----------------------------------------------------------

DEFAULTS = {
    "simulate": {
        "lmax": None, "seed": 0, "spectrum": "flat", "alternative": "gaussian",
        "png": 0.0, "nu": 5.0, "segments": None, "out": None, "workers": None,
    },
    "calibrate": {
        "lmax": None, "reps": 2000, "levels": list(DEFAULT_LEVELS), "seed": 0, "statistic": "ks",
        "limit": False, "refine": 1, "checkpoint": None, "out": None, "workers": None,
    },
    "limit-calibrate": {
        "reps": 2000, "levels": list(DEFAULT_LEVELS), "seed": 0, "refine": 1, "out": None, "workers": None,
    },
    "test": {
        "coeffs": None, "calibration": None, "limit": False, "reps": 2000, "seed": 0,
        "out": None, "workers": None,
    },
    "power": {
        "lmax": None, "reps": 100, "png_values": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], "seed": 0,
        "calibration": None, "cal_reps": 2000, "alternative": "mixture", "spectrum": "cmb", "nu": 5.0,
        "segments": None, "out": None, "workers": None,
    },
    "verify": {"quick": False, "only": None},
}


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="harmep", description="Harmonic-space Gaussianity tests for spherical random fields.")
    parser.add_argument("--version", action="version", version=f"harmep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    def common(p, workers=True):
        p.add_argument("--config", help="JSON file of settings; overrides flags")
        if workers:
            p.add_argument("--workers", type=int, default=S, help="worker processes (default $HARMEP_WORKERS or 1)")

    p = sub.add_parser("simulate", help="write a coefficient CSV")
    common(p)
    p.add_argument("--lmax", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--spectrum", default=S, help="'flat', 'cmb' or a spectrum CSV path")
    p.add_argument("--alternative", choices=KINDS, default=S)
    p.add_argument("--png", type=float, default=S)
    p.add_argument("--nu", type=float, default=S)
    p.add_argument("--out", default=S, help="output CSV (default: stdout)")

    p = sub.add_parser("calibrate", help="Monte Carlo null critical values")
    common(p)
    p.add_argument("--lmax", type=int, default=S)
    p.add_argument("--reps", type=int, default=S)
    p.add_argument("--levels", type=_float_list, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--statistic", choices=("ks", "cvm"), default=S)
    p.add_argument("--limit", action="store_true", default=S, help="calibrate from the limit law instead")
    p.add_argument("--refine", type=int, default=S, help="limit-grid refinement factor")
    p.add_argument("--checkpoint", default=S, help=".npz file for resumable runs")
    p.add_argument("--out", default=S)

    p = sub.add_parser("limit-calibrate", help="critical values from the limit law")
    common(p)
    p.add_argument("--reps", type=int, default=S)
    p.add_argument("--levels", type=_float_list, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--refine", type=int, default=S)
    p.add_argument("--out", default=S)

    p = sub.add_parser("test", help="test a coefficient file for Gaussianity")
    common(p)
    p.add_argument("--coeffs", default=S, help="coefficient CSV")
    p.add_argument("--calibration", default=S, help="calibration file")
    p.add_argument("--limit", action="store_true", default=S, help="fall back to limit-law thresholds on degree mismatch")
    p.add_argument("--reps", type=int, default=S, help="replications for an on-the-fly limit calibration")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S, help="JSON report path")

    p = sub.add_parser("power", help="rejection rates under an alternative")
    common(p)
    p.add_argument("--lmax", type=int, default=S)
    p.add_argument("--reps", type=int, default=S)
    p.add_argument("--png", dest="png_values", type=_float_list, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--calibration", default=S, help="calibration file (default: calibrate on the fly)")
    p.add_argument("--cal-reps", dest="cal_reps", type=int, default=S)
    p.add_argument("--alternative", choices=KINDS, default=S)
    p.add_argument("--spectrum", choices=("flat", "cmb"), default=S)
    p.add_argument("--nu", type=float, default=S)
    p.add_argument("--out", default=S, help="power CSV path")

    p = sub.add_parser("verify", help="run the oracle check suites")
    p.add_argument("--config", help="JSON file of settings; overrides flags")
    p.add_argument("--quick", action="store_true", default=S, help="closed-form checks only")
    p.add_argument("--only", type=lambda s: [x for x in s.split(",") if x], default=S, help="comma-separated check names")
    return parser


def resolve_config(command: str, flags: dict) -> dict:
    """Merge defaults, flags and the JSON config file, then validate."""
    cfg = dict(DEFAULTS[command])
    cfg.update({k: v for k, v in flags.items() if k in cfg})
    path = flags.get("config")
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(data) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys for '{command}': {', '.join(unknown)}")
        cfg.update(data)
    _validate(command, cfg)
    return cfg


def _validate(command: str, cfg: dict) -> None:
    def need_int(key, lo):
        v = cfg.get(key)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < lo:
            raise ConfigError(f"{key} must be an integer >= {lo}, got {v!r}")

    if cfg.get("lmax") is not None:
        need_int("lmax", 1)
    for key in ("reps", "cal_reps", "refine"):
        if key in cfg:
            need_int(key, 1)
    if "seed" in cfg:
        need_int("seed", 0)
    if cfg.get("workers") is not None:
        need_int("workers", 1)
    if "levels" in cfg:
        lv = cfg["levels"]
        if not isinstance(lv, list) or not lv or any(not 0 < float(a) < 1 for a in lv):
            raise ConfigError(f"levels must be a non-empty list in (0, 1), got {lv!r}")
    if "png_values" in cfg:
        pv = cfg["png_values"]
        if not isinstance(pv, list) or not pv or any(not 0 <= float(p) < 1 for p in pv):
            raise ConfigError(f"png values must lie in [0, 1), got {pv!r}")
    if command == "test" and not cfg["coeffs"]:
        raise ConfigError("test needs --coeffs")
    if command == "test" and not cfg["calibration"] and not cfg["limit"]:
        raise ConfigError("test needs --calibration (or --limit)")
    if command == "simulate" and cfg["alternative"] != "gaussian" and cfg["spectrum"] not in ("flat", "cmb"):
        raise ConfigError("alternatives take spectrum 'flat' or 'cmb', not a file")
    if command in ("simulate", "power"):
        try:
            _alternative(cfg)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid alternative: {exc}") from None


def _alternative(cfg: dict, png: float | None = None) -> AlternativeSpec:
    spectrum = cfg.get("spectrum", "cmb")
    fields = {
        "kind": cfg["alternative"],
        "png": cfg.get("png", 0.0) if png is None else png,
        "nu": cfg["nu"],
        "spectrum": spectrum if spectrum in ("flat", "cmb") else "flat",
    }
    if cfg.get("segments") is not None:
        fields["segments"] = cfg["segments"]
    return AlternativeSpec.from_dict(fields)


def _provenance(command: str, cfg: dict) -> dict:
    out = {k: v for k, v in cfg.items() if k not in _NON_PROVENANCE}
    out["command"] = command
    out["harmep_version"] = __version__
    return out


def _emit(path, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


# -- commands -----------------------------------------------------------

def cmd_simulate(cfg: dict) -> int:
    from .alternatives import generate_alternative
    from .harmonics import simulate_gaussian_coeffs

    lmax, seed = cfg["lmax"], cfg["seed"]
    if lmax is None:
        raise ConfigError("simulate needs --lmax")
    spec_src = cfg["spectrum"]
    if spec_src in ("flat", "cmb"):
        spectrum = _alternative(dict(cfg, alternative="gaussian")).gaussian_spectrum(lmax)
    else:
        spectrum = hio.read_spectrum(spec_src)
        if spectrum.lmax < lmax:
            raise ConfigError(f"spectrum file has L={spectrum.lmax} < lmax={lmax}")
        spectrum = AngularPowerSpectrum(spectrum.values[:lmax])
    if cfg["alternative"] == "gaussian":
        coeffs = simulate_gaussian_coeffs(spectrum, seed)
    else:
        coeffs = generate_alternative(_alternative(cfg), lmax, seed)
    _emit(cfg["out"], hio.coefficients_text(coeffs, _provenance("simulate", cfg)))
    return EXIT_OK


def _limit_table(cfg: dict):
    from .limitproc import default_limit_grid, limit_quantiles

    return limit_quantiles(
        default_limit_grid(cfg.get("refine", 1)),
        cfg["reps"],
        cfg.get("levels", list(DEFAULT_LEVELS)),
        cfg["seed"],
        workers=cfg.get("workers"),
    )


def _calibration_text(table) -> str:
    rows = [f"{'level':>8}  {'threshold':>10}"] + [f"{a:8.3f}  {t:10.6f}" for a, t in zip(table.levels, table.thresholds)]
    return f"calibration ({table.statistic}, L = {table.lmax}, {table.n_reps} reps, seed {table.seed})\n" + "\n".join(rows) + "\n"


def cmd_calibrate(cfg: dict) -> int:
    if cfg.get("limit"):
        table = _limit_table(cfg)
    else:
        if cfg["lmax"] is None:
            raise ConfigError("calibrate needs --lmax (or --limit)")
        table = calibrate_null(
            cfg["lmax"],
            cfg["reps"],
            cfg["levels"],
            cfg["seed"],
            statistic=cfg["statistic"],
            workers=cfg["workers"],
            checkpoint=cfg["checkpoint"],
        )
    if cfg["out"]:
        hio.write_calibration(cfg["out"], table, _provenance("calibrate", cfg))
    sys.stdout.write(_calibration_text(table))
    return EXIT_OK


def cmd_limit_calibrate(cfg: dict) -> int:
    table = _limit_table(cfg)
    if cfg["out"]:
        hio.write_calibration(cfg["out"], table, _provenance("limit-calibrate", cfg))
    sys.stdout.write(_calibration_text(table))
    return EXIT_OK


def cmd_test(cfg: dict) -> int:
    coeffs = hio.read_coefficients(cfg["coeffs"])
    table = hio.read_calibration(cfg["calibration"]) if cfg["calibration"] else None
    if table is None or (not table.is_limit and table.lmax != coeffs.lmax):
        if not cfg["limit"]:
            raise CalibrationMismatch(
                f"calibration is for L={table.lmax} but coefficients have L={coeffs.lmax}; pass --limit to use limit-law thresholds"
            )
        table = _limit_table(cfg)
    report = gaussianity_test(coeffs, table, seed=cfg["seed"])
    if cfg["out"]:
        hio.write_report(cfg["out"], report, _provenance("test", cfg))
    sys.stdout.write(report.to_text() + "\n")
    return EXIT_OK


def cmd_power(cfg: dict) -> int:
    lmax = cfg["lmax"]
    if lmax is None:
        raise ConfigError("power needs --lmax")
    if cfg["calibration"]:
        table = hio.read_calibration(cfg["calibration"])
    else:
        table = calibrate_null(lmax, cfg["cal_reps"], list(DEFAULT_LEVELS), cfg["seed"], workers=cfg["workers"])
    result = power_study(
        _alternative(cfg, png=0.0),
        cfg["png_values"],
        lmax,
        cfg["reps"],
        table,
        cfg["seed"],
        workers=cfg["workers"],
    )
    if cfg["out"]:
        hio.write_power(cfg["out"], result, _provenance("power", cfg))
    header = f"{'png':>6}" + "".join(f"  {a:>8.3f}" for a in result.levels)
    lines = [f"rejection rates ({result.n_reps} reps, L = {lmax})", header]
    for i, p in enumerate(result.png_values):
        lines.append(f"{p:6.3f}" + "".join(f"  {r:8.3f}" for r in result.rates[i]))
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_verify(cfg: dict) -> int:
    from .verify import FULL_CHECKS, run_checks

    only = cfg.get("only")
    if only:
        unknown = [n for n in only if n not in FULL_CHECKS]
        if unknown:
            raise ConfigError(f"unknown checks: {', '.join(unknown)}")
    results = run_checks(quick=bool(cfg["quick"]), only=only)
    width = max(len(r.name) for r in results)
    for r in results:
        sys.stdout.write(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}\n")
    failed = [r.name for r in results if not r.passed]
    if failed:
        sys.stdout.write(f"violated: {', '.join(failed)}\n")
        return EXIT_RUNTIME
    sys.stdout.write(f"all {len(results)} checks passed\n")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "limit-calibrate": cmd_limit_calibrate,
    "test": cmd_test,
    "power": cmd_power,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        flags = vars(args)
        command = flags.pop("command")
        cfg = resolve_config(command, flags)
        if "workers" in cfg:
            try:
                cfg["workers"] = resolve_workers(cfg["workers"])
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return COMMANDS[command](cfg)
    except (ConfigError, CalibrationMismatch) as exc:
        sys.stderr.write(f"harmep: configuration error: {exc}\n")
        return EXIT_CONFIG
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:
        sys.stderr.write(f"harmep: error: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
