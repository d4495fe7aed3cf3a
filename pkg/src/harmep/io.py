"""Plain-text file formats.

All writers emit ``repr`` floats, so values round-trip exactly, and may
prefix ``#`` comment lines carrying provenance. All readers skip those
comment lines.

* coefficients: CSV ``l,m,re,im`` with one row per stored ``(l, m >= 0)``;
* spectrum: CSV ``l,C``;
* calibration: versioned ``key = value`` text;
* test report: JSON;
* power table: CSV ``png,level,rejection_rate``.
"""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from ._version import __version__
from .harmonics import AngularPowerSpectrum, HarmonicCoefficients, packed_size, row_offset
from .testing import CalibrationTable, PowerTable, TestReport

__all__ = [
    "FormatError",
    "coefficients_text",
    "write_coefficients",
    "read_coefficients",
    "write_spectrum",
    "read_spectrum",
    "write_calibration",
    "read_calibration",
    "write_report",
    "write_power",
    "read_power",
]

CALIBRATION_FORMAT = 1


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


def _comment_block(provenance: dict | None) -> str:
    if not provenance:
        return ""
    return "".join(f"# {line}\n" for line in json.dumps(provenance, sort_keys=True).splitlines())


def _data_lines(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="")


def _csv_text(header: list[str], rows: Iterable[Iterable[object]], provenance: dict | None) -> str:
    buf = _io.StringIO()
    buf.write(_comment_block(provenance))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _read_csv(path, header: list[str]) -> list[list[str]]:
    lines = _data_lines(path)
    if not lines:
        raise FormatError(f"{path}: empty file")
    rows = list(csv.reader(lines))
    if [h.strip() for h in rows[0]] != header:
        raise FormatError(f"{path}: expected header {','.join(header)}, got {','.join(rows[0])}")
    for i, rec in enumerate(rows[1:], start=2):
        if len(rec) != len(header):
            raise FormatError(f"{path}: data row {i} has {len(rec)} fields, expected {len(header)}")
    return rows[1:]


# -- coefficients -------------------------------------------------------

def coefficients_text(coeffs: HarmonicCoefficients, provenance: dict | None = None) -> str:
    rows = []
    for l in range(1, coeffs.lmax + 1):
        for m, a in enumerate(coeffs.row(l)):
            rows.append((l, m, repr(float(a.real)), repr(float(a.imag))))
    return _csv_text(["l", "m", "re", "im"], rows, provenance)


def write_coefficients(path, coeffs: HarmonicCoefficients, provenance: dict | None = None) -> None:
    _write_text(path, coefficients_text(coeffs, provenance))


def read_coefficients(path, symmetry_tol: float = 1e-12) -> HarmonicCoefficients:
    """Load a coefficient CSV.

    Rows with ``m < 0`` are accepted only if they agree with
    ``(-1)^m conj(a_{l,|m|})`` to ``symmetry_tol`` (relative); they are
    then discarded.

    Raises
    ------
    FormatError
        On duplicates, missing ``(l, m)`` entries, nonzero ``Im a_{l,0}``,
        or inconsistent negative-order rows.
    """
    try:
        recs = [(int(l), int(m), float(re), float(im)) for l, m, re, im in _read_csv(path, ["l", "m", "re", "im"])]
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from None
    if not recs:
        raise FormatError(f"{path}: no coefficients")
    lmax = max(l for l, _, _, _ in recs)
    if lmax < 1 or min(l for l, _, _, _ in recs) < 1:
        raise FormatError(f"{path}: degrees must start at l = 1")
    data = np.zeros(packed_size(lmax), dtype=complex)
    seen = np.zeros(packed_size(lmax), dtype=bool)
    negative = {}
    for l, m, re, im in recs:
        if abs(m) > l:
            raise FormatError(f"{path}: invalid order m={m} for l={l}")
        if m < 0:
            if (l, m) in negative:
                raise FormatError(f"{path}: duplicate entry (l={l}, m={m})")
            negative[(l, m)] = complex(re, im)
            continue
        idx = row_offset(l) + m
        if seen[idx]:
            raise FormatError(f"{path}: duplicate entry (l={l}, m={m})")
        if m == 0 and im != 0.0:
            raise FormatError(f"{path}: symmetry violation, Im a_(l={l},0) = {im} must be 0")
        seen[idx] = True
        data[idx] = complex(re, im)
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        l = next(k for k in range(1, lmax + 1) if row_offset(k + 1) > missing)
        raise FormatError(f"{path}: missing entry (l={l}, m={missing - row_offset(l)})")
    for (l, m), value in negative.items():
        implied = (-1) ** m * np.conj(data[row_offset(l) - m])
        if abs(value - implied) > symmetry_tol * max(abs(implied), 1.0):
            raise FormatError(f"{path}: symmetry violation at (l={l}, m={m})")
    return HarmonicCoefficients(lmax, data)


# -- spectrum -----------------------------------------------------------

def write_spectrum(path, spectrum: AngularPowerSpectrum, provenance: dict | None = None) -> None:
    rows = [(l, repr(float(c))) for l, c in enumerate(spectrum.values, start=1)]
    _write_text(path, _csv_text(["l", "C"], rows, provenance))


def read_spectrum(path) -> AngularPowerSpectrum:
    recs = _read_csv(path, ["l", "C"])
    try:
        pairs = sorted((int(l), float(c)) for l, c in recs)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if [l for l, _ in pairs] != list(range(1, len(pairs) + 1)):
        raise FormatError(f"{path}: spectrum must list each l = 1 .. L exactly once")
    try:
        return AngularPowerSpectrum(np.array([c for _, c in pairs]))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -- calibration --------------------------------------------------------

def _floats(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def write_calibration(path, table: CalibrationTable, provenance: dict | None = None) -> None:
    lines = [
        "# harmep calibration table",
        _comment_block(provenance).rstrip("\n"),
        f"format_version = {CALIBRATION_FORMAT}",
        f"code_version = {table.code_version}",
        f"statistic = {table.statistic}",
        f"lmax = {table.lmax}",
        f"n_reps = {table.n_reps}",
        f"seed = {'none' if table.seed is None else table.seed}",
        f"grid = {table.grid}",
        f"levels = {_floats(table.levels)}",
        f"thresholds = {_floats(table.thresholds)}",
    ]
    if table.samples is not None:
        lines.append(f"samples = {_floats(table.samples)}")
    _write_text(path, "\n".join(ln for ln in lines if ln) + "\n")


def read_calibration(path) -> CalibrationTable:
    fields = {}
    for ln in _data_lines(path):
        key, sep, value = ln.partition("=")
        if not sep:
            raise FormatError(f"{path}: expected 'key = value', got {ln!r}")
        key = key.strip()
        if key in fields:
            raise FormatError(f"{path}: duplicate key {key!r}")
        fields[key] = value.strip()
    required = {"format_version", "code_version", "statistic", "lmax", "n_reps", "seed", "grid", "levels", "thresholds"}
    missing = required - set(fields)
    if missing:
        raise FormatError(f"{path}: missing keys {sorted(missing)}")
    unknown = set(fields) - required - {"samples"}
    if unknown:
        raise FormatError(f"{path}: unknown keys {sorted(unknown)}")
    if int(fields["format_version"]) != CALIBRATION_FORMAT:
        raise FormatError(f"{path}: unsupported format version {fields['format_version']}")
    try:
        lmax = fields["lmax"] if fields["lmax"] == "limit" else int(fields["lmax"])
        samples = None
        if "samples" in fields:
            samples = np.array([float(x) for x in fields["samples"].split(",")])
        return CalibrationTable(
            levels=tuple(float(x) for x in fields["levels"].split(",")),
            thresholds=tuple(float(x) for x in fields["thresholds"].split(",")),
            lmax=lmax,
            n_reps=int(fields["n_reps"]),
            seed=None if fields["seed"] == "none" else int(fields["seed"]),
            grid=fields["grid"],
            statistic=fields["statistic"],
            samples=samples,
            code_version=fields["code_version"],
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -- reports and power tables -------------------------------------------

def write_report(path, report: TestReport, provenance: dict | None = None) -> None:
    payload = report.to_dict()
    payload["code_version"] = __version__
    if provenance:
        payload["config"] = provenance
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_power(path, table: PowerTable, provenance: dict | None = None) -> None:
    rows = [(repr(p), repr(a), repr(r)) for p, a, r in table.records()]
    _write_text(path, _csv_text(["png", "level", "rejection_rate"], rows, provenance))


def read_power(path) -> list[tuple[float, float, float]]:
    try:
        return [(float(p), float(a), float(r)) for p, a, r in _read_csv(path, ["png", "level", "rejection_rate"])]
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from None
