import json

import numpy as np
import pytest

from harmep import io as hio
from harmep.harmonics import AngularPowerSpectrum, HarmonicCoefficients, simulate_gaussian_coeffs
from harmep.testing import CalibrationTable, PowerTable, gaussianity_test


@pytest.fixture
def coeffs():
    return simulate_gaussian_coeffs(AngularPowerSpectrum.flat(6), 2)


def test_coefficients_roundtrip(tmp_path, coeffs):
    path = tmp_path / "c.csv"
    hio.write_coefficients(path, coeffs, {"seed": 2})
    text = path.read_text()
    assert text.startswith("# ")
    assert text.splitlines()[1] == "l,m,re,im"
    back = hio.read_coefficients(path)
    assert np.array_equal(back.data, coeffs.data)


def write_rows(path, rows):
    path.write_text("l,m,re,im\n" + "".join(f"{l},{m},{re},{im}\n" for l, m, re, im in rows))


def test_reader_rejects_duplicates(tmp_path):
    write_rows(tmp_path / "c.csv", [(1, 0, 1, 0), (1, 1, 1, 1), (1, 1, 2, 0)])
    with pytest.raises(hio.FormatError, match="duplicate"):
        hio.read_coefficients(tmp_path / "c.csv")


def test_reader_rejects_missing(tmp_path):
    write_rows(tmp_path / "c.csv", [(1, 0, 1, 0), (1, 1, 1, 1), (2, 0, 1, 0), (2, 2, 1, 0)])
    with pytest.raises(hio.FormatError, match=r"missing entry \(l=2, m=1\)"):
        hio.read_coefficients(tmp_path / "c.csv")


def test_reader_rejects_complex_m0(tmp_path):
    write_rows(tmp_path / "c.csv", [(1, 0, 1, 0.5), (1, 1, 1, 1)])
    with pytest.raises(hio.FormatError, match="symmetry"):
        hio.read_coefficients(tmp_path / "c.csv")


def test_reader_checks_negative_orders(tmp_path):
    # a_{1,-1} = -conj(a_{1,1})
    write_rows(tmp_path / "ok.csv", [(1, 0, 1, 0), (1, 1, 2, 3), (1, -1, -2, 3)])
    assert hio.read_coefficients(tmp_path / "ok.csv")[1, 1] == 2 + 3j
    write_rows(tmp_path / "bad.csv", [(1, 0, 1, 0), (1, 1, 2, 3), (1, -1, 2, 3)])
    with pytest.raises(hio.FormatError, match="symmetry"):
        hio.read_coefficients(tmp_path / "bad.csv")


def test_reader_rejects_bad_header(tmp_path):
    (tmp_path / "c.csv").write_text("l,m,value\n1,0,1\n")
    with pytest.raises(hio.FormatError, match="header"):
        hio.read_coefficients(tmp_path / "c.csv")


def test_spectrum_roundtrip(tmp_path):
    s = AngularPowerSpectrum.from_callable(lambda l: 1.0 / l**2, 9)
    hio.write_spectrum(tmp_path / "s.csv", s)
    assert np.array_equal(hio.read_spectrum(tmp_path / "s.csv").values, s.values)
    (tmp_path / "bad.csv").write_text("l,C\n1,1.0\n3,1.0\n")
    with pytest.raises(hio.FormatError):
        hio.read_spectrum(tmp_path / "bad.csv")
    (tmp_path / "neg.csv").write_text("l,C\n1,-1.0\n")
    with pytest.raises(hio.FormatError, match="nonpositive"):
        hio.read_spectrum(tmp_path / "neg.csv")


def test_calibration_roundtrip(tmp_path):
    t = CalibrationTable.from_samples(np.linspace(0.3, 1.7, 200), (0.1, 0.05, 0.01), lmax=12, seed=4, grid="exact")
    hio.write_calibration(tmp_path / "t.txt", t, {"command": "calibrate"})
    back = hio.read_calibration(tmp_path / "t.txt")
    assert back == t
    assert np.array_equal(back.samples, t.samples)
    limit = CalibrationTable((0.05,), (1.1,), lmax="limit", n_reps=50, seed=None, grid="limit law")
    hio.write_calibration(tmp_path / "l.txt", limit)
    assert hio.read_calibration(tmp_path / "l.txt") == limit


def test_calibration_reader_rejects_unknown_keys(tmp_path):
    t = CalibrationTable((0.05,), (1.1,), lmax=3, n_reps=50, seed=1, grid="g")
    hio.write_calibration(tmp_path / "t.txt", t)
    text = (tmp_path / "t.txt").read_text()
    (tmp_path / "u.txt").write_text(text + "colour = red\n")
    with pytest.raises(hio.FormatError, match="unknown keys"):
        hio.read_calibration(tmp_path / "u.txt")
    (tmp_path / "m.txt").write_text(text.replace("seed = 1\n", ""))
    with pytest.raises(hio.FormatError, match="missing keys"):
        hio.read_calibration(tmp_path / "m.txt")


def test_report_and_power_files(tmp_path, coeffs):
    t = CalibrationTable.from_samples(np.linspace(0.3, 1.7, 200), (0.1, 0.05), lmax=6, seed=4, grid="exact")
    rep = gaussianity_test(coeffs, t)
    hio.write_report(tmp_path / "r.json", rep, {"seed": 0})
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["value"] == rep.value and data["config"] == {"seed": 0}
    table = PowerTable((0.0, 0.5), (0.1, 0.05), np.array([[0.1, 0.04], [0.6, 0.5]]), 50, 6, 0, {})
    hio.write_power(tmp_path / "p.csv", table)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "png,level,rejection_rate"
    assert hio.read_power(tmp_path / "p.csv") == table.records()
