"""Empirical-process Gaussianity tests on spherical harmonic coefficients.

The main entry points are re-exported here; see the submodules for the
full API:

* :mod:`harmep.harmonics`, coefficient arrays, simulation and sphere transforms;
* :mod:`harmep.empirical`, row transforms and the finite-L processes;
* :mod:`harmep.testing`, statistics, null calibration, decisions and power;
* :mod:`harmep.limitproc`, the limiting Gaussian field and its sup quantiles;
* :mod:`harmep.alternatives`, non-Gaussian generators;
* :mod:`harmep.oracles`, closed-form laws used as checks.
"""

from ._version import __version__
from .empirical import (
    ProcessField,
    ProcessGrid,
    SimplexArray,
    TriangularUnitArray,
    bias_b,
    bias_b_l,
    corrected_process,
    integrated_process,
    limit_covariance,
    row_process,
    smirnov_transform,
    spacings_transform,
)
from .harmonics import (
    AngularPowerSpectrum,
    FieldMap,
    HarmonicCoefficients,
    SphereGrid,
    analyze_map,
    estimate_spectrum,
    eval_spherical_harmonic,
    simulate_gaussian_coeffs,
    synthesize_map,
)
from .testing import (
    CalibrationTable,
    TestReport,
    calibrate_null,
    cvm_statistic,
    gaussianity_test,
    ks_statistic,
    power_study,
)

__all__ = [
    "__version__",
    "AngularPowerSpectrum",
    "HarmonicCoefficients",
    "SphereGrid",
    "FieldMap",
    "simulate_gaussian_coeffs",
    "estimate_spectrum",
    "eval_spherical_harmonic",
    "synthesize_map",
    "analyze_map",
    "TriangularUnitArray",
    "SimplexArray",
    "ProcessGrid",
    "ProcessField",
    "smirnov_transform",
    "spacings_transform",
    "row_process",
    "integrated_process",
    "bias_b",
    "bias_b_l",
    "corrected_process",
    "limit_covariance",
    "CalibrationTable",
    "TestReport",
    "ks_statistic",
    "cvm_statistic",
    "calibrate_null",
    "gaussianity_test",
    "power_study",
]
