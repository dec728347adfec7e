"""Quasiperiodic Schrödinger cocycles, Aubry duality and reducibility diagnostics."""

__version__ = "0.1.0"

from .arithmetic import Frequency, continued_fraction, find_resonances, golden_mean, make_frequency, silver_mean
from .cocycles import (CocycleMap, conjugate_push, degree, iterate, lyapunov_exponent, rotation_number,
                       schrodinger_cocycle, uh_test)
from .duality import (ConjugacyReport, DualEigenData, bloch_wave, cohomological_solve, duality_matrix,
                      perturbative_reduce, reduce_localized, rotation_conjugacy, select_dual_phase, triangularize)
from .fourier import FourierSeries
from .operators import Potential, almost_mathieu, build_restriction, dual_eigenpairs
from .spectral import find_gaps, ids_table, ids_value, spectrum_sample

__all__ = [
    "Frequency", "continued_fraction", "find_resonances", "golden_mean", "make_frequency", "silver_mean",
    "CocycleMap", "conjugate_push", "degree", "iterate", "lyapunov_exponent", "rotation_number",
    "schrodinger_cocycle", "uh_test",
    "ConjugacyReport", "DualEigenData", "bloch_wave", "cohomological_solve", "duality_matrix",
    "perturbative_reduce", "reduce_localized", "rotation_conjugacy", "select_dual_phase", "triangularize",
    "FourierSeries", "Potential", "almost_mathieu", "build_restriction", "dual_eigenpairs",
    "find_gaps", "ids_table", "ids_value", "spectrum_sample",
]
