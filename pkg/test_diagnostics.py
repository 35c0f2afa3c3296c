#!/usr/bin/env python3
"""
Pruebas de los diagnósticos: dependencia negativa, FGM, MSE, colas,
Legendre y barridos uniformes.
"""

import sys
import os
import math
import logging

import numpy as np
import pytest

# Configurar logging para ver los detalles del proceso
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Agregar el directorio del proyecto al path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from app.models.models import KernelSpec, Method, TestFunction
from app.modules.diagnostics.diagnostics import (
    apply_test_function,
    compact_grid,
    empirical_legendre,
    exact_expectation,
    legendre_report,
    mgf_dominance_test,
    mse_ordering_test,
    nd_empirical_test,
    sweep_report,
    tail_comparison,
    uniform_error_sweep,
)
from app.utils.errors import (
    ClassError,
    ConfigError,
    DimensionError,
    GridRangeError,
    InsufficientDataError,
    PreconditionError,
)
from app.utils.seeding import make_rng

SQUARE = TestFunction(tag="Square")


def _unit(d: int) -> np.ndarray:
    return np.ones(d) / math.sqrt(d)


def test_test_functions():
    assert np.allclose(apply_test_function(SQUARE, [2.0, -1.0]), [4.0, 1.0])
    assert exact_expectation(SQUARE, [0.6, 0.8]) == pytest.approx(1.0)
    assert exact_expectation(TestFunction(tag="AbsCos"), [1.0, 0.0]) == pytest.approx(math.exp(-0.5))
    assert exact_expectation(TestFunction(tag="ExpC", c=2.0), [1.0, 0.0]) == pytest.approx(math.exp(2.0))
    assert SQUARE.function_class == "F1"
    assert TestFunction(tag="ExpC").function_class == "F3"


def test_nd_two_dimensions():
    report = nd_empirical_test(2, _unit(2), [0.5], 10_000, 1)
    assert report.claim_id == "nd"
    assert report.verdict == "consistent"
    assert len(report.statistics) == 4
    assert report.statistics[0].name == "le(0.5)/joint"


def test_nd_thresholds_at_one():
    report = nd_empirical_test(3, _unit(3), [1.0], 10_000, 2)
    assert report.verdict == "consistent"
    assert report.statistics[0].value > 0.99


def test_nd_and_mgf_full_size():
    grid = [0.1, 0.3, 0.5, 0.7, 0.9]
    report = nd_empirical_test(3, _unit(3), grid, 100_000, 9)
    assert len(report.statistics) == 2 * 2 * 5 ** 3
    assert report.verdict == "consistent"

    report = mgf_dominance_test(SQUARE, [-0.5, -0.25, 0.25, 0.5], 4, 4, _unit(4), 100_000, 10)
    assert report.verdict == "consistent"


def test_nd_preconditions():
    with pytest.raises(PreconditionError):
        nd_empirical_test(2, [1.0, 1.0], [0.5], 10_000, 0)
    with pytest.raises(PreconditionError):
        nd_empirical_test(2, _unit(2), [0.5], 100, 0)
    with pytest.raises(DimensionError):
        nd_empirical_test(1, [1.0], [0.5], 10_000, 0)


def test_mgf_dominance():
    report = mgf_dominance_test(SQUARE, [0.0], 4, 4, _unit(4), 10_000, 3)
    assert report.verdict == "consistent"
    assert report.statistics[0].value == 1.0

    single = mgf_dominance_test(SQUARE, [0.0, -0.5], 4, 1, _unit(4), 10_000, 3)
    assert len(single.statistics) == 4

    with pytest.raises(ClassError):
        mgf_dominance_test(TestFunction(tag="AbsCos"), [0.5], 4, 4, _unit(4), 10_000, 3)
    with pytest.raises(DimensionError):
        mgf_dominance_test(SQUARE, [0.5], 4, 5, _unit(4), 10_000, 3)


def test_mse_ordering_square():
    report = mse_ordering_test(SQUARE, 8, [1], 450, _unit(8), 4)
    assert report.verdict == "consistent"
    bomc, mc = report.statistics[0], report.statistics[1]
    assert bomc.name == "multiplier=1/bomc" and mc.name == "multiplier=1/mc"
    assert bomc.value < mc.value
    assert report.config["exact"] == pytest.approx(1.0)

    with pytest.raises(PreconditionError):
        mse_ordering_test(SQUARE, 8, [1], 100, _unit(8), 4)


def test_mse_ordering_never_violated_outside_f1():
    report = mse_ordering_test(TestFunction(tag="ExpC", c=0.5), 4, [1], 450, _unit(4), 5)
    assert report.verdict in ("consistent", "inconclusive")


def test_tail_comparison_square():
    report = tail_comparison(SQUARE, 4, 4, [0.5], 100_000, _unit(4), 6)
    assert report.verdict != "violated"
    assert [e.name for e in report.statistics] == ["eps=0.5/ort", "eps=0.5/iid"]
    with pytest.raises(PreconditionError):
        tail_comparison(SQUARE, 4, 4, [0.5], 1000, _unit(4), 6)


def test_empirical_legendre_gaussian():
    x = make_rng(7).standard_normal(100_000)
    value = empirical_legendre(x, 1.0, np.linspace(0.0, 2.0, 41))
    assert abs(value - 0.5) < 0.02

    with pytest.raises(PreconditionError):
        empirical_legendre(x, 1.0, [-1.0, 0.5])
    with pytest.raises(GridRangeError):
        empirical_legendre([1000.0], 2000.0, [0.0, 1.0])
    with pytest.raises(InsufficientDataError):
        empirical_legendre([], 1.0, [0.5])


def test_legendre_report():
    report = legendre_report(SQUARE, 4, 4, [1.5], np.linspace(0.0, 2.0, 21), 5000, _unit(4), 8)
    assert report.claim_id == "legendre"
    assert report.verdict in ("consistent", "inconclusive")
    assert [e.name for e in report.statistics] == ["a=1.5/ort", "a=1.5/iid"]


def test_compact_grid():
    grid = compact_grid(3, 200, 2.0, 1)
    assert grid.shape == (200, 3)
    assert np.all(np.linalg.norm(grid, axis=1) <= 2.0 + 1e-12)
    assert np.array_equal(grid, compact_grid(3, 200, 2.0, 1))


def test_sweep_rejects_frozen_oracle_kernels():
    with pytest.raises(ConfigError):
        uniform_error_sweep(KernelSpec(tag="Tanh"), compact_grid(2, 5, 1.0, 0), [4], [Method.MC], 5, 0)


def test_uniform_error_sweep():
    grid = compact_grid(2, 10, 1.0, 2)
    table = uniform_error_sweep(KernelSpec(tag="Gaussian"), grid, [4, 256], [Method.MC, Method.BOMC], 20, 3,
                                resamples=50)
    assert len(table.rows) == 4
    assert set(table.decreasing) == {"MC", "BOMC"}
    assert all(r.mean_sup_err >= 0 for r in table.rows)
    mc = [r for r in table.rows if r.method == "MC"]
    assert mc[1].mean_sup_err < mc[0].mean_sup_err

    report = sweep_report(table, {"kernel": "Gaussian"})
    assert report.claim_id == "sweep"
    assert len(report.statistics) == 4

    again = uniform_error_sweep(KernelSpec(tag="Gaussian"), grid, [4, 256], [Method.MC, Method.BOMC], 20, 3,
                                threads=2, resamples=50)
    assert again == table


def test_sweep_png_kernel_uses_all_pairs():
    grid = compact_grid(3, 4, 1.0, 5)
    table = uniform_error_sweep(KernelSpec(tag="Angular"), grid, [3], Method.MC, 4, 1, resamples=20)
    assert len(table.rows) == 1 and table.rows[0].kernel == "Angular"


if __name__ == "__main__":
    test_test_functions()
    test_nd_two_dimensions()
    test_mgf_dominance()
    test_nd_and_mgf_full_size()
    test_mse_ordering_square()
    test_empirical_legendre_gaussian()
    test_compact_grid()
    test_uniform_error_sweep()
    print("\n✅ Pruebas de diagnósticos completadas")
