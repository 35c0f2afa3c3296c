import os
import sys
import logging

import numpy as np
import pytest

# Configurar el logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

# Añadir la ruta del directorio padre al path para poder importar desde app
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.utils.errors import ParameterError, PSDError, ParseError, DatasetError
from app.utils.parallel import resolve_threads, run_trials
from app.utils.seeding import MASK64, derive_seed, make_rng, splitmix64, stream_id
from app.utils.stats import bootstrap_half_width, bootstrap_interval, standard_error, wilson_interval, z_value


def test_derive_seed_is_deterministic_and_separates_streams():
    a = derive_seed(42, "bomc-block", 3)
    assert a == derive_seed(42, "bomc-block", 3)
    assert 0 <= a <= MASK64
    assert a != derive_seed(42, "bomc-block", 4)
    assert a != derive_seed(42, "qmc-shift", 3)
    assert a != derive_seed(43, "bomc-block", 3)
    assert stream_id("mc") == stream_id("mc")
    assert splitmix64(0) != splitmix64(1)


def test_make_rng_reproducible():
    x = make_rng(7).standard_normal(5)
    y = make_rng(7).standard_normal(5)
    assert np.array_equal(x, y)


def test_run_trials_order_independent_of_threads():
    fn = lambda t: float(make_rng(derive_seed(1, "trial", t)).random())
    sequential = run_trials(fn, 40, threads=1)
    parallel = run_trials(fn, 40, threads=4)
    assert sequential == parallel
    assert resolve_threads(0) == 1


def test_wilson_interval_bounds():
    p, lo, hi = wilson_interval(0, 1000)
    assert p == 0 and lo < 1e-12 and 0 < hi < 0.01
    p, lo, hi = wilson_interval(1000, 1000)
    assert p == 1 and abs(hi - 1.0) < 1e-12 and lo > 0.99
    p, lo, hi = wilson_interval(500, 1000, level=0.95)
    assert lo < 0.5 < hi
    assert abs((hi - lo) / 2 - 1.96 * np.sqrt(0.25 / 1000)) < 1e-3


def test_z_value():
    assert abs(z_value(0.95) - 1.959964) < 1e-5
    assert abs(z_value(0.99) - 2.575829) < 1e-5


def test_bootstrap_interval_covers_mean():
    values = make_rng(3).standard_normal(2000)
    lo, hi = bootstrap_interval(values, seed=11)
    assert lo < np.mean(values) < hi
    # el semiancho es del orden de 1.96 errores estándar
    half = bootstrap_half_width(values, seed=11)
    assert 0.7 * 1.96 * standard_error(values) < half < 1.3 * 1.96 * standard_error(values)
    assert bootstrap_interval(values, seed=11) == (lo, hi)


def test_bootstrap_constant_values():
    lo, hi = bootstrap_interval(np.full(50, 2.5), seed=0)
    assert lo == hi == 2.5


def test_error_hierarchy():
    assert issubclass(PSDError, ParameterError)
    assert "línea 4" in str(ParseError("fila incompleta", line=4))
    err = DatasetError("valor no numérico", row=2, column=3)
    assert err.row == 2 and err.column == 3


if __name__ == "__main__":
    test_derive_seed_is_deterministic_and_separates_streams()
    test_make_rng_reproducible()
    test_run_trials_order_independent_of_threads()
    test_wilson_interval_bounds()
    test_z_value()
    test_bootstrap_interval_covers_mean()
    test_bootstrap_constant_values()
    test_error_hierarchy()
    logger.info("Pruebas de utilidades completadas")
