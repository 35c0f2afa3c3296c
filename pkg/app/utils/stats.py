"""
Utilidades estadísticas: intervalos de Wilson y bootstrap por percentiles.
"""

from typing import Optional, Tuple

import numpy as np
from scipy import stats as sps

from app.config.settings import settings
from app.utils.seeding import make_rng


def z_value(level: float) -> float:
    """Cuantil normal bilateral para el nivel de confianza dado."""
    return float(sps.norm.ppf(0.5 + level / 2.0))


def wilson_interval(successes: int, n: int, level: Optional[float] = None) -> Tuple[float, float, float]:
    """
    Intervalo de Wilson para una proporción.

    Returns:
        (estimación, límite inferior, límite superior), todos en [0, 1].
    """
    if n <= 0:
        raise ValueError("n debe ser positivo")
    level = settings.VERDICT_LEVEL if level is None else level
    z = z_value(level)
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return p, max(0.0, centre - half), min(1.0, centre + half)


def standard_error(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.size))


def bootstrap_interval(
    values: np.ndarray,
    seed: int,
    resamples: Optional[int] = None,
    level: Optional[float] = None,
    chunk: int = 50,
) -> Tuple[float, float]:
    """
    Intervalo bootstrap por percentiles para la media de `values`.

    Se remuestrean las filas (ensayos); el remuestreo se hace por bloques para
    acotar la memoria cuando hay muchos ensayos.
    """
    values = np.asarray(values, dtype=float).ravel()
    resamples = settings.BOOTSTRAP_RESAMPLES if resamples is None else resamples
    level = settings.CONFIDENCE_LEVEL if level is None else level
    n = values.size
    if n == 0:
        raise ValueError("no hay valores para el bootstrap")
    if n == 1:
        return float(values[0]), float(values[0])

    rng = make_rng(seed)
    means = np.empty(resamples)
    done = 0
    while done < resamples:
        k = min(chunk, resamples - done)
        idx = rng.integers(0, n, size=(k, n))
        means[done:done + k] = values[idx].mean(axis=1)
        done += k

    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def bootstrap_half_width(values: np.ndarray, seed: int, resamples: Optional[int] = None,
                         level: Optional[float] = None) -> float:
    """Semiancho del intervalo bootstrap de la media."""
    lo, hi = bootstrap_interval(values, seed, resamples=resamples, level=level)
    return (hi - lo) / 2.0
