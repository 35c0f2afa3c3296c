"""
Kernels por features aleatorias: leyes espectrales, oráculos exactos, mapas
de features, el arnés de MSE y la ingesta de datasets con la regla de escala
del 50º vecino más cercano.
"""

import logging
import math
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import special
from scipy.spatial import cKDTree

from app.config.settings import settings
from app.models.models import (
    Dataset,
    Ensemble,
    FeatureBundle,
    IsotropicLaw,
    KernelFamily,
    KernelSpec,
    Method,
    MseCell,
    MseTable,
)
from app.modules.nomc.nomc import NomcProvider
from app.utils.errors import (
    ArityError,
    ConfigError,
    DatasetError,
    DomainError,
    InsufficientDataError,
    ParameterError,
)
from app.utils.parallel import run_trials
from app.utils.seeding import derive_seed, make_rng
from app.utils.stats import bootstrap_half_width, z_value

logger = logging.getLogger(__name__)

# Kernels PNG sin forma cerrada: se comparan con un oráculo Monte Carlo congelado
FROZEN_ORACLE_TAGS = ("Tanh", "Sine")
MATERN_CLOSED_FORMS = (0.5, 1.5, 2.5)


def spectral_law(spec: KernelSpec, d: int) -> IsotropicLaw:
    """Ley de ω para el kernel: densidad de Fourier o N(0, I_d) para PNG."""
    if spec.tag == "Gaussian":
        if spec.lengthscale == 1.0:
            return IsotropicLaw.gaussian(d)
        return IsotropicLaw(tag="GaussianScaled", d=d, lengthscale=spec.lengthscale)
    if spec.tag == "Matern":
        return IsotropicLaw(tag="MaternSpectral", d=d, nu=spec.nu)
    if spec.tag == "Cauchy":
        return IsotropicLaw(tag="LaplaceProduct", d=d)
    return IsotropicLaw.gaussian(d)


def matern_bessel(z, nu: float):
    """Correlación de Matérn por la función de Bessel modificada K_ν."""
    z = np.asarray(z, dtype=float)
    arg = np.sqrt(2.0 * nu) * z
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.exp((1.0 - nu) * math.log(2.0) - special.gammaln(nu)) * arg ** nu * special.kv(nu, arg)
    return np.where(z == 0, 1.0, val)


def matern_correlation(z, nu: float):
    """Correlación de Matérn: formas cerradas para ν ∈ {1/2, 3/2, 5/2}, Bessel en otro caso."""
    z = np.asarray(z, dtype=float)
    if nu == 0.5:
        return np.exp(-z)
    if nu == 1.5:
        a = math.sqrt(3.0) * z
        return (1.0 + a) * np.exp(-a)
    if nu == 2.5:
        a = math.sqrt(5.0) * z
        return (1.0 + a + a * a / 3.0) * np.exp(-a)
    return matern_bessel(z, nu)


def _png_nonlinearity(spec: KernelSpec):
    if spec.tag == "Angular":
        return np.sign
    if spec.tag == "Quadratic":
        return np.square
    if spec.tag == "Tanh":
        return np.tanh
    if spec.tag == "Sine":
        return np.sin
    c = spec.c
    return lambda u: np.exp(c * u)


@lru_cache(maxsize=4096)
def _frozen_oracle(tag: str, c: float, x: Tuple[float, ...], y: Tuple[float, ...],
                   samples: int, seed: int, chunk: int) -> Tuple[float, float]:
    h = _png_nonlinearity(KernelSpec(tag=tag, c=c))
    x = np.array(x)
    y = np.array(y)
    # (ωᵀx, ωᵀy) es gaussiano bivariado: basta muestrear dos coordenadas
    xx, yy, xy = float(x @ x), float(y @ y), float(x @ y)
    nx = math.sqrt(xx)
    a_coef = nx
    b1 = xy / nx if nx > 0 else 0.0
    b2 = math.sqrt(max(yy - b1 * b1, 0.0))

    rng = make_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        g = rng.standard_normal((2, k))
        prod = h(a_coef * g[0]) * h(b1 * g[0] + b2 * g[1])
        total += float(prod.sum())
        total_sq += float((prod * prod).sum())
        done += k
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    half = z_value(0.99) * math.sqrt(var / samples)
    return mean, half


def png_oracle(spec: KernelSpec, x, y, samples: Optional[int] = None,
               seed: Optional[int] = None) -> Tuple[float, float]:
    """
    Oráculo Monte Carlo congelado E[h(ωᵀx)h(ωᵀy)] con su semiancho al 99%.

    La semilla y el tamaño son fijos (settings.ORACLE_SEED, settings.ORACLE_SAMPLES).
    """
    samples = settings.ORACLE_SAMPLES if samples is None else samples
    seed = settings.ORACLE_SEED if seed is None else seed
    return _frozen_oracle(spec.tag, float(spec.c), tuple(np.asarray(x, dtype=float)),
                          tuple(np.asarray(y, dtype=float)), int(samples), int(seed), settings.ORACLE_CHUNK)


def has_closed_form(spec: KernelSpec) -> bool:
    return spec.tag not in FROZEN_ORACLE_TAGS


def exact_kernel(spec: KernelSpec, x, y, oracle_samples: Optional[int] = None) -> float:
    """
    Valor exacto K(x, y) según la tabla de kernels.

    Raises:
        DomainError: kernel angular con un vector nulo.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ArityError("x e y deben tener la misma dimensión")

    if spec.tag == "Gaussian":
        diff = x - y
        return float(spec.sigma ** 2 * math.exp(-float(diff @ diff) / (2.0 * spec.lengthscale ** 2)))
    if spec.tag == "Matern":
        z = float(np.linalg.norm(x - y))
        return float(spec.sigma ** 2 * matern_correlation(z, spec.nu))
    if spec.tag == "Cauchy":
        diff = x - y
        return float(spec.sigma ** 2 * np.prod(1.0 / (1.0 + diff * diff)))
    if spec.tag == "Angular":
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0 or ny == 0:
            raise DomainError("el kernel angular no está definido para vectores nulos")
        cos = float(np.clip((x @ y) / (nx * ny), -1.0, 1.0))
        return 1.0 - 2.0 * math.acos(cos) / math.pi
    if spec.tag == "Quadratic":
        return float((x @ x) * (y @ y) + 2.0 * (x @ y) ** 2)
    if spec.tag == "ExpPNG":
        v = x + y
        return float(math.exp(spec.c ** 2 * float(v @ v) / 2.0))
    value, _ = png_oracle(spec, x, y, samples=oracle_samples)
    return value


def make_feature_bundle(spec: KernelSpec, ensemble: Ensemble, seed: int) -> FeatureBundle:
    """Agrega fases b ~ Unif[0, 2π) si el kernel es invariante por traslación."""
    phases = None
    if spec.family == KernelFamily.SHIFT_INVARIANT:
        phases = make_rng(seed).uniform(0.0, 2.0 * math.pi, size=ensemble.s)
    return FeatureBundle(ensemble=ensemble, phases=phases, spec=spec)


def feature_matrix(bundle: FeatureBundle, points) -> np.ndarray:
    """Features de varios puntos a la vez: (N, d) -> (N, s)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w = bundle.ensemble.rows
    if pts.shape[1] != w.shape[1]:
        raise ArityError(f"dimensión {pts.shape[1]} distinta de la del ensemble ({w.shape[1]})")
    s = w.shape[0]
    proj = pts @ w.T
    if bundle.spec.family == KernelFamily.SHIFT_INVARIANT:
        return bundle.spec.sigma * math.sqrt(2.0 / s) * np.cos(proj + bundle.phases)
    return _png_nonlinearity(bundle.spec)(proj) / math.sqrt(s)


def feature_vector(bundle: FeatureBundle, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ArityError("x debe ser un vector")
    return feature_matrix(bundle, x[None, :])[0]


def approx_kernel(bundle: FeatureBundle, x, y) -> float:
    """Producto escalar de los vectores de features de x e y."""
    return float(np.dot(feature_vector(bundle, x), feature_vector(bundle, y)))


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

def fiftieth_nn_scale(points, sample_size: Optional[int] = None, seed: int = 0,
                      rank: Optional[int] = None) -> float:
    """
    Media, sobre una muestra de puntos, de la distancia a su 50º vecino más
    cercano (excluyéndose a sí mismo).

    Raises:
        InsufficientDataError: si hay menos de 51 puntos.
    """
    pts = np.asarray(points, dtype=float)
    rank = settings.NN_RANK if rank is None else rank
    sample_size = settings.NN_SAMPLE_SIZE if sample_size is None else sample_size
    n = pts.shape[0]
    if n < rank + 1:
        raise InsufficientDataError(f"se necesitan al menos {rank + 1} puntos, hay {n}")

    if sample_size >= n:
        idx = np.arange(n)
    else:
        idx = np.sort(make_rng(seed).choice(n, size=sample_size, replace=False))

    # el propio punto aparece a distancia 0: el vecino `rank` es la columna `rank`
    dist, _ = cKDTree(pts).query(pts[idx], k=rank + 1)
    scale = float(np.mean(dist[:, rank]))
    if not scale > 0:
        raise InsufficientDataError("la distancia media al vecino es nula (puntos repetidos)")
    return scale


def load_dataset(path: str, scale: bool = True, sample_size: Optional[int] = None, seed: int = 0) -> Dataset:
    """
    Carga un CSV numérico sin cabecera y divide los puntos por la escala del
    50º vecino.

    Raises:
        DatasetError: celdas no numéricas (indica fila y columna).
    """
    raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
    numeric = raw.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DatasetError(f"valor no numérico {raw.iat[row, col]!r}", row=int(row) + 1, column=int(col) + 1)

    points = numeric.to_numpy(dtype=float)
    if not np.all(np.isfinite(points)):
        row, col = np.argwhere(~np.isfinite(points))[0]
        raise DatasetError("valor no finito", row=int(row) + 1, column=int(col) + 1)
    if points.shape[0] < 2:
        raise DatasetError("el dataset necesita al menos 2 filas")

    factor = fiftieth_nn_scale(points, sample_size=sample_size, seed=seed) if scale else 1.0
    logger.info(f"Dataset {path}: {points.shape[0]} puntos en d={points.shape[1]}, escala {factor:.6g}")
    return Dataset(points=points / factor, scale=factor)


def sample_pairs(points, n_pairs: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pares (x, y) de puntos distintos, fijos para una configuración."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if n < 2:
        raise InsufficientDataError("se necesitan al menos 2 puntos para formar pares")
    rng = make_rng(seed)
    i = rng.integers(0, n, size=n_pairs)
    j = (i + rng.integers(1, n, size=n_pairs)) % n
    return pts[i], pts[j]


def synthetic_points(d: int, n: int, seed: int) -> np.ndarray:
    """Puntos N(0, I/d): ‖x − y‖² ≈ 2 en promedio."""
    return make_rng(seed).standard_normal((n, d)) / math.sqrt(d)


# ---------------------------------------------------------------------------
# Benchmark de MSE
# ---------------------------------------------------------------------------

class KernelBenchmark:
    """
    Arnés de MSE: para cada (método, multiplicador) y cada ensayo se genera un
    ensemble nuevo de s = multiplicador·d filas y se compara la aproximación
    con el valor exacto en todos los pares.
    """

    def __init__(self, spec: KernelSpec, methods: Sequence[Method], d: int, multipliers: Sequence[int],
                 trials: int, pairs: Tuple[np.ndarray, np.ndarray], master_seed: int,
                 provider: Optional[NomcProvider] = None, oracle_samples: Optional[int] = None):
        if trials < 2:
            raise ParameterError("se necesitan al menos 2 ensayos")
        if not multipliers or any(m < 1 for m in multipliers):
            raise ParameterError("los multiplicadores deben ser >= 1")
        xs, ys = (np.atleast_2d(np.asarray(a, dtype=float)) for a in pairs)
        if xs.shape[0] == 0 or xs.shape != ys.shape or xs.shape[1] != d:
            raise ArityError("los pares deben ser no vacíos y de dimensión d")

        self.spec = spec
        self.methods = [Method(m) for m in methods]
        self.d = d
        self.multipliers = list(multipliers)
        self.trials = trials
        self.xs, self.ys = xs, ys
        self.master_seed = master_seed
        self.provider = provider or NomcProvider(master_seed)
        self.law = spectral_law(spec, d)
        try:
            self.exact = np.array([exact_kernel(spec, x, y, oracle_samples) for x, y in zip(xs, ys)])
        except DomainError as e:
            raise ConfigError(f"oráculo no disponible para {spec.name}: {e}")

    def _trial(self, t: int) -> np.ndarray:
        errors = np.empty((len(self.methods), len(self.multipliers), self.xs.shape[0]))
        for k, mult in enumerate(self.multipliers):
            s = mult * self.d
            # fases compartidas entre métodos: comparación pareada
            phase_seed = derive_seed(self.master_seed, f"phases-{mult}", t)
            for m, method in enumerate(self.methods):
                seed = derive_seed(self.master_seed, f"{method.value}-{mult}", t)
                ensemble = self.provider.ensemble(method, self.law, s, seed)
                bundle = make_feature_bundle(self.spec, ensemble, phase_seed)
                approx = np.sum(feature_matrix(bundle, self.xs) * feature_matrix(bundle, self.ys), axis=1)
                errors[m, k] = approx - self.exact
        return errors

    def run(self, threads: Optional[int] = None, resamples: Optional[int] = None) -> MseTable:
        logger.info(
            f"Benchmark {self.spec.name}: métodos {[m.value for m in self.methods]}, d={self.d}, "
            f"multiplicadores {self.multipliers}, {self.trials} ensayos, {self.xs.shape[0]} pares"
        )
        self.provider.prepare(self.methods, self.d, [m * self.d for m in self.multipliers])
        errors = np.stack(run_trials(self._trial, self.trials, threads))
        table = MseTable(key_column="kernel", cells=cells_from_errors(
            errors, self.spec.name, self.methods, self.multipliers, self.d, self.master_seed, resamples))
        logger.info(f"Benchmark {self.spec.name} terminado")
        return table


def cells_from_errors(errors: np.ndarray, label: str, methods: Sequence[Method], multipliers: Sequence[int],
                      d: int, master_seed: int, resamples: Optional[int] = None) -> List[MseCell]:
    """Celdas de MSE a partir de errores (ensayos, métodos, multiplicadores, pares)."""
    cells = []
    trials = errors.shape[0]
    for m, method in enumerate(methods):
        for k, mult in enumerate(multipliers):
            e = errors[:, m, k, :]
            per_trial = np.mean(e * e, axis=1)
            cells.append(MseCell(
                label=label,
                method=method.value,
                multiplier=mult,
                s=mult * d,
                trials=trials,
                mean_err=float(np.mean(e)),
                mse=float(np.mean(per_trial)),
                ci95=bootstrap_half_width(
                    per_trial, derive_seed(master_seed, f"bootstrap-{method.value}", mult), resamples),
                std=float(np.std(per_trial, ddof=1)),
            ))
    return cells


def mse_benchmark(spec: KernelSpec, methods: Sequence[Method], d: int, block_multipliers: Sequence[int],
                  trials: int, pairs, master_seed: int, threads: Optional[int] = None,
                  provider: Optional[NomcProvider] = None, resamples: Optional[int] = None,
                  oracle_samples: Optional[int] = None) -> MseTable:
    """
    Tabla de MSE por (método, multiplicador).

    Args:
        pairs: (xs, ys) como matrices (n, d) o lista de pares (x, y).
    """
    stacked = (isinstance(pairs, tuple) and len(pairs) == 2
               and isinstance(pairs[0], np.ndarray) and pairs[0].ndim == 2)
    if not stacked:
        pairs = _split_pairs(pairs)
    bench = KernelBenchmark(spec, methods, d, block_multipliers, trials, pairs, master_seed,
                            provider=provider, oracle_samples=oracle_samples)
    return bench.run(threads=threads, resamples=resamples)


def _split_pairs(pairs) -> Tuple[np.ndarray, np.ndarray]:
    if len(pairs) == 0:
        raise ArityError("se necesita al menos un par")
    xs = np.array([np.asarray(p[0], dtype=float) for p in pairs])
    ys = np.array([np.asarray(p[1], dtype=float) for p in pairs])
    return xs, ys
