"""
Distancia Sliced Wasserstein (SWD) entre nubes de puntos del mismo tamaño.

Incluye el catálogo de distribuciones de prueba, el oráculo gaussiano por
cuadratura sobre la esfera y el benchmark de MSE por método.
"""

import logging
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats as sps

from app.config.settings import settings
from app.models.models import (
    CovRecipe,
    DistributionSpec,
    Ensemble,
    IsotropicLaw,
    Method,
    MseTable,
    PointCloud,
)
from app.modules.ensembles.ensembles import sample_directions
from app.modules.kernels.kernels import cells_from_errors
from app.modules.nomc.nomc import NomcProvider
from app.utils.errors import (
    ArityError,
    DimensionError,
    ParameterError,
    PreconditionError,
    PSDError,
)
from app.utils.parallel import run_trials
from app.utils.seeding import derive_seed, make_rng
from app.utils.stats import bootstrap_interval

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-8
DIRECTION_CHUNK = 256
DISTRIBUTION_CATALOG = ("gaussian", "student_t", "cauchy", "laplace",
                       "mixture2", "mixture3", "mixture4", "inverse_wishart")


def _as_points(cloud: Union[PointCloud, np.ndarray]) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return np.atleast_2d(np.asarray(cloud, dtype=float))


def project_cloud(cloud: Union[PointCloud, np.ndarray], u) -> np.ndarray:
    """Proyección de cada punto sobre la dirección unitaria u."""
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
        raise PreconditionError("la dirección de proyección debe ser unitaria")
    pts = _as_points(cloud)
    if pts.shape[1] != u.shape[0]:
        raise ArityError(f"dirección de dimensión {u.shape[0]} para puntos de dimensión {pts.shape[1]}")
    return pts @ u


def wasserstein_1d(xs, ys, p: float = 2.0) -> float:
    """W_p entre dos muestras 1D del mismo tamaño (acoplamiento por orden)."""
    xs = np.sort(np.asarray(xs, dtype=float).ravel())
    ys = np.sort(np.asarray(ys, dtype=float).ravel())
    if xs.size == 0 or xs.size != ys.size:
        raise ArityError(f"tamaños incompatibles: {xs.size} y {ys.size}")
    if p < 1:
        raise ParameterError("p debe ser >= 1")
    return float(np.mean(np.abs(xs - ys) ** p) ** (1.0 / p))


def _direction_rows(directions: Union[Ensemble, np.ndarray]) -> np.ndarray:
    rows = directions.rows if isinstance(directions, Ensemble) else np.asarray(directions, dtype=float)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ArityError("se necesita al menos una dirección")
    if np.any(np.abs(np.linalg.norm(rows, axis=1) - 1.0) > UNIT_TOL):
        raise PreconditionError("las direcciones deben ser unitarias")
    return rows


def swd_estimate(a: Union[PointCloud, np.ndarray], b: Union[PointCloud, np.ndarray],
                 directions: Union[Ensemble, np.ndarray], p: float = 2.0) -> float:
    """
    ((1/s) Σ_i W_p^p(a·u_i, b·u_i))^{1/p} sobre las filas de `directions`.

    Raises:
        ArityError: nubes de distinto tamaño o conjunto de direcciones vacío.
        PreconditionError: direcciones no unitarias.
    """
    pa, pb = _as_points(a), _as_points(b)
    if pa.shape != pb.shape:
        raise ArityError(f"las nubes deben tener la misma forma: {pa.shape} y {pb.shape}")
    if p < 1:
        raise ParameterError("p debe ser >= 1")
    rows = _direction_rows(directions)
    if rows.shape[1] != pa.shape[1]:
        raise ArityError("dimensión de las direcciones distinta de la de las nubes")

    total = 0.0
    for start in range(0, rows.shape[0], DIRECTION_CHUNK):
        u = rows[start:start + DIRECTION_CHUNK]
        xa = np.sort(pa @ u.T, axis=0)
        xb = np.sort(pb @ u.T, axis=0)
        total += float(np.sum(np.mean(np.abs(xa - xb) ** p, axis=0)))
    return float((total / rows.shape[0]) ** (1.0 / p))


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Factor L con L·Lᵀ = cov; Cholesky o, si la matriz es singular, espectral."""
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise PSDError("la covarianza no es simétrica")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        if vals.min() < -1e-9 * max(1.0, abs(vals.max())):
            raise PSDError(f"la covarianza no es semidefinida positiva (autovalor {vals.min():.3g})")
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def gaussian_swd_oracle(m1, cov1, m2, cov2, n_directions: Optional[int] = None,
                        seed: int = 0, batches: int = 100) -> Tuple[float, float]:
    """
    SW_2 entre N(m1, Σ1) y N(m2, Σ2) promediando la fórmula 1D gaussiana
    sobre direcciones uniformes.

    Returns:
        (valor, semiancho bootstrap al nivel de confianza de settings).
    """
    m1, m2 = np.asarray(m1, dtype=float), np.asarray(m2, dtype=float)
    cov1, cov2 = np.atleast_2d(cov1).astype(float), np.atleast_2d(cov2).astype(float)
    _psd_factor(cov1)
    _psd_factor(cov2)
    d = m1.shape[0]
    n = settings.SWD_ORACLE_DIRECTIONS if n_directions is None else n_directions
    if n < 1:
        raise ParameterError("se necesita al menos una dirección")

    dm = m2 - m1
    rng = make_rng(seed)
    batches = min(batches, n)
    edges = np.linspace(0, n, batches + 1).astype(int)
    batch_means = np.empty(batches)
    for k in range(batches):
        u = sample_directions(edges[k + 1] - edges[k], d, rng)
        q1 = np.clip(np.einsum("ij,jk,ik->i", u, cov1, u), 0.0, None)
        q2 = np.clip(np.einsum("ij,jk,ik->i", u, cov2, u), 0.0, None)
        vals = (u @ dm) ** 2 + (np.sqrt(q1) - np.sqrt(q2)) ** 2
        batch_means[k] = vals.mean()

    weights = np.diff(edges) / n
    mean = float(np.sum(weights * batch_means))
    value = math.sqrt(max(mean, 0.0))
    if batches < 2:
        return value, 0.0
    lo, hi = bootstrap_interval(batch_means, derive_seed(seed, "oracle-bootstrap"))
    half = (math.sqrt(max(hi, 0.0)) - math.sqrt(max(lo, 0.0))) / 2.0
    return value, half


def make_cov(recipe: CovRecipe) -> np.ndarray:
    """M_full = √d·AᵀA; D_diag = diagonal con los cuadrados de d normales."""
    rng = make_rng(recipe.seed)
    d = recipe.d
    if recipe.kind == "M_full":
        a = rng.standard_normal((d, d))
        m = math.sqrt(d) * (a.T @ a)
        return (m + m.T) / 2.0
    diag = rng.standard_normal(d) ** 2
    # evita una varianza exactamente nula
    diag = np.where(diag > 0, diag, np.finfo(float).tiny)
    return np.diag(diag)


def sample_distribution(spec: DistributionSpec, m: int, seed: int) -> PointCloud:
    """
    Nube de m puntos de la distribución.

    Las leyes elípticas (StudentT, Cauchy, Laplace) mezclan la escala de un
    gaussiano; la mezcla gaussiana devuelve la componente de cada punto en
    `labels`.
    """
    if m < 1:
        raise ParameterError("m debe ser >= 1")
    rng = make_rng(seed)
    d = spec.d
    factors = [_psd_factor(c) for c in spec.covariances]

    if spec.tag == "GaussianMixture":
        labels = rng.choice(len(spec.weights), size=m, p=spec.weights)
        g = rng.standard_normal((m, d))
        points = np.empty((m, d))
        for q, factor in enumerate(factors):
            idx = labels == q
            points[idx] = spec.means[q] + g[idx] @ factor.T
        return PointCloud(points=points, labels=labels)

    mean = spec.means[0]
    factor = factors[0]
    if spec.tag == "InverseWishartGaussian":
        scale = spec.covariances[0]
        if spec.nu > d + 1:
            # escala con media E[Σ] igual a la covarianza tabulada
            scale = (spec.nu - d - 1) * scale
        cov = np.atleast_2d(sps.invwishart.rvs(df=spec.nu, scale=scale, random_state=rng))
        factor = _psd_factor((cov + cov.T) / 2.0)

    g = rng.standard_normal((m, d)) @ factor.T
    if spec.tag in ("StudentT", "Cauchy"):
        df = 1.0 if spec.tag == "Cauchy" else spec.df
        g = g * np.sqrt(df / rng.chisquare(df, size=m))[:, None]
    elif spec.tag == "Laplace":
        g = g * np.sqrt(rng.exponential(size=m))[:, None]
    return PointCloud(points=mean + g)


def _mixture_means(q: int, d: int) -> np.ndarray:
    means = np.zeros((q, d))
    if q == 2:
        half = d // 2
        means[0, half:] = 1.0
        means[1, :d - half] = 1.0
    elif q == 3:
        means[0, :4] = 1.0
        means[1, d - 3:] = 1.0
        mid = (d - 3) // 2
        means[2, mid:mid + 3] = 1.0
    else:
        means[0, :4] = 1.0
        means[1, 2:4] = 1.0
        mid = (d - 2) // 2
        means[2, mid:mid + 2] = 1.0
        means[3, d - 2:] = 1.0
    return means


def catalog_distribution_pair(name: str, d: int, seed: int) -> Tuple[DistributionSpec, DistributionSpec]:
    """
    Las dos distribuciones comparadas para cada clase del catálogo.

    Clases no mezcla: medias 0 y 1 (Laplace: ambas 0) con covarianzas M_1, M_2.
    Mezclas: ambas usan las medias tabuladas y pesos uniformes, cada una con
    sus propias covarianzas diagonales D_q.
    """
    if name not in DISTRIBUTION_CATALOG:
        raise ParameterError(f"distribución desconocida: {name}")
    if name.startswith("mixture"):
        q = int(name[-1])
        if d < (2 if q == 2 else 4):
            raise DimensionError(f"{name} necesita d >= {2 if q == 2 else 4}")
        means = _mixture_means(q, d)
        specs = []
        for side in range(2):
            covs = [make_cov(CovRecipe(kind="D_diag", d=d, seed=derive_seed(seed, f"{name}-cov-{side}", k)))
                    for k in range(q)]
            specs.append(DistributionSpec(tag="GaussianMixture", means=means, covariances=covs,
                                          weights=np.full(q, 1.0 / q), name=f"{name}-{side + 1}"))
        return specs[0], specs[1]

    covs = [make_cov(CovRecipe(kind="M_full", d=d, seed=derive_seed(seed, f"{name}-cov", k))) for k in range(2)]
    means = [np.zeros(d), np.zeros(d) if name == "laplace" else np.ones(d)]
    tag = {"gaussian": "Gaussian", "student_t": "StudentT", "cauchy": "Cauchy",
           "laplace": "Laplace", "inverse_wishart": "InverseWishartGaussian"}[name]
    extra = {}
    if tag == "StudentT":
        extra["df"] = 10.0
    if tag == "InverseWishartGaussian":
        extra["nu"] = 10.0
    return tuple(
        DistributionSpec(tag=tag, means=means[k], covariances=covs[k], name=f"{name}-{k + 1}", **extra)
        for k in range(2)
    )


def benchmark_clouds(pair: Tuple[DistributionSpec, DistributionSpec], points: int,
                     master_seed: int) -> Tuple[PointCloud, PointCloud]:
    """Las dos nubes fijas de un benchmark."""
    spec_a, spec_b = pair
    return (sample_distribution(spec_a, points, derive_seed(master_seed, "swd-cloud-a")),
            sample_distribution(spec_b, points, derive_seed(master_seed, "swd-cloud-b")))


def swd_benchmark(pair: Tuple[DistributionSpec, DistributionSpec], methods: Sequence[Method],
                  multipliers: Sequence[int], trials: int, points: int, master_seed: int,
                  p: float = 2.0, threads: Optional[int] = None, provider: Optional[NomcProvider] = None,
                  reference_directions: Optional[int] = None, resamples: Optional[int] = None,
                  label: Optional[str] = None) -> MseTable:
    """
    Tabla de MSE de la SWD estimada con s = multiplicador·d direcciones.

    Las nubes se muestrean una vez. La referencia es el oráculo gaussiano
    (par gaussiano con p = 2) o la SWD de las mismas nubes con muchas
    direcciones MC.
    """
    spec_a, spec_b = pair
    if spec_a.d != spec_b.d:
        raise DimensionError("las dos distribuciones deben tener la misma dimensión")
    if trials < 2:
        raise ParameterError("se necesitan al menos 2 ensayos")
    d = spec_a.d
    methods = [Method(m) for m in methods]
    provider = provider or NomcProvider(master_seed)
    label = label or spec_a.name.rsplit("-", 1)[0] or spec_a.tag

    cloud_a, cloud_b = benchmark_clouds(pair, points, master_seed)

    if spec_a.tag == "Gaussian" and spec_b.tag == "Gaussian" and p == 2:
        truth, half = gaussian_swd_oracle(spec_a.means[0], spec_a.covariances[0], spec_b.means[0],
                                          spec_b.covariances[0], seed=derive_seed(master_seed, "swd-oracle"))
        logger.info(f"SWD de referencia (oráculo gaussiano) {truth:.6g} ± {half:.2g}")
    else:
        n_ref = settings.SWD_REFERENCE_DIRECTIONS if reference_directions is None else reference_directions
        ref_dirs = sample_directions(n_ref, d, make_rng(derive_seed(master_seed, "swd-reference")))
        truth = swd_estimate(cloud_a, cloud_b, ref_dirs, p)
        logger.info(f"SWD de referencia ({n_ref} direcciones MC) {truth:.6g}")

    law = IsotropicLaw.sphere(d)
    provider.prepare(methods, d, [k * d for k in multipliers])

    def trial(t: int) -> np.ndarray:
        errors = np.empty((len(methods), len(multipliers), 1))
        for k, mult in enumerate(multipliers):
            for i, method in enumerate(methods):
                seed = derive_seed(master_seed, f"swd-{method.value}-{mult}", t)
                dirs = provider.ensemble(method, law, mult * d, seed)
                errors[i, k, 0] = swd_estimate(cloud_a, cloud_b, dirs, p) - truth
        return errors

    logger.info(f"Benchmark SWD {label}: d={d}, {points} puntos, {trials} ensayos")
    errors = np.stack(run_trials(trial, trials, threads))
    return MseTable(key_column="distribution",
                    cells=cells_from_errors(errors, label, methods, multipliers, d, master_seed, resamples))
