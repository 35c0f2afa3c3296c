"""
Ensembles iid, ortogonales (OMC), ortogonales por bloques (B-OMC) y QMC de
Halton a partir de leyes isotrópicas, más rotaciones de Haar y
renormalización radial.
"""

import logging
from typing import Optional

import numpy as np
from scipy import special
from scipy.stats import qmc

from app.config.settings import settings
from app.models.models import Ensemble, IsotropicLaw, Method
from app.utils.errors import (
    CapacityError,
    DegeneracyError,
    DimensionError,
    DomainError,
    ParameterError,
    PreconditionError,
)
from app.utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

GS_TOLERANCE = 1e-10
HALTON_MAX_DIMS = 512
MAX_RESAMPLES = 64


def check_law(law: IsotropicLaw) -> IsotropicLaw:
    """Valida los parámetros de la ley (λ > 0, ν > 0)."""
    if law.tag == "GaussianScaled" and (law.lengthscale is None or not law.lengthscale > 0):
        raise ParameterError(f"GaussianScaled necesita lengthscale > 0, recibido {law.lengthscale}")
    if law.tag == "MaternSpectral" and (law.nu is None or not law.nu > 0):
        raise ParameterError(f"MaternSpectral necesita nu > 0, recibido {law.nu}")
    return law


def sample_radii(law: IsotropicLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    """Radios independientes de la ley radial de `law`."""
    d = law.d
    if law.tag == "UnitSphere":
        return np.ones(n)
    if law.tag == "GaussianStd":
        return np.sqrt(rng.chisquare(d, size=n))
    if law.tag == "GaussianScaled":
        return np.sqrt(rng.chisquare(d, size=n)) / law.lengthscale
    if law.tag == "MaternSpectral":
        # ‖g·√(2ν/u)‖ con u ~ chi-cuadrado(2ν): representación t multivariante
        g = np.sqrt(rng.chisquare(d, size=n))
        u = rng.chisquare(2.0 * law.nu, size=n)
        return g * np.sqrt(2.0 * law.nu / u)
    # LaplaceProduct: norma de un vector de la ley producto
    return np.linalg.norm(rng.laplace(size=(n, d)), axis=1)


def _raw_draws(law: IsotropicLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectores a ortogonalizar: gaussianos, o de la ley producto para Laplace."""
    if law.tag == "LaplaceProduct":
        return rng.laplace(size=(n, law.d))
    return rng.standard_normal((n, law.d))


def sample_directions(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Direcciones uniformes en S^{d-1}."""
    while True:
        g = rng.standard_normal((n, d))
        norms = np.linalg.norm(g, axis=1)
        if np.all(norms > 0):
            return g / norms[:, None]


def sample_iid(law: IsotropicLaw, s: int, seed: int) -> Ensemble:
    """
    Ensemble de s muestras independientes de la ley.

    Args:
        law: Ley isotrópica (LaplaceProduct se muestrea directamente como producto).
        s: Número de filas.
        seed: Semilla de 64 bits.

    Returns:
        Ensemble: método MC.
    """
    check_law(law)
    if s < 1:
        raise ParameterError("s debe ser >= 1")
    rng = make_rng(seed)
    if law.tag == "LaplaceProduct":
        rows = rng.laplace(size=(s, law.d))
    else:
        rows = sample_directions(s, law.d, rng) * sample_radii(law, s, rng)[:, None]
    return Ensemble(rows=rows, method=Method.MC, law=law, seed=seed)


def gram_schmidt(rows: np.ndarray) -> np.ndarray:
    """
    Ortonormaliza las filas con Gram-Schmidt modificado (con reortogonalización).

    Raises:
        DegeneracyError: si algún residuo cae por debajo de 1e-10.
    """
    a = np.array(rows, dtype=float)
    if a.ndim != 2:
        raise DimensionError("gram_schmidt espera una matriz")
    k, d = a.shape
    if k > d:
        raise DimensionError(f"no hay {k} vectores ortogonales en dimensión {d}")

    q = np.zeros_like(a)
    for i in range(k):
        v = a[i].copy()
        # dos pasadas: la segunda corrige la pérdida de ortogonalidad por redondeo
        for _ in range(2):
            for j in range(i):
                v -= np.dot(q[j], v) * q[j]
        norm = np.linalg.norm(v)
        if norm < GS_TOLERANCE:
            raise DegeneracyError(f"residuo {norm:.3e} en la fila {i}")
        q[i] = v / norm
    return q


def sample_omc_block(law: IsotropicLaw, s: int, seed: int) -> Ensemble:
    """
    Bloque ortogonal de s <= d filas: direcciones ortonormales por radios
    independientes de la ley radial.
    """
    check_law(law)
    if not 1 <= s <= law.d:
        raise DimensionError(f"un bloque ortogonal necesita 1 <= s <= d, recibido s={s}, d={law.d}")

    rng = make_rng(seed)
    for attempt in range(MAX_RESAMPLES):
        try:
            q = gram_schmidt(_raw_draws(law, s, rng))
            break
        except DegeneracyError as e:
            # se descarta el bloque completo y se usa el siguiente subflujo
            logger.debug(f"Bloque degenerado ({e}); nuevo intento {attempt + 1}")
            rng = make_rng(derive_seed(seed, "gs-resample", attempt + 1))
    else:
        raise DegeneracyError(f"{MAX_RESAMPLES} bloques degenerados consecutivos")

    rows = q * sample_radii(law, s, rng)[:, None]
    return Ensemble(rows=rows, method=Method.OMC, law=law, seed=seed, block_size=law.d)


def block_sizes(s: int, d: int):
    """Particiona s en bloques de tamaño d; el último tiene s mod d filas."""
    full, rest = divmod(s, d)
    return [d] * full + ([rest] if rest else [])


def bomc_block_seed(seed: int, index: int) -> int:
    return derive_seed(seed, "bomc-block", index)


def sample_bomc(law: IsotropicLaw, s: int, seed: int) -> Ensemble:
    """Concatena ceil(s/d) bloques ortogonales con semillas independientes."""
    check_law(law)
    if s < 1:
        raise ParameterError("s debe ser >= 1")
    blocks = [
        sample_omc_block(law, size, bomc_block_seed(seed, k)).rows
        for k, size in enumerate(block_sizes(s, law.d))
    ]
    return Ensemble(rows=np.vstack(blocks), method=Method.BOMC, law=law, seed=seed, block_size=law.d)


def sample_omc_blocks(law: IsotropicLaw, s: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    n bloques ortogonales de s filas a la vez, como arreglo (n, s, d).

    Usa QR apilado con corrección de signo de la diagonal de R, igual en ley a
    Gram-Schmidt sobre filas gaussianas.
    """
    check_law(law)
    d = law.d
    if not 1 <= s <= d:
        raise DimensionError(f"un bloque ortogonal necesita 1 <= s <= d, recibido s={s}, d={d}")
    if law.tag == "LaplaceProduct":
        g = rng.laplace(size=(n, d, s))
    else:
        g = rng.standard_normal((n, d, s))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    q = q * signs[:, None, :]
    radii = sample_radii(law, n * s, rng).reshape(n, s)
    return np.swapaxes(q, 1, 2) * radii[:, :, None]


def random_rotation(d: int, seed: int) -> np.ndarray:
    """Matriz ortogonal d×d con distribución de Haar en O(d)."""
    if d < 1:
        raise DimensionError("d debe ser >= 1")
    rng = make_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs[None, :]


def rotate_ensemble(e: Ensemble, rotation: np.ndarray) -> Ensemble:
    """Aplica ω -> Rω a cada fila."""
    return e.model_copy(update={"rows": _readonly(e.rows @ rotation.T)})


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def halton_points(start: int, count: int, dims: int) -> np.ndarray:
    """Puntos de Halton de índices start, ..., start+count-1 (índices >= 1)."""
    if dims < 1:
        raise DimensionError("dims debe ser >= 1")
    if dims > HALTON_MAX_DIMS:
        raise CapacityError(f"dims={dims} excede el máximo de {HALTON_MAX_DIMS} bases primas")
    if start < 1:
        raise DomainError("los índices de Halton empiezan en 1")
    sampler = qmc.Halton(d=dims, scramble=False)
    # el índice 0 de la sucesión sin mezclar es el origen
    sampler.fast_forward(start)
    return sampler.random(count)


def halton_point(index: int, dims: int) -> np.ndarray:
    """Coordenada j = inverso radical de `index` en el j-ésimo primo."""
    if index < 1:
        raise DomainError("index debe ser >= 1")
    return halton_points(index, 1, dims)[0]


def inverse_normal_cdf(u):
    """Cuantil de la normal estándar; acepta escalares o arreglos en (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise DomainError("u debe estar en el intervalo abierto (0, 1)")
    out = special.ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


def qmc_gaussian_points(d: int, s: int, seed: int, skip: Optional[int] = None) -> np.ndarray:
    """
    Puntos de Halton con desplazamiento de Cranley-Patterson, llevados a
    marginales gaussianas por la inversa de la CDF normal.
    """
    skip = settings.HALTON_SKIP if skip is None else skip
    rng = make_rng(derive_seed(seed, "qmc-shift"))
    shift = rng.random(d)
    u = np.mod(halton_points(skip + 1, s, d) + shift, 1.0)
    # el desplazamiento puede dejar un punto exactamente en 0
    tiny = np.finfo(float).eps
    u = np.clip(u, tiny, 1.0 - tiny)
    return inverse_normal_cdf(u)


def sample_qmc(law: IsotropicLaw, s: int, seed: int, skip: Optional[int] = None) -> Ensemble:
    """Ensemble QMC: Halton desplazado, gaussianizado, normalizado y con radios de la ley."""
    check_law(law)
    if s < 1:
        raise ParameterError("s debe ser >= 1")
    z = qmc_gaussian_points(law.d, s, seed, skip)
    norms = np.linalg.norm(z, axis=1)
    directions = z / norms[:, None]
    rng = make_rng(derive_seed(seed, "qmc-radii"))
    rows = directions * sample_radii(law, s, rng)[:, None]
    return Ensemble(rows=rows, method=Method.QMC, law=law, seed=seed)


def radial_renormalize(directions: np.ndarray, law: IsotropicLaw, seed: int,
                       method: Method = Method.MC, block_size: Optional[int] = None) -> Ensemble:
    """
    Escala la fila i por un radio independiente de la ley radial.

    Raises:
        PreconditionError: si alguna fila no es unitaria (tolerancia 1e-8).
    """
    check_law(law)
    u = np.asarray(directions, dtype=float)
    norms = np.linalg.norm(u, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-8):
        raise PreconditionError("radial_renormalize espera filas unitarias")
    if law.tag == "UnitSphere":
        rows = u
    else:
        rows = u * sample_radii(law, u.shape[0], make_rng(seed))[:, None]
    return Ensemble(rows=rows, method=method, law=law, seed=seed, block_size=block_size)


def sample_ensemble(method: Method, law: IsotropicLaw, s: int, seed: int) -> Ensemble:
    """Despacho para los métodos que no necesitan optimización previa."""
    if method == Method.MC:
        return sample_iid(law, s, seed)
    if method == Method.QMC:
        return sample_qmc(law, s, seed)
    if method == Method.OMC:
        return sample_omc_block(law, s, seed)
    if method == Method.BOMC:
        return sample_bomc(law, s, seed)
    raise ParameterError(f"el método {method.value} requiere un NomcProvider")
