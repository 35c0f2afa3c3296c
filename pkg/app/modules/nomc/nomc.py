"""
Ensembles casi ortogonales (NOMC).

opt-NOMC minimiza una energía de repulsión entre partículas sobre la esfera;
alg-NOMC usa caracteres de polinomios sobre F_p. También incluye la
coherencia A(Ω) y la persistencia de ensembles en CSV decimal.
"""

import logging
import math
import os
import re
import threading
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from app.models.models import (
    AlgNomcSpec,
    Ensemble,
    IsotropicLaw,
    Method,
    OptNomcConfig,
    OptNomcResult,
    OptNomcTrace,
)
from app.modules.ensembles.ensembles import (
    radial_renormalize,
    random_rotation,
    sample_bomc,
    sample_ensemble,
)
from app.utils.errors import (
    ArityError,
    DimensionError,
    ParameterError,
    ParseError,
    PreconditionError,
)
from app.utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

HEADER_PREFIX = "# structmc-ensemble v1"
MAX_ENUMERATION = 10_000_000
ALG_BLOCK_TOLERANCE = 1e-6


# ---------------------------------------------------------------------------
# opt-NOMC
# ---------------------------------------------------------------------------

def pair_energy(a: np.ndarray, b: np.ndarray, delta: float) -> float:
    """E(a, b) = δ / (δ + ‖a − b‖²)."""
    if not delta > 0:
        raise ParameterError("delta debe ser positivo")
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(delta / (delta + np.dot(diff, diff)))


def _pairwise(particles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    diff = particles[:, None, :] - particles[None, :, :]
    return diff, np.einsum("ijk,ijk->ij", diff, diff)


def total_energy(particles: np.ndarray, delta: float) -> float:
    """Suma de E(ω_i, ω_j) sobre pares i < j."""
    _, sq = _pairwise(np.asarray(particles, dtype=float))
    iu = np.triu_indices(sq.shape[0], k=1)
    return float(np.sum(delta / (delta + sq[iu])))


def _gradient_from(diff: np.ndarray, sq: np.ndarray, delta: float) -> np.ndarray:
    w = -2.0 * delta / (delta + sq) ** 2
    np.fill_diagonal(w, 0.0)
    return np.einsum("ij,ijk->ik", w, diff)


def energy_gradient(particles: np.ndarray, delta: float) -> np.ndarray:
    """
    Fila i: Σ_{j≠i} −2δ(ω_i − ω_j) / (δ + ‖ω_i − ω_j‖²)².

    Es el gradiente ambiente (sin proyectar al espacio tangente).
    """
    if not delta > 0:
        raise ParameterError("delta debe ser positivo")
    x = np.asarray(particles, dtype=float)
    diff, sq = _pairwise(x)
    return _gradient_from(diff, sq, delta)


def _distance_extremes(sq: np.ndarray) -> Tuple[float, float]:
    n = sq.shape[0]
    if n < 2:
        return 0.0, 0.0
    iu = np.triu_indices(n, k=1)
    dist = np.sqrt(np.maximum(sq[iu], 0.0))
    return float(dist.max()), float(dist.min())


def opt_nomc_build(
    d: int,
    s: int,
    cfg: Optional[OptNomcConfig] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> OptNomcResult:
    """
    Construye un ensemble opt-NOMC en la esfera unidad.

    Inicializa con direcciones B-OMC, aplica T pasos ω_i ← normalizar(ω_i − ηF_i)
    y devuelve el ensemble rotado por una rotación de Haar.

    Args:
        d: Dimensión (>= 2).
        s: Número de partículas.
        cfg: Hiperparámetros (δ, η, T, parada temprana, semilla).
        callback: Llamado como callback(t, partículas) tras cada iteración.

    Returns:
        OptNomcResult: ensemble, traza por iteración y estado inicial.
    """
    cfg = cfg or OptNomcConfig()
    if d < 2:
        raise DimensionError("opt-NOMC necesita d >= 2")
    if s < 1:
        raise ParameterError("s debe ser >= 1")

    law = IsotropicLaw.sphere(d)
    init = sample_bomc(law, s, derive_seed(cfg.seed, "opt-nomc-init")).rows
    x = np.array(init)
    trace = OptNomcTrace()
    gaps = []

    logger.info(f"opt-NOMC: d={d}, s={s}, T={cfg.T}, δ={cfg.delta}, η={cfg.eta}")
    t = 0
    while True:
        diff, sq = _pairwise(x)
        d_max, d_min = _distance_extremes(sq)
        iu = np.triu_indices(s, k=1)
        trace.energy.append(float(np.sum(cfg.delta / (cfg.delta + sq[iu]))))
        trace.d_max.append(d_max)
        trace.d_min.append(d_min)
        gaps.append(d_max - d_min)

        w = cfg.early_stop_window
        if trace.heuristic_iteration is None and t >= w and abs(gaps[t] - gaps[t - w]) < cfg.early_stop_tol:
            trace.heuristic_iteration = t
            logger.info(f"opt-NOMC: heurística D_max - D_min estable en la iteración {t}")
            if cfg.early_stop:
                trace.stopped_early = True
                break
        if t >= cfg.T:
            break

        grad = _gradient_from(diff, sq, cfg.delta)
        x = x - cfg.eta * grad
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        t += 1
        if callback is not None:
            callback(t, x)

    trace.iterations = t
    rotation = random_rotation(d, derive_seed(cfg.seed, "opt-nomc-rotation"))
    rows = x @ rotation.T
    logger.info(f"opt-NOMC terminado tras {t} iteraciones; energía {trace.energy[0]:.6g} -> {trace.energy[-1]:.6g}")
    return OptNomcResult(
        ensemble=Ensemble(rows=rows, method=Method.OPT_NOMC, law=law, seed=cfg.seed),
        trace=trace,
        initial_rows=init,
    )


# ---------------------------------------------------------------------------
# alg-NOMC
# ---------------------------------------------------------------------------

def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    for k in range(3, math.isqrt(n) + 1, 2):
        if n % k == 0:
            return False
    return True


def nearest_prime(n: float) -> int:
    """Primo impar más cercano a n (el menor en caso de empate)."""
    target = max(3, int(round(n)))
    for delta in range(0, target + 1):
        for cand in (target - delta, target + delta):
            if cand >= 3 and is_prime(cand):
                return cand
    return 3


def next_prime_at_least(n: int) -> int:
    cand = max(3, n)
    while not is_prime(cand):
        cand += 1
    return cand


def _check_prime(p: int):
    if p == 2 or not is_prime(p):
        raise ParameterError(f"p={p} debe ser un primo impar")


def _character_rows(p: int, coeffs: np.ndarray) -> np.ndarray:
    """Filas v(c_1..c_r) para una matriz de coeficientes (n, r)."""
    coeffs = np.asarray(coeffs, dtype=np.int64)
    x = np.arange(p, dtype=np.int64)
    h = np.zeros((coeffs.shape[0], p), dtype=np.int64)
    # Horner exacto módulo p: c_r x^r + ... + c_1 x = x(c_1 + x(c_2 + ...))
    for k in range(coeffs.shape[1] - 1, -1, -1):
        h = (h * x + coeffs[:, k:k + 1]) % p
    exponents = (h * x) % p
    angles = 2.0 * np.pi * exponents / p
    rows = np.empty((coeffs.shape[0], 2 * p))
    rows[:, 0::2] = np.cos(angles)
    rows[:, 1::2] = np.sin(angles)
    return rows / math.sqrt(p)


def poly_character_vector(p: int, coeffs) -> np.ndarray:
    """
    Codificación real (a_1, b_1, ..., a_p, b_p) de
    g(x) = p^{-1/2} exp(2πi(c_r x^r + ... + c_1 x)/p), con a_j + i b_j = g(j − 1).
    """
    _check_prime(p)
    c = np.asarray(coeffs, dtype=np.int64).ravel()
    if c.size < 1 or np.any(c < 0) or np.any(c >= p):
        raise ParameterError(f"los coeficientes deben estar en [0, {p})")
    return _character_rows(p, c[None, :])[0]


def _tuples_from_indices(indices: np.ndarray, p: int, r: int) -> np.ndarray:
    """Índice -> (c_1, ..., c_r) en base p, con c_1 como dígito menos significativo."""
    idx = np.asarray(indices, dtype=np.int64)
    return np.column_stack([(idx // p ** k) % p for k in range(r)])


def alg_nomc_build(spec: AlgNomcSpec, seed: int, d: Optional[int] = None) -> Ensemble:
    """
    Ensemble alg-NOMC en R^{2p}: todas las p^r tuplas, o un subconjunto
    uniforme de selected_count tuplas no nulas, rotado por Haar.

    Raises:
        DimensionError: si se pide una dimensión distinta de 2p.
    """
    p, r = spec.p, spec.r
    if d is not None and d != 2 * p:
        suggestion = nearest_prime(d / 2)
        raise DimensionError(
            f"alg-NOMC produce dimensión 2p={2 * p}, se pidió d={d}; "
            f"use p={suggestion} (d={2 * suggestion}) o proyecte el ensemble"
        )
    _check_prime(p)

    total = p ** r
    count = spec.selected_count
    if count is not None and count > total:
        raise ParameterError(f"selected_count={count} supera p^r={total}")
    if total > MAX_ENUMERATION:
        raise ParameterError(f"p^r={total} es demasiado grande para enumerar")

    if count is None or count == total:
        indices = np.arange(total, dtype=np.int64)
    else:
        if count > total - 1:
            raise ParameterError("no hay suficientes tuplas no nulas")
        # prefijo de Fisher-Yates sobre las tuplas no nulas
        perm = make_rng(derive_seed(seed, "alg-nomc-subsample")).permutation(total - 1)
        indices = perm[:count].astype(np.int64) + 1

    rows = _character_rows(p, _tuples_from_indices(indices, p, r))
    rotation = random_rotation(2 * p, derive_seed(seed, "alg-nomc-rotation"))
    logger.info(f"alg-NOMC: p={p}, r={r}, {rows.shape[0]} filas en dimensión {2 * p}")
    return Ensemble(rows=rows @ rotation.T, method=Method.ALG_NOMC, law=IsotropicLaw.sphere(2 * p), seed=seed)


def algebraic_blocks(d: int, s: int, seed: int) -> np.ndarray:
    """
    Base alg-NOMC (s, d) para cualquier dimensión.

    Usa caracteres polinomiales sin la coordenada constante x = 0, que viven
    en R^{2(p-1)} con p el menor primo impar tal que 2(p-1) >= d; si sobra
    dimensión se proyectan con una rotación de Haar fija. Las filas se
    agrupan en bloques de d ortonormalizados por Gram-Schmidt, de modo que
    la unión de bloques completos es un marco ajustado.
    """
    if d < 1 or s < 1:
        raise ParameterError("d y s deben ser >= 1")
    p = next_prime_at_least(math.ceil(d / 2) + 1)
    r = 2
    while p ** r - 1 < 2 * s:
        r += 1
    if p ** r > MAX_ENUMERATION:
        raise ParameterError(f"p^r={p ** r} es demasiado grande para enumerar")

    perm = make_rng(derive_seed(seed, "alg-nomc-subsample")).permutation(p ** r - 1) + 1
    rows = _character_rows(p, _tuples_from_indices(perm, p, r))[:, 2:]
    if rows.shape[1] > d:
        rotation = random_rotation(rows.shape[1], derive_seed(seed, "alg-nomc-projection"))
        rows = (rows @ rotation.T)[:, :d]

    filler = make_rng(derive_seed(seed, "alg-nomc-completion"))
    out = np.empty((s, d))
    cursor = 0
    for start in range(0, s, d):
        block = []
        while len(block) < min(d, s - start):
            if cursor < rows.shape[0]:
                v = rows[cursor].copy()
                cursor += 1
            else:
                v = filler.standard_normal(d)
            scale = np.linalg.norm(v)
            for b in block:
                v -= (v @ b) * b
            norm = np.linalg.norm(v)
            # filas dependientes del bloque se descartan
            if norm > ALG_BLOCK_TOLERANCE * scale:
                block.append(v / norm)
        out[start:start + len(block)] = block
    logger.info(f"alg-NOMC por bloques: p={p}, r={r}, {s} filas en dimensión {d}")
    return out


def coherence(e: Union[Ensemble, np.ndarray], chunk: int = 1024) -> float:
    """A(Ω) = max_{i≠j} |⟨ω_i, ω_j⟩| / (‖ω_i‖‖ω_j‖)."""
    rows = e.rows if isinstance(e, Ensemble) else np.asarray(e, dtype=float)
    s = rows.shape[0]
    if s < 2:
        raise ArityError("la coherencia necesita al menos 2 filas")
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0):
        raise PreconditionError("la coherencia no está definida con filas nulas")
    u = rows / norms[:, None]

    best = 0.0
    for start in range(0, s, chunk):
        block = u[start:start + chunk]
        g = np.abs(block @ u.T)
        k = block.shape[0]
        g[np.arange(k), np.arange(start, start + k)] = 0.0
        best = max(best, float(g.max()))
    return min(best, 1.0)


# ---------------------------------------------------------------------------
# Persistencia
# ---------------------------------------------------------------------------

def _law_extras(law: IsotropicLaw) -> str:
    extras = ""
    if law.lengthscale is not None:
        extras += f" lengthscale={law.lengthscale!r}"
    if law.nu is not None:
        extras += f" nu={law.nu!r}"
    return extras


def save_ensemble(e: Ensemble, path: str) -> str:
    """
    Guarda el ensemble: cabecera de una línea y s líneas de d decimales con
    17 cifras significativas, finales de línea LF, UTF-8.
    """
    header = (
        f"{HEADER_PREFIX} method={e.method.value} law={e.law.tag} "
        f"d={e.d} s={e.s} seed={e.seed}{_law_extras(e.law)}"
    )
    if e.block_size is not None:
        header += f" block_size={e.block_size}"

    lines = [header]
    lines.extend(",".join(f"{v:.17g}" for v in row) for row in e.rows)

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    logger.info(f"Ensemble guardado en {path} ({e.s}×{e.d}, {e.method.value})")
    return path


_HEADER_RE = re.compile(r"^" + re.escape(HEADER_PREFIX) + r"((?: \w+=\S+)+)$")
_REQUIRED = ("method", "law", "d", "s", "seed")
_OPTIONAL = ("lengthscale", "nu", "block_size")


def _parse_header(line: str) -> Dict[str, str]:
    m = _HEADER_RE.match(line)
    if not m:
        raise ParseError("cabecera mal formada", line=1)
    fields = dict(tok.split("=", 1) for tok in m.group(1).split())
    missing = [k for k in _REQUIRED if k not in fields]
    if missing:
        raise ParseError(f"faltan campos en la cabecera: {', '.join(missing)}", line=1)
    unknown = [k for k in fields if k not in _REQUIRED + _OPTIONAL]
    if unknown:
        raise ParseError(f"campos desconocidos en la cabecera: {', '.join(unknown)}", line=1)
    return fields


def load_ensemble(path: str) -> Ensemble:
    """
    Lee un archivo escrito por save_ensemble.

    Raises:
        ParseError: cabecera mal formada, número de filas o columnas
            incorrecto, o valores no finitos; indica el número de línea.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("archivo vacío", line=1)

    fields = _parse_header(lines[0])
    try:
        d = int(fields["d"])
        s = int(fields["s"])
        seed = int(fields["seed"])
        method = Method(fields["method"])
        law = IsotropicLaw(
            tag=fields["law"],
            d=d,
            lengthscale=float(fields["lengthscale"]) if "lengthscale" in fields else None,
            nu=float(fields["nu"]) if "nu" in fields else None,
        )
        block_size = int(fields["block_size"]) if "block_size" in fields else None
    except ValueError as e:
        raise ParseError(f"cabecera inválida: {e}", line=1)
    if s < 1 or d < 1:
        raise ParseError("s y d deben ser positivos", line=1)

    data = lines[1:]
    if len(data) != s:
        raise ParseError(f"la cabecera declara s={s} filas pero hay {len(data)}", line=len(data) + 2)

    rows = np.empty((s, d))
    for i, raw in enumerate(data):
        lineno = i + 2
        cells = raw.split(",")
        if len(cells) != d:
            raise ParseError(f"se esperaban {d} valores, hay {len(cells)}", line=lineno)
        try:
            values = [float(c) for c in cells]
        except ValueError:
            raise ParseError("valor no numérico", line=lineno)
        if not all(math.isfinite(v) for v in values):
            raise ParseError("valor no finito", line=lineno)
        rows[i] = values

    return Ensemble(rows=rows, method=method, law=law, seed=seed, block_size=block_size)


# ---------------------------------------------------------------------------
# Reutilización del costo único para los benchmarks
# ---------------------------------------------------------------------------

class NomcProvider:
    """
    Entrega ensembles de cualquier método para los ensayos de un benchmark.

    Los ensembles NOMC base se construyen una sola vez por (método, d, s); cada
    ensayo aplica una nueva rotación de Haar y renormaliza los radios.
    """

    def __init__(self, master_seed: int, nomc_iterations: int = 2000, opt_config: Optional[OptNomcConfig] = None):
        """
        Args:
            master_seed: Semilla maestra del benchmark.
            nomc_iterations: Iteraciones T de opt-NOMC.
            opt_config: Configuración completa de opt-NOMC (tiene prioridad sobre nomc_iterations).
        """
        self.master_seed = master_seed
        self.opt_config = opt_config or OptNomcConfig(T=nomc_iterations)
        self._bases: Dict[Tuple[Method, int, int], np.ndarray] = {}
        self._lock = threading.Lock()

    def _build_base(self, method: Method, d: int, s: int) -> np.ndarray:
        seed = derive_seed(self.master_seed, f"{method.value}-base", d * 1_000_003 + s)
        if method == Method.OPT_NOMC:
            cfg = self.opt_config.model_copy(update={"seed": seed})
            return opt_nomc_build(d, s, cfg).ensemble.rows
        return algebraic_blocks(d, s, seed)

    def base(self, method: Method, d: int, s: int) -> np.ndarray:
        key = (method, d, s)
        with self._lock:
            if key not in self._bases:
                self._bases[key] = self._build_base(method, d, s)
            return self._bases[key]

    def prepare(self, methods, d: int, s_values) -> None:
        """Construye de antemano las bases necesarias (fuera de los hilos de ensayo)."""
        for method in methods:
            if method in (Method.OPT_NOMC, Method.ALG_NOMC):
                for s in s_values:
                    self.base(method, d, s)

    def ensemble(self, method: Method, law: IsotropicLaw, s: int, seed: int) -> Ensemble:
        if method not in (Method.OPT_NOMC, Method.ALG_NOMC):
            return sample_ensemble(method, law, s, seed)

        base = self.base(method, law.d, s)
        rotation = random_rotation(law.d, derive_seed(seed, "nomc-trial-rotation"))
        u = base @ rotation.T
        u = u / np.linalg.norm(u, axis=1, keepdims=True)
        return radial_renormalize(u, law, derive_seed(seed, "nomc-trial-radii"), method=method)
