"""
Verificación empírica de las propiedades de los estimadores ortogonales:
dependencia negativa, dominancia de FGM, orden de MSE, colas, transformada
de Legendre empírica y barridos de error uniforme.

Cada diagnóstico devuelve un DiagnosticReport con veredicto consistent,
violated o inconclusive. Los intervalos usan el nivel de veredicto (99%).
"""

import itertools
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config.settings import settings
from app.models.models import (
    DiagnosticReport,
    IsotropicLaw,
    KernelFamily,
    KernelSpec,
    Method,
    StatisticEntry,
    SweepRow,
    SweepTable,
    TestFunction,
)
from app.modules.ensembles.ensembles import block_sizes, sample_directions, sample_omc_blocks
from app.modules.kernels.kernels import (
    exact_kernel,
    feature_matrix,
    has_closed_form,
    make_feature_bundle,
    spectral_law,
)
from app.modules.nomc.nomc import NomcProvider
from app.utils.errors import (
    ClassError,
    ConfigError,
    DimensionError,
    GridRangeError,
    InsufficientDataError,
    ParameterError,
    PreconditionError,
)
from app.utils.parallel import run_trials
from app.utils.seeding import derive_seed, make_rng
from app.utils.stats import bootstrap_half_width, bootstrap_interval, wilson_interval

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-8
TRIAL_CHUNK = 10_000
MIN_TRIALS = {"nd": 10_000, "mgf": 10_000, "mse": 450, "tail": 100_000}


# ---------------------------------------------------------------------------
# Funciones de prueba
# ---------------------------------------------------------------------------

def apply_test_function(f: TestFunction, u):
    u = np.asarray(u, dtype=float)
    if f.tag == "Square":
        return u * u
    if f.tag == "AbsCos":
        return np.cos(u)
    return np.exp(f.c * u)


def exact_expectation(f: TestFunction, z) -> float:
    """F_{f,D}(z) = E f(ωᵀz) con ω ~ N(0, I): ωᵀz ~ N(0, ‖z‖²)."""
    z = np.asarray(z, dtype=float)
    q = float(z @ z)
    if f.tag == "Square":
        return q
    if f.tag == "AbsCos":
        return math.exp(-q / 2.0)
    return math.exp(f.c * f.c * q / 2.0)


def _check_unit(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or abs(np.linalg.norm(z) - 1.0) > UNIT_TOL:
        raise PreconditionError("z debe ser un vector unitario")
    return z


def _check_trials(claim: str, trials: int):
    if trials < MIN_TRIALS[claim]:
        raise PreconditionError(f"{claim} necesita al menos {MIN_TRIALS[claim]} ensayos, recibido {trials}")


def _projections(ort: bool, d: int, s: int, z: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Valores ω_iᵀz de n ensembles gaussianos de s filas: (n, s).

    Con ort=True cada ensemble se arma con bloques ortogonales de d filas.
    """
    if not ort:
        return rng.standard_normal((n, s, d)) @ z
    law = IsotropicLaw.gaussian(d)
    parts = [sample_omc_blocks(law, size, n, rng) @ z for size in block_sizes(s, d)]
    return np.concatenate(parts, axis=1)


def _estimates(f: TestFunction, ort: bool, d: int, s: int, z: np.ndarray, trials: int,
               seed: int, stream: str) -> np.ndarray:
    """F̂ = (1/s) Σ f(ω_iᵀz) por ensayo, en bloques de ensayos con semillas derivadas."""
    chunks = range(0, trials, TRIAL_CHUNK)
    out = np.empty(trials)
    for k, start in enumerate(chunks):
        n = min(TRIAL_CHUNK, trials - start)
        rng = make_rng(derive_seed(seed, stream, k))
        out[start:start + n] = apply_test_function(f, _projections(ort, d, s, z, n, rng)).mean(axis=1)
    return out


def _compare(lhs: Tuple[float, float, float], rhs: Tuple[float, float, float]) -> str:
    """Estado de lhs <= rhs con intervalos (valor, bajo, alto)."""
    if lhs[1] > rhs[2]:
        return "violated"
    if lhs[0] <= rhs[2]:
        return "consistent"
    return "inconclusive"


def _combine(states: Sequence[str]) -> str:
    if "violated" in states:
        return "violated"
    if "inconclusive" in states:
        return "inconclusive"
    return "consistent"


def _entry(name: str, interval: Tuple[float, float, float]) -> StatisticEntry:
    return StatisticEntry(name=name, value=interval[0], low=interval[1], high=interval[2])


def _mean_interval(values: np.ndarray, seed: int) -> Tuple[float, float, float]:
    lo, hi = bootstrap_interval(values, seed, level=settings.VERDICT_LEVEL)
    return float(np.mean(values)), lo, hi


# ---------------------------------------------------------------------------
# Dependencia negativa
# ---------------------------------------------------------------------------

def nd_empirical_test(d: int, z, thresholds: Sequence[float], trials: int, seed: int) -> DiagnosticReport:
    """
    P(∩ X_i ≤ x_i) ≤ Π P(X_i ≤ x_i) y su versión con ≥, X_i = |ω_iᵀz| sobre
    un bloque ortogonal de la esfera, para todas las tuplas de umbrales.
    """
    if d < 2:
        raise DimensionError("nd_empirical_test necesita d >= 2")
    z = _check_unit(z)
    if z.shape[0] != d:
        raise DimensionError("z debe tener dimensión d")
    _check_trials("nd", trials)
    if not thresholds:
        raise ParameterError("se necesita al menos un umbral")

    logger.info(f"Test de dependencia negativa: d={d}, {len(thresholds)} umbrales, {trials} ensayos")
    law = IsotropicLaw.sphere(d)
    x = np.empty((trials, d))
    for k, start in enumerate(range(0, trials, TRIAL_CHUNK)):
        n = min(TRIAL_CHUNK, trials - start)
        rng = make_rng(derive_seed(seed, "nd-blocks", k))
        x[start:start + n] = np.abs(sample_omc_blocks(law, d, n, rng) @ z)

    grid = np.asarray(thresholds, dtype=float)
    below = {t: x <= t for t in grid}
    above = {t: x >= t for t in grid}

    statistics: List[StatisticEntry] = []
    states = []
    for side, events in (("le", below), ("ge", above)):
        marginal = {t: [wilson_interval(int(events[t][:, i].sum()), trials) for i in range(d)] for t in grid}
        for tup in itertools.product(grid, repeat=d):
            joint_mask = np.ones(trials, dtype=bool)
            for i, t in enumerate(tup):
                joint_mask &= events[t][:, i]
            joint = wilson_interval(int(joint_mask.sum()), trials)
            margs = [marginal[t][i] for i, t in enumerate(tup)]
            product = (float(np.prod([m[0] for m in margs])),
                       float(np.prod([m[1] for m in margs])),
                       float(np.prod([m[2] for m in margs])))
            label = f"{side}({','.join(f'{t:g}' for t in tup)})"
            statistics.append(_entry(f"{label}/joint", joint))
            statistics.append(_entry(f"{label}/product", product))
            states.append(_compare(joint, product))

    verdict = _combine(states)
    logger.info(f"Dependencia negativa: {verdict}")
    return DiagnosticReport(
        claim_id="nd",
        config={"d": d, "z": z.tolist(), "thresholds": grid.tolist(), "trials": trials, "seed": seed},
        statistics=statistics,
        verdict=verdict,
        notes=[f"{len(states)} tuplas de umbrales evaluadas"],
    )


# ---------------------------------------------------------------------------
# FGM, MSE y colas
# ---------------------------------------------------------------------------

def mgf_dominance_test(f: TestFunction, lambdas: Sequence[float], d: int, s: int, z, trials: int,
                       seed: int) -> DiagnosticReport:
    """E exp(λ F̂^ort) ≤ E exp(λ F̂^iid) para cada λ; sólo funciones de clase F1."""
    if f.function_class != "F1":
        raise ClassError(f"la dominancia de FGM sólo aplica a funciones F1, recibido {f.tag}")
    z = _check_unit(z)
    if not 1 <= s <= d or z.shape[0] != d:
        raise DimensionError("se necesita 1 <= s <= d y z de dimensión d")
    _check_trials("mgf", trials)

    logger.info(f"Test de dominancia de FGM: d={d}, s={s}, {len(lambdas)} valores de λ")
    ort = _estimates(f, True, d, s, z, trials, seed, "mgf-ort")
    iid = _estimates(f, False, d, s, z, trials, seed, "mgf-iid")

    statistics, states = [], []
    for j, lam in enumerate(lambdas):
        ort_int = _mean_interval(np.exp(lam * ort), derive_seed(seed, "mgf-boot-ort", j))
        iid_int = _mean_interval(np.exp(lam * iid), derive_seed(seed, "mgf-boot-iid", j))
        statistics.append(_entry(f"lambda={lam:g}/ort", ort_int))
        statistics.append(_entry(f"lambda={lam:g}/iid", iid_int))
        states.append(_compare(ort_int, iid_int))

    return DiagnosticReport(
        claim_id="mgf",
        config={"function": f.tag, "lambdas": list(lambdas), "d": d, "s": s, "z": z.tolist(),
                "trials": trials, "seed": seed},
        statistics=statistics,
        verdict=_combine(states),
    )


def _informational(verdict: str, f: TestFunction, notes: List[str]) -> str:
    if f.function_class != "F1" and verdict == "violated":
        notes.append(f"la desigualdad no es vinculante para la clase {f.function_class}; se reporta como inconclusa")
        return "inconclusive"
    return verdict


def mse_ordering_test(f: TestFunction, d: int, multipliers: Sequence[int], trials: int, z,
                      seed: int) -> DiagnosticReport:
    """MSE(B-OMC) ≤ MSE(MC) por multiplicador, con chequeo de insesgadez."""
    z = np.asarray(z, dtype=float)
    if z.shape != (d,):
        raise DimensionError("z debe tener dimensión d")
    _check_trials("mse", trials)
    exact = exact_expectation(f, z)

    logger.info(f"Test de orden de MSE: f={f.tag}, d={d}, multiplicadores {list(multipliers)}")
    statistics, states, notes = [], [], []
    for mult in multipliers:
        s = mult * d
        ort = _estimates(f, True, d, s, z, trials, seed, f"mse-ort-{mult}")
        iid = _estimates(f, False, d, s, z, trials, seed, f"mse-iid-{mult}")
        ort_int = _mean_interval((ort - exact) ** 2, derive_seed(seed, "mse-boot-ort", mult))
        iid_int = _mean_interval((iid - exact) ** 2, derive_seed(seed, "mse-boot-iid", mult))
        statistics.append(_entry(f"multiplier={mult}/bomc", ort_int))
        statistics.append(_entry(f"multiplier={mult}/mc", iid_int))
        states.append(_compare(ort_int, iid_int))

        for name, est in (("bomc", ort), ("mc", iid)):
            se = float(np.std(est, ddof=1) / math.sqrt(trials))
            statistics.append(StatisticEntry(name=f"multiplier={mult}/{name}/mean", value=float(np.mean(est)),
                                             low=float(np.mean(est)) - 3 * se, high=float(np.mean(est)) + 3 * se))
            if abs(np.mean(est) - exact) > 3 * se:
                notes.append(f"{name} con multiplicador {mult}: media a más de 3 errores estándar de {exact:.6g}")

    verdict = _informational(_combine(states), f, notes)
    return DiagnosticReport(
        claim_id="mse",
        config={"function": f.tag, "c": f.c, "d": d, "multipliers": list(multipliers), "trials": trials,
                "z": z.tolist(), "seed": seed, "exact": exact},
        statistics=statistics,
        verdict=verdict,
        notes=notes,
    )


def tail_comparison(f: TestFunction, d: int, s: int, eps: Sequence[float], trials: int, z,
                    seed: int) -> DiagnosticReport:
    """P(|F̂ − F| ≥ ε) para ort e iid con intervalos de Wilson."""
    z = np.asarray(z, dtype=float)
    if z.shape != (d,):
        raise DimensionError("z debe tener dimensión d")
    _check_trials("tail", trials)
    exact = exact_expectation(f, z)

    logger.info(f"Comparación de colas: f={f.tag}, d={d}, s={s}, {trials} ensayos")
    ort = np.abs(_estimates(f, True, d, s, z, trials, seed, "tail-ort") - exact)
    iid = np.abs(_estimates(f, False, d, s, z, trials, seed, "tail-iid") - exact)

    statistics, states, notes = [], [], []
    for e in eps:
        ort_int = wilson_interval(int(np.sum(ort >= e)), trials)
        iid_int = wilson_interval(int(np.sum(iid >= e)), trials)
        statistics.append(_entry(f"eps={e:g}/ort", ort_int))
        statistics.append(_entry(f"eps={e:g}/iid", iid_int))
        states.append(_compare(ort_int, iid_int))

    verdict = _informational(_combine(states), f, notes)
    return DiagnosticReport(
        claim_id="tail",
        config={"function": f.tag, "c": f.c, "d": d, "s": s, "eps": list(eps), "trials": trials,
                "z": z.tolist(), "seed": seed},
        statistics=statistics,
        verdict=verdict,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Transformada de Legendre
# ---------------------------------------------------------------------------

def empirical_legendre(samples, a: float, thetas: Sequence[float]) -> float:
    """
    max_θ θa − log((1/n) Σ e^{θX}) sobre la grilla.

    Raises:
        PreconditionError: θ de signo opuesto a (a − media).
        GridRangeError: desbordamiento de e^{θX}.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise InsufficientDataError("se necesita al menos una muestra")
    grid = np.asarray(thetas, dtype=float)
    if grid.size == 0:
        raise ParameterError("la grilla de θ está vacía")
    mean = float(np.mean(x))
    if (a > mean and np.any(grid < 0)) or (a < mean and np.any(grid > 0)):
        raise PreconditionError("los θ deben tener el signo de a − media")

    best = -math.inf
    for theta in grid:
        try:
            with np.errstate(over="raise"):
                mgf = float(np.mean(np.exp(theta * x)))
        except FloatingPointError:
            raise GridRangeError(float(theta))
        if not math.isfinite(mgf):
            raise GridRangeError(float(theta))
        best = max(best, theta * a - math.log(mgf))
    return float(best)


def legendre_report(f: TestFunction, d: int, s: int, levels: Sequence[float], thetas: Sequence[float],
                    trials: int, z, seed: int) -> DiagnosticReport:
    """L(a) del estimador ortogonal frente al iid: mayor L significa colas más livianas."""
    z = _check_unit(z)
    if not 1 <= s <= d or z.shape[0] != d:
        raise DimensionError("se necesita 1 <= s <= d y z de dimensión d")
    ort = _estimates(f, True, d, s, z, trials, seed, "legendre-ort")
    iid = _estimates(f, False, d, s, z, trials, seed, "legendre-iid")

    statistics, notes = [], []
    consistent = True
    for a in levels:
        values = []
        for name, est in (("ort", ort), ("iid", iid)):
            upper = a >= float(np.mean(est))
            grid = [t for t in thetas if (t >= 0 if upper else t <= 0)] or [0.0]
            v = empirical_legendre(est, a, grid)
            values.append(v)
            statistics.append(StatisticEntry(name=f"a={a:g}/{name}", value=v))
        if values[0] < values[1]:
            consistent = False
            notes.append(f"a={a:g}: L_ort < L_iid")

    return DiagnosticReport(
        claim_id="legendre",
        config={"function": f.tag, "d": d, "s": s, "levels": list(levels), "trials": trials,
                "z": z.tolist(), "seed": seed},
        statistics=statistics,
        verdict="consistent" if consistent else "inconclusive",
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Barrido de error uniforme
# ---------------------------------------------------------------------------

def compact_grid(d: int, n: int, radius: float, seed: int) -> np.ndarray:
    """n puntos uniformes en la bola de radio `radius`."""
    rng = make_rng(seed)
    u = sample_directions(n, d, rng)
    return u * (radius * rng.uniform(size=n) ** (1.0 / d))[:, None]


def _grid_pairs(spec: KernelSpec, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if spec.family == KernelFamily.SHIFT_INVARIANT:
        return grid, np.zeros_like(grid)
    i, j = np.meshgrid(np.arange(len(grid)), np.arange(len(grid)), indexing="ij")
    return grid[i.ravel()], grid[j.ravel()]


def uniform_error_sweep(kernel: KernelSpec, grid, s_values: Sequence[int],
                        methods: Union[Method, Sequence[Method]], trials: int, seed: int,
                        threads: Optional[int] = None, provider: Optional[NomcProvider] = None,
                        resamples: Optional[int] = None) -> SweepTable:
    """
    Media sobre ensayos de sup_grid |K̂ − K| para cada s.

    Kernels invariantes por traslación se evalúan en los pares (z, 0); los PNG
    en todos los pares de la grilla.

    Raises:
        ConfigError: kernel sin oráculo en forma cerrada.
    """
    if not has_closed_form(kernel):
        raise ConfigError(f"el kernel {kernel.name} no tiene oráculo en forma cerrada", path="kernel")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ParameterError("la grilla está vacía")
    if trials < 2:
        raise ParameterError("se necesitan al menos 2 ensayos")
    methods = [methods] if isinstance(methods, Method) else [Method(m) for m in methods]
    d = grid.shape[1]
    xs, ys = _grid_pairs(kernel, grid)
    exact = np.array([exact_kernel(kernel, x, y) for x, y in zip(xs, ys)])
    law = spectral_law(kernel, d)
    provider = provider or NomcProvider(seed)
    provider.prepare(methods, d, s_values)

    def trial(t: int) -> np.ndarray:
        sup = np.empty((len(methods), len(s_values)))
        for k, s in enumerate(s_values):
            phase_seed = derive_seed(seed, f"sweep-phases-{s}", t)
            for m, method in enumerate(methods):
                ens = provider.ensemble(method, law, s, derive_seed(seed, f"sweep-{method.value}-{s}", t))
                bundle = make_feature_bundle(kernel, ens, phase_seed)
                approx = np.sum(feature_matrix(bundle, xs) * feature_matrix(bundle, ys), axis=1)
                sup[m, k] = np.max(np.abs(approx - exact))
        return sup

    logger.info(f"Barrido uniforme {kernel.name}: s={list(s_values)}, {len(grid)} puntos, {trials} ensayos")
    sups = np.stack(run_trials(trial, trials, threads))

    rows: List[SweepRow] = []
    decreasing: Dict[str, bool] = {}
    for m, method in enumerate(methods):
        bounds = []
        for k, s in enumerate(s_values):
            vals = sups[:, m, k]
            ci = bootstrap_half_width(vals, derive_seed(seed, f"sweep-boot-{method.value}", s), resamples)
            rows.append(SweepRow(kernel=kernel.name, method=method.value, s=s, trials=trials,
                                 mean_sup_err=float(np.mean(vals)), ci95=ci, std=float(np.std(vals, ddof=1))))
            bounds.append((float(np.mean(vals)) - ci, float(np.mean(vals)) + ci))
        decreasing[method.value] = all(bounds[k + 1][1] < bounds[k][0] for k in range(len(bounds) - 1))
    return SweepTable(rows=rows, decreasing=decreasing)


def sweep_report(table: SweepTable, config: Dict) -> DiagnosticReport:
    """Veredicto del barrido: decrecimiento estricto en s para todos los métodos."""
    statistics = [
        StatisticEntry(name=f"{r.method}/s={r.s}", value=r.mean_sup_err, low=r.mean_sup_err - r.ci95,
                       high=r.mean_sup_err + r.ci95)
        for r in table.rows
    ]
    notes = [f"{m}: {'decreciente' if ok else 'sin decrecimiento estricto'}" for m, ok in table.decreasing.items()]
    verdict = "consistent" if all(table.decreasing.values()) else "inconclusive"
    return DiagnosticReport(claim_id="sweep", config=config, statistics=statistics, verdict=verdict, notes=notes)
