import os
import sys
import json
import logging
import argparse
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import TypeAdapter, ValidationError

from app.config.settings import settings
from app.models.models import (
    METHOD_ALIASES,
    AlgNomcSpec,
    BenchKernelConfig,
    BenchSwdConfig,
    BuildNomcConfig,
    CoherenceConfig,
    DiagnoseConfig,
    IsotropicLaw,
    KernelSpec,
    OptNomcConfig,
    RunConfig,
    RunResult,
    SampleConfig,
    TestFunction,
)
from app.modules.diagnostics.diagnostics import (
    compact_grid,
    legendre_report,
    mgf_dominance_test,
    mse_ordering_test,
    nd_empirical_test,
    sweep_report,
    tail_comparison,
    uniform_error_sweep,
)
from app.modules.ensembles.ensembles import sample_ensemble
from app.modules.kernels.kernels import load_dataset, mse_benchmark, sample_pairs, synthetic_points
from app.modules.nomc.nomc import (
    NomcProvider,
    alg_nomc_build,
    coherence,
    load_ensemble,
    opt_nomc_build,
    save_ensemble,
)
from app.modules.report_exporter.report_exporter import ReportExporter
from app.modules.swd.swd import benchmark_clouds, catalog_distribution_pair, swd_benchmark
from app.utils.errors import ConfigError, StructMCError
from app.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

COMMANDS = ["sample", "build-nomc", "coherence", "bench-kernel", "bench-swd", "diagnose"]

LAW_TAGS = {
    "gaussian": "GaussianStd",
    "sphere": "UnitSphere",
    "gaussian_scaled": "GaussianScaled",
    "matern": "MaternSpectral",
    "laplace": "LaplaceProduct",
}

KERNEL_TAGS = {
    "gaussian": "Gaussian",
    "matern": "Matern",
    "cauchy": "Cauchy",
    "angular": "Angular",
    "quadratic": "Quadratic",
    "tanh": "Tanh",
    "sine": "Sine",
    "exp": "ExpPNG",
}

FUNCTION_TAGS = {"square": "Square", "abscos": "AbsCos", "expc": "ExpC"}

_RUN_CONFIG = TypeAdapter(RunConfig)


def configure_logging():
    """Logging a stderr y, si LOG_FILE está definido, también a archivo."""
    handlers = [logging.StreamHandler()]
    if settings.LOG_FILE:
        handlers.append(logging.FileHandler(settings.LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )


def _error_path(loc) -> str:
    parts = [str(p) for p in loc]
    # el primer elemento de una unión discriminada es el nombre del comando
    if parts and parts[0] in COMMANDS:
        parts = parts[1:]
    return ".".join(parts) or "command"


def parse_config(json_text: str, command: Optional[str] = None) -> RunConfig:
    """
    Valida un archivo de configuración JSON.

    Args:
        json_text: Contenido del archivo.
        command: Comando de la línea de comandos; se usa si el JSON no trae uno.

    Raises:
        ConfigError: JSON inválido, clave faltante o desconocida, o tipo incorrecto.
    """
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON inválido ({e.msg}, línea {e.lineno})")
    if not isinstance(data, dict):
        raise ConfigError("la configuración debe ser un objeto JSON")

    if command is not None:
        data.setdefault("command", command)
        if data["command"] != command:
            raise ConfigError(f"el archivo es para '{data['command']}', no para '{command}'", path="command")

    try:
        return _RUN_CONFIG.validate_python(data)
    except ValidationError as e:
        err = e.errors()[0]
        path = _error_path(err["loc"])
        if err["type"] == "extra_forbidden":
            raise ConfigError(f"clave desconocida '{path}'", path=path)
        raise ConfigError(err["msg"], path=path)


class StructMC:
    def __init__(self, output_dir: Optional[str] = None, threads: Optional[int] = None):
        """
        Inicializa el orquestador de comandos.

        Args:
            output_dir: Directorio de artefactos (por defecto settings.OUTPUT_DIR).
            threads: Hilos para los ensayos (por defecto STRUCTMC_THREADS).
        """
        self.exporter = ReportExporter(output_dir)
        self.output_dir = self.exporter.output_dir
        self.threads = threads

    def sample(self, cfg: SampleConfig) -> List[str]:
        law = IsotropicLaw(tag=LAW_TAGS[cfg.law], d=cfg.d, lengthscale=cfg.lengthscale, nu=cfg.nu)
        ensemble = sample_ensemble(METHOD_ALIASES[cfg.method], law, cfg.s, cfg.seed)
        path = os.path.join(self.output_dir, f"ensemble-{cfg.method}-d{cfg.d}-s{cfg.s}.csv")
        return [save_ensemble(ensemble, path)]

    def build_nomc(self, cfg: BuildNomcConfig) -> List[str]:
        if cfg.variant == "alg":
            spec = AlgNomcSpec(p=cfg.p, r=cfg.r, selected_count=cfg.selected_count)
            ensemble = alg_nomc_build(spec, cfg.seed)
            path = os.path.join(self.output_dir, f"alg-nomc-p{cfg.p}-r{cfg.r}.csv")
            return [save_ensemble(ensemble, path)]

        opt = OptNomcConfig(delta=cfg.delta, eta=cfg.eta, T=cfg.T, early_stop=cfg.early_stop,
                            early_stop_window=cfg.early_stop_window, early_stop_tol=cfg.early_stop_tol,
                            seed=cfg.seed)
        result = opt_nomc_build(cfg.d, cfg.s, opt)
        path = save_ensemble(result.ensemble, os.path.join(self.output_dir, f"opt-nomc-d{cfg.d}-s{cfg.s}.csv"))
        trace = pd.DataFrame({
            "iteration": np.arange(len(result.trace.energy)),
            "energy": result.trace.energy,
            "d_max": result.trace.d_max,
            "d_min": result.trace.d_min,
        })
        trace_path = self.exporter.export_frame(trace, f"opt-nomc-d{cfg.d}-s{cfg.s}-trace.csv")
        if result.trace.heuristic_iteration is not None:
            logger.info(f"Heurística de parada alcanzada en la iteración {result.trace.heuristic_iteration}")
        return [path, trace_path]

    def coherence(self, cfg: CoherenceConfig) -> List[str]:
        ensemble = load_ensemble(cfg.ensemble)
        value = coherence(ensemble)
        path = os.path.join(self.output_dir, "coherence.json")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump({"ensemble": os.path.basename(cfg.ensemble), "method": ensemble.method.value,
                       "d": ensemble.d, "s": ensemble.s, "coherence": value}, f, indent=2)
            f.write("\n")
        print(f"{value:.17g}")
        return [path]

    def bench_kernel(self, cfg: BenchKernelConfig) -> List[str]:
        spec = KernelSpec(tag=KERNEL_TAGS[cfg.kernel], sigma=cfg.sigma, lengthscale=cfg.lengthscale,
                          nu=cfg.nu, c=cfg.c)
        d = cfg.d
        if cfg.dataset:
            points = load_dataset(cfg.dataset, seed=derive_seed(cfg.seed, "nn-sample")).points
            if points.shape[1] != d:
                logger.warning(f"El dataset tiene d={points.shape[1]}; se ignora d={d} de la configuración")
                d = points.shape[1]
        else:
            points = synthetic_points(d, max(2 * cfg.pairs, 2), derive_seed(cfg.seed, "synthetic-points"))
        pairs = sample_pairs(points, cfg.pairs, derive_seed(cfg.seed, "pairs"))

        methods = [METHOD_ALIASES[m] for m in cfg.methods]
        provider = NomcProvider(cfg.seed, nomc_iterations=cfg.nomc_iterations)
        table = mse_benchmark(spec, methods, d, cfg.multipliers, cfg.trials, pairs, cfg.seed,
                              threads=self.threads, provider=provider)
        stem = f"bench-kernel-{spec.name}"
        artifacts = [self.exporter.export_table(table, f"{stem}.csv")]
        if cfg.plot:
            artifacts.append(self.exporter.export_plot(table, f"{stem}.svg"))
        return artifacts

    def bench_swd(self, cfg: BenchSwdConfig) -> List[str]:
        pair = catalog_distribution_pair(cfg.distribution, cfg.d, derive_seed(cfg.seed, "distributions"))
        methods = [METHOD_ALIASES[m] for m in cfg.methods]
        provider = NomcProvider(cfg.seed, nomc_iterations=cfg.nomc_iterations)
        table = swd_benchmark(pair, methods, cfg.multipliers, cfg.trials, cfg.points, cfg.seed, p=cfg.p,
                              threads=self.threads, provider=provider,
                              reference_directions=cfg.reference_directions, label=cfg.distribution)
        stem = f"bench-swd-{cfg.distribution}"
        artifacts = [self.exporter.export_table(table, f"{stem}.csv")]
        if cfg.plot:
            artifacts.append(self.exporter.export_plot(table, f"{stem}.svg"))
        if cfg.export_clouds:
            cloud_a, cloud_b = benchmark_clouds(pair, cfg.points, cfg.seed)
            artifacts.append(self.exporter.export_cloud(cloud_a, f"{stem}-cloud-a.csv"))
            artifacts.append(self.exporter.export_cloud(cloud_b, f"{stem}-cloud-b.csv"))
        return artifacts

    def diagnose(self, cfg: DiagnoseConfig) -> List[str]:
        d = cfg.d
        if cfg.z is not None:
            z = np.asarray(cfg.z, dtype=float)
            if z.shape != (d,):
                raise ConfigError(f"z debe tener {d} componentes", path="z")
        else:
            z = np.ones(d) / np.sqrt(d)
        f = TestFunction(tag=FUNCTION_TAGS[cfg.function], c=cfg.c)
        s = cfg.s or d

        if cfg.claim == "nd":
            report = nd_empirical_test(d, z, cfg.thresholds, cfg.trials, cfg.seed)
        elif cfg.claim == "mgf":
            report = mgf_dominance_test(f, cfg.lambdas, d, s, z, cfg.trials, cfg.seed)
        elif cfg.claim == "mse":
            report = mse_ordering_test(f, d, cfg.multipliers, cfg.trials, z, cfg.seed)
        elif cfg.claim == "tail":
            report = tail_comparison(f, d, s, cfg.eps, cfg.trials, z, cfg.seed)
        elif cfg.claim == "legendre":
            report = legendre_report(f, d, s, cfg.levels, cfg.thetas, cfg.trials, z, cfg.seed)
        else:
            return self._sweep(cfg)
        return [self.exporter.export_report(report)]

    def _sweep(self, cfg: DiagnoseConfig) -> List[str]:
        spec = KernelSpec(tag=KERNEL_TAGS[cfg.kernel], c=cfg.c)
        grid = compact_grid(cfg.d, cfg.grid_points, cfg.grid_radius, derive_seed(cfg.seed, "sweep-grid"))
        methods = [METHOD_ALIASES[m] for m in cfg.methods]
        table = uniform_error_sweep(spec, grid, cfg.s_values, methods, cfg.trials, cfg.seed, threads=self.threads)
        report = sweep_report(table, cfg.model_dump(exclude={"out"}))
        return [
            self.exporter.export_table(table, f"sweep-{spec.name}.csv"),
            self.exporter.export_plot(table, f"sweep-{spec.name}.svg"),
            self.exporter.export_report(report),
        ]

    def dispatch(self, cfg: RunConfig) -> List[str]:
        handlers = {
            "sample": self.sample,
            "build-nomc": self.build_nomc,
            "coherence": self.coherence,
            "bench-kernel": self.bench_kernel,
            "bench-swd": self.bench_swd,
            "diagnose": self.diagnose,
        }
        logger.info(f"Ejecutando '{cfg.command}' con semilla {cfg.seed}")
        return handlers[cfg.command](cfg)


def run(config: RunConfig, threads: Optional[int] = None, out: Optional[str] = None) -> RunResult:
    """
    Ejecuta un comando y traduce los errores a códigos de salida.

    Returns:
        RunResult: exit_code 0 si se escribieron todos los artefactos, 2 ante
        errores de los módulos y 3 ante errores de E/S.
    """
    try:
        app = StructMC(output_dir=out or config.out, threads=threads)
        artifacts = app.dispatch(config)
        return RunResult(success=True, message=f"{len(artifacts)} artefactos generados", artifacts=artifacts)
    except StructMCError as e:
        logger.error(f"Error en '{config.command}': {str(e)}")
        return RunResult(success=False, message=str(e), exit_code=2)
    except ValidationError as e:
        err = e.errors()[0]
        message = f"{_error_path(err['loc'])}: {err['msg']}"
        logger.error(f"Parámetros inválidos en '{config.command}': {message}")
        return RunResult(success=False, message=message, exit_code=2)
    except OSError as e:
        logger.error(f"Error de E/S en '{config.command}': {str(e)}")
        return RunResult(success=False, message=str(e), exit_code=3)


def main(argv: Optional[List[str]] = None) -> int:
    """Función principal para ejecutar desde línea de comandos."""
    parser = argparse.ArgumentParser(prog="structmc", description="structmc: Monte Carlo estructurado")
    parser.add_argument("command", choices=COMMANDS, help="Comando a ejecutar")
    parser.add_argument("--config", required=True, help="Archivo JSON de configuración")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"Hilos para los ensayos (default: STRUCTMC_THREADS={settings.STRUCTMC_THREADS})")
    parser.add_argument("--out", default=None, help="Directorio de salida")
    args = parser.parse_args(argv)

    configure_logging()

    try:
        with open(args.config, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        print(f"structmc: no se pudo leer {args.config}: {e.strerror or e}", file=sys.stderr)
        return 3

    try:
        config = parse_config(text, command=args.command)
    except ConfigError as e:
        print(f"structmc: {e}", file=sys.stderr)
        return 2

    result = run(config, threads=args.threads, out=args.out)
    if result.success:
        for path in result.artifacts:
            logger.info(f"Artefacto: {path}")
    else:
        print(f"structmc: {result.message}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
