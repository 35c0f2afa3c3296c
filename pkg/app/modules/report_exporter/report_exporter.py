import os
import logging
from typing import List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from app.config.settings import settings
from app.models.models import DiagnosticReport, MseTable, PointCloud, SweepTable
from app.utils.errors import ArityError

logger = logging.getLogger(__name__)

MSE_COLUMNS = ["method", "multiplier", "s", "trials", "mean_err", "mse", "ci95"]
SWEEP_COLUMNS = ["kernel", "method", "s", "trials", "mean_sup_err", "ci95"]

# SVG reproducible: ids estables y sin fecha en los metadatos
plt.rcParams["svg.hashsalt"] = "structmc"


def table_frame(table: Union[MseTable, SweepTable]) -> pd.DataFrame:
    """DataFrame con las columnas del CSV, en el orden de generación de las celdas."""
    if isinstance(table, SweepTable):
        return pd.DataFrame([r.model_dump() for r in table.rows], columns=SWEEP_COLUMNS)
    rows = [{table.key_column: c.label, **c.model_dump(exclude={"label", "std"})} for c in table.cells]
    return pd.DataFrame(rows, columns=[table.key_column] + MSE_COLUMNS)


def emit_svg_lineplot(table: Union[MseTable, SweepTable], path: str) -> str:
    """
    Gráfico SVG autocontenido: una línea por método, eje y logarítmico y
    bandas de ±0.5·std.

    Raises:
        ArityError: tabla vacía.
    """
    if isinstance(table, SweepTable):
        if not table.rows:
            raise ArityError("no hay filas para graficar")
        series = [(r.method, r.s, r.mean_sup_err, r.std) for r in table.rows]
        xlabel, ylabel = "s", "error sup medio"
    else:
        if not table.cells:
            raise ArityError("no hay celdas para graficar")
        series = [(c.method, c.multiplier, c.mse, c.std) for c in table.cells]
        xlabel, ylabel = "multiplicador de bloques", "MSE"

    methods: List[str] = []
    for method, *_ in series:
        if method not in methods:
            methods.append(method)

    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        for method in methods:
            pts = sorted((x, y, sd) for m, x, y, sd in series if m == method)
            x = np.array([p[0] for p in pts], dtype=float)
            y = np.array([p[1] for p in pts], dtype=float)
            sd = np.array([p[2] for p in pts], dtype=float)
            line, = ax.plot(x, y, marker="o", label=method)
            line.set_gid(f"series-{method}")
            floor = np.where(y > 0, y, np.nan) * 1e-3
            band = ax.fill_between(x, np.maximum(y - 0.5 * sd, floor), y + 0.5 * sd,
                                   color=line.get_color(), alpha=0.2)
            band.set_gid(f"band-{method}")
        ax.set_yscale("log", nonpositive="mask")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path


class ReportExporter:
    def __init__(self, output_dir: str = None):
        """
        Inicializa el exportador de artefactos.

        Args:
            output_dir: Directorio de salida. Si no se proporciona, se utiliza
                        el valor de configuración.
        """
        self.output_dir = output_dir or settings.OUTPUT_DIR

        # Crear directorio si no existe
        os.makedirs(self.output_dir, exist_ok=True)

    def _path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def export_table(self, table: Union[MseTable, SweepTable], filename: str) -> str:
        """
        Escribe la tabla como CSV con 17 dígitos significativos.

        Returns:
            str: Ruta del CSV generado.
        """
        path = self._path(filename)
        try:
            df = table_frame(table)
            df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        except OSError as e:
            logger.error(f"Error al escribir {path}: {str(e)}")
            raise
        logger.info(f"Tabla generada: {path} con {len(df)} filas")
        return path

    def export_frame(self, df: pd.DataFrame, filename: str) -> str:
        path = self._path(filename)
        df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        return path

    def export_plot(self, table: Union[MseTable, SweepTable], filename: str) -> str:
        path = self._path(filename)
        emit_svg_lineplot(table, path)
        logger.info(f"Gráfico generado: {path}")
        return path

    def export_report(self, report: DiagnosticReport) -> str:
        """Un JSON por claim id; el orden de claves es el de los campos del modelo."""
        path = self._path(f"diagnose-{report.claim_id}.json")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(report.model_dump_json(indent=2))
            f.write("\n")
        logger.info(f"Reporte {report.claim_id} generado: {path} (veredicto {report.verdict})")
        return path

    def export_cloud(self, cloud: PointCloud, filename: str) -> str:
        """Nube de puntos como CSV sin cabecera."""
        path = self._path(filename)
        pd.DataFrame(cloud.points).to_csv(path, index=False, header=False, float_format="%.17g",
                                          lineterminator="\n")
        return path
