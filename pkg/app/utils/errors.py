"""
Jerarquía de errores de structmc.

Todas las operaciones públicas lanzan subclases de StructMCError; la CLI las
traduce a código de salida 2.
"""

from typing import Optional


class StructMCError(Exception):
    """Error base de la librería."""


class ParameterError(StructMCError):
    """Parámetros de una ley, kernel o distribución fuera de rango."""


class DimensionError(StructMCError):
    """Dimensión incompatible con la construcción pedida."""


class DegeneracyError(StructMCError):
    """Residuo de Gram-Schmidt por debajo de la tolerancia (el llamador vuelve a muestrear)."""


class PreconditionError(StructMCError):
    """Entrada que viola una precondición (vectores no unitarios, signos de θ, ...)."""


class DomainError(StructMCError):
    """Argumento fuera del dominio de la función."""


class CapacityError(StructMCError):
    """Capacidad de una tabla precalculada excedida."""


class ArityError(StructMCError):
    """Número o forma de argumentos incorrecto."""


class ClassError(StructMCError):
    """Función de prueba de una clase no admitida por el diagnóstico."""


class InsufficientDataError(StructMCError):
    """Datos insuficientes para el estadístico pedido."""


class PSDError(ParameterError):
    """Matriz de covarianza no semidefinida positiva."""


class ParseError(StructMCError):
    """Archivo de ensemble mal formado."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"línea {line}: {message}"
        super().__init__(message)


class ConfigError(StructMCError):
    """Configuración de ejecución inválida."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class GridRangeError(StructMCError):
    """Desbordamiento de exp(θX) para algún θ de la grilla."""

    def __init__(self, theta: float):
        self.theta = theta
        super().__init__(f"desbordamiento de exp(θX) con θ={theta!r}; reduzca el rango de la grilla")


class DatasetError(StructMCError):
    """Celda no numérica o forma inválida al cargar un dataset."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        self.row = row
        self.column = column
        if row is not None:
            message = f"fila {row}, columna {column}: {message}"
        super().__init__(message)
