import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, TypeVar

from app.config.settings import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")


def resolve_threads(threads: Optional[int] = None) -> int:
    """Número de hilos: argumento explícito o STRUCTMC_THREADS."""
    n = threads if threads is not None else settings.STRUCTMC_THREADS
    return max(1, int(n))


def run_trials(fn: Callable[[int], T], n: int, threads: Optional[int] = None) -> List[T]:
    """
    Ejecuta fn(0), ..., fn(n-1) y devuelve los resultados en orden de ensayo.

    El orden de la lista es fijo, así que cualquier reducción posterior es
    independiente del número de hilos.
    """
    workers = resolve_threads(threads)
    if workers == 1 or n <= 1:
        return [fn(i) for i in range(n)]

    logger.debug(f"Ejecutando {n} ensayos con {workers} hilos")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))
