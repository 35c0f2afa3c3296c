"""
Derivación de semillas de 64 bits.

Cada ensayo obtiene su propio flujo a partir de (semilla maestra, id de flujo,
índice), de modo que los resultados no dependen del número de hilos.
"""

import zlib
from typing import Union

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """Una ronda del mezclador splitmix64."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_id(name: Union[str, int]) -> int:
    """Id estable de un flujo con nombre (CRC32 del nombre)."""
    if isinstance(name, int):
        return name & MASK64
    return zlib.crc32(name.encode("utf-8"))


def derive_seed(master: int, stream: Union[str, int], index: int = 0) -> int:
    """Semilla de 64 bits para el ensayo `index` del flujo `stream`."""
    h = splitmix64(master & MASK64)
    h = splitmix64(h ^ stream_id(stream))
    return splitmix64(h ^ (index & MASK64))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))
