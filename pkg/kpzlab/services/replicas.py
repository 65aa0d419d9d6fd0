"""
Reparto de réplicas Monte-Carlo en bloques fijos.

Los bloques dependen sólo de chunk_size, nunca del número de trabajadores:
cada bloque usa los flujos (seed, r) de sus réplicas y los resultados se
fusionan en orden de réplica, así que la salida es idéntica con 1 o N procesos.
"""
from __future__ import annotations

import logging
import time
from collections.abc import Callable
from multiprocessing import Pool
from typing import TypeVar

from ..core import settings

logger = logging.getLogger("kpzlab.services.replicas")

T = TypeVar("T")


def chunk_bounds(n_replicas: int, chunk_size: int | None = None) -> list[tuple[int, int]]:
    size = settings.CHUNK_SIZE if chunk_size is None else chunk_size
    if size < 1:
        raise ValueError("chunk_size debe ser ≥ 1")
    return [(start, min(start + size, n_replicas)) for start in range(0, n_replicas, size)]


def _call(args):
    fn, start, stop = args
    return fn(start, stop)


def run_chunks(
    fn: Callable[[int, int], T],
    n_replicas: int,
    chunk_size: int | None = None,
    workers: int | None = None,
) -> list[T]:
    """Ejecuta fn(start, stop) por bloque; fn debe ser serializable (función de módulo o partial)."""
    bounds = chunk_bounds(n_replicas, chunk_size)
    workers = workers or settings.WORKERS
    start_t = time.perf_counter()
    tasks = [(fn, a, b) for a, b in bounds]
    if workers > 1 and len(tasks) > 1:
        with Pool(processes=min(workers, len(tasks))) as pool:
            results = pool.map(_call, tasks)
    else:
        results = [_call(t) for t in tasks]
    duration_ms = round((time.perf_counter() - start_t) * 1000, 2)
    logger.info(
        f"run_chunks replicas={n_replicas} chunks={len(tasks)} workers={workers} "
        f"duration_ms={duration_ms}"
    )
    return results
