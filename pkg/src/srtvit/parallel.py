"""Run the per-shift forward passes, optionally across worker processes.

Results always come back in shift order, so whatever aggregates them sees the
same sequence regardless of scheduling.
"""

from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from .perturb import Shift, translate
from .vit import FeatureMap, ViTModel, forward_to_layer

_WORKER_MODEL: ViTModel | None = None


def _init_worker(model: ViTModel) -> None:
    global _WORKER_MODEL
    _WORKER_MODEL = model


def _run_chunk(image: np.ndarray, layer: int, shifts: Sequence[Shift]) -> list[FeatureMap]:
    assert _WORKER_MODEL is not None
    return [forward_to_layer(_WORKER_MODEL, translate(image, s), layer) for s in shifts]


def _chunks(items: Sequence, parts: int) -> list[Sequence]:
    parts = max(1, min(parts, len(items)))
    size, rem = divmod(len(items), parts)
    out, start = [], 0
    for i in range(parts):
        stop = start + size + (i < rem)
        out.append(items[start:stop])
        start = stop
    return out


class ForwardPool:
    """A warm pool of worker processes holding a copy of one model."""

    def __init__(self, model: ViTModel, jobs: int):
        if jobs < 1:
            raise ValueError("jobs must be >= 1")
        self.model = model
        self.jobs = jobs
        self._executor = None
        if jobs > 1:
            ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
            self._executor = ProcessPoolExecutor(jobs, mp_context=ctx, initializer=_init_worker, initargs=(model,))

    def run(self, image: np.ndarray, layer: int, shifts: Sequence[Shift]) -> list[FeatureMap]:
        shifts = list(shifts)
        if self._executor is None:
            return [forward_to_layer(self.model, translate(image, s), layer) for s in shifts]
        futures = [self._executor.submit(_run_chunk, image, layer, chunk) for chunk in _chunks(shifts, self.jobs)]
        out: list[FeatureMap] = []
        for fut in futures:
            out.extend(fut.result())
        return out

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self) -> "ForwardPool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def run_forwards(
    model: ViTModel,
    image: np.ndarray,
    layer: int,
    shifts: Sequence[Shift],
    jobs: int = 1,
    pool: ForwardPool | None = None,
) -> list[FeatureMap]:
    """``forward_to_layer(model, translate(image, s), layer)`` for every shift."""
    if pool is not None:
        return pool.run(image, layer, shifts)
    with ForwardPool(model, jobs) as p:
        return p.run(image, layer, shifts)
