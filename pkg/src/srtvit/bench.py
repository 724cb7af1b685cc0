"""Naive versus efficient versus parallel-efficient timing and memory comparison.

Correctness gates the numbers: every level is checked for naive/efficient
agreement before anything is timed.
"""

from __future__ import annotations

import csv
import io
import time
import tracemalloc
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import SRTError
from .parallel import ForwardPool
from .perturb import build_grid
from .pipeline import srt_tokens, srt_tokens_efficient
from .vit import ViTModel, forward_to_layer

EQUIV_TOL = 1e-5


class EquivalenceError(SRTError):
    pass


@dataclass
class BenchRow:
    d: int
    passes: int
    path: str
    jobs: int
    wall_s: float
    peak_bytes: int


def peak_transient(fn: Callable[[], object]) -> tuple[object, int]:
    """Peak bytes allocated above the starting level while ``fn`` runs."""
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        base, _ = tracemalloc.get_traced_memory()
        result = fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return result, peak - base


def wall_time(fn: Callable[[], object], repeat: int = 3) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def check_equivalence(model: ViTModel, image: np.ndarray, layer: int, d: int) -> float:
    pset = build_grid(d)
    naive = srt_tokens(model, image, layer, pset, override_bound=True)
    eff = srt_tokens_efficient(model, image, layer, pset, override_bound=True)
    dev = float(np.max(np.abs(naive.data.astype(np.float64) - eff.data)))
    if not dev <= EQUIV_TOL:
        raise EquivalenceError(f"d={d}: naive and efficient routes differ by {dev:.3g} > {EQUIV_TOL}")
    return dev


def run_bench(
    model: ViTModel, image: np.ndarray, layer: int, levels=(1, 2, 3), jobs: int = 4, repeat: int = 3
) -> list[BenchRow]:
    for d in levels:
        check_equivalence(model, image, layer, d)

    rows: list[BenchRow] = []
    single = wall_time(lambda: forward_to_layer(model, image, layer), repeat)
    _, single_peak = peak_transient(lambda: forward_to_layer(model, image, layer))
    rows.append(BenchRow(0, 1, "single-forward", 1, single, single_peak))
    zero = build_grid(0)
    for name, fn in (("naive", srt_tokens), ("efficient", srt_tokens_efficient)):
        t = wall_time(lambda: fn(model, image, layer, zero), repeat)
        _, peak = peak_transient(lambda: fn(model, image, layer, zero))
        rows.append(BenchRow(0, 1, name, 1, t, peak))

    with ForwardPool(model, jobs) as pool:
        pool.run(image, layer, list(build_grid(1)))  # warm the workers
        for d in levels:
            pset = build_grid(d)
            kw = dict(override_bound=True)
            for name, fn in (("naive", srt_tokens), ("efficient", srt_tokens_efficient)):
                t = wall_time(lambda: fn(model, image, layer, pset, **kw), repeat)
                _, peak = peak_transient(lambda: fn(model, image, layer, pset, **kw))
                rows.append(BenchRow(d, len(pset), name, 1, t, peak))
            t = wall_time(lambda: srt_tokens_efficient(model, image, layer, pset, pool=pool, **kw), repeat)
            rows.append(BenchRow(d, len(pset), "parallel-efficient", jobs, t, -1))
    return rows


def lookup(rows: list[BenchRow], d: int, path: str) -> BenchRow:
    return next(r for r in rows if r.d == d and r.path == path)


def summarize(rows: list[BenchRow]) -> dict:
    out = {}
    for d in sorted({r.d for r in rows if r.d > 0}):
        naive, eff, par = lookup(rows, d, "naive"), lookup(rows, d, "efficient"), lookup(rows, d, "parallel-efficient")
        out[d] = {
            "peak_ratio": eff.peak_bytes / naive.peak_bytes,
            "speedup_efficient": naive.wall_s / eff.wall_s,
            "speedup_parallel": eff.wall_s / par.wall_s,
        }
    single = lookup(rows, 0, "single-forward").wall_s
    out[0] = {"overhead_" + p: lookup(rows, 0, p).wall_s / single - 1.0 for p in ("naive", "efficient")}
    return out


def to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(asdict(rows[0])), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(asdict(r))
    return buf.getvalue()


def to_text(rows: list[BenchRow]) -> str:
    head = f"{'d':>2} {'passes':>6} {'path':<20} {'jobs':>4} {'wall_ms':>10} {'peak_kib':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        peak = f"{r.peak_bytes / 1024:10.1f}" if r.peak_bytes >= 0 else f"{'-':>10}"
        lines.append(f"{r.d:>2} {r.passes:>6} {r.path:<20} {r.jobs:>4} {r.wall_s * 1e3:10.2f} {peak}")
    return "\n".join(lines)
