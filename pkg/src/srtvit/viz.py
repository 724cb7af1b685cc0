"""PCA colour rendering of feature fields and grayscale rendering of scalar maps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateBasisError
from .fields import DenseField

GRAY = 0.5


@dataclass
class PcaBasis:
    mean: np.ndarray  # (C,)
    components: np.ndarray  # (3, C), rows orthonormal
    eigenvalues: np.ndarray  # (3,), descending


def _weighted_moments(fields: Sequence[DenseField]) -> tuple[np.ndarray, np.ndarray, int]:
    xs, ws = [], []
    for f in fields:
        ok = f.weight > 0
        xs.append(f.data[ok].astype(np.float64))
        ws.append(f.weight[ok].astype(np.float64))
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    if x.shape[0] < 4:
        raise ValueError(f"need at least 4 valid pixels, have {x.shape[0]}")
    mean = (w[:, None] * x).sum(axis=0) / w.sum()
    xc = x - mean
    cov = (xc * w[:, None]).T @ xc / w.sum()
    return mean, cov, x.shape[0]


def _power_iteration(a: np.ndarray, start: np.ndarray, max_iter: int, tol: float) -> tuple[np.ndarray, float]:
    v = start / np.linalg.norm(start)
    lam = float(v @ a @ v)
    for _ in range(max_iter):
        av = a @ v
        lam = float(v @ av)
        if np.linalg.norm(av - lam * v) <= tol:
            break
        norm = np.linalg.norm(av)
        if norm == 0.0:
            break
        v = av / norm
    return v, float(v @ a @ v)


def fit_pca(field: DenseField, *more: DenseField, max_iter: int = 200, tol: float = 1e-7) -> PcaBasis:
    """Top three principal directions of the valid pixels, weighted by validity mass.

    Uses deflated power iteration. Each search starts from the first standard
    basis vector with the components found so far projected out (falling back
    to e2, e3, ... if that projection vanishes). Components are signed so their
    largest-magnitude entry is positive. Passing several fields fits one joint
    basis.
    """
    mean, cov, _ = _weighted_moments((field, *more))
    c = cov.shape[0]
    scale = max(float(np.trace(cov)), 0.0)
    if c < 3 or scale == 0.0:
        raise DegenerateBasisError(0 if scale == 0.0 else min(c, 3))
    found: list[np.ndarray] = []
    lams: list[float] = []
    a = cov.copy()
    for k in range(3):
        start = None
        for e in range(c):
            v = np.zeros(c)
            v[e] = 1.0
            for u in found:
                v -= (u @ v) * u
            if np.linalg.norm(v) > 1e-6:
                start = v
                break
        v, lam = _power_iteration(a, start, max_iter, tol)
        for u in found:  # keep orthogonality against round-off drift
            v -= (u @ v) * u
        v /= np.linalg.norm(v)
        lam = float(v @ a @ v)
        if lam <= 1e-10 * scale:
            raise DegenerateBasisError(k)
        idx = int(np.argmax(np.abs(v)))
        if v[idx] < 0:
            v = -v
        found.append(v)
        lams.append(lam)
        a = a - lam * np.outer(v, v)
    return PcaBasis(mean, np.array(found), np.array(lams))


def project(field: DenseField, basis: PcaBasis) -> np.ndarray:
    return (field.data.astype(np.float64) - basis.mean) @ basis.components.T


def render_pca(field: DenseField, basis: PcaBasis) -> np.ndarray:
    """RGB image of the three projections, each min-max normalised over valid pixels."""
    proj = project(field, basis)
    ok = field.weight > 0
    out = np.full(proj.shape, GRAY, dtype=np.float64)
    for ch in range(3):
        vals = proj[:, :, ch][ok]
        lo, hi = vals.min(), vals.max()
        plane = out[:, :, ch]
        plane[ok] = (proj[:, :, ch][ok] - lo) / (hi - lo) if hi > lo else GRAY
    return out.astype(np.float32)


def render_scalar(values: np.ndarray, gamma: float = 1.0) -> np.ndarray:
    """Grayscale (H, W, 1) image: min-max normalise, then raise to ``gamma``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi > lo:
        out = ((v - lo) / (hi - lo)) ** gamma
    else:
        out = np.full(v.shape, GRAY)
    return out.astype(np.float32)[:, :, None]
