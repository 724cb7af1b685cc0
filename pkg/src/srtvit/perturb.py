"""Integer pixel translations: grids of shifts, image translation and field warping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import DimensionError, ShiftBoundError
from .fields import DenseField
from .prng import SplitMix64


@dataclass(frozen=True, order=True)
class Shift:
    """Translation by ``du`` rows and ``dv`` columns.

    Translating an image by a shift samples ``out[u, v] = in[u + du, v + dv]``,
    i.e. content moves up/left for positive components.
    """

    du: int
    dv: int

    def inverse(self) -> "Shift":
        return Shift(-self.du, -self.dv)


ZERO = Shift(0, 0)


def inverse(s: Shift) -> Shift:
    return s.inverse()


class PerturbationSet:
    """Ordered, duplicate-free collection of shifts starting with (0, 0)."""

    def __init__(self, shifts: Iterable[Shift]):
        seen: set[Shift] = set()
        ordered = []
        for s in shifts:
            s = Shift(int(s[0]), int(s[1])) if not isinstance(s, Shift) else s
            if s not in seen:
                seen.add(s)
                ordered.append(s)
        if ZERO not in seen:
            raise ValueError("a perturbation set must contain the zero shift")
        ordered.remove(ZERO)
        self.shifts: tuple[Shift, ...] = (ZERO, *ordered)

    def __iter__(self) -> Iterator[Shift]:
        return iter(self.shifts)

    def __len__(self) -> int:
        return len(self.shifts)

    def __getitem__(self, i):
        return self.shifts[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, PerturbationSet) and self.shifts == other.shifts

    def __repr__(self) -> str:
        return f"PerturbationSet({len(self)} shifts, max |shift| {self.max_abs})"

    @property
    def max_abs(self) -> tuple[int, int]:
        return max(abs(s.du) for s in self), max(abs(s.dv) for s in self)

    def is_closed_under_negation(self) -> bool:
        return all(s.inverse() in set(self.shifts) for s in self.shifts)


def build_grid(d: int) -> PerturbationSet:
    """All shifts with ``|du|, |dv| <= d``: (0, 0) first, the rest row-major."""
    if d < 0:
        raise ValueError("perturbation level must be >= 0")
    return PerturbationSet(Shift(du, dv) for du in range(-d, d + 1) for dv in range(-d, d + 1))


def sample_shifts(d: int, count: int, seed: int) -> PerturbationSet:
    """Random shifts drawn uniformly from the (2d+1)^2 grid with SplitMix64.

    Draws continue until ``count`` distinct shifts (including (0, 0)) are
    collected, capped at the grid size.
    """
    if d < 0 or count < 1:
        raise ValueError("need d >= 0 and count >= 1")
    side = 2 * d + 1
    count = min(count, side * side)
    rng = SplitMix64(seed)
    chosen = [ZERO]
    while len(chosen) < count:
        k = rng.next_u64() % (side * side)
        s = Shift(k // side - d, k % side - d)
        if s not in chosen:
            chosen.append(s)
    return PerturbationSet(chosen)


def shift_bound(patch_h: int, patch_w: int) -> tuple[int, int]:
    return patch_h // 2, patch_w // 2


def check_shift_bound(shifts: Iterable[Shift], patch_h: int, patch_w: int, override: bool = False) -> None:
    """Reject shifts larger than half a token unless ``override`` is set."""
    if override:
        return
    bu, bv = shift_bound(patch_h, patch_w)
    for s in shifts:
        if abs(s.du) > bu or abs(s.dv) > bv:
            raise ShiftBoundError(
                f"shift ({s.du}, {s.dv}) exceeds the half-token bound ({bu}, {bv}) for "
                f"{patch_h}x{patch_w} patches; pass override to allow it"
            )


def _check_extent(s: Shift, h: int, w: int) -> None:
    if abs(s.du) >= h or abs(s.dv) >= w:
        raise DimensionError(f"shift ({s.du}, {s.dv}) exceeds a {h}x{w} canvas")


def translate(image: np.ndarray, s: Shift) -> np.ndarray:
    """Edge-padded shift: ``out[u, v] = in[clamp(u + du), clamp(v + dv)]``."""
    h, w = image.shape[:2]
    _check_extent(s, h, w)
    if s == ZERO:
        return image.copy()
    rows = np.clip(np.arange(h) + s.du, 0, h - 1)
    cols = np.clip(np.arange(w) + s.dv, 0, w - 1)
    return image[rows[:, None], cols[None, :]]


def _shifted_slices(n: int, d: int) -> tuple[slice, slice]:
    """Destination and source slices along one axis for ``out[i] = in[i + d]``."""
    if d >= 0:
        return slice(0, n - d), slice(d, n)
    return slice(-d, n), slice(0, n + d)


def warp_field(field: DenseField, s: Shift) -> DenseField:
    """Shift a field like ``translate`` but mark off-canvas sources invalid.

    ``out[u, v] = field[u + du, v + dv]`` where that source lies on the canvas;
    everywhere else the output has weight 0 and zero data.
    """
    h, w, c = field.data.shape
    _check_extent(s, h, w)
    if s == ZERO:
        return field.copy()
    data = np.zeros_like(field.data)
    weight = np.zeros_like(field.weight)
    (dr, sr), (dc, sc) = _shifted_slices(h, s.du), _shifted_slices(w, s.dv)
    data[dr, dc] = field.data[sr, sc]
    weight[dr, dc] = field.weight[sr, sc]
    return DenseField(data, weight, field.finalized)


def warp_field_replicate(field: DenseField, s: Shift) -> DenseField:
    """Unmasked variant: off-canvas sources replicate the nearest edge feature."""
    h, w, _ = field.data.shape
    _check_extent(s, h, w)
    rows = np.clip(np.arange(h) + s.du, 0, h - 1)
    cols = np.clip(np.arange(w) + s.dv, 0, w - 1)
    return DenseField(field.data[rows[:, None], cols[None, :]], field.weight[rows[:, None], cols[None, :]], field.finalized)
