import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srtvit.errors import DimensionError, ShiftBoundError
from srtvit.fields import DenseField
from srtvit.perturb import (
    PerturbationSet,
    Shift,
    build_grid,
    check_shift_bound,
    inverse,
    sample_shifts,
    translate,
    warp_field,
)


def test_grid_sizes():
    assert list(build_grid(0)) == [Shift(0, 0)]
    assert len(build_grid(1)) == 9
    assert len(build_grid(3)) == 49


def test_grid_order_zero_first_then_row_major():
    g = list(build_grid(1))
    assert g[0] == Shift(0, 0)
    rest = [s for s in g[1:]]
    assert rest == sorted(rest)
    assert rest[0] == Shift(-1, -1) and rest[-1] == Shift(1, 1)


@pytest.mark.parametrize("d", range(8))
def test_grid_cardinality_and_negation(d):
    g = build_grid(d)
    assert len(g) == (2 * d + 1) ** 2
    assert g.is_closed_under_negation()


def test_perturbation_set_dedup_and_zero_required():
    p = PerturbationSet([Shift(1, 0), Shift(0, 0), Shift(1, 0)])
    assert list(p) == [Shift(0, 0), Shift(1, 0)]
    with pytest.raises(ValueError):
        PerturbationSet([Shift(1, 0)])


def test_sample_shifts_deterministic():
    a = sample_shifts(3, 10, seed=5)
    assert a == sample_shifts(3, 10, seed=5)
    assert len(a) == 10 and a[0] == Shift(0, 0)
    assert all(abs(s.du) <= 3 and abs(s.dv) <= 3 for s in a)
    assert len(sample_shifts(1, 100, seed=0)) == 9


def test_inverse():
    assert inverse(Shift(0, 0)) == Shift(0, 0)
    assert inverse(Shift(3, -2)) == Shift(-3, 2)


@given(st.integers(-50, 50), st.integers(-50, 50))
def test_inverse_involution(du, dv):
    s = Shift(du, dv)
    assert inverse(inverse(s)) == s


def test_translate_rows():
    row = np.array([[[1.0], [2.0], [3.0]]], np.float32)  # [a, b, c]
    assert np.array_equal(translate(row, Shift(0, 0)), row)
    assert translate(row, Shift(0, 1))[0, :, 0].tolist() == [2.0, 3.0, 3.0]
    assert translate(row, Shift(0, -1))[0, :, 0].tolist() == [1.0, 1.0, 2.0]


def test_translate_extent_error():
    with pytest.raises(DimensionError):
        translate(np.zeros((3, 3, 1), np.float32), Shift(3, 0))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.data())
def test_translate_roundtrip_interior(h, w, data):
    du = data.draw(st.integers(-(h - 1), h - 1))
    dv = data.draw(st.integers(-(w - 1), w - 1))
    seed = data.draw(st.integers(0, 2**32 - 1))
    img = np.random.default_rng(seed).random((h, w, 3)).astype(np.float32)
    s = Shift(du, dv)
    back = translate(translate(img, s), inverse(s))
    rows = [u for u in range(h) if 0 <= u - du < h]
    cols = [v for v in range(w) if 0 <= v - dv < w]
    assert np.array_equal(back[np.ix_(rows, cols)], img[np.ix_(rows, cols)])


def _field(values, weights=None):
    data = np.asarray(values, np.float32).reshape(1, -1, 1)
    w = np.ones(data.shape[:2], np.float32) if weights is None else np.asarray(weights, np.float32).reshape(1, -1)
    return DenseField(data, w, True)


def test_warp_field_examples():
    f = _field([10.0, 11.0, 12.0])
    same = warp_field(f, Shift(0, 0))
    assert np.array_equal(same.data, f.data) and np.array_equal(same.weight, f.weight)
    out = warp_field(f, Shift(0, -1))
    assert out.weight[0].tolist() == [0.0, 1.0, 1.0]
    assert out.data[0, 1:, 0].tolist() == [10.0, 11.0]


def test_warp_field_carries_source_weight():
    out = warp_field(_field([1, 2, 3], [0.5, 2.0, 3.0]), Shift(0, 1))
    assert out.weight[0].tolist() == [2.0, 3.0, 0.0]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10), st.integers(1, 10), st.data())
def test_warp_roundtrip_on_doubly_valid_region(h, w, data):
    du = data.draw(st.integers(-(h - 1), h - 1))
    dv = data.draw(st.integers(-(w - 1), w - 1))
    rng = np.random.default_rng(data.draw(st.integers(0, 1000)))
    f = DenseField(rng.random((h, w, 2)).astype(np.float32), np.ones((h, w), np.float32), True)
    s = Shift(du, dv)
    back = warp_field(warp_field(f, s), inverse(s))
    ok = back.weight > 0
    assert np.array_equal(back.data[ok], f.data[ok])
    expected_valid = np.zeros((h, w), bool)
    for u in range(h):
        for v in range(w):
            expected_valid[u, v] = 0 <= u - du < h and 0 <= v - dv < w
    assert np.array_equal(ok, expected_valid)


def test_shift_bound():
    check_shift_bound(build_grid(4), 8, 8)
    with pytest.raises(ShiftBoundError):
        check_shift_bound(build_grid(5), 8, 8)
    check_shift_bound(build_grid(5), 8, 8, override=True)
    # The visualization setting: 7 px shifts with 16 px tokens fit the bound.
    check_shift_bound(build_grid(7), 16, 16)
    with pytest.raises(ShiftBoundError):
        check_shift_bound([Shift(0, 4)], 8, 7)
