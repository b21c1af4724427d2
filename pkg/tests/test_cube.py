import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hsmmse.cube import (
    CubeFormatError,
    HyperCube,
    PixelMask,
    WavenumberAxis,
    band_index_nearest,
    extract_window,
    load_cube,
    load_mask,
    load_spectrum_csv,
    save_cube,
    save_mask,
    save_spectrum_csv,
    window_stack,
)

from conftest import make_cube


def test_axis_values():
    axis = WavenumberAxis(900.0, 2.5, 4)
    assert axis.values.tolist() == [900.0, 902.5, 905.0, 907.5]
    assert axis.value(3) == 907.5
    with pytest.raises(ValueError):
        WavenumberAxis(900.0, 0.0, 4)
    with pytest.raises(ValueError):
        WavenumberAxis(900.0, 1.0, 0)


def test_cube_rejects_bad_input():
    with pytest.raises(ValueError):
        HyperCube(np.zeros((2, 2)), WavenumberAxis(0, 1, 2))
    with pytest.raises(ValueError):
        HyperCube(np.zeros((2, 2, 3)), WavenumberAxis(0, 1, 4))
    bad = np.zeros((2, 2, 3))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        make_cube(bad)


def test_cube_is_immutable():
    c = make_cube(np.zeros((2, 2, 4)))
    with pytest.raises(ValueError):
        c.data[0, 0, 0] = 1.0


# --- HCB1 files ---------------------------------------------------------------


def test_roundtrip_zeros(tmp_path):
    c = make_cube(np.zeros((2, 2, 4)))
    save_cube(c, tmp_path / "z.hcb")
    assert load_cube(tmp_path / "z.hcb") == c


def test_roundtrip_sidecar(tmp_path, rng):
    c = make_cube(rng.standard_normal((3, 5, 7)).astype(np.float32))
    save_cube(c, tmp_path / "c.json")
    assert (tmp_path / "c.raw").exists()
    header = json.loads((tmp_path / "c.json").read_text())
    assert header["magic"] == "HCB1" and header["order"] == "x,y,band"
    assert load_cube(tmp_path / "c.json") == c


def test_roundtrip_full_size(tmp_path, rng):
    c = make_cube(rng.standard_normal((128, 128, 128)).astype(np.float32), step=360 / 127)
    save_cube(c, tmp_path / "big.hcb")
    back = load_cube(tmp_path / "big.hcb")
    assert np.abs(back.data - c.data).max() == 0
    assert back.axis == c.axis


def test_save_is_deterministic(tmp_path, rng):
    c = make_cube(rng.standard_normal((4, 3, 5)))
    save_cube(c, tmp_path / "a.hcb")
    save_cube(c, tmp_path / "b.hcb")
    assert (tmp_path / "a.hcb").read_bytes() == (tmp_path / "b.hcb").read_bytes()


def test_single_value_payload(tmp_path):
    save_cube(make_cube(np.full((1, 1, 1), 3.5)), tmp_path / "one.hcb")
    blob = (tmp_path / "one.hcb").read_bytes()
    payload = blob[blob.index(b"\n") + 1 :]
    assert payload == np.array([3.5], dtype="<f4").tobytes()
    assert len(payload) == 4


def test_size_mismatch(tmp_path):
    header = {"magic": "HCB1", "height": 2, "width": 2, "bands": 4,
              "axis": {"start": 0, "step": 1}, "dtype": "f32le", "order": "x,y,band"}
    blob = json.dumps(header).encode() + b"\n" + np.zeros(15, "<f4").tobytes()
    (tmp_path / "bad.hcb").write_bytes(blob)
    with pytest.raises(CubeFormatError, match="payload"):
        load_cube(tmp_path / "bad.hcb")


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_cube(tmp_path / "missing.hcb")
    header = {"magic": "HCB9", "height": 1, "width": 1, "bands": 1, "axis": {"start": 0, "step": 1}}
    (tmp_path / "v.hcb").write_bytes(json.dumps(header).encode() + b"\n" + b"\0" * 4)
    with pytest.raises(CubeFormatError, match="unsupported"):
        load_cube(tmp_path / "v.hcb")
    header["magic"] = "HCB1"
    (tmp_path / "nan.hcb").write_bytes(
        json.dumps(header).encode() + b"\n" + np.array([np.nan], "<f4").tobytes()
    )
    with pytest.raises(CubeFormatError, match="non-finite"):
        load_cube(tmp_path / "nan.hcb")


@settings(max_examples=30, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_roundtrip_property(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("rt") / "c.hcb"
    c = make_cube(data)
    save_cube(c, path)
    assert load_cube(path) == c


# --- windows ------------------------------------------------------------------


def _coded_cube(h=6, w=7, n=12):
    x = np.arange(1, h + 1)[:, None, None]
    y = np.arange(1, w + 1)[None, :, None]
    return make_cube(np.broadcast_to(x * 10 + y, (h, w, n)))


def test_interior_window_row_major():
    win = extract_window(_coded_cube(), 3, 4, 3)
    expected = [23, 24, 25, 33, 34, 35, 43, 44, 45]
    assert win.matrix[:, 0].tolist() == expected
    assert win.center_row == 4


def test_corner_window_matches_padded_oracle():
    cube = _coded_cube()
    k, r = 3, 1
    # explicit mirror (reflect without repeat) padding built by hand
    h, w = cube.height, cube.width
    rows = [1] + list(range(h)) + [h - 2]
    cols = [1] + list(range(w)) + [w - 2]
    padded = cube.data[np.ix_(rows, cols)]
    for x, y in [(1, 1), (1, w), (h, 1), (h, w), (1, 4)]:
        block = padded[x - 1 : x - 1 + k, y - 1 : y - 1 + k].reshape(k * k, -1)
        win = extract_window(cube, x, y, k)
        np.testing.assert_array_equal(win.matrix, block)
        np.testing.assert_array_equal(win.matrix[win.center_row], cube.spectrum(x, y))
    assert extract_window(cube, 1, 1, 3).matrix[:, 0].tolist() == [22, 21, 22, 12, 11, 12, 22, 21, 22]


def test_window_errors():
    cube = _coded_cube(n=9)
    with pytest.raises(ValueError):
        extract_window(cube, 2, 2, 3)  # k^2 == N
    cube = _coded_cube()
    with pytest.raises(ValueError):
        extract_window(cube, 2, 2, 4)
    with pytest.raises(IndexError):
        extract_window(cube, 0, 2, 3)
    with pytest.raises(IndexError):
        extract_window(cube, 2, 8, 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 7), st.sampled_from([3, 5]), st.floats(-5, 5))
def test_constant_cube_windows(x, y, k, value):
    cube = make_cube(np.full((6, 7, 30), value))
    win = extract_window(cube, x, y, k)
    assert win.matrix.shape == (k * k, 30)
    assert np.all(win.matrix == value)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.sampled_from([3, 5]))
def test_center_row_is_pixel(x, y, k):
    data = np.random.default_rng(x * 31 + y).standard_normal((9, 9, 30))
    cube = make_cube(data)
    win = extract_window(cube, x, y, k)
    np.testing.assert_array_equal(win.matrix[win.center_row], data[x - 1, y - 1])
    r = k // 2
    if r < x <= 9 - r and r < y <= 9 - r:
        np.testing.assert_array_equal(
            win.matrix, data[x - 1 - r : x + r, y - 1 - r : y + r].reshape(k * k, 30)
        )


@pytest.mark.parametrize("shape", [(6, 7, 12), (2, 2, 12), (1, 5, 12)])
def test_window_stack_matches_extract(shape, rng):
    cube = make_cube(rng.standard_normal(shape))
    stack = window_stack(cube.data, 3)
    for x in range(1, shape[0] + 1):
        for y in range(1, shape[1] + 1):
            np.testing.assert_array_equal(stack[x - 1, y - 1], extract_window(cube, x, y, 3).matrix)


# --- band lookup --------------------------------------------------------------


def test_band_index_nearest_reference_axis():
    axis = WavenumberAxis(900.0, 360 / 127, 128)
    scan = min(range(128), key=lambda n: (abs(axis.value(n) - 950.0), n))
    assert band_index_nearest(axis, 950.0) == scan == 18
    assert abs(axis.value(18) - 951.02) < 0.01
    assert band_index_nearest(axis, 900.0) == 0
    assert band_index_nearest(axis, 10000.0) == 127
    assert band_index_nearest(axis, -5.0) == 0


def test_band_index_tie_goes_low():
    axis = WavenumberAxis(0.0, 1.0, 4)
    assert band_index_nearest(axis, 1.5) == 1


# --- masks and spectra --------------------------------------------------------


def test_mask_roundtrip(tmp_path, rng):
    mask = PixelMask(rng.random((5, 8)) > 0.5)
    save_mask(mask, tmp_path / "m.pgm")
    assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n8 5\n255\n")
    assert load_mask(tmp_path / "m.pgm") == mask


def test_mask_nonzero_is_true(tmp_path):
    (tmp_path / "m.pgm").write_bytes(b"P5\n# comment\n3 1\n255\n" + bytes([0, 7, 255]))
    assert load_mask(tmp_path / "m.pgm").flags.tolist() == [[False, True, True]]
    (tmp_path / "p2.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(CubeFormatError):
        load_mask(tmp_path / "p2.pgm")


def test_spectrum_csv_roundtrip(tmp_path):
    axis = WavenumberAxis(900.0, 360 / 127, 128)
    values = np.sin(np.arange(128.0))
    save_spectrum_csv(axis, values, tmp_path / "t.csv")
    wn, back = load_spectrum_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back, values)
    np.testing.assert_array_equal(wn, axis.values)
