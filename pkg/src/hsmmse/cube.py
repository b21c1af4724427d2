"""Hyperspectral cube data model, HCB1 file I/O, masks and window extraction.

Pixel coordinates in the public API are 1-based, ``x`` in ``[1, H]`` and ``y``
in ``[1, W]``. Arrays are indexed 0-based as ``data[x - 1, y - 1, n]``.

On disk a cube is a JSON header line followed by a little-endian float32
payload in ``x, y, band`` order (band-interleaved-by-pixel). The header may
also live in a ``.json`` sidecar next to a ``.raw`` payload.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "CubeFormatError",
    "WavenumberAxis",
    "HyperCube",
    "PixelMask",
    "WindowSample",
    "load_cube",
    "save_cube",
    "extract_window",
    "window_stack",
    "mirror_pad",
    "band_index_nearest",
    "load_mask",
    "save_mask",
    "load_spectrum_csv",
    "save_spectrum_csv",
]

MAGIC = "HCB1"
_DTYPE = "f32le"
_ORDER = "x,y,band"


class CubeFormatError(ValueError):
    """Raised when a cube, mask or spectrum file violates its format contract."""


@dataclass(frozen=True)
class WavenumberAxis:
    """Uniform spectral axis, ``value(n) = start + n * step`` in cm^-1."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"axis step must be positive, got {self.step}")
        if self.count < 1:
            raise ValueError(f"axis count must be >= 1, got {self.count}")

    @classmethod
    def spanning(cls, start: float, stop: float, count: int) -> "WavenumberAxis":
        """Axis with ``count`` samples from ``start`` to ``stop`` inclusive."""
        step = (stop - start) / (count - 1) if count > 1 else 1.0
        return cls(float(start), float(step), int(count))

    def value(self, n: int) -> float:
        return self.start + n * self.step

    @property
    def values(self) -> np.ndarray:
        return self.start + np.arange(self.count) * self.step


@dataclass(frozen=True, eq=False)
class HyperCube:
    """An H x W x N array of spectra with its wavenumber axis.

    The data array is converted to float64 and frozen; treat cubes as
    immutable values and build new ones with :meth:`with_data`.
    """

    data: np.ndarray
    axis: WavenumberAxis

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 3:
            raise ValueError(f"cube data must be 3-D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValueError(f"cube dimensions must be >= 1, got {data.shape}")
        if data.shape[2] != self.axis.count:
            raise ValueError(
                f"axis has {self.axis.count} samples but cube has {data.shape[2]} bands"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("cube contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def spectrum(self, x: int, y: int) -> np.ndarray:
        """Spectrum at 1-based pixel ``(x, y)``."""
        _check_pixel(self, x, y)
        return self.data[x - 1, y - 1].copy()

    def with_data(self, data: np.ndarray) -> "HyperCube":
        return HyperCube(data, self.axis)

    def __eq__(self, other):
        if not isinstance(other, HyperCube):
            return NotImplemented
        return self.axis == other.axis and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class PixelMask:
    """Boolean H x W mask, e.g. ground-truth plume pixels."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.array(self.flags, dtype=bool, copy=True)
        if flags.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {flags.shape}")
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @property
    def height(self) -> int:
        return self.flags.shape[0]

    @property
    def width(self) -> int:
        return self.flags.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PixelMask):
            return NotImplemented
        return np.array_equal(self.flags, other.flags)


@dataclass(frozen=True)
class WindowSample:
    """The k^2 x N matrix of spectra around ``center``, rows row-major over the window."""

    center: tuple[int, int]
    k: int
    matrix: np.ndarray = field(repr=False)

    @property
    def center_row(self) -> int:
        """0-based row index of the center pixel, ``(k^2 - 1) / 2``."""
        return (self.k * self.k - 1) // 2


# --- window extraction -------------------------------------------------------


def _check_k(k: int, bands: int) -> None:
    if k < 3 or k % 2 == 0:
        raise ValueError(f"window size k must be an odd integer >= 3, got {k}")
    if k * k >= bands:
        raise ValueError(f"window needs k^2 < N, got k={k} (k^2={k * k}) and N={bands}")


def _check_pixel(cube: HyperCube, x: int, y: int) -> None:
    if not (1 <= x <= cube.height and 1 <= y <= cube.width):
        raise IndexError(
            f"pixel ({x}, {y}) outside 1..{cube.height} x 1..{cube.width}"
        )


def mirror_pad(data: np.ndarray, r: int) -> np.ndarray:
    """Pad the two spatial axes by ``r`` with reflect-without-repeat mirroring."""
    h, w = data.shape[:2]
    if min(h, w) > r:
        # numpy "reflect" mirrors about the edge sample without repeating it
        return np.pad(data, ((r, r), (r, r), (0, 0)), mode="reflect")
    ri = _reflect_index(np.arange(-r, h + r), h)
    ci = _reflect_index(np.arange(-r, w + r), w)
    return data[np.ix_(ri, ci)]


def extract_window(cube: HyperCube, x: int, y: int, k: int) -> WindowSample:
    """Collect the k x k neighborhood of 1-based pixel ``(x, y)``.

    Neighbors falling outside the image are mirrored across the border
    (reflect without repeating the edge pixel), so the center row is
    always the spectrum at ``(x, y)``.
    """
    _check_k(k, cube.bands)
    _check_pixel(cube, x, y)
    r = k // 2
    rows = _reflect_index(np.arange(x - 1 - r, x + r), cube.height)
    cols = _reflect_index(np.arange(y - 1 - r, y + r), cube.width)
    block = cube.data[np.ix_(rows, cols)]
    return WindowSample((x, y), k, block.reshape(k * k, cube.bands))


def _reflect_index(idx: np.ndarray, size: int) -> np.ndarray:
    if size == 1:
        return np.zeros_like(idx)
    period = 2 * (size - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= size, period - idx, idx)


def window_stack(
    data: np.ndarray, k: int, rows: slice | None = None, padded: np.ndarray | None = None
) -> np.ndarray:
    """All k x k windows of an (H, W, N) array as an (h, W, k^2, N) array.

    ``rows`` restricts the output to a slice of image rows; the windows still
    see the full image so the result matches :func:`extract_window` exactly.
    Pass ``padded = mirror_pad(data, k // 2)`` to reuse padding across calls.
    """
    if padded is None:
        padded = mirror_pad(data, k // 2)
    view = sliding_window_view(padded, (k, k), axis=(0, 1))  # (H, W, N, k, k)
    if rows is not None:
        view = view[rows]
    h, w, n = view.shape[:3]
    return view.transpose(0, 1, 3, 4, 2).reshape(h, w, k * k, n)


def band_index_nearest(axis: WavenumberAxis, target: float) -> int:
    """0-based band whose wavenumber is closest to ``target``; ties go low."""
    dist = np.abs(axis.values - target)
    return int(np.argmin(dist))


# --- HCB1 cube files ----------------------------------------------------------


def _header(cube: HyperCube) -> dict:
    h, w, n = cube.shape
    return {
        "magic": MAGIC,
        "height": h,
        "width": w,
        "bands": n,
        "axis": {"start": cube.axis.start, "step": cube.axis.step},
        "dtype": _DTYPE,
        "order": _ORDER,
    }


def save_cube(cube: HyperCube, path) -> None:
    """Write ``cube`` as HCB1.

    A ``.json`` path produces a header sidecar plus a ``.raw`` payload next
    to it; any other suffix produces a single file with the JSON header line,
    a newline and the payload.
    """
    path = Path(path)
    header = json.dumps(_header(cube), separators=(",", ":")).encode("ascii")
    payload = np.ascontiguousarray(cube.data, dtype="<f4").tobytes()
    if path.suffix == ".json":
        path.write_bytes(header + b"\n")
        path.with_suffix(".raw").write_bytes(payload)
    else:
        path.write_bytes(header + b"\n" + payload)


def load_cube(path) -> HyperCube:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such cube file: {path}")
    if path.suffix == ".json":
        header = _parse_header(path.read_bytes().strip())
        raw = path.with_suffix(".raw")
        if not raw.exists():
            raise FileNotFoundError(f"missing payload file {raw}")
        payload = raw.read_bytes()
    else:
        blob = path.read_bytes()
        nl = blob.find(b"\n")
        if nl < 0:
            raise CubeFormatError(f"{path}: no header line")
        header = _parse_header(blob[:nl])
        payload = blob[nl + 1 :]
    h, w, n = header["height"], header["width"], header["bands"]
    expected = 4 * h * w * n
    if len(payload) != expected:
        raise CubeFormatError(
            f"{path}: header declares {h}x{w}x{n} ({expected} bytes) "
            f"but payload has {len(payload)} bytes"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, n)
    if not np.all(np.isfinite(data)):
        raise CubeFormatError(f"{path}: payload contains non-finite values")
    axis = WavenumberAxis(float(header["axis"]["start"]), float(header["axis"]["step"]), n)
    return HyperCube(data, axis)


def _parse_header(line: bytes) -> dict:
    try:
        header = json.loads(line.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CubeFormatError(f"unreadable cube header: {exc}") from None
    if not isinstance(header, dict) or header.get("magic") != MAGIC:
        raise CubeFormatError(f"unsupported cube format {header.get('magic')!r}"
                              if isinstance(header, dict) else "cube header is not an object")
    if header.get("dtype", _DTYPE) != _DTYPE or header.get("order", _ORDER) != _ORDER:
        raise CubeFormatError(
            f"unsupported dtype/order {header.get('dtype')!r}/{header.get('order')!r}"
        )
    for key in ("height", "width", "bands"):
        if not isinstance(header.get(key), int) or header[key] < 1:
            raise CubeFormatError(f"header field {key!r} must be a positive integer")
    return header


# --- masks and spectra --------------------------------------------------------


def save_mask(mask: PixelMask, path) -> None:
    """Binary PGM (P5, maxval 255); True pixels are written as 255."""
    h, w = mask.flags.shape
    body = np.where(mask.flags, 255, 0).astype(np.uint8).tobytes()
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + body)


def load_mask(path) -> PixelMask:
    blob = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CubeFormatError(f"{path}: truncated PGM header")
        tokens.append(blob[start:pos])
    if tokens[0] != b"P5":
        raise CubeFormatError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise CubeFormatError(f"{path}: only 8-bit PGM masks are supported")
    body = blob[pos + 1 : pos + 1 + w * h]
    if len(body) != w * h:
        raise CubeFormatError(f"{path}: PGM payload too short")
    return PixelMask(np.frombuffer(body, dtype=np.uint8).reshape(h, w) != 0)


def save_spectrum_csv(axis: WavenumberAxis, values: np.ndarray, path) -> None:
    lines = [f"{float(wn)!r},{float(v)!r}" for wn, v in zip(axis.values, values)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_spectrum_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``wavenumber,value`` lines; returns (wavenumbers, values)."""
    wn, vals = [], []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            a, b = line.split(",")[:2]
            wn.append(float(a))
            vals.append(float(b))
        except ValueError:
            if wn:
                raise CubeFormatError(f"{path}: bad spectrum line {line!r}") from None
            # header row
    if not vals:
        raise CubeFormatError(f"{path}: no spectrum values")
    return np.array(wn), np.array(vals)
