"""Dense frame tensors computed from one event window.

All converters return float64 arrays shaped (channels, height, width) with
the polarity-0 channel block first. Outputs are finite by construction.

The TNS1 tensor container (little-endian): magic "TNS1", u32 version = 1,
u32 ndim, ndim u32 dims, then float32 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import BadBins, BadMagic, DimensionMismatch, FormatError, TruncatedFile, UnsupportedVersion
from .events import EventWindow
from .fileio import atomic_write_bytes

TENSOR_MAGIC = b"TNS1"
TENSOR_VERSION = 1


def _check_bounds(window: EventWindow, height: int, width: int) -> None:
    if height <= 0 or width <= 0:
        raise DimensionMismatch(f"grid {height}x{width} is empty")
    if len(window) == 0:
        return
    if int(window.x.max()) >= width or int(window.y.max()) >= height:
        raise DimensionMismatch(
            f"window {window.index} has events outside the {height}x{width} grid"
        )


def event_histogram(window: EventWindow, height: int, width: int) -> np.ndarray:
    """Per-polarity event counts; channel p holds counts of polarity p."""
    _check_bounds(window, height, width)
    out = np.zeros((2, height, width), np.float64)
    if len(window):
        _kernels.accumulate_histogram(window.x, window.y, window.p, out)
    return out


def timestamp_map(window: EventWindow, height: int, width: int) -> np.ndarray:
    """Most recent event time per pixel and polarity, normalized to [0, 1).

    Pixels with no events hold 0, which coincides with an event exactly at
    the window start; that ambiguity is inherent to the encoding.
    """
    _check_bounds(window, height, width)
    out = np.zeros((2, height, width), np.float64)
    if len(window):
        span = window.t_end - window.t_start
        vals = (window.t - np.uint64(window.t_start)).astype(np.float64) / span
        _kernels.accumulate_last_value(window.x, window.y, window.p, vals, out)
    return out


def time_surface(
    window: EventWindow, height: int, width: int, tau_us: float | None = None
) -> np.ndarray:
    """Exponential decay exp(-(t_end - t_last) / tau) of the latest event.

    tau defaults to the window length. Later events always score strictly
    higher; silent pixels hold 0.
    """
    _check_bounds(window, height, width)
    if tau_us is None:
        tau_us = window.t_end - window.t_start
    if tau_us <= 0:
        raise DimensionMismatch(f"decay constant must be positive, got {tau_us}")
    out = np.zeros((2, height, width), np.float64)
    if len(window):
        age = (np.uint64(window.t_end) - window.t).astype(np.float64)
        vals = np.exp(-age / tau_us)
        _kernels.accumulate_last_value(window.x, window.y, window.p, vals, out)
    return out


def event_volume(window: EventWindow, bins: int, height: int, width: int) -> np.ndarray:
    """Micro-binned event mass with linear temporal interpolation.

    Normalized time t* = (t - t_start) * bins / dt lands in [0, bins); an
    event adds 1 - frac(t*) to bin floor(t*) and frac(t*) to the next bin.
    Mass that would spill past the last bin edge is folded back into the
    last bin, so total mass equals the event count and bins=1 reproduces
    the histogram exactly. Channel layout: bins 0..B-1 for polarity 0,
    then polarity 1.
    """
    if bins < 1:
        raise BadBins(f"bins must be >= 1, got {bins}")
    _check_bounds(window, height, width)
    out = np.zeros((2, bins, height, width), np.float64)
    if len(window):
        span = window.t_end - window.t_start
        rel = (window.t - np.uint64(window.t_start)).astype(np.float64)
        tstar = rel * bins / span
        _kernels.accumulate_volume(window.x, window.y, window.p, tstar, out)
    return out.reshape(2 * bins, height, width)


def occupancy_mask(window: EventWindow, height: int, width: int) -> np.ndarray:
    """Boolean grid: True where at least one event of either polarity landed."""
    _check_bounds(window, height, width)
    out = np.zeros((height, width), bool)
    if len(window):
        _kernels.mark_occupancy(window.x, window.y, out)
    return out


def encode_tensor(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype=np.float32)
    header = TENSOR_MAGIC + struct.pack("<II", TENSOR_VERSION, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + dims + arr.tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < 12:
        raise TruncatedFile(f"tensor file is {len(data)} bytes, header needs 12")
    if data[:4] != TENSOR_MAGIC:
        raise BadMagic(f"expected {TENSOR_MAGIC!r}, found {data[:4]!r}")
    version, ndim = struct.unpack_from("<II", data, 4)
    if version != TENSOR_VERSION:
        raise UnsupportedVersion(f"tensor version {version} not supported")
    if len(data) < 12 + 4 * ndim:
        raise TruncatedFile("tensor file ends inside the dims block")
    dims = struct.unpack_from(f"<{ndim}I", data, 12)
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    body = len(data) - 12 - 4 * ndim
    if body != 4 * count:
        raise TruncatedFile(f"tensor body has {body} bytes, dims need {4 * count}")
    values = np.frombuffer(data, dtype="<f4", count=count, offset=12 + 4 * ndim)
    if not np.isfinite(values).all():
        raise FormatError("tensor contains non-finite values")
    return values.reshape(dims).copy()


def write_tensor_file(path: str | Path, array: np.ndarray) -> None:
    atomic_write_bytes(path, encode_tensor(array))


def read_tensor_file(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())
