"""
Binary field snapshots.

Layout (little endian): magic b"SNLS1", d uint32, n uint32, L float64,
frame uint8 (0 physical, 1 rescaled), time float64, then n^d complex128 values
stored as interleaved (re, im) float64 pairs in C order.
"""
from pathlib import Path
from typing import Union
import logging
import struct

import numpy as np

from snls_lab.constants import Frame
from snls_lab.errors import CorruptManifestError
from snls_lab.numerics.spectral import FieldState, make_grid

logger = logging.getLogger(__name__)

MAGIC = b"SNLS1"
HEADER = struct.Struct("<5sIIdBd")

_FRAME_TAGS = {Frame.PHYSICAL: 0, Frame.RESCALED: 1}
_TAG_FRAMES = {tag: frame for frame, tag in _FRAME_TAGS.items()}


def write_snapshot(path: Union[str, Path], f: FieldState) -> Path:
    path = Path(path)
    header = HEADER.pack(MAGIC, f.grid.d, f.grid.n, f.grid.L, _FRAME_TAGS[f.frame], f.time)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())
    logger.debug(f"Wrote snapshot t={f.time:.6g} to {path}")
    return path


def read_snapshot(path: Union[str, Path]) -> FieldState:
    path = Path(path)
    if not path.exists():
        raise CorruptManifestError(f"snapshot file {path} is missing")
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise CorruptManifestError(f"snapshot file {path} is truncated")
    magic, d, n, L, tag, time = HEADER.unpack_from(raw)
    if magic != MAGIC or tag not in _TAG_FRAMES:
        raise CorruptManifestError(f"snapshot file {path} has an unrecognized header")
    grid = make_grid(d, n, L)
    payload = raw[HEADER.size:]
    if len(payload) != 16 * grid.n_points:
        raise CorruptManifestError(
            f"snapshot file {path} holds {len(payload)} data bytes, expected {16 * grid.n_points}"
        )
    values = np.frombuffer(payload, dtype="<c16").astype(np.complex128)
    return FieldState(grid=grid, values=values, frame=_TAG_FRAMES[tag], time=time)
