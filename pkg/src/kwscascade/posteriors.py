"""Frame-level posterior streams and their on-disk formats.

A stream is a frames-by-units matrix of linear probabilities plus a frame
duration for time conversion. Decoding math happens in the natural-log
domain; :meth:`PosteriorStream.log_values` is the single conversion point,
with zeros clamped to :data:`LOG_FLOOR` so tropical arithmetic stays total.

Binary format: magic ``KWSP``, little-endian u32 {version=1, num_frames,
num_units}, f32 frame_duration, then num_frames*num_units f32 values in
row-major order. A CSV import path (header row of unit names, one frame
per row) is accepted for fixtures.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"KWSP"
FORMAT_VERSION = 1
ROW_SUM_TOL = 1e-4
LOG_FLOOR = -1e9
DEFAULT_FRAME_DURATION = 0.040  # 10 ms features downsampled by 4

_HEADER = struct.Struct("<4sIIIf")


@dataclass
class PosteriorStream:
    """Immutable-by-convention frames-by-units probability matrix."""

    values: np.ndarray
    frame_duration: float = DEFAULT_FRAME_DURATION
    _log_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError(f"expected a 2-d matrix, got shape {self.values.shape}")
        if self.frame_duration <= 0:
            raise ValueError(f"frame_duration must be positive, got {self.frame_duration}")
        _validate_rows(self.values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_units(self) -> int:
        return self.values.shape[1]

    def log_values(self) -> np.ndarray:
        """Natural-log posteriors (float64) with log(0) clamped to LOG_FLOOR."""
        if self._log_cache is None:
            v = self.values.astype(np.float64)
            positive = v > 0.0
            logs = np.full_like(v, LOG_FLOOR)
            np.log(v, out=logs, where=positive)
            self._log_cache = logs
        return self._log_cache


@dataclass(frozen=True)
class SegmentRef:
    """Inclusive frame span of a stream, the handle passed to verifier scorers."""

    stream: PosteriorStream
    start_frame: int
    end_frame: int
    label: str = ""

    def __post_init__(self):
        if not 0 <= self.start_frame <= self.end_frame < self.stream.num_frames:
            raise ValueError(
                f"bad segment [{self.start_frame}, {self.end_frame}] for a "
                f"{self.stream.num_frames}-frame stream"
            )

    @property
    def num_frames(self) -> int:
        return self.end_frame - self.start_frame + 1

    @property
    def key(self) -> str:
        return self.label if self.label else f"{self.start_frame}-{self.end_frame}"


def _validate_rows(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        bad = int(np.argwhere(~np.isfinite(values).all(axis=1))[0][0])
        raise ValueError(f"non-finite value in row {bad}")
    if values.size == 0:
        return
    if values.min() < 0.0 or values.max() > 1.0:
        bad = int(np.argwhere(((values < 0.0) | (values > 1.0)).any(axis=1))[0][0])
        raise ValueError(f"row {bad} has values outside [0, 1]")
    sums = values.sum(axis=1, dtype=np.float64)
    off = np.abs(sums - 1.0) > ROW_SUM_TOL
    if off.any():
        bad = int(np.argmax(off))
        raise ValueError(f"row {bad} sums to {sums[bad]:g}")


def frame_to_seconds(stream: PosteriorStream, frame: int) -> float:
    """Convert a frame index into seconds from stream start."""
    if not 0 <= frame < stream.num_frames:
        raise ValueError(f"frame {frame} out of range [0, {stream.num_frames})")
    return frame * stream.frame_duration


def save_stream(stream: PosteriorStream, path: str | Path) -> None:
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, stream.num_frames, stream.num_units, stream.frame_duration
    )
    payload = np.ascontiguousarray(stream.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_stream(path: str | Path) -> PosteriorStream:
    """Load and validate a binary posterior file."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, num_frames, num_units, frame_duration = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * num_frames * num_units
    if len(raw) < expected:
        raise ValueError(f"{path}: truncated payload")
    if len(raw) > expected:
        raise ValueError(f"{path}: {len(raw) - expected} trailing bytes")
    values = np.frombuffer(raw, dtype="<f4", count=num_frames * num_units, offset=_HEADER.size)
    values = values.reshape(num_frames, num_units).copy()
    return PosteriorStream(values=values, frame_duration=float(frame_duration))


def load_stream_csv(
    path: str | Path, frame_duration: float = DEFAULT_FRAME_DURATION
) -> tuple[PosteriorStream, list[str]]:
    """Load a fixture CSV: header row of unit names, one frame per row.

    Returns the stream and the header's unit names.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ValueError(f"{path}: line {lineno} has {len(row)} fields, expected {len(names)}")
            rows.append([float(x) for x in row])
    values = np.array(rows, dtype=np.float32).reshape(len(rows), len(names))
    return PosteriorStream(values=values, frame_duration=frame_duration), [n.strip() for n in names]
