"""Codec trace data model and the line-delimited sidecar trace format.

A trace file is UTF-8 text, one compact JSON object per line.  The first
line is the header::

    {"version":1,"fps":30.0,"width":1280,"height":720,"blob":"clip.trace.bin"}

and every following line describes one frame, keys in this fixed order::

    {"frame_index":0,"frame_type":"I","pts_seconds":0.0,"byte_size":9120,
     "mv":{...},"residual":{"offset":0,"length":921600},"block_bits":{...}}

``mv``, ``residual`` and ``block_bits`` are optional.  Residual luma planes
live in the companion binary file named by ``blob`` (raw 8-bit, row-major)
at the stated byte offset and length.  Floats are written with Python's
shortest round-trip repr, so parsing and re-serializing a file written by
:func:`write_trace` is byte-identical.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyTrace, MalformedRecord, NonMonotonicPts

FORMAT_VERSION = 1
FRAME_TYPES = ("I", "P", "B")

_HEADER_KEYS = ("version", "fps", "width", "height", "blob")
_FRAME_KEYS = ("frame_index", "frame_type", "pts_seconds", "byte_size", "mv", "residual", "block_bits")
_REQUIRED_FRAME_KEYS = _FRAME_KEYS[:4]
_MV_KEYS = ("block_size_px", "block_w", "block_h", "vectors")
_RESIDUAL_KEYS = ("offset", "length")
_BITS_KEYS = ("block_w", "block_h", "bytes")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.flags.writeable:
        a = a.copy()
        a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PacketRecord:
    frame_index: int
    frame_type: str
    pts_seconds: float
    byte_size: int

    def __post_init__(self):
        if self.frame_type not in FRAME_TYPES:
            raise MalformedRecord(f"unknown frame_type {self.frame_type!r}")
        if self.frame_index < 0:
            raise MalformedRecord("frame_index must be >= 0")
        if not math.isfinite(self.pts_seconds) or self.pts_seconds < 0:
            raise MalformedRecord(f"pts_seconds must be finite and >= 0, got {self.pts_seconds}")
        if self.byte_size < 0:
            raise MalformedRecord("byte_size must be >= 0")

    @property
    def is_predicted(self) -> bool:
        return self.frame_type != "I"


@dataclass(frozen=True, eq=False)
class MotionVectorField:
    """Per-block codec motion vectors, ``vectors[row, col] = (dx, dy)`` in pixels."""

    block_size_px: int
    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 2:
            raise MalformedRecord(f"motion vectors must have shape (block_h, block_w, 2), got {v.shape}")
        if self.block_size_px < 1:
            raise MalformedRecord("block_size_px must be >= 1")
        if not np.all(np.isfinite(v)):
            raise MalformedRecord("motion vectors must be finite")
        object.__setattr__(self, "vectors", _frozen(v))

    @property
    def block_h(self) -> int:
        return self.vectors.shape[0]

    @property
    def block_w(self) -> int:
        return self.vectors.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MotionVectorField):
            return NotImplemented
        return self.block_size_px == other.block_size_px and np.array_equal(self.vectors, other.vectors)


@dataclass(frozen=True, eq=False)
class ResidualPlane:
    """8-bit luma residual with zero point 128, shape ``(height, width)``."""

    luma: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.luma)
        if a.ndim != 2:
            raise MalformedRecord("residual luma must be 2-D")
        if a.dtype != np.uint8:
            if a.size and (a.min() < 0 or a.max() > 255):
                raise MalformedRecord("residual luma values must lie in [0, 255]")
            a = a.astype(np.uint8)
        object.__setattr__(self, "luma", _frozen(a))

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ResidualPlane):
            return NotImplemented
        return np.array_equal(self.luma, other.luma)


@dataclass(frozen=True, eq=False)
class BlockBits:
    """Optional per-block bit allocation (bytes) on the 2x2-patch block grid."""

    bytes_: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.bytes_, dtype=np.int64)
        if a.ndim != 2:
            raise MalformedRecord("block_bits must be 2-D")
        if a.size and a.min() < 0:
            raise MalformedRecord("block_bits must be >= 0")
        object.__setattr__(self, "bytes_", _frozen(a))

    def __eq__(self, other):
        if not isinstance(other, BlockBits):
            return NotImplemented
        return np.array_equal(self.bytes_, other.bytes_)


@dataclass(frozen=True)
class FrameTrace:
    packet: PacketRecord
    mv: MotionVectorField | None = None
    residual: ResidualPlane | None = None
    block_bits: BlockBits | None = None

    def __post_init__(self):
        if self.packet.frame_type == "I" and (self.mv is not None or self.residual is not None):
            raise MalformedRecord(f"I-frame {self.packet.frame_index} must not carry mv or residual")

    @property
    def has_signal(self) -> bool:
        return self.mv is not None or self.residual is not None


@dataclass(frozen=True)
class CodecTrace:
    fps: float
    width: int
    height: int
    frames: tuple[FrameTrace, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise MalformedRecord(f"fps must be > 0, got {self.fps}")
        if self.width < 1 or self.height < 1:
            raise MalformedRecord("width and height must be >= 1")
        if not self.frames:
            raise EmptyTrace("trace has no frames")
        prev = -math.inf
        for i, fr in enumerate(self.frames):
            pk = fr.packet
            if pk.frame_index != i:
                raise MalformedRecord(f"frame_index {pk.frame_index} at position {i}; indices must be 0..n-1")
            if not pk.pts_seconds > prev:
                raise NonMonotonicPts(f"pts {pk.pts_seconds} at frame {i} does not exceed previous pts {prev}")
            prev = pk.pts_seconds
            if fr.residual is not None and (fr.residual.width, fr.residual.height) != (self.width, self.height):
                raise DimensionMismatch(
                    f"frame {i}: residual is {fr.residual.width}x{fr.residual.height}, "
                    f"trace is {self.width}x{self.height}"
                )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def duration_s(self) -> float:
        """Span covered by the trace: last frame start plus one frame period."""
        last = max(self.frames[-1].packet.pts_seconds, (len(self.frames) - 1) / self.fps)
        return last + 1.0 / self.fps


# -- serialization ---------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _frame_record(fr: FrameTrace, offset: int) -> dict:
    pk = fr.packet
    rec = {
        "frame_index": pk.frame_index,
        "frame_type": pk.frame_type,
        "pts_seconds": float(pk.pts_seconds),
        "byte_size": pk.byte_size,
    }
    if fr.mv is not None:
        rec["mv"] = {
            "block_size_px": fr.mv.block_size_px,
            "block_w": fr.mv.block_w,
            "block_h": fr.mv.block_h,
            "vectors": fr.mv.vectors.reshape(-1).tolist(),
        }
    if fr.residual is not None:
        rec["residual"] = {"offset": offset, "length": fr.residual.luma.size}
    if fr.block_bits is not None:
        bb = fr.block_bits.bytes_
        rec["block_bits"] = {"block_w": bb.shape[1], "block_h": bb.shape[0], "bytes": bb.reshape(-1).tolist()}
    return rec


def iter_serialized(trace: CodecTrace, blob_name: str | None) -> Iterator[tuple[str, bytes | None]]:
    """Yield ``(line, residual_bytes)`` pairs; the header line comes first."""
    has_blob = any(fr.residual is not None for fr in trace.frames)
    header = {
        "version": FORMAT_VERSION,
        "fps": float(trace.fps),
        "width": trace.width,
        "height": trace.height,
        "blob": blob_name if has_blob else None,
    }
    yield _dumps(header) + "\n", None
    offset = 0
    for fr in trace.frames:
        rec = _frame_record(fr, offset)
        payload = None
        if fr.residual is not None:
            payload = fr.residual.luma.tobytes()
            offset += len(payload)
        yield _dumps(rec) + "\n", payload


def serialize_trace(trace: CodecTrace, blob_name: str = "trace.bin") -> tuple[bytes, bytes]:
    """Serialize in memory; returns ``(trace_text, blob)``."""
    lines, blobs = [], []
    for line, payload in iter_serialized(trace, blob_name):
        lines.append(line)
        if payload is not None:
            blobs.append(payload)
    return "".join(lines).encode("utf-8"), b"".join(blobs)


def write_trace(trace: CodecTrace, path: str | os.PathLike) -> None:
    """Write ``path`` and, if any frame has a residual, ``<path>.bin`` beside it."""
    path = os.fspath(path)
    blob_path = path + ".bin"
    blob_name = os.path.basename(blob_path)
    blob_fh = None
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line, payload in iter_serialized(trace, blob_name):
                fh.write(line)
                if payload is not None:
                    if blob_fh is None:
                        blob_fh = open(blob_path, "wb")
                    blob_fh.write(payload)
    finally:
        if blob_fh is not None:
            blob_fh.close()


# -- parsing ---------------------------------------------------------------

def _check_keys(rec: dict, allowed: Sequence[str], required: Sequence[str], where: str) -> None:
    keys = list(rec)
    missing = [k for k in required if k not in rec]
    if missing:
        raise MalformedRecord(f"{where}: missing field(s) {missing}")
    unknown = [k for k in keys if k not in allowed]
    if unknown:
        raise MalformedRecord(f"{where}: unknown field(s) {unknown}")
    order = [k for k in allowed if k in rec]
    if keys != order:
        raise MalformedRecord(f"{where}: fields out of order, expected {order}")


def _int(value, name: str, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedRecord(f"{where}: {name} must be an integer, got {value!r}")
    if value < minimum:
        raise MalformedRecord(f"{where}: {name} must be >= {minimum}, got {value}")
    return value


def _num(value, name: str, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedRecord(f"{where}: {name} must be a number, got {value!r}")
    return float(value)


def _load(line: str, where: str) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"{where}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise MalformedRecord(f"{where}: record must be an object")
    return rec


def _parse_mv(rec, where: str) -> MotionVectorField:
    if not isinstance(rec, dict):
        raise MalformedRecord(f"{where}: mv must be an object")
    _check_keys(rec, _MV_KEYS, _MV_KEYS, where + " mv")
    bs = _int(rec["block_size_px"], "block_size_px", where, 1)
    bw = _int(rec["block_w"], "block_w", where)
    bh = _int(rec["block_h"], "block_h", where)
    vec = rec["vectors"]
    if not isinstance(vec, list) or len(vec) != 2 * bw * bh:
        raise MalformedRecord(f"{where}: mv.vectors must hold 2*block_w*block_h = {2 * bw * bh} numbers")
    for v in vec:
        _num(v, "mv.vectors entry", where)
    return MotionVectorField(bs, np.asarray(vec, dtype=np.float64).reshape(bh, bw, 2))


def _parse_bits(rec, where: str) -> BlockBits:
    if not isinstance(rec, dict):
        raise MalformedRecord(f"{where}: block_bits must be an object")
    _check_keys(rec, _BITS_KEYS, _BITS_KEYS, where + " block_bits")
    bw = _int(rec["block_w"], "block_w", where)
    bh = _int(rec["block_h"], "block_h", where)
    vals = rec["bytes"]
    if not isinstance(vals, list) or len(vals) != bw * bh:
        raise MalformedRecord(f"{where}: block_bits.bytes must hold block_w*block_h = {bw * bh} integers")
    for v in vals:
        _int(v, "block_bits entry", where)
    return BlockBits(np.asarray(vals, dtype=np.int64).reshape(bh, bw))


def parse_trace(lines: Iterable[str | bytes], blob=None) -> CodecTrace:
    """Parse trace lines into a validated :class:`CodecTrace`.

    ``blob`` is any buffer (bytes, memoryview, ``np.memmap``) holding the
    residual planes; it is required only when some frame has a residual.
    """
    it = iter(lines)
    header_line = None
    lineno = 0
    for raw in it:
        lineno += 1
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        if line.strip():
            header_line = line
            break
    if header_line is None:
        raise EmptyTrace("trace input is empty")
    header = _load(header_line, f"line {lineno}")
    _check_keys(header, _HEADER_KEYS, _HEADER_KEYS[:4], f"line {lineno} header")
    if header["version"] != FORMAT_VERSION or isinstance(header["version"], bool):
        raise MalformedRecord(f"unsupported trace version {header['version']!r}")
    fps = _num(header["fps"], "fps", "header")
    if not (math.isfinite(fps) and fps > 0):
        raise MalformedRecord(f"header: fps must be > 0, got {fps}")
    width = _int(header["width"], "width", "header", 1)
    height = _int(header["height"], "height", "header", 1)

    buf = None
    if blob is not None:
        buf = np.frombuffer(blob, dtype=np.uint8) if not isinstance(blob, np.ndarray) else blob.reshape(-1)

    frames = []
    prev_pts = -math.inf
    for raw in it:
        lineno += 1
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        if not line.strip():
            continue
        where = f"line {lineno}"
        rec = _load(line, where)
        _check_keys(rec, _FRAME_KEYS, _REQUIRED_FRAME_KEYS, where)
        idx = _int(rec["frame_index"], "frame_index", where)
        ftype = rec["frame_type"]
        if ftype not in FRAME_TYPES:
            raise MalformedRecord(f"{where}: frame_type must be one of {FRAME_TYPES}, got {ftype!r}")
        pts = _num(rec["pts_seconds"], "pts_seconds", where)
        if not math.isfinite(pts) or pts < 0:
            raise MalformedRecord(f"{where}: pts_seconds must be finite and >= 0")
        if not pts > prev_pts:
            raise NonMonotonicPts(f"{where}: pts {pts} does not exceed previous pts {prev_pts}")
        prev_pts = pts
        size = _int(rec["byte_size"], "byte_size", where)
        if idx != len(frames):
            raise MalformedRecord(f"{where}: frame_index {idx}, expected {len(frames)}")

        mv = _parse_mv(rec["mv"], where) if "mv" in rec else None
        residual = None
        if "residual" in rec:
            r = rec["residual"]
            if not isinstance(r, dict):
                raise MalformedRecord(f"{where}: residual must be an object")
            _check_keys(r, _RESIDUAL_KEYS, _RESIDUAL_KEYS, where + " residual")
            off = _int(r["offset"], "residual.offset", where)
            length = _int(r["length"], "residual.length", where)
            if length != width * height:
                raise DimensionMismatch(f"{where}: residual length {length} != width*height {width * height}")
            if buf is None:
                raise MalformedRecord(f"{where}: residual referenced but no blob supplied")
            if off + length > buf.size:
                raise MalformedRecord(f"{where}: residual [{off}, {off + length}) exceeds blob size {buf.size}")
            residual = ResidualPlane(buf[off:off + length].reshape(height, width))
        bits = _parse_bits(rec["block_bits"], where) if "block_bits" in rec else None
        frames.append(FrameTrace(PacketRecord(idx, ftype, pts, size), mv, residual, bits))

    if not frames:
        raise EmptyTrace("trace has a header but no frames")
    return CodecTrace(fps, width, height, tuple(frames))


def read_trace(path: str | os.PathLike) -> CodecTrace:
    """Read a trace file; the residual blob is memory-mapped, not loaded."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        first = fh.readline()
    blob = None
    if first.strip():
        try:
            header = json.loads(first)
        except json.JSONDecodeError:
            header = {}
        name = header.get("blob") if isinstance(header, dict) else None
        if name:
            blob_path = os.path.join(os.path.dirname(path), name)
            if not os.path.exists(blob_path):
                raise MalformedRecord(f"companion blob {blob_path} not found")
            if os.path.getsize(blob_path) > 0:
                blob = np.memmap(blob_path, dtype=np.uint8, mode="r")
            else:
                blob = b""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace(fh, blob)
