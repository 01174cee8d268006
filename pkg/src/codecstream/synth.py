"""Deterministic synthetic codec traces for tests, demos and benchmarks."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import InvalidSpec
from .trace import CodecTrace, FrameTrace, MotionVectorField, PacketRecord, ResidualPlane

_CELL = 8  # residual noise is drawn per 8x8 cell, then upsampled


def _check_common(fps, width, height, block_size_px, map_every):
    if not (isinstance(fps, (int, float)) and math.isfinite(fps) and fps > 0):
        raise InvalidSpec(f"fps must be > 0, got {fps!r}")
    if width < 1 or height < 1:
        raise InvalidSpec("width and height must be >= 1")
    if block_size_px < 1:
        raise InvalidSpec("block_size_px must be >= 1")
    if map_every < 1:
        raise InvalidSpec("map_every must be >= 1")


def _object_mask(shape, center, half):
    """Boolean mask of an axis-aligned box on a grid (wraps around edges)."""
    h, w = shape
    rows = (np.arange(h) - center[0] + h / 2) % h - h / 2
    cols = (np.arange(w) - center[1] + w / 2) % w - w / 2
    return (np.abs(rows)[:, None] <= half[0]) & (np.abs(cols)[None, :] <= half[1])


def _motion_field(rng, grid, amplitude, center, half, heading, background=0.05):
    if amplitude == 0:
        return np.zeros(grid + (2,))
    mask = _object_mask(grid, center, half)
    noise = rng.normal(size=grid + (2,))
    v = background * amplitude * noise
    drift = amplitude * np.array([math.cos(heading), math.sin(heading)])
    v[mask] = drift + 0.1 * amplitude * noise[mask]
    return np.round(v * 4.0) / 4.0  # quarter-pel, exact in JSON


def _residual(rng, width, height, amplitude, center_px, half_px):
    if amplitude == 0:
        return np.full((height, width), 128, dtype=np.uint8)
    ch, cw = -(-height // _CELL), -(-width // _CELL)
    cells = rng.normal(scale=0.5 * amplitude, size=(ch, cw))
    mask = _object_mask((ch, cw), (center_px[0] / _CELL, center_px[1] / _CELL),
                        (half_px[0] / _CELL, half_px[1] / _CELL))
    cells[mask] *= 8.0
    dev = np.repeat(np.repeat(cells, _CELL, axis=0), _CELL, axis=1)[:height, :width]
    return np.clip(np.rint(128.0 + dev), 0, 255).astype(np.uint8)


def synthesize_trace(
    segments: Sequence[tuple[float, float, float]],
    fps: float = 30.0,
    width: int = 128,
    height: int = 96,
    seed: int = 0,
    map_every: int = 1,
    block_size_px: int = 16,
) -> CodecTrace:
    """Build a trace from ``(duration_s, motion_amplitude, bitcost_level)`` segments.

    Each segment opens with an I-frame; the remaining frames are P-frames
    whose packet sizes stay within 5% of ``bitcost_level`` bytes.  Motion
    vectors and residuals are emitted on every ``map_every``-th P-frame of a
    segment (starting with its first) and follow a moving box whose speed is
    ``motion_amplitude`` pixels per frame.  A zero amplitude gives all-zero
    vectors and a flat residual at 128.
    """
    _check_common(fps, width, height, block_size_px, map_every)
    if not segments:
        raise InvalidSpec("at least one segment is required")
    for k, seg in enumerate(segments):
        if len(seg) != 3:
            raise InvalidSpec(f"segment {k} must be (duration_s, motion_amplitude, bitcost_level)")
        dur, amp, level = seg
        if not (dur > 0 and math.isfinite(dur)):
            raise InvalidSpec(f"segment {k}: duration must be > 0")
        if amp < 0 or level < 0:
            raise InvalidSpec(f"segment {k}: amplitude and bitcost level must be >= 0")

    rng = np.random.default_rng(seed)
    grid = (-(-height // block_size_px), -(-width // block_size_px))
    frames: list[FrameTrace] = []
    f = 0
    for dur, amp, level in segments:
        n = max(1, int(round(dur * fps)))
        center = np.array([rng.uniform(0, height), rng.uniform(0, width)])
        half = np.array([height / 4.0, width / 4.0])
        heading = rng.uniform(0, 2 * math.pi)
        step = amp * np.array([math.sin(heading), math.cos(heading)])
        jitter = rng.uniform(0.95, 1.05, size=n)
        for j in range(n):
            pts = f / fps
            if j == 0:
                pk = PacketRecord(f, "I", pts, int(round(8 * level)) + 1000)
                frames.append(FrameTrace(pk))
            else:
                pk = PacketRecord(f, "P", pts, int(round(level * jitter[j])))
                mv = res = None
                if (j - 1) % map_every == 0:
                    c_px = center + j * step
                    mv = MotionVectorField(
                        block_size_px,
                        _motion_field(rng, grid, amp, c_px / block_size_px, half / block_size_px, heading),
                    )
                    res = ResidualPlane(_residual(rng, width, height, amp, c_px, half / 2))
                frames.append(FrameTrace(pk, mv, res))
            f += 1
    return CodecTrace(float(fps), width, height, tuple(frames))


def synthesize_dominant_frame_trace(
    n_frames: int = 16,
    dominant_index: int = 5,
    fps: float = 30.0,
    width: int = 128,
    height: int = 128,
    seed: int = 0,
    block_size_px: int = 16,
) -> CodecTrace:
    """One I-frame followed by P-frames where a single frame moves everywhere.

    The dominant P-frame carries full-frame motion and residual energy; the
    others carry a small moving object on a static background, so a global
    top-k block selection concentrates on the dominant frame.
    """
    _check_common(fps, width, height, block_size_px, 1)
    if n_frames < 3 or not (1 <= dominant_index < n_frames):
        raise InvalidSpec("need n_frames >= 3 and 1 <= dominant_index < n_frames")
    rng = np.random.default_rng(seed)
    grid = (-(-height // block_size_px), -(-width // block_size_px))
    frames = [FrameTrace(PacketRecord(0, "I", 0.0, 20000))]
    for f in range(1, n_frames):
        pk = PacketRecord(f, "P", f / fps, 2000 + int(rng.integers(0, 200)))
        if f == dominant_index:
            v = rng.normal(loc=8.0, scale=0.5, size=grid + (2,))
            luma = np.clip(128 + rng.normal(scale=60, size=(height, width)), 0, 255)
        else:
            # a 3x3-block object: large enough to survive percentile normalization
            v = np.zeros(grid + (2,))
            r0, c0 = int(rng.integers(0, max(1, grid[0] - 2))), int(rng.integers(0, max(1, grid[1] - 2)))
            v[r0:r0 + 3, c0:c0 + 3] = (4.0, 3.0)
            luma = np.full((height, width), 128.0)
            y0, x0 = r0 * block_size_px, c0 * block_size_px
            obj = luma[y0:y0 + 3 * block_size_px, x0:x0 + 3 * block_size_px]
            obj += rng.normal(scale=40, size=obj.shape)
            luma = np.clip(luma, 0, 255)
        mv = MotionVectorField(block_size_px, np.round(v * 4.0) / 4.0)
        frames.append(FrameTrace(pk, mv, ResidualPlane(np.rint(luma).astype(np.uint8))))
    return CodecTrace(float(fps), width, height, tuple(frames))
