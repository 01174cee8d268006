"""Visual-token accounting for uniform frame sampling versus codec canvases."""

from __future__ import annotations

import math

from .errors import InvalidSpec


def tokens_per_frame(height: int, width: int, patch_size: int = 14, merge: int = 2) -> int:
    """Merged tokens for one frame: a patch grid reduced by ``merge x merge`` merging.

    Grids that do not divide evenly are padded up to whole merge windows.
    """
    if min(height, width, patch_size, merge) < 1:
        raise InvalidSpec("height, width, patch size and merge factor must be >= 1")
    rows, cols = math.ceil(height / patch_size), math.ceil(width / patch_size)
    return math.ceil(rows / merge) * math.ceil(cols / merge)


def tokens_per_canvas(canvas_blocks: int, merge: int = 2) -> int:
    """A canvas holds ``canvas_blocks`` 2x2-patch blocks."""
    if canvas_blocks < 1 or merge < 1:
        raise InvalidSpec("canvas_blocks and merge must be >= 1")
    return math.ceil(4 * canvas_blocks / (merge * merge))


def budget_report(frames: int, height: int, width: int, patch_size: int = 14, merge: int = 2,
                  canvas_blocks: int = 196, canvases: int | None = None) -> dict:
    """Token counts for ``frames`` uniformly sampled frames and the matching canvas count."""
    if frames < 0:
        raise InvalidSpec("frames must be >= 0")
    per_frame = tokens_per_frame(height, width, patch_size, merge)
    per_canvas = tokens_per_canvas(canvas_blocks, merge)
    uniform = frames * per_frame
    matched = math.ceil(uniform / per_canvas)
    n_canvases = matched if canvases is None else canvases
    return {
        "frames": frames,
        "resolution": [height, width],
        "patch_size": patch_size,
        "merge": merge,
        "tokens_per_frame": per_frame,
        "uniform_tokens": uniform,
        "canvas_blocks": canvas_blocks,
        "tokens_per_canvas": per_canvas,
        "matched_canvases": matched,
        "codec_canvases": n_canvases,
        "codec_tokens": n_canvases * per_canvas,
    }
