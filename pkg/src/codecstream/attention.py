"""Group-visible attention masks and 3D position coordinates.

A mask is carried as a group id per token: token ``a`` may attend to token
``b`` exactly when they share a group.  Dense boolean matrices are only
materialized on request, for small token counts.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidSpec, InvariantViolation, MalformedRecord, MaskTooLarge
from .packing import TokenTable

DENSE_LIMIT = 16384
_MASK_HEADER = struct.Struct("<QQ")  # token count, row stride in bytes


def codec_groups(tokens: TokenTable) -> np.ndarray:
    """Codec-stream tokens see every token of their GOP, across canvases."""
    return np.asarray(tokens.group, dtype=np.int64).copy()


def fixed_slot_groups(frame_indices: Sequence[int], slots: int = 4) -> np.ndarray:
    """Sampled-frame tokens are grouped by ``frame_index // slots``."""
    if slots < 1:
        raise InvalidSpec("slots must be >= 1")
    return np.asarray(frame_indices, dtype=np.int64) // slots


def image_group(n_tokens: int) -> np.ndarray:
    return np.zeros(n_tokens, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class AttentionMask:
    groups: np.ndarray

    def __len__(self) -> int:
        return self.groups.size

    def visible(self, a: int, b: int) -> bool:
        return bool(self.groups[a] == self.groups[b])

    def dense(self, limit: int = DENSE_LIMIT) -> np.ndarray:
        n = self.groups.size
        if n > limit:
            raise MaskTooLarge(f"dense mask for {n} tokens exceeds the limit of {limit}")
        return self.groups[:, None] == self.groups[None, :]

    def block_sizes(self) -> list[tuple[int, int]]:
        """``(group, size)`` runs after a stable sort by group id."""
        g, counts = np.unique(self.groups, return_counts=True)
        return list(zip(g.tolist(), counts.tolist()))


def build_mask(groups: Sequence[int]) -> AttentionMask:
    g = np.asarray(groups, dtype=np.int64).reshape(-1)
    return AttentionMask(g)


def position_coords(tokens: TokenTable) -> np.ndarray:
    """``(t, h, w)`` per codec token: source frame and source patch row/col.

    Raises :class:`InvariantViolation` if two tokens share a source patch.
    """
    coords = np.column_stack([tokens.source_frame, tokens.source_pos]).astype(np.int64)
    if coords.shape[0] and np.unique(coords, axis=0).shape[0] != coords.shape[0]:
        raise InvariantViolation("two tokens map to the same (frame, source patch)")
    return coords


def frame_position_coords(frame_indices: Sequence[int], grid_rows: int, grid_cols: int) -> np.ndarray:
    """Coordinates for sampled frames, each tokenized densely row-major."""
    h, w = np.indices((grid_rows, grid_cols))
    per_frame = np.column_stack([h.ravel(), w.ravel()])
    t = np.repeat(np.asarray(frame_indices, dtype=np.int64), per_frame.shape[0])
    return np.column_stack([t, np.tile(per_frame, (len(frame_indices), 1))])


def image_position_coords(grid_rows: int, grid_cols: int) -> np.ndarray:
    return frame_position_coords([0], grid_rows, grid_cols)


def write_dense_mask(path: str | os.PathLike, mask: AttentionMask, limit: int = DENSE_LIMIT) -> None:
    """Packed bit matrix: 16-byte header (N, row stride), then N rows, MSB first."""
    dense = mask.dense(limit)
    n = dense.shape[0]
    packed = np.packbits(dense, axis=1) if n else np.zeros((0, 0), np.uint8)
    stride = (n + 7) // 8
    with open(path, "wb") as fh:
        fh.write(_MASK_HEADER.pack(n, stride))
        fh.write(packed.tobytes())


def read_dense_mask(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_MASK_HEADER.size)
        if len(head) != _MASK_HEADER.size:
            raise MalformedRecord("mask file shorter than its header")
        n, stride = _MASK_HEADER.unpack(head)
        body = np.frombuffer(fh.read(), dtype=np.uint8)
    if stride != (n + 7) // 8 or body.size != n * stride:
        raise MalformedRecord("mask file size disagrees with its header")
    return np.unpackbits(body.reshape(n, stride), axis=1, count=n).astype(bool)
