"""Stratified block selection and I/P canvas packing.

Candidates are 2x2-patch blocks ``(frame, block_i, block_j, score)`` kept as
parallel numpy arrays; a group can hold tens of thousands of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import InsufficientBudget, InvalidSpec


class BlockCandidate(NamedTuple):
    frame: int
    block_i: int
    block_j: int
    score: float


class TokenRecord(NamedTuple):
    canvas_index: int
    source_frame: int
    canvas_pos: tuple[int, int]
    source_pos: tuple[int, int]
    group: int


@dataclass(frozen=True)
class PackingConfig:
    lam: float = 1.0
    alpha_peak: float = 0.5
    canvas_blocks: int = 196
    p_canvases_total: int = 64

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InvalidSpec(f"lambda must be >= 0, got {self.lam}")
        if not (self.alpha_peak >= 0 and math.isfinite(self.alpha_peak)):
            raise InvalidSpec(f"alpha_peak must be >= 0, got {self.alpha_peak}")
        if int(self.canvas_blocks) != self.canvas_blocks or self.canvas_blocks < 1:
            raise InvalidSpec("canvas_blocks must be an integer >= 1")
        if int(self.p_canvases_total) != self.p_canvases_total or self.p_canvases_total < 0:
            raise InvalidSpec("p_canvases_total must be an integer >= 0")


def canvas_grid(capacity: int) -> tuple[int, int]:
    """Block rows and columns of a canvas holding ``capacity`` blocks (near-square)."""
    cols = math.ceil(math.sqrt(capacity))
    return math.ceil(capacity / cols), cols


@dataclass(frozen=True)
class Canvas:
    index: int
    label: str
    group: int
    rows: int
    cols: int
    cells: tuple[tuple[int, int, int], ...]  # (frame, block_i, block_j) in fill order

    @property
    def capacity(self) -> int:
        return self.rows * self.cols

    @property
    def source_frames(self) -> list[int]:
        return sorted({c[0] for c in self.cells})


@dataclass(frozen=True, eq=False)
class TokenTable:
    """Token metadata as columns; iterating yields :class:`TokenRecord`."""

    canvas_index: np.ndarray
    source_frame: np.ndarray
    canvas_pos: np.ndarray  # (N, 2) patch row, col inside the canvas
    source_pos: np.ndarray  # (N, 2) patch row, col in the source frame
    group: np.ndarray

    def __len__(self) -> int:
        return self.canvas_index.size

    def __iter__(self) -> Iterator[TokenRecord]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> TokenRecord:
        return TokenRecord(int(self.canvas_index[k]), int(self.source_frame[k]),
                           (int(self.canvas_pos[k, 0]), int(self.canvas_pos[k, 1])),
                           (int(self.source_pos[k, 0]), int(self.source_pos[k, 1])),
                           int(self.group[k]))

    @classmethod
    def from_records(cls, records: Sequence[TokenRecord]) -> "TokenTable":
        if not records:
            return cls.from_canvases([])
        return cls(np.array([r.canvas_index for r in records]), np.array([r.source_frame for r in records]),
                   np.array([r.canvas_pos for r in records]), np.array([r.source_pos for r in records]),
                   np.array([r.group for r in records]))

    @classmethod
    def from_canvases(cls, canvases: Sequence[Canvas]) -> "TokenTable":
        """Four tokens per placed block, in (0,0), (0,1), (1,0), (1,1) patch order."""
        counts = [len(c.cells) for c in canvases]
        n_blocks = sum(counts)
        iota = np.repeat([c.index for c in canvases], counts).astype(np.int64)
        kappa = np.repeat([c.group for c in canvases], counts).astype(np.int64)
        cols = np.repeat([c.cols for c in canvases], counts).astype(np.int64)
        cells = np.array([cell for c in canvases for cell in c.cells], dtype=np.int64).reshape(n_blocks, 3)
        slot = np.concatenate([np.arange(k) for k in counts]) if counts else np.zeros(0, np.int64)
        can_block = np.stack([slot // np.maximum(cols, 1), slot % np.maximum(cols, 1)], axis=1)
        offsets = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.int64)
        can = (2 * can_block[:, None, :] + offsets[None]).reshape(-1, 2)
        src = (2 * cells[:, None, 1:] + offsets[None]).reshape(-1, 2)
        return cls(np.repeat(iota, 4), np.repeat(cells[:, 0], 4), can, src, np.repeat(kappa, 4))


# -- scoring --------------------------------------------------------------

def within_frame_rank(frames: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Zero-based rank of each candidate among its frame's candidates by descending score.

    Equal scores keep input order, which is row-major block order for
    candidates built by :func:`candidates_from_grids`.
    """
    frames = np.asarray(frames)
    n = frames.size
    order = np.lexsort((np.arange(n), -np.asarray(scores, dtype=np.float64), frames))
    sorted_frames = frames[order]
    first = np.r_[True, sorted_frames[1:] != sorted_frames[:-1]] if n else np.zeros(0, bool)
    start = np.maximum.accumulate(np.where(first, np.arange(n), 0)) if n else np.zeros(0, np.int64)
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n) - start
    return ranks


def attenuate(frames: np.ndarray, scores: np.ndarray, lam: float) -> np.ndarray:
    """Divide each score by sqrt(1 + lam * rank) where rank is its within-frame rank."""
    scores = np.asarray(scores, dtype=np.float64)
    if lam == 0:
        return scores.copy()
    return scores / np.sqrt(1.0 + lam * within_frame_rank(frames, scores))


def frame_weights(frames: np.ndarray, attenuated: np.ndarray, alpha_peak: float) -> tuple[np.ndarray, np.ndarray]:
    """Allocation mass per frame: sum of positive attenuated scores plus alpha_peak times the peak.

    Returns ``(unique_frames_ascending, weights)``.
    """
    frames = np.asarray(frames)
    att = np.asarray(attenuated, dtype=np.float64)
    uniq, inv = np.unique(frames, return_inverse=True)
    total = np.bincount(inv, weights=np.maximum(att, 0.0), minlength=uniq.size)
    peak = np.full(uniq.size, -np.inf)
    np.maximum.at(peak, inv, att)
    return uniq, total + alpha_peak * peak


def allocation_curve(weights: Sequence[float]) -> np.ndarray:
    """Normalized cumulative mass; uniform ``(l + 1) / M`` when the total mass is 0."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise InvalidSpec("allocation curve needs at least one frame")
    total = w.sum()
    if not total > 0:
        return np.arange(1, w.size + 1) / w.size
    f = np.cumsum(w) / total
    f[-1] = 1.0
    return np.maximum.accumulate(f)


def allocate_canvases(masses: Sequence[float], total: int, strict: bool = True) -> np.ndarray:
    """Split ``total`` P-canvases across groups in proportion to their bit-cost mass.

    Every group gets at least one canvas; rounding follows largest remainder
    (ties to the earlier group).  With fewer canvases than groups,
    :class:`InsufficientBudget` is raised, or with ``strict=False`` the
    highest-mass groups receive one canvas each.
    """
    mass = np.asarray(masses, dtype=np.float64)
    g = mass.size
    if total < 0:
        raise InvalidSpec("canvas budget must be >= 0")
    if g == 0:
        return np.zeros(0, dtype=np.int64)
    if total < g:
        if strict:
            raise InsufficientBudget(f"{total} P-canvases cannot cover {g} groups")
        m = np.zeros(g, dtype=np.int64)
        m[np.lexsort((np.arange(g), -mass))[:total]] = 1
        return m
    ideal = total * mass / mass.sum() if mass.sum() > 0 else np.full(g, total / g)
    m = np.maximum(1, np.floor(ideal)).astype(np.int64)
    idx = np.arange(g)
    while m.sum() < total:
        k = np.lexsort((idx, -(ideal - m)))[0]
        m[k] += 1
    while m.sum() > total:
        over = np.flatnonzero(m > 1)
        k = over[np.lexsort((over, ideal[over] - m[over]))[0]]
        m[k] -= 1
    return m


# -- selection ------------------------------------------------------------

def candidates_from_grids(grids: dict[int, np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flatten per-frame score grids into ``(frame, block_i, block_j, score)`` arrays."""
    fr, bi, bj, sc = [], [], [], []
    for f in sorted(grids):
        g = np.asarray(grids[f], dtype=np.float64)
        ii, jj = np.indices(g.shape)
        fr.append(np.full(g.size, f, dtype=np.int64))
        bi.append(ii.ravel())
        bj.append(jj.ravel())
        sc.append(g.ravel())
    if not fr:
        z = np.zeros(0, dtype=np.int64)
        return z, z.copy(), z.copy(), np.zeros(0)
    return np.concatenate(fr), np.concatenate(bi), np.concatenate(bj), np.concatenate(sc)


class GroupSelector:
    """Draws P-canvas blocks for one group without repeating a block.

    ``frames`` must be sorted by time (ascending); candidates of the same
    frame need not be contiguous.
    """

    def __init__(self, frames, block_i, block_j, scores, lam: float, alpha_peak: float):
        self.frames = np.asarray(frames, dtype=np.int64)
        self.block_i = np.asarray(block_i, dtype=np.int64)
        self.block_j = np.asarray(block_j, dtype=np.int64)
        self.scores = np.asarray(scores, dtype=np.float64)
        self.attenuated = attenuate(self.frames, self.scores, lam)
        if self.frames.size:
            self.frame_ids, self.weights = frame_weights(self.frames, self.attenuated, alpha_peak)
            self.curve = allocation_curve(self.weights)
            self.zero_mass = not self.weights.sum() > 0
        else:
            self.frame_ids = np.zeros(0, dtype=np.int64)
            self.weights = self.curve = np.zeros(0)
            self.zero_mass = True
        self.position = np.searchsorted(self.frame_ids, self.frames)
        ranks = within_frame_rank(self.frames, self.attenuated)
        if self.zero_mass:
            # round-robin: every frame's best block before any frame's second
            self.order = np.lexsort((self.block_j, self.block_i, self.frames, ranks))
        else:
            self.order = np.lexsort((self.block_j, self.block_i, self.frames, -self.attenuated))
        self.used = np.zeros(self.frames.size, dtype=bool)
        self.available = np.bincount(self.position, minlength=self.frame_ids.size).astype(np.int64)

    def stratum(self, r: int, m: int) -> tuple[int, int]:
        """Inclusive frame-position window whose cumulative mass lies in ``[r/m, (r+1)/m)``.

        The last stratum is closed at 1.  An empty stratum yields the single
        frame where it would begin.
        """
        st = np.minimum(np.floor(self.curve * m).astype(np.int64), m - 1)
        lo = int(np.searchsorted(st, r, side="left"))
        hi = int(np.searchsorted(st, r, side="right")) - 1
        if hi < lo:
            lo = hi = min(lo, self.frame_ids.size - 1)
        return lo, hi

    def select(self, r: int, m: int, capacity: int) -> np.ndarray:
        """Indices of the blocks for the ``r``-th of ``m`` P-canvases, in fill order."""
        n_frames = self.frame_ids.size
        if n_frames == 0 or not 0 <= r < m:
            if not 0 <= r < m:
                raise InvalidSpec(f"canvas rank {r} outside [0, {m})")
            return np.zeros(0, dtype=np.int64)
        lo, hi = self.stratum(r, m)
        have = int(self.available[lo:hi + 1].sum())
        while have < capacity and (lo > 0 or hi < n_frames - 1):
            if lo > 0:
                lo -= 1
                have += int(self.available[lo])
            if hi < n_frames - 1:
                hi += 1
                have += int(self.available[hi])
        pos = self.position[self.order]
        ok = ~self.used[self.order] & (pos >= lo) & (pos <= hi)
        chosen = self.order[ok][:capacity]
        self.used[chosen] = True
        np.subtract.at(self.available, self.position[chosen], 1)
        return chosen


def pack_p_canvases(selector: GroupSelector, m: int, capacity: int, group: int,
                    first_index: int) -> list[Canvas]:
    rows, cols = canvas_grid(capacity)
    out = []
    for r in range(m):
        idx = selector.select(r, m, capacity)
        cells = tuple(zip(selector.frames[idx].tolist(), selector.block_i[idx].tolist(),
                          selector.block_j[idx].tolist()))
        out.append(Canvas(first_index + r, "P", group, rows, cols, cells))
    return out


def pack_i_canvas(frame: int, grid_shape: tuple[int, int], capacity: int, group: int,
                  first_index: int) -> list[Canvas]:
    """Dense anchor canvases: every block of ``frame`` row-major, paged by capacity."""
    rows, cols = canvas_grid(capacity)
    bi, bj = np.indices(grid_shape)
    cells = list(zip([frame] * bi.size, bi.ravel().tolist(), bj.ravel().tolist()))
    pages = [cells[k:k + capacity] for k in range(0, len(cells), capacity)] or [[]]
    return [Canvas(first_index + n, "I", group, rows, cols, tuple(p)) for n, p in enumerate(pages)]


def anchor_frame(frame_indices: Sequence[int], frame_types: Sequence[str]) -> int:
    """First I-frame of a group, else its first frame."""
    for f, t in zip(frame_indices, frame_types):
        if t == "I":
            return int(f)
    return int(frame_indices[0])
