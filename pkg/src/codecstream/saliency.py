"""Motion-residual saliency and merge-aligned 2x2 block scores."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DimensionMismatch, InvalidSpec
from .trace import CodecTrace, FrameTrace, MotionVectorField, ResidualPlane

RESIDUAL_ZERO_POINT = 128
PATCH_SIZE = 16


def check_percentile(percentile: float) -> float:
    if not (isinstance(percentile, (int, float)) and 0 < percentile <= 100):
        raise InvalidSpec(f"percentile must lie in (0, 100], got {percentile!r}")
    return float(percentile)


def densify_motion(mv: MotionVectorField, width: int, height: int) -> np.ndarray:
    """Per-pixel motion magnitude, each block filled with its vector's length.

    Pixels outside the vector grid get 0.
    """
    mag = np.hypot(mv.vectors[..., 0], mv.vectors[..., 1])
    bs = mv.block_size_px
    dense = np.repeat(np.repeat(mag, bs, axis=0), bs, axis=1)[:height, :width]
    if dense.shape != (height, width):
        out = np.zeros((height, width))
        out[:dense.shape[0], :dense.shape[1]] = dense
        return out
    return dense


def normalize_percentile(values: np.ndarray, percentile: float = 95.0) -> np.ndarray:
    """Scale by the given percentile and clip to [0, 1]; all zeros when it is <= 0."""
    percentile = check_percentile(percentile)
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise InvalidSpec("cannot normalize an empty map")
    q = np.percentile(v, percentile)
    if not q > 0:
        return np.zeros_like(v)
    return np.clip(v / q, 0.0, 1.0)


def residual_response(residual: ResidualPlane | np.ndarray, percentile: float = 95.0) -> np.ndarray:
    luma = residual.luma if isinstance(residual, ResidualPlane) else np.asarray(residual)
    dev = np.abs(luma.astype(np.int16) - RESIDUAL_ZERO_POINT)
    return normalize_percentile(dev, percentile)


def saliency_map(motion: np.ndarray, residual: np.ndarray) -> np.ndarray:
    if motion.shape != residual.shape:
        raise DimensionMismatch(f"motion map {motion.shape} and residual map {residual.shape} differ")
    return motion + residual


def block_grid_shape(width: int, height: int, patch_size: int = PATCH_SIZE) -> tuple[int, int]:
    b = 2 * patch_size
    return math.ceil(height / b), math.ceil(width / b)


def block_scores(saliency: np.ndarray, patch_size: int = PATCH_SIZE) -> np.ndarray:
    """Sum of saliency over each 2p x 2p footprint (four neighbouring patches).

    The map is zero-padded on the bottom/right to a multiple of ``2 * patch_size``.
    """
    s = np.asarray(saliency, dtype=np.float64)
    b = 2 * patch_size
    bi, bj = block_grid_shape(s.shape[1], s.shape[0], patch_size)
    if s.shape != (bi * b, bj * b):
        padded = np.zeros((bi * b, bj * b))
        padded[:s.shape[0], :s.shape[1]] = s
        s = padded
    return s.reshape(bi, b, bj, b).sum(axis=(1, 3))


def fuse_bitcost_prior(scores: np.ndarray, bitcost: np.ndarray, weight: float,
                       percentile: float = 95.0) -> np.ndarray:
    """``scores + weight * normalize_percentile(bitcost)``; weight 0 returns ``scores`` unchanged."""
    scores = np.asarray(scores, dtype=np.float64)
    bitcost = np.asarray(bitcost, dtype=np.float64)
    if scores.shape != bitcost.shape:
        raise DimensionMismatch(f"score grid {scores.shape} and bit-cost grid {bitcost.shape} differ")
    if weight < 0:
        raise InvalidSpec("bit-cost prior weight must be >= 0")
    if weight == 0:
        return scores
    return scores + weight * normalize_percentile(bitcost, percentile)


def frame_bitcost_grid(frame: FrameTrace, width: int, height: int, patch_size: int = PATCH_SIZE) -> np.ndarray:
    """Per-block bytes: the frame's own block map if present, else its packet spread evenly."""
    shape = block_grid_shape(width, height, patch_size)
    if frame.block_bits is not None:
        if frame.block_bits.bytes_.shape != shape:
            raise DimensionMismatch(
                f"frame {frame.packet.frame_index}: block_bits grid {frame.block_bits.bytes_.shape} != {shape}")
        return frame.block_bits.bytes_.astype(np.float64)
    return np.full(shape, frame.packet.byte_size / (shape[0] * shape[1]))


def frame_saliency(frame: FrameTrace, width: int, height: int, percentile: float = 95.0) -> np.ndarray:
    """Dense saliency ``S`` of a predicted frame; missing signals contribute 0."""
    motion = (normalize_percentile(densify_motion(frame.mv, width, height), percentile)
              if frame.mv is not None else np.zeros((height, width)))
    resid = (residual_response(frame.residual, percentile)
             if frame.residual is not None else np.zeros((height, width)))
    return saliency_map(motion, resid)


def frame_block_scores(frame: FrameTrace, width: int, height: int, percentile: float = 95.0,
                       bitcost_prior_weight: float = 0.0, patch_size: int = PATCH_SIZE) -> np.ndarray:
    scores = block_scores(frame_saliency(frame, width, height, percentile), patch_size)
    if bitcost_prior_weight:
        scores = fuse_bitcost_prior(scores, frame_bitcost_grid(frame, width, height, patch_size),
                                    bitcost_prior_weight, percentile)
    return scores


class SaliencyScorer(TransformerMixin, BaseEstimator):
    """Stateless transformer from a trace to per-frame block score grids.

    ``transform`` returns a dict mapping the index of every predicted frame
    that carries motion vectors or a residual to its ``(blocks_i, blocks_j)``
    score grid.
    """

    def __init__(self, percentile=95.0, bitcost_prior_weight=0.0, patch_size=PATCH_SIZE):
        self.percentile = percentile
        self.bitcost_prior_weight = bitcost_prior_weight
        self.patch_size = patch_size

    def fit(self, X=None, y=None):
        check_percentile(self.percentile)
        if self.bitcost_prior_weight < 0:
            raise InvalidSpec("bitcost_prior_weight must be >= 0")
        if self.patch_size < 1:
            raise InvalidSpec("patch_size must be >= 1")
        return self

    def score_frame(self, frame: FrameTrace, width: int, height: int) -> np.ndarray:
        return frame_block_scores(frame, width, height, self.percentile, self.bitcost_prior_weight,
                                  self.patch_size)

    def transform(self, X: CodecTrace) -> dict[int, np.ndarray]:
        self.fit()
        return {
            fr.packet.frame_index: self.score_frame(fr, X.width, X.height)
            for fr in X.frames
            if fr.packet.is_predicted and fr.has_signal
        }
