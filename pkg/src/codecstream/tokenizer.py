"""End-to-end codec-stream tokenization and the token-metadata file format."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import InvalidSpec
from .gop import BinEnergies, GopPartition, GopPartitioner, assign_groups
from .packing import (
    Canvas,
    GroupSelector,
    PackingConfig,
    TokenTable,
    allocate_canvases,
    anchor_frame,
    candidates_from_grids,
    pack_i_canvas,
    pack_p_canvases,
)
from .saliency import SaliencyScorer, block_grid_shape, check_percentile
from .trace import CodecTrace

TOKENS_FORMAT = "codecstream-tokens"
MANIFEST_FORMAT = "codecstream-canvases"
OUTPUT_VERSION = 1


@dataclass(frozen=True)
class TokenizedStream:
    """Canvases, token metadata and groups emitted for one video."""

    canvases: tuple[Canvas, ...]
    tokens: TokenTable
    partition: GopPartition
    energies: BinEnergies
    frame_groups: np.ndarray
    p_canvases_per_group: np.ndarray

    @property
    def n_p_canvases(self) -> int:
        return sum(c.label == "P" for c in self.canvases)


class CodecStreamTokenizer(TransformerMixin, BaseEstimator):
    """Turn a :class:`~codecstream.trace.CodecTrace` into I/P canvases and token metadata.

    ``fit`` partitions the trace into bit-cost adaptive groups;
    ``transform`` scores predicted frames, selects 2x2 blocks per group and
    packs them.  Group ``k`` gets its dense anchor I-canvas page(s) followed
    by its P-canvases, groups in temporal order.

    Parameters
    ----------
    bin_duration_s, target_groups, min_span_s, max_span_s, valley_window_bins
        Partitioning; see :class:`~codecstream.gop.GopPartitioner`.
    percentile : float
        Robust normalization percentile for motion and residual maps.
    bitcost_prior_weight : float
        Weight of the normalized per-block bit-cost prior (0 disables it).
    patch_size : int
        Encoder patch size in pixels; blocks are ``2 * patch_size`` square.
    lam : float
        Same-frame attenuation strength.
    alpha_peak : float
        Weight of a frame's peak block in its allocation mass.
    canvas_blocks : int
        2x2 blocks per canvas.
    p_canvases_total : int
        P-canvas budget for the whole video.
    """

    def __init__(self, bin_duration_s=1.0, target_groups=16, min_span_s=1.0, max_span_s=60.0,
                 valley_window_bins=2, percentile=95.0, bitcost_prior_weight=0.0, patch_size=16,
                 lam=1.0, alpha_peak=0.5, canvas_blocks=196, p_canvases_total=64):
        self.bin_duration_s = bin_duration_s
        self.target_groups = target_groups
        self.min_span_s = min_span_s
        self.max_span_s = max_span_s
        self.valley_window_bins = valley_window_bins
        self.percentile = percentile
        self.bitcost_prior_weight = bitcost_prior_weight
        self.patch_size = patch_size
        self.lam = lam
        self.alpha_peak = alpha_peak
        self.canvas_blocks = canvas_blocks
        self.p_canvases_total = p_canvases_total

    def _partitioner(self) -> GopPartitioner:
        return GopPartitioner(self.bin_duration_s, self.target_groups, self.min_span_s, self.max_span_s,
                              self.valley_window_bins)

    def _scorer(self) -> SaliencyScorer:
        return SaliencyScorer(self.percentile, self.bitcost_prior_weight, self.patch_size).fit()

    def _packing(self) -> PackingConfig:
        return PackingConfig(self.lam, self.alpha_peak, self.canvas_blocks, self.p_canvases_total)

    def _validate(self):
        check_percentile(self.percentile)
        if int(self.patch_size) != self.patch_size or self.patch_size < 1:
            raise InvalidSpec("patch_size must be an integer >= 1")
        self._partitioner()._config()
        self._packing()

    def fit(self, X: CodecTrace, y=None):
        self._validate()
        part = self._partitioner().fit(X)
        self.energies_ = part.energies_
        self.quota_ = part.quota_
        self.partition_ = part.partition_
        self.frame_groups_ = part.transform(X)
        masses = [int(self.energies_.energies[s:c + 1].sum()) for s, c in self.partition_.groups]
        self.p_canvases_per_group_ = allocate_canvases(masses, self.p_canvases_total)
        return self

    def transform(self, X: CodecTrace, block_scores: Mapping[int, np.ndarray] | None = None) -> TokenizedStream:
        """Pack canvases for ``X``.

        ``block_scores`` optionally supplies precomputed per-frame score grids
        (keyed by frame index) in place of scoring from the trace.
        """
        check_is_fitted(self, "partition_")
        cfg = self._packing()
        scorer = self._scorer()
        grid_shape = block_grid_shape(X.width, X.height, self.patch_size)
        groups = assign_groups(range(len(X)), X.fps, self.partition_)
        types = [fr.packet.frame_type for fr in X.frames]

        canvases: list[Canvas] = []
        bounds = np.searchsorted(groups, np.arange(len(self.partition_) + 1))
        for k in range(len(self.partition_)):
            members = range(bounds[k], bounds[k + 1])
            anchor = None
            if len(members):
                anchor = anchor_frame(members, [types[f] for f in members])
                canvases += pack_i_canvas(anchor, grid_shape, cfg.canvas_blocks, k, len(canvases))
            grids = {}
            for f in members:
                fr = X.frames[f]
                # a predicted anchor is already carried densely by the I-canvas
                if f == anchor or not (fr.packet.is_predicted and fr.has_signal):
                    continue
                if block_scores is not None:
                    if f in block_scores:
                        grids[f] = block_scores[f]
                else:
                    grids[f] = scorer.score_frame(fr, X.width, X.height)
            selector = GroupSelector(*candidates_from_grids(grids), cfg.lam, cfg.alpha_peak)
            m = int(self.p_canvases_per_group_[k])
            canvases += pack_p_canvases(selector, m, cfg.canvas_blocks, k, len(canvases))

        return TokenizedStream(tuple(canvases), TokenTable.from_canvases(canvases), self.partition_,
                               self.energies_, np.asarray(groups), self.p_canvases_per_group_)

    def config_record(self) -> dict:
        return dict(sorted(self.get_params().items()))


def _header(kind: str, config: Mapping, partition: GopPartition) -> str:
    rec = {"format": kind, "version": OUTPUT_VERSION, "config": dict(config), "partition": partition.to_record()}
    return json.dumps(rec, separators=(",", ":"), sort_keys=False) + "\n"


def write_tokens(path: str | os.PathLike, result: TokenizedStream, config: Mapping) -> None:
    """Line-delimited token metadata: header, then one record per token.

    ``group`` is the attention visibility group, equal to ``kappa`` for
    codec-stream tokens.
    """
    t = result.tokens
    cols = np.column_stack([t.canvas_index, t.source_frame, t.canvas_pos, t.source_pos, t.group]).tolist()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header(TOKENS_FORMAT, config, result.partition))
        fh.writelines(
            f'{{"iota":{i},"f":{f},"p_can":[{cr},{cc}],"p_src":[{sr},{sc}],"kappa":{k},"group":{k}}}\n'
            for i, f, cr, cc, sr, sc, k in cols
        )


def write_manifest(path: str | os.PathLike, result: TokenizedStream, config: Mapping) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header(MANIFEST_FORMAT, config, result.partition))
        for c in result.canvases:
            rec = {"index": c.index, "label": c.label, "group": c.group, "grid": [c.rows, c.cols],
                   "blocks": len(c.cells), "source_frames": c.source_frames}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_tokens(path: str | os.PathLike) -> tuple[dict, TokenTable]:
    """Load a token-metadata file back into ``(header, TokenTable)``."""
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        rows = [json.loads(line) for line in fh if line.strip()]
    if not rows:
        return header, TokenTable.from_canvases([])
    return header, TokenTable(
        np.array([r["iota"] for r in rows]), np.array([r["f"] for r in rows]),
        np.array([r["p_can"] for r in rows]), np.array([r["p_src"] for r in rows]),
        np.array([r["kappa"] for r in rows]))
