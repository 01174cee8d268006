"""Bit-cost adaptive GOP partitioning.

Predicted-frame packet bytes are binned over time, a per-group quota is
derived from the total, and the bin sequence is cut greedily: a group
closes once it spans ``L_max`` bins, or once it spans at least ``L_min``
bins and has accumulated the quota.  The tentative cut is then moved to
the cheapest nearby bin (valley search).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import InvalidSpec, OutOfRange
from .trace import CodecTrace

_EPS = 1e-9
# Quota comparisons allow this relative slack so that scaling energies and
# quota by the same factor cannot flip an exact tie through rounding.  For
# integer byte counts the true gap is at least 1/total (relative), so totals
# below 1e12 bytes are compared exactly.
_QUOTA_RTOL = 1e-12


def _exact(x) -> Fraction:
    # Decimal-second semantics: 0.1 means one tenth, not its binary neighbour.
    return Fraction(x) if isinstance(x, (int, Fraction)) else Fraction(repr(float(x)))


def _snap(x: Fraction) -> Fraction:
    # Ratios like (1/30) / (1/30) come out a hair off an integer; treat those as exact.
    r = round(x)
    return Fraction(r) if abs(x - r) <= _EPS * max(1, abs(r)) else x


def span_bins(seconds: float, bin_duration_s: float) -> int:
    """``ceil(seconds / bin_duration_s)`` evaluated on the decimal values."""
    return math.ceil(_snap(_exact(seconds) / _exact(bin_duration_s)))


@dataclass(frozen=True)
class PartitionConfig:
    bin_duration_s: float = 1.0
    target_groups: int = 16
    min_span_s: float = 1.0
    max_span_s: float = 60.0
    valley_window_bins: int = 2

    def __post_init__(self):
        if not (math.isfinite(self.bin_duration_s) and self.bin_duration_s > 0):
            raise InvalidSpec(f"bin_duration_s must be > 0, got {self.bin_duration_s}")
        if isinstance(self.target_groups, bool) or int(self.target_groups) != self.target_groups:
            raise InvalidSpec("target_groups must be an integer")
        if self.target_groups < 1:
            raise InvalidSpec(f"target_groups must be >= 1, got {self.target_groups}")
        if not (0 < self.min_span_s <= self.max_span_s) or not math.isfinite(self.max_span_s):
            raise InvalidSpec(f"need 0 < min_span_s <= max_span_s, got {self.min_span_s}, {self.max_span_s}")
        if int(self.valley_window_bins) != self.valley_window_bins or self.valley_window_bins < 0:
            raise InvalidSpec("valley_window_bins must be an integer >= 0")

    @property
    def min_span_bins(self) -> int:
        return max(1, span_bins(self.min_span_s, self.bin_duration_s))

    @property
    def max_span_bins(self) -> int:
        return max(self.min_span_bins, span_bins(self.max_span_s, self.bin_duration_s))


@dataclass(frozen=True, eq=False)
class BinEnergies:
    energies: np.ndarray
    bin_duration_s: float

    def __post_init__(self):
        e = np.asarray(self.energies)
        if e.ndim != 1 or e.size == 0:
            raise InvalidSpec("energies must be a non-empty 1-D sequence")
        if np.any(e < 0):
            raise InvalidSpec("energies must be >= 0")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "energies", e)
        if not self.bin_duration_s > 0:
            raise InvalidSpec("bin_duration_s must be > 0")

    def __len__(self) -> int:
        return self.energies.size

    def __eq__(self, other):
        if not isinstance(other, BinEnergies):
            return NotImplemented
        return self.bin_duration_s == other.bin_duration_s and np.array_equal(self.energies, other.energies)


@dataclass(frozen=True)
class GopPartition:
    """Ordered, gap-free bin intervals ``[start, end]`` plus the quota used.

    ``triggers`` holds the trigger bin of each group (``None`` for a tail
    group that ran out of bins) and ``reasons`` one of ``"quota"``,
    ``"max_span"`` or ``"tail"``.
    """

    groups: tuple[tuple[int, int], ...]
    quota: float
    bin_duration_s: float
    triggers: tuple[int | None, ...] = ()
    reasons: tuple[str, ...] = ()

    @property
    def n_bins(self) -> int:
        return self.groups[-1][1] + 1

    @property
    def starts(self) -> np.ndarray:
        return np.array([s for s, _ in self.groups], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.groups)

    def to_record(self) -> dict:
        return {
            "quota": self.quota,
            "groups": [{"s": s, "c": c} for s, c in self.groups],
            "bin_duration_s": self.bin_duration_s,
        }


def frame_bins(pts: Sequence[float], bin_duration_s: float) -> np.ndarray:
    """Bin index ``floor(t / bin_duration_s)`` of each timestamp, exact on decimals."""
    d = _exact(bin_duration_s)
    return np.fromiter((math.floor(_snap(_exact(t) / d)) for t in pts), dtype=np.int64, count=len(pts))


def n_bins_for(trace: CodecTrace, bin_duration_s: float) -> int:
    d = _exact(bin_duration_s)
    n = len(trace.frames)
    end = max(_exact(trace.frames[-1].packet.pts_seconds), (n - 1) / _exact(trace.fps)) + 1 / _exact(trace.fps)
    return max(1, math.ceil(_snap(end / d)))


def bin_bitcost(trace: CodecTrace, bin_duration_s: float) -> BinEnergies:
    """Sum predicted-frame (P/B) packet bytes into bins of ``bin_duration_s``."""
    if not (isinstance(bin_duration_s, (int, float)) and bin_duration_s > 0 and math.isfinite(bin_duration_s)):
        raise InvalidSpec(f"bin duration must be > 0, got {bin_duration_s!r}")
    n_bins = n_bins_for(trace, bin_duration_s)
    pred = [fr.packet for fr in trace.frames if fr.packet.is_predicted]
    e = np.zeros(n_bins, dtype=np.int64)
    if pred:
        idx = frame_bins([p.pts_seconds for p in pred], bin_duration_s)
        np.add.at(e, idx, np.array([p.byte_size for p in pred], dtype=np.int64))
    return BinEnergies(e, float(bin_duration_s))


def compute_quota(energies: BinEnergies | np.ndarray, target_groups: int) -> float:
    e = energies.energies if isinstance(energies, BinEnergies) else np.asarray(energies)
    return float(int(e.sum()) if e.dtype.kind in "iu" else e.sum()) / max(1, int(target_groups))


def partition_gops(energies: BinEnergies | np.ndarray, cfg: PartitionConfig, quota: float) -> GopPartition:
    if isinstance(energies, BinEnergies):
        e, delta = energies.energies, energies.bin_duration_s
    else:
        e, delta = np.asarray(energies), cfg.bin_duration_s
    n = e.size
    if n < 1:
        raise InvalidSpec("need at least one bin")
    lmin, lmax, w = cfg.min_span_bins, cfg.max_span_bins, int(cfg.valley_window_bins)
    cum = np.concatenate([[0], np.cumsum(e)])
    need = float(quota) - _QUOTA_RTOL * abs(float(quota))

    groups, triggers, reasons = [], [], []
    s = 0
    while s < n:
        # first j with cum[j] - cum[s] >= quota; the trigger bin is j - 1
        j = int(np.searchsorted(cum - cum[s], need, side="left"))
        i = max(j - 1, s + lmin - 1)
        reason = "quota"
        if i > s + lmax - 1:
            i, reason = s + lmax - 1, "max_span"
        if i > n - 1:
            groups.append((s, n - 1))
            triggers.append(None)
            reasons.append("tail")
            break
        lo = max(i - w, s + lmin - 1)
        hi = min(i + w, s + lmax - 1, n - 1)
        window = np.arange(lo, hi + 1)
        # lexicographic (energy, distance, index); lexsort keys run last-to-first
        order = np.lexsort((window, np.abs(window - i), e[lo:hi + 1]))
        c = int(window[order[0]])
        groups.append((s, c))
        triggers.append(i)
        reasons.append(reason)
        s = c + 1
    return GopPartition(tuple(groups), float(quota), float(delta), tuple(triggers), tuple(reasons))


def assign_group(frame_index: int, fps: float, partition: GopPartition, bin_duration_s: float | None = None) -> int:
    """Group id of a frame, from the half-open interval holding ``frame_index / fps``."""
    delta = partition.bin_duration_s if bin_duration_s is None else bin_duration_s
    if frame_index < 0:
        raise OutOfRange(f"frame index {frame_index} is negative")
    b = math.floor(_snap(Fraction(frame_index) / (_exact(fps) * _exact(delta))))
    if b >= partition.n_bins:
        raise OutOfRange(f"frame {frame_index} at {frame_index / fps:.6g}s lies beyond the last bin")
    return int(np.searchsorted(partition.starts, b, side="right") - 1)


def assign_groups(frame_indices: Sequence[int], fps: float, partition: GopPartition) -> np.ndarray:
    """Vectorised :func:`assign_group` over many frames."""
    scale = _exact(fps) * _exact(partition.bin_duration_s)
    bins = np.fromiter((math.floor(_snap(Fraction(int(f)) / scale)) for f in frame_indices), dtype=np.int64,
                       count=len(frame_indices))
    if bins.size and (bins.min() < 0 or bins.max() >= partition.n_bins):
        raise OutOfRange("frame index outside the partitioned timeline")
    return np.searchsorted(partition.starts, bins, side="right") - 1


class GopPartitioner(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` partitions a trace, ``transform`` maps frames to group ids.

    Parameters
    ----------
    bin_duration_s : float
        Width of a bit-cost bin in seconds.
    target_groups : int
        Requested number of groups; sets the quota as total bytes / target.
    min_span_s, max_span_s : float
        Span bounds of a group in seconds.
    valley_window_bins : int
        Half-width of the valley search window around the trigger bin.
    """

    def __init__(self, bin_duration_s=1.0, target_groups=16, min_span_s=1.0, max_span_s=60.0,
                 valley_window_bins=2):
        self.bin_duration_s = bin_duration_s
        self.target_groups = target_groups
        self.min_span_s = min_span_s
        self.max_span_s = max_span_s
        self.valley_window_bins = valley_window_bins

    def _config(self) -> PartitionConfig:
        return PartitionConfig(**self.get_params())

    def fit(self, X, y=None):
        cfg = self._config()
        if isinstance(X, CodecTrace):
            energies = bin_bitcost(X, cfg.bin_duration_s)
            self.fps_ = X.fps
        elif isinstance(X, BinEnergies):
            energies = X
        else:
            energies = BinEnergies(np.asarray(X), cfg.bin_duration_s)
        self.energies_ = energies
        self.quota_ = compute_quota(energies, cfg.target_groups)
        self.partition_ = partition_gops(energies, cfg, self.quota_)
        self.n_groups_ = len(self.partition_)
        return self

    def transform(self, X):
        """Group id per frame of a trace."""
        check_is_fitted(self, "partition_")
        if not isinstance(X, CodecTrace):
            raise TypeError("transform expects a CodecTrace")
        return assign_groups(range(len(X)), X.fps, self.partition_)

    def config_record(self) -> dict:
        return asdict(self._config())
