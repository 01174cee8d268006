"""JumpScore: cycle-start localization scored by greedy tolerance matching.

Timestamps are compared as decimals (``1.1 - 1.0`` is exactly ``0.1``), so
a prediction sitting exactly on the tolerance boundary counts as a hit.
"""

from __future__ import annotations

import bisect
import json
import math
import os
import re
import warnings
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Mapping, Sequence

from .errors import EmptyGroundTruth, MalformedRecord, NoTimestampsFound

DEFAULT_DELTAS = (0.1, 0.2, 0.3)
PROMPT = ("List the start timestamps in s of each jump rope the main character does in the video. "
          "The start is defined as the moment the rope is behind the legs.")


def _dec(x) -> Decimal:
    return Decimal(repr(float(x))) if not isinstance(x, Decimal) else x


def _check_times(values, what: str) -> list[float]:
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise MalformedRecord(f"{what}: timestamp {v!r} is not a number")
        v = float(v)
        if not math.isfinite(v) or v < 0:
            raise MalformedRecord(f"{what}: timestamp {v!r} must be finite and >= 0")
        out.append(v)
    return out


@dataclass(frozen=True)
class CycleAnnotations:
    video_id: str
    starts: tuple[float, ...]

    def __post_init__(self):
        starts = tuple(_check_times(self.starts, self.video_id))
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise MalformedRecord(f"{self.video_id}: annotated starts must be strictly increasing")
        object.__setattr__(self, "starts", starts)


@dataclass(frozen=True)
class CyclePrediction:
    video_id: str
    starts: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "starts", tuple(_check_times(self.starts, self.video_id)))


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: tuple[tuple[int, int], ...]  # (prediction index, ground-truth index)


def greedy_match(pred: Sequence[float], gt: Sequence[float], delta: float) -> MatchResult:
    """Match predictions in ascending time to the nearest unmatched start within ``delta``.

    Equidistant ground-truth starts resolve to the earlier one.  Indices in
    ``pairs`` refer to the caller's original ordering.
    """
    if not delta > 0:
        raise ValueError(f"tolerance must be > 0, got {delta}")
    tol = _dec(delta)
    g_order = sorted(range(len(gt)), key=lambda k: (gt[k], k))
    g_vals = [_dec(gt[k]) for k in g_order]
    free = list(range(len(g_order)))  # sorted positions into g_vals still unmatched
    pairs = []
    for pi in sorted(range(len(pred)), key=lambda k: (pred[k], k)):
        p = _dec(pred[pi])
        at = bisect.bisect_left(free, p, key=lambda pos: g_vals[pos])
        best = None
        for cand in (at - 1, at):
            if 0 <= cand < len(free):
                d = abs(g_vals[free[cand]] - p)
                if d <= tol and (best is None or d < best[0]):
                    best = (d, cand)
        if best is not None:
            pairs.append((pi, g_order[free.pop(best[1])]))
    tp = len(pairs)
    return MatchResult(tp, len(pred) - tp, len(gt) - tp, tuple(pairs))


def precision_recall(match: MatchResult) -> tuple[float, float]:
    n_pred, n_gt = match.tp + match.fp, match.tp + match.fn
    precision = match.tp / n_pred if n_pred else (1.0 if n_gt == 0 else 0.0)
    recall = match.tp / n_gt if n_gt else 1.0
    return precision, recall


def ap_at_delta(pred: Sequence[float], gt: Sequence[float], delta: float, metric: str = "ap") -> float:
    """Single-operating-point AP (precision x recall); ``metric="f1"`` gives F1 instead."""
    if len(gt) == 0:
        raise EmptyGroundTruth("ground truth has no cycle starts")
    p, r = precision_recall(greedy_match(pred, gt, delta))
    if metric == "ap":
        return p * r
    if metric == "f1":
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)
    raise ValueError(f"unknown metric {metric!r}")


@dataclass
class VideoScore:
    video_id: str
    ap: dict[float, float]
    n_gt: int
    n_pred: int
    missing: bool = False
    unparsed: bool = False

    @property
    def mean(self) -> float:
        return sum(self.ap.values()) / len(self.ap)


@dataclass
class JumpScoreReport:
    deltas: tuple[float, ...]
    videos: list[VideoScore] = field(default_factory=list)
    metric: str = "ap"

    @property
    def map(self) -> float:
        if not self.videos:
            return 0.0
        return sum(v.mean for v in self.videos) / len(self.videos)

    def records(self) -> list[dict]:
        rows = [{"video_id": v.video_id, **{f"ap@{d:g}": v.ap[d] for d in self.deltas}, "mean": v.mean,
                 "n_gt": v.n_gt, "n_pred": v.n_pred, "missing": v.missing, "unparsed": v.unparsed}
                for v in self.videos]
        rows.append({"video_id": "__overall__", "metric": self.metric, "deltas": list(self.deltas),
                     "mAP": self.map, "n_videos": len(self.videos)})
        return rows

    def table(self) -> str:
        heads = ["video_id"] + [f"AP@{d:g}" for d in self.deltas] + ["mean", "flags"]
        body = []
        for v in self.videos:
            flags = ",".join(n for n, on in (("missing", v.missing), ("unparsed", v.unparsed)) if on)
            body.append([v.video_id] + [f"{v.ap[d]:.4f}" for d in self.deltas] + [f"{v.mean:.4f}", flags])
        body.append(["mAP"] + [""] * len(self.deltas) + [f"{self.map:.4f}", ""])
        widths = [max(len(r[c]) for r in [heads] + body) for c in range(len(heads))]
        fmt = lambda r: "  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip()
        return "\n".join([fmt(heads), fmt(["-" * w for w in widths])] + [fmt(r) for r in body])


def jumpscore_map(annotations: Iterable[CycleAnnotations],
                  predictions: Mapping[str, Sequence[float] | CyclePrediction],
                  deltas: Sequence[float] = DEFAULT_DELTAS, metric: str = "ap",
                  unparsed: Iterable[str] = ()) -> JumpScoreReport:
    """Mean over videos of the mean over tolerances of AP.

    A video without predictions scores as an empty prediction list and is
    flagged ``missing``.
    """
    deltas = tuple(float(d) for d in deltas)
    if not deltas:
        raise ValueError("at least one tolerance is required")
    unparsed = set(unparsed)
    report = JumpScoreReport(deltas, metric=metric)
    missing = []
    for ann in annotations:
        pred = predictions.get(ann.video_id)
        if pred is None:
            missing.append(ann.video_id)
            starts: Sequence[float] = ()
        else:
            starts = pred.starts if isinstance(pred, CyclePrediction) else pred
        ap = {d: ap_at_delta(starts, ann.starts, d, metric) for d in deltas}
        report.videos.append(VideoScore(ann.video_id, ap, len(ann.starts), len(starts), pred is None,
                                        ann.video_id in unparsed))
    if missing:
        warnings.warn(f"{len(missing)} video(s) without predictions scored as empty: {', '.join(missing)}",
                      stacklevel=2)
    return report


_SEPARATORS = re.compile(r"[\s,;\[\]\(\)\{\}]+")
_NUMBER = re.compile(r"^(?:(\d+):)?(\d+(?:\.\d+)?|\.\d+)(?:s|sec|secs|seconds)?$", re.IGNORECASE)


def parse_prediction_output(text: str) -> list[float]:
    """Pull timestamps (seconds) out of free-form model output, in order.

    Accepts comma/whitespace/newline separated values, optional brackets,
    an optional ``s`` suffix and ``m:ss.s`` forms; other tokens are skipped.
    """
    out = []
    for tok in _SEPARATORS.split(text):
        tok = tok.strip("\"'").rstrip(".:!?")
        m = _NUMBER.match(tok)
        if m:
            minutes = int(m.group(1)) if m.group(1) else 0
            out.append(float(Decimal(m.group(2)) + 60 * minutes))
    if not out:
        raise NoTimestampsFound(f"no timestamps in output: {text[:80]!r}")
    return out


# -- files ----------------------------------------------------------------

def _read_jsonl(path: str | os.PathLike) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}:{n}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or not isinstance(rec.get("video_id"), str):
                raise MalformedRecord(f"{path}:{n}: record needs a string video_id")
            rows.append(rec)
    return rows


def read_annotations(path: str | os.PathLike) -> list[CycleAnnotations]:
    rows = _read_jsonl(path)
    seen = set()
    out = []
    for rec in rows:
        if rec["video_id"] in seen:
            raise MalformedRecord(f"duplicate video_id {rec['video_id']!r} in annotations")
        seen.add(rec["video_id"])
        if not isinstance(rec.get("starts"), list):
            raise MalformedRecord(f"{rec['video_id']}: annotations need a starts list")
        out.append(CycleAnnotations(rec["video_id"], tuple(rec["starts"])))
    return out


def read_predictions(path: str | os.PathLike) -> tuple[dict[str, CyclePrediction], list[str]]:
    """Load ``{video_id, starts}`` or ``{video_id, text}`` records.

    Returns the predictions and the ids whose raw text held no timestamps
    (those score as empty predictions).
    """
    preds, unparsed = {}, []
    for rec in _read_jsonl(path):
        vid = rec["video_id"]
        if "starts" in rec:
            if not isinstance(rec["starts"], list):
                raise MalformedRecord(f"{vid}: starts must be a list")
            starts = rec["starts"]
        elif "text" in rec:
            try:
                starts = parse_prediction_output(str(rec["text"]))
            except NoTimestampsFound:
                starts = []
                unparsed.append(vid)
        else:
            raise MalformedRecord(f"{vid}: prediction record needs starts or text")
        preds[vid] = CyclePrediction(vid, tuple(starts))
    return preds, unparsed
