#!/usr/bin/env python3
"""Translate ffprobe frame reports into a codecstream trace file.

Recipe (packets only: frame type, pts and compressed size per frame)::

    ffprobe -v error -select_streams v:0 -show_streams -show_frames \\
        -show_entries stream=width,height,r_frame_rate:frame=pts_time,best_effort_timestamp_time,pict_type,pkt_size \\
        -of json input.mp4 > input.ffprobe.json
    python3 scripts/ffprobe_to_trace.py input.ffprobe.json -o input.trace.jsonl

With ``--maps VIDEO`` and PyAV installed, motion vectors are exported from
the decoder (``flags2=+export_mvs``) every ``--map-every`` predicted
frames, together with a residual proxy: the luma change against the
previous decoded frame, offset to 128.  Without maps the trace still drives
bit-cost partitioning; saliency then has nothing to score.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from codecstream.trace import CodecTrace, FrameTrace, MotionVectorField, PacketRecord, ResidualPlane, write_trace

_TYPES = {"I": "I", "P": "P", "B": "B", "S": "P", "SI": "I", "SP": "P", "BI": "B"}


def _frame_time(rec: dict) -> float | None:
    for key in ("pts_time", "best_effort_timestamp_time", "pkt_pts_time"):
        v = rec.get(key)
        if v not in (None, "N/A"):
            return float(v)
    return None


def packets_from_ffprobe(report: dict) -> tuple[float, int, int, list[PacketRecord]]:
    """``(fps, width, height, packets)`` from an ffprobe JSON report, in presentation order."""
    streams = report.get("streams") or [{}]
    st = streams[0]
    fps = float(Fraction(st.get("r_frame_rate", "30/1")))
    rows = []
    for n, rec in enumerate(report.get("frames", [])):
        t = _frame_time(rec)
        kind = _TYPES.get(str(rec.get("pict_type", "")).upper())
        if t is None or kind is None or "pkt_size" not in rec:
            continue
        rows.append((t, n, kind, int(rec["pkt_size"])))
    rows.sort()
    if not rows:
        raise ValueError("report holds no usable video frames")
    t0 = rows[0][0]
    packets = []
    last = None
    for t, _, kind, size in rows:
        t = round(t - t0, 6)
        if last is not None and t <= last:
            continue  # duplicated timestamps: keep the first
        packets.append(PacketRecord(len(packets), kind, t, size))
        last = t
    return fps, int(st["width"]), int(st["height"]), packets


def maps_from_video(path: str, packets: list[PacketRecord], block_size_px: int = 16, map_every: int = 30) -> dict:
    """Frame index -> (MotionVectorField, ResidualPlane) via PyAV; predicted frames only."""
    import av

    out = {}
    with av.open(path) as container:
        stream = container.streams.video[0]
        stream.codec_context.options = {"flags2": "+export_mvs"}
        prev = None
        n_pred = 0
        for k, frame in enumerate(container.decode(stream)):
            luma = frame.to_ndarray(format="gray").astype(np.int16)
            if k < len(packets) and packets[k].is_predicted:
                if n_pred % map_every == 0 and prev is not None:
                    h, w = luma.shape
                    grid = np.zeros((-(-h // block_size_px), -(-w // block_size_px), 2))
                    mvs = frame.side_data.get("MOTION_VECTORS")
                    if mvs is not None:
                        for mv in mvs.to_ndarray():
                            r, c = int(mv["dst_y"]) // block_size_px, int(mv["dst_x"]) // block_size_px
                            if 0 <= r < grid.shape[0] and 0 <= c < grid.shape[1]:
                                scale = max(1, int(mv["motion_scale"]))
                                grid[r, c] = (mv["motion_x"] / scale, mv["motion_y"] / scale)
                    resid = np.clip(luma - prev + 128, 0, 255).astype(np.uint8)
                    out[k] = (MotionVectorField(block_size_px, grid), ResidualPlane(resid))
                n_pred += 1
            prev = luma
    return out


def build_trace(report: dict, maps: dict | None = None) -> CodecTrace:
    fps, width, height, packets = packets_from_ffprobe(report)
    maps = maps or {}
    frames = []
    for pk in packets:
        mv, res = maps.get(pk.frame_index, (None, None))
        frames.append(FrameTrace(pk, mv, res))
    return CodecTrace(fps, width, height, tuple(frames))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("report", help="ffprobe JSON output")
    p.add_argument("-o", "--out", required=True, help="trace file to write")
    p.add_argument("--maps", metavar="VIDEO", help="also export motion/residual maps from VIDEO (needs PyAV)")
    p.add_argument("--map-every", type=int, default=30)
    p.add_argument("--block-size", type=int, default=16)
    args = p.parse_args(argv)
    with open(args.report, encoding="utf-8") as fh:
        report = json.load(fh)
    maps = None
    if args.maps:
        _, _, _, packets = packets_from_ffprobe(report)
        maps = maps_from_video(args.maps, packets, args.block_size, args.map_every)
    trace = build_trace(report, maps)
    write_trace(trace, args.out)
    print(f"wrote {len(trace)} frames to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
