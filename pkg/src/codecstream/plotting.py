"""Bit-cost grouping plot: per-bin cost, per-group cumulative cost, quota and boundaries."""

from __future__ import annotations

import json
import os

import numpy as np

from .gop import GopPartitioner
from .trace import CodecTrace


def plot_data(trace: CodecTrace, partitioner: GopPartitioner) -> dict:
    """Numbers behind the plot; ``boundaries`` holds each group's end time in seconds."""
    partitioner.fit(trace)
    e = partitioner.energies_.energies.astype(np.int64)
    part = partitioner.partition_
    cumulative = np.empty_like(e)
    for s, c in part.groups:
        cumulative[s:c + 1] = np.cumsum(e[s:c + 1])
    delta = part.bin_duration_s
    return {
        "bin_duration_s": delta,
        "bins": e.tolist(),
        "cumulative": cumulative.tolist(),
        "quota": part.quota,
        "groups": [{"s": s, "c": c, "reason": r} for (s, c), r in zip(part.groups, part.reasons)],
        "boundaries": [(c + 1) * delta for _, c in part.groups],
        "n_groups": len(part),
        "frames_per_group": np.bincount(partitioner.transform(trace), minlength=len(part)).tolist(),
    }


def write_plot_data(path: str | os.PathLike, data: dict, config: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"format": "codecstream-plot", "version": 1, "config": config, **data}, fh,
                  separators=(",", ":"))
        fh.write("\n")


def render_plot(data: dict, path: str | os.PathLike) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    delta = data["bin_duration_s"]
    t = np.arange(len(data["bins"])) * delta
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(12, 5), sharex=True)
    top.bar(t, data["bins"], width=delta, align="edge", color="tab:blue")
    top.set_ylabel("P/B bytes per bin")
    bottom.plot(t + delta, data["cumulative"], color="tab:orange", drawstyle="steps-pre")
    bottom.axhline(data["quota"], color="tab:red", linewidth=1)
    bottom.set_ylabel("cumulative bytes in group")
    bottom.set_xlabel("time (s)")
    colors = plt.get_cmap("tab20")
    for k, g in enumerate(data["groups"]):
        bottom.axvspan(g["s"] * delta, (g["c"] + 1) * delta, ymin=0, ymax=0.04, color=colors(k % 20))
    for b in data["boundaries"]:
        for ax in (top, bottom):
            ax.axvline(b, color="tab:green", linestyle="--", linewidth=0.8)
    top.set_title(f"{data['n_groups']} groups, quota {data['quota']:.0f} bytes")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
