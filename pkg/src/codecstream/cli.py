"""Command-line interface.

Exit codes: 0 ok, 2 malformed input, 3 invalid configuration, 4 internal
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .attention import build_mask, codec_groups, write_dense_mask
from .budget import budget_report
from .errors import CodecStreamError, ConfigError, InvalidSpec
from .gop import GopPartitioner
from .jumpscore import DEFAULT_DELTAS, jumpscore_map, read_annotations, read_predictions
from .plotting import plot_data, render_plot, write_plot_data
from .saliency import block_scores, frame_saliency
from .synth import synthesize_trace
from .tokenizer import CodecStreamTokenizer, write_manifest, write_tokens
from .trace import read_trace, write_trace

log = logging.getLogger("codecstream")

# (flag, type, help); defaults come from CodecStreamTokenizer
_TOKENIZER_FLAGS = [
    ("bin_duration_s", float, "bit-cost bin width in seconds"),
    ("target_groups", int, "requested number of adaptive groups"),
    ("min_span_s", float, "minimum group span in seconds"),
    ("max_span_s", float, "maximum group span in seconds"),
    ("valley_window_bins", int, "half-width of the valley search window in bins"),
    ("percentile", float, "robust normalization percentile for saliency"),
    ("bitcost_prior_weight", float, "weight of the per-block bit-cost prior"),
    ("patch_size", int, "encoder patch size in pixels"),
    ("lam", float, "same-frame attenuation strength (lambda)"),
    ("alpha_peak", float, "weight of the per-frame peak block"),
    ("canvas_blocks", int, "2x2 blocks per canvas"),
    ("p_canvases_total", int, "P-canvas budget per video"),
]
_PARTITION_KEYS = ("bin_duration_s", "target_groups", "min_span_s", "max_span_s", "valley_window_bins")
_EXTRA_KEYS = ("seed", "trace")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser, keys) -> None:
    defaults = CodecStreamTokenizer().get_params()
    for name, typ, help_ in _TOKENIZER_FLAGS:
        if name in keys:
            p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None,
                           help=f"{help_} (default {defaults[name]})")
    p.add_argument("--config", help="JSON or YAML config file; flags override it")
    p.add_argument("--seed", type=int, default=None, help="random seed recorded in outputs (default 0)")


def _load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text.splitlines()[0] if text.lstrip().startswith("{\"format\"") else text)
    except (json.JSONDecodeError, IndexError):
        import yaml

        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise InvalidSpec(f"config file {path} is neither JSON nor YAML: {exc}") from None
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]  # an output header
    if not isinstance(data, dict):
        raise InvalidSpec(f"config file {path} must hold a mapping")
    return data


def _run_config(args, keys) -> dict:
    defaults = CodecStreamTokenizer().get_params()
    cfg = {k: defaults[k] for k in keys}
    cfg["seed"] = 0
    if args.config:
        for k, v in _load_config_file(args.config).items():
            if k in _EXTRA_KEYS:
                if k == "seed":
                    cfg[k] = v
                continue
            if k not in defaults:
                raise InvalidSpec(f"unknown config key {k!r}")
            if k in cfg:
                cfg[k] = v
    for k in list(cfg):
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _stem(path: str) -> str:
    name = Path(path).name
    for suffix in (".jsonl", ".trace", ".txt"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name


def _tokenize_one(path: str, cfg: dict, out_dir: str, dense_mask: bool) -> dict:
    trace = read_trace(path)
    params = {k: v for k, v in cfg.items() if k not in _EXTRA_KEYS}
    tok = CodecStreamTokenizer(**params)
    result = tok.fit(trace).transform(trace)
    record = dict(cfg, trace=Path(path).name)
    stem = _stem(path)
    out = {"trace": path, "tokens": os.path.join(out_dir, stem + ".tokens.jsonl"),
           "canvases": os.path.join(out_dir, stem + ".canvases.jsonl"),
           "n_groups": len(result.partition), "n_canvases": len(result.canvases),
           "n_p_canvases": result.n_p_canvases, "n_tokens": len(result.tokens)}
    write_tokens(out["tokens"], result, record)
    write_manifest(out["canvases"], result, record)
    if dense_mask:
        out["mask"] = os.path.join(out_dir, stem + ".mask.bin")
        write_dense_mask(out["mask"], build_mask(codec_groups(result.tokens)))
    return out


def cmd_tokenize(args) -> int:
    cfg = _run_config(args, [f[0] for f in _TOKENIZER_FLAGS])
    CodecStreamTokenizer(**{k: v for k, v in cfg.items() if k not in _EXTRA_KEYS})._validate()
    os.makedirs(args.out_dir, exist_ok=True)
    jobs = max(1, args.jobs)
    if jobs > 1 and len(args.traces) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_tokenize_one, args.traces, [cfg] * len(args.traces),
                                    [args.out_dir] * len(args.traces), [args.dense_mask] * len(args.traces)))
    else:
        results = [_tokenize_one(p, cfg, args.out_dir, args.dense_mask) for p in args.traces]
    for r in results:
        print(f"{r['trace']}: {r['n_groups']} groups, {r['n_canvases']} canvases "
              f"({r['n_p_canvases']} P), {r['n_tokens']} tokens -> {r['tokens']}")
    return 0


def cmd_plot(args) -> int:
    cfg = _run_config(args, _PARTITION_KEYS)
    trace = read_trace(args.trace)
    part = GopPartitioner(**{k: cfg[k] for k in _PARTITION_KEYS})
    data = plot_data(trace, part)
    os.makedirs(args.out_dir, exist_ok=True)
    stem = _stem(args.trace)
    data_path = os.path.join(args.out_dir, stem + ".plot.json")
    write_plot_data(data_path, data, dict(cfg, trace=Path(args.trace).name))
    img_path = os.path.join(args.out_dir, stem + ".plot.png")
    render_plot(data, img_path)
    print(f"{data['n_groups']} groups, quota {data['quota']:.1f} bytes -> {img_path}, {data_path}")
    return 0


def cmd_budget(args) -> int:
    rep = budget_report(args.frames, args.height, args.width, args.patch_size, args.merge,
                        args.canvas_blocks, args.canvases)
    if args.json:
        print(json.dumps(rep))
    else:
        print(f"uniform: {rep['frames']} frames x {rep['tokens_per_frame']} tokens/frame "
              f"= {rep['uniform_tokens']} tokens")
        print(f"codec:   {rep['codec_canvases']} canvases x {rep['tokens_per_canvas']} tokens/canvas "
              f"= {rep['codec_tokens']} tokens")
        print(f"matched-budget canvas count: {rep['matched_canvases']}")
    return 0


def cmd_eval(args) -> int:
    annotations = read_annotations(args.annotations)
    preds, unparsed = ({}, []) if args.predictions is None else read_predictions(args.predictions)
    missing = [a.video_id for a in annotations if a.video_id not in preds]
    for vid in missing:
        log.warning("no prediction for %s; scored as empty", vid)
    for vid in unparsed:
        log.warning("no timestamps parsed for %s; scored as empty", vid)
    deltas = tuple(args.delta) if args.delta else DEFAULT_DELTAS
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = jumpscore_map(annotations, preds, deltas, args.metric, unparsed)
    print(report.table())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            for row in report.records():
                fh.write(json.dumps(row) + "\n")
    return 0


def cmd_inspect(args) -> int:
    from PIL import Image

    cfg = _run_config(args, ("percentile", "patch_size"))
    trace = read_trace(args.trace)
    if not 0 <= args.frame < len(trace):
        raise InvalidSpec(f"frame {args.frame} outside 0..{len(trace) - 1}")
    fr = trace.frames[args.frame]
    if not fr.packet.is_predicted:
        raise InvalidSpec(f"frame {args.frame} is an I-frame; it has no saliency map")
    s = frame_saliency(fr, trace.width, trace.height, cfg["percentile"])
    a = block_scores(s, cfg["patch_size"])
    os.makedirs(args.out_dir, exist_ok=True)
    stem = f"{_stem(args.trace)}.f{args.frame}"
    Image.fromarray(np.clip(np.rint(s * 127.5), 0, 255).astype(np.uint8)).save(
        os.path.join(args.out_dir, stem + ".saliency.png"))
    amax = 2.0 * (2 * cfg["patch_size"]) ** 2
    Image.fromarray(np.clip(np.rint(a / amax * 255), 0, 255).astype(np.uint8)).save(
        os.path.join(args.out_dir, stem + ".blocks.png"))
    print(f"frame {args.frame}: saliency mean {s.mean():.4f}, {a.size} blocks, max block score {a.max():.1f}")
    return 0


def _parse_segments(text: str) -> list[tuple[float, float, float]]:
    segs = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise InvalidSpec(f"segment {part!r} must be duration:amplitude:bitcost")
        try:
            segs.append(tuple(float(b) for b in bits))
        except ValueError:
            raise InvalidSpec(f"segment {part!r} must be numeric") from None
    return segs


def cmd_synth(args) -> int:
    trace = synthesize_trace(_parse_segments(args.segments), args.fps, args.width, args.height, args.seed,
                             args.map_every)
    write_trace(trace, args.out)
    print(f"wrote {len(trace)} frames to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="codecstream", description="Codec-stream tokenization toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("tokenize", help="pack I/P canvases and write token metadata")
    t.add_argument("traces", nargs="+", help="trace file(s)")
    t.add_argument("-o", "--out-dir", default=".", help="output directory")
    t.add_argument("--jobs", type=int, default=1, help="videos processed in parallel")
    t.add_argument("--dense-mask", action="store_true", help="also write the packed dense attention mask")
    _add_config_flags(t, {f[0] for f in _TOKENIZER_FLAGS})
    t.set_defaults(func=cmd_tokenize)

    pl = sub.add_parser("plot", help="plot per-bin bit-cost and the adaptive grouping")
    pl.add_argument("trace")
    pl.add_argument("-o", "--out-dir", default=".")
    _add_config_flags(pl, set(_PARTITION_KEYS))
    pl.set_defaults(func=cmd_plot)

    b = sub.add_parser("budget", help="token counts: uniform sampling versus codec canvases")
    b.add_argument("--frames", type=int, required=True)
    b.add_argument("--height", type=int, default=392)
    b.add_argument("--width", type=int, default=392)
    b.add_argument("--patch-size", type=int, default=14)
    b.add_argument("--merge", type=int, default=2)
    b.add_argument("--canvas-blocks", type=int, default=196)
    b.add_argument("--canvases", type=int, default=None, help="codec canvas count (default: matched)")
    b.add_argument("--json", action="store_true", help="print a JSON record")
    b.set_defaults(func=cmd_budget)

    e = sub.add_parser("eval", help="JumpScore evaluation")
    e.add_argument("annotations")
    e.add_argument("predictions", nargs="?")
    e.add_argument("--delta", type=float, action="append", help="tolerance in seconds (repeatable)")
    e.add_argument("--metric", choices=("ap", "f1"), default="ap")
    e.add_argument("--report", help="write machine-readable records here")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="dump a frame's saliency and block-score images")
    i.add_argument("trace")
    i.add_argument("--frame", type=int, required=True)
    i.add_argument("-o", "--out-dir", default=".")
    _add_config_flags(i, {"percentile", "patch_size"})
    i.set_defaults(func=cmd_inspect)

    s = sub.add_parser("synth", help="write a synthetic trace")
    s.add_argument("out")
    s.add_argument("--segments", default="10:4:3000,10:1:300",
                   help="comma-separated duration:amplitude:bitcost triples")
    s.add_argument("--fps", type=float, default=30.0)
    s.add_argument("--width", type=int, default=128)
    s.add_argument("--height", type=int, default=96)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--map-every", type=int, default=1)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors exit 3; --help and --version exit 0
        return exc.code if isinstance(exc.code, int) else ConfigError.exit_code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CodecStreamError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 4


if __name__ == "__main__":
    sys.exit(main())
