"""Independent reference implementations used as test oracles.

These are deliberately literal (plain loops, Python ints) and share no code
with the package.
"""

import math
from fractions import Fraction


def ceil_ratio(a, b):
    return math.ceil(Fraction(str(a)) / Fraction(str(b)))


def partition_oracle(e, lmin, lmax, window, theta):
    """Trigger rule then lexicographic valley search, one bin at a time."""
    n = len(e)
    groups = []
    s = 0
    while s < n:
        trigger = None
        for i in range(s, n):
            span = i - s + 1
            if span >= lmax or (span >= lmin and sum(int(x) for x in e[s:i + 1]) >= theta):
                trigger = i
                break
        if trigger is None:
            groups.append((s, n - 1))
            break
        window_bins = [
            b for b in range(trigger - window, trigger + window + 1)
            if s + lmin - 1 <= b <= s + lmax - 1 and 0 <= b <= n - 1
        ]
        c = min(window_bins, key=lambda b: (e[b], abs(b - trigger), b))
        groups.append((s, c))
        s = c + 1
    return groups


def block_scores_oracle(saliency, p):
    h, w = len(saliency), len(saliency[0])
    bi, bj = math.ceil(h / (2 * p)), math.ceil(w / (2 * p))
    out = [[0.0] * bj for _ in range(bi)]
    for y in range(h):
        for x in range(w):
            out[y // (2 * p)][x // (2 * p)] += float(saliency[y][x])
    return out


def greedy_match_oracle(pred, gt, delta):
    """Quadratic scan with exact decimal arithmetic."""
    from decimal import Decimal

    d = Decimal(repr(float(delta)))
    g = sorted(range(len(gt)), key=lambda k: (gt[k], k))
    used = set()
    tp = 0
    for pi in sorted(range(len(pred)), key=lambda k: (pred[k], k)):
        p = Decimal(repr(float(pred[pi])))
        best = None
        for gi in g:
            if gi in used:
                continue
            dist = abs(Decimal(repr(float(gt[gi]))) - p)
            if dist <= d and (best is None or dist < best[0]):
                best = (dist, gi)
        if best is not None:
            used.add(best[1])
            tp += 1
    return tp


def packing_violations(result, trace, tokenizer):
    """List of broken packing invariants for one tokenized stream (empty when all hold)."""
    import numpy as np

    from codecstream.gop import assign_group

    bad = []
    t = result.tokens
    if len(t) % 4:
        bad.append("token count not a multiple of 4")
    for k in range(0, len(t) - 3, 4):
        quad_src, quad_can = t.source_pos[k:k + 4], t.canvas_pos[k:k + 4]
        for pos in (quad_src, quad_can):
            r, c = pos[0]
            if r % 2 or c % 2 or pos.tolist() != [[r, c], [r, c + 1], [r + 1, c], [r + 1, c + 1]]:
                bad.append(f"token {k}: block not merge-aligned")
        if len(set(t.source_frame[k:k + 4].tolist())) != 1 or len(set(t.canvas_index[k:k + 4].tolist())) != 1:
            bad.append(f"token {k}: block spans frames or canvases")
    seen = set()
    for f, (r, c), g in zip(t.source_frame.tolist(), t.source_pos.tolist(), t.group.tolist()):
        key = (g, f, r, c)
        if key in seen:
            bad.append(f"duplicate patch {key}")
        seen.add(key)
    n_p = sum(c.label == "P" for c in result.canvases)
    if n_p != tokenizer.p_canvases_total:
        bad.append(f"{n_p} P-canvases, budget {tokenizer.p_canvases_total}")
    if int(np.sum(result.p_canvases_per_group)) != tokenizer.p_canvases_total:
        bad.append("per-group allocation does not sum to the budget")
    for canvas in result.canvases:
        for f, _, _ in canvas.cells:
            if assign_group(f, trace.fps, result.partition) != canvas.group:
                bad.append(f"frame {f} on canvas {canvas.index} of group {canvas.group} belongs elsewhere")
                break
    if [c.index for c in result.canvases] != list(range(len(result.canvases))):
        bad.append("canvas indices not consecutive")
    if [c.group for c in result.canvases] != sorted(c.group for c in result.canvases):
        bad.append("canvases not in group order")
    return bad


FIGURE_SEGMENTS = (24, 40, 32, 28, 36, 40, 30, 34, 38, 32, 44, 34, 36)
FIGURE_FPS = 16.0
FIGURE_SEGMENT_BYTES = 120_000


def figure_trace(seed=0):
    """448 frames in 13 shots of varied length; every shot carries the same P-frame byte mass.

    Each shot opens with an I-frame and its P-frame bytes decay toward the
    shot end, so with a per-frame bin and 13 target groups every shot closes
    exactly one group at its last P-frame.
    """
    import numpy as np

    from codecstream.trace import CodecTrace, FrameTrace, PacketRecord

    rng = np.random.default_rng(seed)
    frames = []
    for length in FIGURE_SEGMENTS:
        n_p = length - 1
        shape = np.linspace(2.0, 1.0, n_p) * rng.uniform(0.9, 1.1, n_p)
        sizes = np.floor(shape / shape.sum() * FIGURE_SEGMENT_BYTES).astype(int)
        sizes[: FIGURE_SEGMENT_BYTES - sizes.sum()] += 1  # exact mass, still decaying at the end
        f0 = len(frames)
        frames.append(FrameTrace(PacketRecord(f0, "I", f0 / FIGURE_FPS, 40_000)))
        for k, size in enumerate(sizes):
            f = f0 + 1 + k
            frames.append(FrameTrace(PacketRecord(f, "P", f / FIGURE_FPS, int(size))))
    return CodecTrace(FIGURE_FPS, 448, 256, tuple(frames))
