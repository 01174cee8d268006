import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codecstream.errors import InsufficientBudget, InvalidSpec
from codecstream.packing import (
    GroupSelector,
    PackingConfig,
    TokenTable,
    allocate_canvases,
    allocation_curve,
    anchor_frame,
    attenuate,
    canvas_grid,
    candidates_from_grids,
    frame_weights,
    pack_i_canvas,
    pack_p_canvases,
    within_frame_rank,
)


def test_attenuate_lambda_zero_identity():
    s = np.array([3.0, 1.0, 2.0])
    assert np.array_equal(attenuate(np.zeros(3, int), s, 0.0), s)


def test_attenuate_formula():
    out = attenuate(np.zeros(3, int), np.array([9.0, 4.0, 1.0]), 3.0)
    assert out[0] == 9.0 and out[1] == 2.0
    assert out[2] == pytest.approx(1 / math.sqrt(7), rel=1e-15)


def test_attenuate_ranks_within_each_frame():
    frames = np.array([5, 7, 5, 7, 5])
    scores = np.array([1.0, 8.0, 3.0, 2.0, 2.0])
    assert within_frame_rank(frames, scores).tolist() == [2, 0, 0, 1, 1]
    out = attenuate(frames, scores, 1.0)
    # top candidate of every frame is untouched
    assert out[2] == 3.0 and out[1] == 8.0


def test_frame_weights():
    f, w = frame_weights(np.array([0, 0]), np.array([9.0, 2.0]), 1.0)
    assert f.tolist() == [0] and w.tolist() == [20.0]
    f, w = frame_weights(np.array([1, 1, 2]), np.array([9.0, 2.0, 0.0]), 0.0)
    assert w.tolist() == [11.0, 0.0]


def test_allocation_curve():
    assert allocation_curve([1, 1, 2]).tolist() == [0.25, 0.5, 1.0]
    assert allocation_curve([0, 0, 0, 0]).tolist() == [0.25, 0.5, 0.75, 1.0]
    assert allocation_curve([5.0])[-1] == 1.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=200))
def test_allocation_curve_monotone(w):
    f = allocation_curve(w)
    assert np.all(np.diff(f) >= 0)
    assert abs(f[-1] - 1.0) <= 1e-12


def test_allocate_canvases_examples():
    assert allocate_canvases([300, 100], 4).tolist() == [3, 1]
    assert allocate_canvases([7, 7, 7], 3).tolist() == [1, 1, 1]
    assert allocate_canvases([5, 0], 3).tolist() == [2, 1]
    assert allocate_canvases([0, 0, 0], 7).tolist() == [3, 2, 2]


def test_allocate_canvases_insufficient():
    with pytest.raises(InsufficientBudget):
        allocate_canvases([1, 2, 3], 2)
    assert allocate_canvases([1, 3, 2], 2, strict=False).tolist() == [0, 1, 1]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=30), st.integers(0, 100))
def test_allocate_canvases_properties(masses, extra):
    total = len(masses) + extra
    m = allocate_canvases(masses, total)
    assert m.sum() == total and np.all(m >= 1)
    # never more than one canvas away from the floor-with-minimum share
    ideal = total * np.array(masses) / sum(masses) if sum(masses) else np.full(len(masses), total / len(masses))
    assert np.all(m <= np.maximum(1, np.ceil(ideal)) + 1e-9) or sum(masses) == 0


def test_canvas_grid():
    assert canvas_grid(196) == (14, 14)
    assert canvas_grid(10) == (3, 4)
    assert canvas_grid(1) == (1, 1)


def test_pack_i_canvas_dense():
    pages = pack_i_canvas(3, (2, 2), 196, group=0, first_index=0)
    assert len(pages) == 1 and pages[0].label == "I"
    tokens = TokenTable.from_canvases(pages)
    assert len(tokens) == 16
    assert set(tokens.source_frame.tolist()) == {3}
    assert sorted(map(tuple, tokens.source_pos.tolist())) == [(r, c) for r in range(4) for c in range(4)]


def test_pack_i_canvas_pages():
    pages = pack_i_canvas(0, (5, 5), 10, group=2, first_index=7)
    assert [len(p.cells) for p in pages] == [10, 10, 5]
    assert [p.index for p in pages] == [7, 8, 9]
    assert all(p.group == 2 for p in pages)


def test_anchor_frame():
    assert anchor_frame([4, 5, 6], ["P", "I", "P"]) == 5
    assert anchor_frame([4, 5, 6], ["P", "P", "B"]) == 4


def test_token_table_merge_alignment():
    pages = pack_i_canvas(1, (3, 3), 4, group=0, first_index=0)
    t = TokenTable.from_canvases(pages)
    for k in range(0, len(t), 4):
        src, can = t.source_pos[k:k + 4], t.canvas_pos[k:k + 4]
        for pos in (src, can):
            r, c = pos[0]
            assert r % 2 == 0 and c % 2 == 0
            assert pos.tolist() == [[r, c], [r, c + 1], [r + 1, c], [r + 1, c + 1]]
    rec = t[0]
    assert rec.canvas_index == 0 and rec.source_frame == 1 and rec.canvas_pos == (0, 0)
    assert list(TokenTable.from_records(list(t)).source_pos.tolist()) == t.source_pos.tolist()


def _grids(values, shape=(2, 2)):
    return {f: np.asarray(v, dtype=float).reshape(shape) for f, v in values.items()}


def test_single_canvas_takes_global_top():
    grids = _grids({1: [9, 1, 1, 1], 2: [8, 7, 1, 1], 3: [0, 0, 0, 6]})
    sel = GroupSelector(*candidates_from_grids(grids), lam=0.0, alpha_peak=0.0)
    idx = sel.select(0, 1, 4)
    picked = sorted(zip(sel.scores[idx], sel.frames[idx]), reverse=True)
    assert [s for s, _ in picked] == [9, 8, 7, 6]


def test_no_duplicates_and_exhaustion():
    grids = _grids({1: [1, 2, 3, 4], 2: [4, 3, 2, 1]})
    sel = GroupSelector(*candidates_from_grids(grids), lam=1.0, alpha_peak=0.5)
    canvases = pack_p_canvases(sel, 3, 3, group=0, first_index=0)
    cells = [c for cv in canvases for c in cv.cells]
    assert len(cells) == len(set(cells)) == 8
    assert [len(cv.cells) for cv in canvases] == [3, 3, 2]


def test_empty_stratum_falls_back_to_neighbours():
    # frame 1 holds almost all mass, so stratum 0 of 2 is empty
    grids = _grids({1: [1000, 1000, 1000, 1000], 2: [1, 0, 0, 0], 3: [1, 0, 0, 0]})
    sel = GroupSelector(*candidates_from_grids(grids), lam=0.0, alpha_peak=0.0)
    assert sel.stratum(0, 2)[0] == sel.stratum(0, 2)[1]
    first = sel.select(0, 2, 2)
    second = sel.select(1, 2, 2)
    assert len(first) == 2 and len(second) == 2
    assert not set(first) & set(second)


def test_zero_mass_round_robin():
    grids = _grids({1: [0, 0, 0, 0], 2: [0, 0, 0, 0], 3: [0, 0, 0, 0]})
    sel = GroupSelector(*candidates_from_grids(grids), lam=1.0, alpha_peak=1.0)
    assert sel.zero_mass
    idx = sel.select(0, 1, 3)
    assert sel.frames[idx].tolist() == [1, 2, 3]
    assert sel.curve.tolist() == pytest.approx([1 / 3, 2 / 3, 1.0])


def test_empty_group_gives_empty_canvases():
    sel = GroupSelector(*candidates_from_grids({}), lam=1.0, alpha_peak=1.0)
    canvases = pack_p_canvases(sel, 2, 4, group=0, first_index=0)
    assert [len(c.cells) for c in canvases] == [0, 0]


def test_rank_out_of_range():
    sel = GroupSelector(*candidates_from_grids(_grids({1: [1, 1, 1, 1]})), lam=0.0, alpha_peak=0.0)
    with pytest.raises(InvalidSpec):
        sel.select(2, 2, 1)


def _dominant_share(lam):
    rng = np.random.default_rng(0)
    grids = {f: 0.5 + 0.1 * rng.random((4, 4)) for f in range(1, 9)}
    grids[4] = 1.0 + 0.1 * rng.random((4, 4))
    sel = GroupSelector(*candidates_from_grids(grids), lam=lam, alpha_peak=0.0)
    idx = sel.select(0, 1, 16)
    return np.mean(sel.frames[idx] == 4)


def test_attenuation_spreads_selection():
    assert _dominant_share(0.0) == 1.0
    assert _dominant_share(4.0) < _dominant_share(0.0)


def test_packing_config_validation():
    with pytest.raises(InvalidSpec):
        PackingConfig(canvas_blocks=0)
    with pytest.raises(InvalidSpec):
        PackingConfig(lam=-1)
