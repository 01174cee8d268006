import pytest

from codecstream.budget import budget_report, tokens_per_canvas, tokens_per_frame
from codecstream.errors import InvalidSpec


def test_reference_resolution():
    assert tokens_per_frame(392, 392, 14, 2) == 196


def test_padding_and_scaling():
    assert tokens_per_frame(784, 784) == 784
    assert tokens_per_frame(400, 392) == 14 * 15  # 29 patch rows pad to 15 merged rows
    assert tokens_per_frame(14, 14, 14, 1) == 1


def test_canvas_tokens():
    assert tokens_per_canvas(196) == 196
    assert tokens_per_canvas(196, merge=1) == 784


def test_report():
    r = budget_report(64, 392, 392)
    assert r["uniform_tokens"] == 64 * 196 and r["matched_canvases"] == 64
    assert r["codec_tokens"] == r["uniform_tokens"]
    assert budget_report(0, 392, 392)["uniform_tokens"] == 0


def test_invalid():
    with pytest.raises(InvalidSpec):
        tokens_per_frame(0, 392)
    with pytest.raises(InvalidSpec):
        budget_report(-1, 392, 392)
