"""Codec-stream tokenization: compressed-video traces to I/P canvases, token
metadata and group-visible attention, plus the JumpScore evaluator."""

__version__ = "0.1.0"

from .errors import CodecStreamError
from .gop import GopPartitioner, PartitionConfig, assign_group, bin_bitcost, compute_quota, partition_gops
from .jumpscore import ap_at_delta, greedy_match, jumpscore_map, parse_prediction_output
from .packing import PackingConfig
from .saliency import SaliencyScorer
from .synth import synthesize_dominant_frame_trace, synthesize_trace
from .tokenizer import CodecStreamTokenizer, TokenizedStream
from .trace import CodecTrace, parse_trace, read_trace, serialize_trace, write_trace

__all__ = [
    "CodecStreamError",
    "CodecStreamTokenizer",
    "CodecTrace",
    "GopPartitioner",
    "PackingConfig",
    "PartitionConfig",
    "SaliencyScorer",
    "TokenizedStream",
    "ap_at_delta",
    "assign_group",
    "bin_bitcost",
    "compute_quota",
    "greedy_match",
    "jumpscore_map",
    "parse_prediction_output",
    "parse_trace",
    "partition_gops",
    "read_trace",
    "serialize_trace",
    "synthesize_dominant_frame_trace",
    "synthesize_trace",
    "write_trace",
]
