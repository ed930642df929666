"""Physical-layer authentication toolkit for 5G NR SRS channel-estimate traces.

Pipeline: synthesize or parse binary SRS traces, extract a 2,531-dimensional
multi-domain feature vector per probe, authenticate with a Pearson-threshold
baseline or a 1-D SE-ResNet classifier, and evaluate under chronological vs.
random splits.
"""

__version__ = "0.1.0"

from srspla.trace_format import (
    EventId,
    TraceRecord,
    SrsProbe,
    decode_c16,
    encode_c16,
    read_trace,
    write_trace,
    assemble_probes,
)

__all__ = [
    "EventId",
    "TraceRecord",
    "SrsProbe",
    "decode_c16",
    "encode_c16",
    "read_trace",
    "write_trace",
    "assemble_probes",
]
