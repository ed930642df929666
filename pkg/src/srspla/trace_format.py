"""Bit-exact reader/writer for the binary SRS event container.

File layout (all integers little-endian):

    magic "SRSPLA01" (8 bytes)
    record*: event_id u32 | timestamp_ns u64 | rnti u16 | pad u16 |
             payload_len u32 | payload bytes

Complex channel samples use the packed c16 format: one 32-bit word per
sample, in-phase in the low 16 bits, quadrature in the high 16 bits, both
signed Q15 fixed point (float value = integer / 32768).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import BinaryIO, Iterable, Iterator

import numpy as np

MAGIC = b"SRSPLA01"
RECORD_HEADER = struct.Struct("<IQHHI")  # event_id, timestamp_ns, rnti, pad, payload_len
RECORD_HEADER_BYTES = RECORD_HEADER.size

Q15_SCALE = 32768.0

N_FFT = 1536
N_TIME = 3072
N_RB = 106
ACTIVE_START = 144
ACTIVE_STOP = 1392  # exclusive; 1,248 active bins, 288 guard bins split evenly
N_ACTIVE = ACTIVE_STOP - ACTIVE_START


class EventId(IntEnum):
    FREQ_CHAN_EST = 1
    TIME_CHAN_EST = 2
    SNR_EST = 3
    TOA_NS = 4


# Exact payload size per event type, in bytes.
PAYLOAD_BYTES = {
    EventId.FREQ_CHAN_EST: N_FFT * 4,
    EventId.TIME_CHAN_EST: N_TIME * 4,
    EventId.SNR_EST: N_RB * 2,
    EventId.TOA_NS: 8,
}


class TraceFormatError(Exception):
    """Base class for trace container errors; carries the byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BadMagic(TraceFormatError):
    pass


class TruncatedRecord(TraceFormatError):
    pass


class UnknownEventId(TraceFormatError):
    pass


class PayloadLengthMismatch(TraceFormatError):
    pass


class InvariantViolation(TraceFormatError):
    pass


class DuplicateEvent(TraceFormatError):
    pass


def decode_c16(word: int) -> tuple[int, int, float, float]:
    """Unpack one 32-bit c16 word into (i, q, fi, fq).

    i is the sign-extended low 16 bits, q the sign-extended high 16 bits;
    fi/fq are the Q15 float values i/32768 and q/32768.
    """
    i = word & 0xFFFF
    if i >= 0x8000:
        i -= 0x10000
    q = (word >> 16) & 0xFFFF
    if q >= 0x8000:
        q -= 0x10000
    return i, q, i / Q15_SCALE, q / Q15_SCALE


def encode_c16(i: int, q: int) -> int:
    """Pack signed 16-bit (i, q) into one 32-bit c16 word (inverse of decode_c16)."""
    if not (-32768 <= i <= 32767 and -32768 <= q <= 32767):
        raise InvariantViolation(f"c16 component out of int16 range: i={i}, q={q}")
    return ((q & 0xFFFF) << 16) | (i & 0xFFFF)


def decode_c16_payload(payload: bytes) -> np.ndarray:
    """Decode a packed c16 byte payload to a complex128 array of Q15 floats."""
    iq = np.frombuffer(payload, dtype="<i2").astype(np.float64) / Q15_SCALE
    return iq[0::2] + 1j * iq[1::2]


def encode_c16_payload(i: np.ndarray, q: np.ndarray) -> bytes:
    """Pack int16 I/Q component arrays into interleaved c16 bytes."""
    out = np.empty(2 * len(i), dtype="<i2")
    out[0::2] = i
    out[1::2] = q
    return out.tobytes()


@dataclass(frozen=True)
class TraceRecord:
    """One event in the on-disk container. Payload is kept as raw bytes."""

    event_id: EventId
    timestamp_ns: int
    rnti: int
    payload: bytes

    def validate(self) -> None:
        if self.event_id not in PAYLOAD_BYTES:
            raise InvariantViolation(f"unknown event id {self.event_id}")
        expected = PAYLOAD_BYTES[EventId(self.event_id)]
        if len(self.payload) != expected:
            raise InvariantViolation(
                f"{EventId(self.event_id).name} payload is {len(self.payload)} bytes, "
                f"expected {expected} (timestamp {self.timestamp_ns}, rnti {self.rnti})"
            )
        if not 0 <= self.timestamp_ns < 2**64:
            raise InvariantViolation(f"timestamp_ns {self.timestamp_ns} out of u64 range")
        if not 0 <= self.rnti < 2**16:
            raise InvariantViolation(f"rnti {self.rnti} out of u16 range")


@dataclass
class SrsProbe:
    """One assembled SRS reception: the four per-probe events decoded to floats."""

    freq_est: np.ndarray  # complex128[1536], active bins 144..1391
    time_est: np.ndarray  # complex128[3072]
    snr_per_rb: np.ndarray  # float64[106], dB
    toa_ns: float
    timestamp_ns: int
    rnti: int
    device_label: str = "unknown"  # "legit" | "attack" | "unknown"

    def validate(self) -> None:
        if self.freq_est.shape != (N_FFT,):
            raise InvariantViolation(f"freq_est has shape {self.freq_est.shape}")
        if self.time_est.shape != (N_TIME,):
            raise InvariantViolation(f"time_est has shape {self.time_est.shape}")
        if self.snr_per_rb.shape != (N_RB,):
            raise InvariantViolation(f"snr_per_rb has shape {self.snr_per_rb.shape}")
        guards = np.concatenate([self.freq_est[:ACTIVE_START], self.freq_est[ACTIVE_STOP:]])
        if np.any(guards != 0):
            raise InvariantViolation("nonzero guard bins outside active window 144..1391")

    @property
    def active_bins(self) -> np.ndarray:
        return self.freq_est[ACTIVE_START:ACTIVE_STOP]


def _read_exact(stream: BinaryIO, n: int, offset: int, what: str) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise TruncatedRecord(
            f"EOF while reading {what}: wanted {n} bytes, got {len(buf)}", offset
        )
    return buf


def read_trace(stream: BinaryIO | bytes) -> Iterator[TraceRecord]:
    """Yield TraceRecords from a container stream, in file order.

    Single-pass and streaming: memory use is bounded by the largest payload.
    Raises BadMagic, TruncatedRecord, UnknownEventId or PayloadLengthMismatch,
    each carrying the byte offset of the offending record.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)

    magic = stream.read(len(MAGIC))
    if magic != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {magic!r}", 0)

    offset = len(MAGIC)
    while True:
        header = stream.read(RECORD_HEADER_BYTES)
        if len(header) == 0:
            return
        if len(header) < RECORD_HEADER_BYTES:
            raise TruncatedRecord(
                f"EOF inside record header ({len(header)} of {RECORD_HEADER_BYTES} bytes)",
                offset,
            )
        event_raw, timestamp_ns, rnti, _pad, payload_len = RECORD_HEADER.unpack(header)

        try:
            event_id = EventId(event_raw)
        except ValueError:
            raise UnknownEventId(f"unknown event id {event_raw}", offset) from None
        expected = PAYLOAD_BYTES[event_id]
        if payload_len != expected:
            raise PayloadLengthMismatch(
                f"{event_id.name} payload_len field is {payload_len}, expected {expected}",
                offset,
            )
        payload = _read_exact(stream, payload_len, offset, f"{event_id.name} payload")
        yield TraceRecord(event_id, timestamp_ns, rnti, bytes(payload))
        offset += RECORD_HEADER_BYTES + payload_len


def write_trace(records: Iterable[TraceRecord], stream: BinaryIO | None = None) -> bytes | None:
    """Serialize records to the container format.

    Output is deterministic for equal input and parses back bit-exactly via
    read_trace. Raises InvariantViolation naming the first invalid record.
    If stream is None, returns the encoded bytes.
    """
    out = stream if stream is not None else io.BytesIO()
    out.write(MAGIC)
    for rec in records:
        rec.validate()
        out.write(RECORD_HEADER.pack(int(rec.event_id), rec.timestamp_ns,
                                     rec.rnti, 0, len(rec.payload)))
        out.write(rec.payload)
    if stream is None:
        return out.getvalue()
    return None


# -- record constructors used by the synthesizer ------------------------------


def make_freq_record(timestamp_ns: int, rnti: int, i: np.ndarray, q: np.ndarray) -> TraceRecord:
    return TraceRecord(EventId.FREQ_CHAN_EST, timestamp_ns, rnti, encode_c16_payload(i, q))


def make_time_record(timestamp_ns: int, rnti: int, i: np.ndarray, q: np.ndarray) -> TraceRecord:
    return TraceRecord(EventId.TIME_CHAN_EST, timestamp_ns, rnti, encode_c16_payload(i, q))


def make_snr_record(timestamp_ns: int, rnti: int, snr_tenth_db: np.ndarray) -> TraceRecord:
    payload = np.asarray(snr_tenth_db, dtype="<i2").tobytes()
    return TraceRecord(EventId.SNR_EST, timestamp_ns, rnti, payload)


def make_toa_record(timestamp_ns: int, rnti: int, toa_ns: int) -> TraceRecord:
    payload = np.array([toa_ns], dtype="<i8").tobytes()
    return TraceRecord(EventId.TOA_NS, timestamp_ns, rnti, payload)


# -- probe assembly ------------------------------------------------------------


@dataclass
class AssemblyStats:
    emitted: int = 0
    dropped_groups: int = 0
    consumed_records: int = 0


def _probe_from_group(key: tuple[int, int], group: dict[EventId, TraceRecord],
                      device_label: str) -> SrsProbe:
    timestamp_ns, rnti = key
    freq = decode_c16_payload(group[EventId.FREQ_CHAN_EST].payload)
    time = decode_c16_payload(group[EventId.TIME_CHAN_EST].payload)
    snr = np.frombuffer(group[EventId.SNR_EST].payload, dtype="<i2").astype(np.float64) / 10.0
    toa = float(np.frombuffer(group[EventId.TOA_NS].payload, dtype="<i8")[0])
    return SrsProbe(freq, time, snr, toa, timestamp_ns, rnti, device_label)


def assemble_probes(
    records: Iterable[TraceRecord],
    device_label: str = "unknown",
    stats: AssemblyStats | None = None,
) -> Iterator[SrsProbe]:
    """Group records sharing (timestamp_ns, rnti) into SrsProbes.

    Input must be ordered by timestamp_ns. Groups with all four event types
    yield one probe; incomplete groups are dropped and counted in stats.
    Raises DuplicateEvent if a group sees the same event type twice.
    """
    if stats is None:
        stats = AssemblyStats()
    pending: dict[tuple[int, int], dict[EventId, TraceRecord]] = {}
    current_ts: int | None = None

    def flush() -> Iterator[SrsProbe]:
        # Same-timestamp groups finalize together; emit in rnti order for determinism.
        for key in sorted(pending):
            group = pending[key]
            if len(group) == len(EventId):
                stats.emitted += 1
                yield _probe_from_group(key, group, device_label)
            else:
                stats.dropped_groups += 1
        pending.clear()

    for rec in records:
        stats.consumed_records += 1
        if current_ts is not None and rec.timestamp_ns != current_ts:
            yield from flush()
        current_ts = rec.timestamp_ns
        group = pending.setdefault((rec.timestamp_ns, rec.rnti), {})
        if rec.event_id in group:
            raise DuplicateEvent(
                f"{rec.event_id.name} repeated for timestamp {rec.timestamp_ns}, rnti {rec.rnti}"
            )
        group[rec.event_id] = rec
    yield from flush()
