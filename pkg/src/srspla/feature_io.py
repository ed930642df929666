"""Feature matrix container: extracted vectors plus per-row probe metadata.

File layout (little-endian):

    magic "SRSFEAT1" (8 bytes)
    n_rows u64 | dim u32 | meta_bytes u32
    row*: timestamp_ns u64 | rnti u16 | label u8 | session_idx u16 | dim x f32

A JSON sidecar (<path>.json) carries the feature layout manifest and the
session-index table for auditability.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from srspla import features as feat
from srspla import trace_format as tf

MAGIC = b"SRSFEAT1"
HEADER = struct.Struct("<8sQII")
ROW_META = struct.Struct("<QHBH")

LABEL_CODES = {"attack": 0, "legit": 1, "unknown": 2}
LABEL_NAMES = {v: k for k, v in LABEL_CODES.items()}


class FeatureFileError(Exception):
    pass


@dataclass
class FeatureMatrix:
    """Row-per-probe feature matrix with aligned metadata arrays."""

    features: np.ndarray  # float32 (n, dim)
    timestamps: np.ndarray  # uint64 (n,)
    rntis: np.ndarray  # uint16 (n,)
    labels: np.ndarray  # uint8 (n,), see LABEL_CODES
    session_idx: np.ndarray  # uint16 (n,)
    session_ids: list[str]

    def __len__(self) -> int:
        return len(self.features)

    @property
    def legit_mask(self) -> np.ndarray:
        return self.labels == LABEL_CODES["legit"]

    @property
    def attack_mask(self) -> np.ndarray:
        return self.labels == LABEL_CODES["attack"]

    def validate(self) -> None:
        n = len(self.features)
        for name in ("timestamps", "rntis", "labels", "session_idx"):
            arr = getattr(self, name)
            if len(arr) != n:
                raise FeatureFileError(f"{name} has {len(arr)} rows, features have {n}")
        if self.features.ndim != 2 or self.features.shape[1] != feat.FEATURE_DIM:
            raise FeatureFileError(f"feature dim {self.features.shape} != {feat.FEATURE_DIM}")
        if self.session_idx.max(initial=0) >= max(len(self.session_ids), 1):
            raise FeatureFileError("session_idx exceeds session table")


def layout_manifest() -> dict:
    return {
        "feature_dim": feat.FEATURE_DIM,
        "slice_bounds": list(feat.SLICE_BOUNDS),
        "slices": {name: [s.start, s.stop] for name, s in feat.FEATURE_SLICES.items()},
        "window_probes": feat.WINDOW_PROBES,
        "label_codes": LABEL_CODES,
    }


def write_feature_matrix(path: str, fm: FeatureMatrix) -> None:
    """Write matrix + sidecar atomically; byte-identical output for equal input."""
    fm.validate()
    rows = np.ascontiguousarray(fm.features, dtype="<f4")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, len(rows), feat.FEATURE_DIM, ROW_META.size))
        for k in range(len(rows)):
            fh.write(ROW_META.pack(int(fm.timestamps[k]), int(fm.rntis[k]),
                                   int(fm.labels[k]), int(fm.session_idx[k])))
            fh.write(rows[k].tobytes())
    os.replace(tmp, path)

    sidecar = dict(layout_manifest())
    sidecar["n_rows"] = len(rows)
    sidecar["sessions"] = fm.session_ids
    tmp = path + ".json.tmp"
    with open(tmp, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path + ".json")


def read_feature_matrix(path: str) -> FeatureMatrix:
    with open(path, "rb") as fh:
        header = fh.read(HEADER.size)
        if len(header) < HEADER.size:
            raise FeatureFileError(f"{path}: truncated header")
        magic, n_rows, dim, meta_bytes = HEADER.unpack(header)
        if magic != MAGIC:
            raise FeatureFileError(f"{path}: bad magic {magic!r}")
        if dim != feat.FEATURE_DIM:
            raise FeatureFileError(f"{path}: dim {dim} != {feat.FEATURE_DIM}")
        if meta_bytes != ROW_META.size:
            raise FeatureFileError(f"{path}: row meta size {meta_bytes} != {ROW_META.size}")
        body = fh.read()
    row_bytes = ROW_META.size + 4 * dim
    if len(body) != n_rows * row_bytes:
        raise FeatureFileError(f"{path}: body is {len(body)} bytes, "
                               f"expected {n_rows * row_bytes}")
    raw = np.frombuffer(body, dtype=np.uint8).reshape(n_rows, row_bytes)
    meta = raw[:, :ROW_META.size]
    feats = raw[:, ROW_META.size:].copy().view("<f4").reshape(n_rows, dim)
    timestamps = meta[:, 0:8].copy().view("<u8").ravel()
    rntis = meta[:, 8:10].copy().view("<u2").ravel()
    labels = meta[:, 10].copy()
    session_idx = meta[:, 11:13].copy().view("<u2").ravel()

    session_ids: list[str] = []
    sidecar = path + ".json"
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            session_ids = json.load(fh).get("sessions", [])
    if not session_ids:
        session_ids = [f"session{k}" for k in range(int(session_idx.max(initial=0)) + 1)]
    fm = FeatureMatrix(feats, timestamps, rntis, labels, session_idx, session_ids)
    fm.validate()
    return fm


def extract_dataset(manifest: dict, traces_dir: str) -> FeatureMatrix:
    """Parse every session trace in the manifest and extract all feature rows.

    Probe windows never cross session boundaries; rows follow manifest order.
    """
    feats, timestamps, rntis, labels, sess_idx = [], [], [], [], []
    session_ids = []
    for idx, meta in enumerate(manifest["sessions"]):
        session_ids.append(meta["session_id"])
        period = meta.get("probe_period_ns", 80_000_000)
        label_code = LABEL_CODES[meta["label"]]
        with open(os.path.join(traces_dir, meta["path"]), "rb") as fh:
            records = tf.read_trace(fh)
            probes = tf.assemble_probes(records, meta["label"])
            for probe, vec in feat.extract_stream(probes, period):
                feats.append(vec.astype(np.float32))
                timestamps.append(probe.timestamp_ns)
                rntis.append(probe.rnti)
                labels.append(label_code)
                sess_idx.append(idx)
    if not feats:
        raise FeatureFileError("no probes found in any session")
    return FeatureMatrix(
        np.stack(feats),
        np.asarray(timestamps, dtype=np.uint64),
        np.asarray(rntis, dtype=np.uint16),
        np.asarray(labels, dtype=np.uint8),
        np.asarray(sess_idx, dtype=np.uint16),
        session_ids,
    )
