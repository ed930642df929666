"""Split construction, authentication metrics, the split-comparison experiment,
and per-stage latency benchmarking."""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from srspla import features as feat
from srspla import trace_format as tf
from srspla.authenticators.network import SeResNet1d, SeResNet1dConfig
from srspla.authenticators.pearson import enroll as pearson_enroll
from srspla.authenticators.training import TrainConfig, train, score_batch
from srspla.feature_io import FeatureMatrix, LABEL_CODES

HIST_BINS = 50


class SessionTooSmall(Exception):
    pass


class EmptyClass(Exception):
    pass


@dataclass
class SplitSpec:
    method: str  # "chronological" | "random"
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0

    def validate(self) -> None:
        if self.method not in ("chronological", "random"):
            raise ValueError(f"unknown split method {self.method!r}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions {self.fractions} do not sum to 1")


@dataclass
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def all_disjoint_exhaustive(self, n: int) -> bool:
        combined = np.concatenate([self.train, self.val, self.test])
        return len(combined) == n and len(np.unique(combined)) == n


def make_splits(fm: FeatureMatrix, spec: SplitSpec) -> SplitIndices:
    """70/15/15 split applied independently within each session.

    Chronological keeps temporal order (train = earliest). Random permutes
    each session's rows with the spec seed but keeps the same per-session
    counts, so both methods produce identical class totals per split.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    train_idx, val_idx, test_idx = [], [], []
    for sess in range(len(fm.session_ids)):
        rows = np.flatnonzero(fm.session_idx == sess)
        if len(rows) == 0:
            continue
        n = len(rows)
        if n < 7:
            raise SessionTooSmall(
                f"session {fm.session_ids[sess]} has {n} probes, needs >= 7")
        order = np.argsort(fm.timestamps[rows], kind="stable")
        rows = rows[order]
        if spec.method == "random":
            rows = rows[rng.permutation(n)]
        n_train = math.floor(spec.fractions[0] * n)
        n_val = math.floor(spec.fractions[1] * n)
        train_idx.append(rows[:n_train])
        val_idx.append(rows[n_train:n_train + n_val])
        test_idx.append(rows[n_train + n_val:])
    return SplitIndices(np.concatenate(train_idx), np.concatenate(val_idx),
                        np.concatenate(test_idx))


def check_chronological_purity(fm: FeatureMatrix, splits: SplitIndices) -> None:
    """Assert no training timestamp reaches any val/test timestamp per session."""
    for sess in range(len(fm.session_ids)):
        mask = fm.session_idx == sess
        tr = np.intersect1d(splits.train, np.flatnonzero(mask))
        va = np.intersect1d(splits.val, np.flatnonzero(mask))
        te = np.intersect1d(splits.test, np.flatnonzero(mask))
        if len(tr) and (len(va) or len(te)):
            later = np.concatenate([fm.timestamps[va], fm.timestamps[te]])
            if fm.timestamps[tr].max() >= later.min():
                raise AssertionError(
                    f"session {fm.session_ids[sess]}: train overlaps val/test in time")
        if len(va) and len(te):
            if fm.timestamps[va].max() >= fm.timestamps[te].min():
                raise AssertionError(
                    f"session {fm.session_ids[sess]}: val overlaps test in time")


# -- threshold metrics -----------------------------------------------------------


def far_frr_sweep(scores_legit: np.ndarray,
                  scores_attack: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """FAR/FRR over the union of observed scores plus one point past the max.

    FAR(t) = fraction of attack scores >= t (accept-at-threshold convention);
    FRR(t) = fraction of legit scores < t. FAR is non-increasing and FRR
    non-decreasing in t, so their difference crosses zero exactly once.
    """
    if len(scores_legit) == 0 or len(scores_attack) == 0:
        raise EmptyClass("both legit and attack scores are required")
    legit = np.sort(np.asarray(scores_legit, dtype=np.float64))
    attack = np.sort(np.asarray(scores_attack, dtype=np.float64))
    grid = np.unique(np.concatenate([legit, attack]))
    grid = np.append(grid, np.nextafter(grid[-1], np.inf))
    far = 1.0 - np.searchsorted(attack, grid, side="left") / len(attack)
    frr = np.searchsorted(legit, grid, side="left") / len(legit)
    return grid, far, frr


def compute_eer(scores_legit: np.ndarray,
                scores_attack: np.ndarray) -> tuple[float, float]:
    """Equal error rate and its threshold, linearly interpolated at the crossing."""
    grid, far, frr = far_frr_sweep(scores_legit, scores_attack)
    d = far - frr
    k = int(np.argmax(d <= 0.0))  # first non-positive difference
    if d[k] == 0.0:
        return float(far[k]), float(grid[k])
    span = d[k - 1] - d[k]
    theta = d[k - 1] / span
    eer = far[k - 1] + theta * (far[k] - far[k - 1])
    thr = grid[k - 1] + theta * (grid[k] - grid[k - 1])
    return float(eer), float(thr)


def compute_auc(scores_legit: np.ndarray, scores_attack: np.ndarray) -> float:
    """Mann-Whitney AUC: P(legit > attack) + 0.5 * P(equal), via average ranks."""
    if len(scores_legit) == 0 or len(scores_attack) == 0:
        raise EmptyClass("both legit and attack scores are required")
    legit = np.asarray(scores_legit, dtype=np.float64)
    attack = np.asarray(scores_attack, dtype=np.float64)
    pooled = np.concatenate([legit, attack])
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled))
    sorted_vals = pooled[order]
    # average ranks over tie runs
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    starts = np.concatenate([[0], boundaries])
    stops = np.concatenate([boundaries, [len(pooled)]])
    for lo, hi in zip(starts, stops):
        ranks[order[lo:hi]] = 0.5 * (lo + hi - 1) + 1.0
    n_l, n_a = len(legit), len(attack)
    r_legit = ranks[:n_l].sum()
    return float((r_legit - n_l * (n_l + 1) / 2.0) / (n_l * n_a))


def accuracy_at(scores_legit: np.ndarray, scores_attack: np.ndarray,
                threshold: float = 0.5) -> float:
    correct = (scores_legit >= threshold).sum() + (scores_attack < threshold).sum()
    return float(correct / (len(scores_legit) + len(scores_attack)))


@dataclass
class EvalReport:
    split_sizes: dict
    eer: float
    eer_threshold: float
    auc: float
    accuracy_at_half: float
    sweep: dict = field(default_factory=dict)  # threshold/far/frr arrays
    det_points: list = field(default_factory=list)  # (FAR %, FRR %) pairs
    histograms: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "split_sizes": self.split_sizes,
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "auc": self.auc,
            "accuracy_at_half": self.accuracy_at_half,
            "sweep": self.sweep,
            "det_points": self.det_points,
            "histograms": self.histograms,
            "extra": self.extra,
        }


def score_histogram(scores: np.ndarray) -> dict:
    counts, edges = np.histogram(scores, bins=HIST_BINS, range=(0.0, 1.0))
    density = counts / max(len(scores), 1) * HIST_BINS  # per-unit-score density
    return {"bin_edges": [float(e) for e in edges],
            "density": [float(d) for d in density]}


def split_class_sizes(fm: FeatureMatrix, splits: SplitIndices) -> dict:
    out = {}
    for name, idx in (("train", splits.train), ("val", splits.val), ("test", splits.test)):
        labels = fm.labels[idx]
        out[name] = {"legit": int((labels == LABEL_CODES["legit"]).sum()),
                     "attack": int((labels == LABEL_CODES["attack"]).sum())}
    return out


def evaluate_scores(scores_legit: np.ndarray, scores_attack: np.ndarray,
                    split_sizes: dict, extra: dict | None = None) -> EvalReport:
    grid, far, frr = far_frr_sweep(scores_legit, scores_attack)
    eer, thr = compute_eer(scores_legit, scores_attack)
    return EvalReport(
        split_sizes=split_sizes,
        eer=eer,
        eer_threshold=thr,
        auc=compute_auc(scores_legit, scores_attack),
        accuracy_at_half=accuracy_at(scores_legit, scores_attack),
        sweep={"threshold": grid.tolist(), "far": far.tolist(), "frr": frr.tolist()},
        det_points=[[float(100 * f), float(100 * r)] for f, r in zip(far, frr)],
        histograms={"legit": score_histogram(scores_legit),
                    "attack": score_histogram(scores_attack)},
        extra=extra or {},
    )


# -- experiment driver -----------------------------------------------------------


def fit_and_score(fm: FeatureMatrix, splits: SplitIndices, model_kind: str,
                  train_config: TrainConfig | None = None,
                  model_config: SeResNet1dConfig | None = None,
                  verbose: bool = False):
    """Fit on train, select on val, return (test_scores_legit, test_scores_attack, info)."""
    x = fm.features
    y = (fm.labels == LABEL_CODES["legit"]).astype(np.int64)
    info: dict = {"model_kind": model_kind}
    if model_kind == "resnet":
        model = train(x[splits.train], y[splits.train], x[splits.val], y[splits.val],
                      train_config, model_config, verbose=verbose)
        scores = score_batch(model, x[splits.test])
        info["best_epoch"] = model.best_epoch
        info["best_val_accuracy"] = model.best_val_accuracy
        info["model"] = model
    elif model_kind == "pearson":
        amp = feat.FEATURE_SLICES["amplitude"]
        train_legit = splits.train[y[splits.train] == 1]
        auth = pearson_enroll(x[train_legit, amp].astype(np.float64))
        scores = score_batch(auth, x[splits.test])
        info["n_enroll"] = auth.n_enroll
        info["model"] = auth
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    test_labels = y[splits.test]
    return scores[test_labels == 1], scores[test_labels == 0], info


def run_experiment(fm: FeatureMatrix, model_kind: str,
                   split_seed: int = 0,
                   train_config: TrainConfig | None = None,
                   model_config: SeResNet1dConfig | None = None,
                   verbose: bool = False) -> dict:
    """Paired chronological/random evaluation with identical configs and seeds.

    Returns {"chronological": EvalReport, "random": EvalReport,
    "delta_eer": EER_chrono - EER_random, "models": {method: fitted scorer}}.
    """
    reports = {}
    models = {}
    for method in ("chronological", "random"):
        splits = make_splits(fm, SplitSpec(method, seed=split_seed))
        if method == "chronological":
            check_chronological_purity(fm, splits)
        s_legit, s_attack, info = fit_and_score(
            fm, splits, model_kind, train_config, model_config, verbose=verbose)
        if len(s_legit) == 0 or len(s_attack) == 0:
            raise EmptyClass(f"{method} test split is missing a class")
        models[method] = info.pop("model")
        reports[method] = evaluate_scores(
            s_legit, s_attack, split_class_sizes(fm, splits), extra=info)
    return {
        "chronological": reports["chronological"],
        "random": reports["random"],
        "delta_eer": reports["chronological"].eer - reports["random"].eer,
        "models": models,
    }


# -- latency ---------------------------------------------------------------------


BENCH_STAGES = ("parse", "extract", "dl_inference", "pearson")


def bench_latency(probes: list[tf.SrsProbe], model, auth, n_probes: int = 1000,
                  warmup: int = 100, probe_period_ns: int = 80_000_000) -> dict:
    """Per-stage mean/max wall time over the probe stream, warm-up excluded.

    Stages mirror the deployment pipeline: binary parse, feature extraction,
    classifier inference, Pearson threshold check.
    """
    if len(probes) < warmup + 1:
        raise ValueError(f"need more than {warmup} probes for a warmed-up benchmark")
    blobs = []
    for p in probes:
        # serialize each probe as a standalone mini-trace for isolated parse timing
        fi = np.clip(np.round(p.freq_est.real * 32768), -32768, 32767).astype(np.int16)
        fq = np.clip(np.round(p.freq_est.imag * 32768), -32768, 32767).astype(np.int16)
        ti = np.clip(np.round(p.time_est.real * 32768), -32768, 32767).astype(np.int16)
        tq = np.clip(np.round(p.time_est.imag * 32768), -32768, 32767).astype(np.int16)
        records = [
            tf.make_freq_record(p.timestamp_ns, p.rnti, fi, fq),
            tf.make_time_record(p.timestamp_ns, p.rnti, ti, tq),
            tf.make_snr_record(p.timestamp_ns, p.rnti,
                               np.clip(np.round(p.snr_per_rb * 10), -32768, 32767
                                       ).astype(np.int16)),
            tf.make_toa_record(p.timestamp_ns, p.rnti, int(p.toa_ns)),
        ]
        blobs.append(tf.write_trace(records))

    times: dict[str, list[float]] = {s: [] for s in BENCH_STAGES}
    history: list[tf.SrsProbe] = []
    amp_slice = feat.FEATURE_SLICES["amplitude"]
    count = 0
    for k, (p, blob) in enumerate(zip(probes, blobs)):
        if count >= n_probes:
            break
        t0 = time.perf_counter_ns()
        parsed = list(tf.assemble_probes(tf.read_trace(io.BytesIO(blob))))
        t1 = time.perf_counter_ns()

        window = feat.ProbeWindow(parsed[0], history[-(feat.WINDOW_PROBES - 1):],
                                  probe_period_ns)
        t2 = time.perf_counter_ns()
        vec = feat.extract(window)
        t3 = time.perf_counter_ns()

        row = vec[None, :]
        t4 = time.perf_counter_ns()
        model.score(row) if hasattr(model, "score") else model.predict_proba(row)
        t5 = time.perf_counter_ns()

        amps = vec[amp_slice]
        t6 = time.perf_counter_ns()
        auth.score(amps)
        t7 = time.perf_counter_ns()

        history.append(parsed[0])
        if k >= warmup:
            times["parse"].append((t1 - t0) / 1e3)
            times["extract"].append((t3 - t2) / 1e3)
            times["dl_inference"].append((t5 - t4) / 1e3)
            times["pearson"].append((t7 - t6) / 1e3)
            count += 1

    table = {}
    for stage in BENCH_STAGES:
        arr = np.array(times[stage])
        table[stage] = {"mean_us": float(arr.mean()), "max_us": float(arr.max()),
                        "std_us": float(arr.std())}
    table["total"] = {"mean_us": float(sum(table[s]["mean_us"] for s in BENCH_STAGES))}
    table["n_probes"] = count
    return table
