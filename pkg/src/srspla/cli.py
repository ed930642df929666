"""Command-line pipeline: gen -> extract -> train -> eval -> report.

Subcommands operate on a JSON pipeline config (see default_pipeline_config)
plus a handful of overriding flags. Every command is deterministic for fixed
inputs and seed, and writes files atomically.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from srspla import evaluation as ev
from srspla import feature_io as fio
from srspla import features as feat
from srspla import srs_synth as synth
from srspla import trace_format as tf
from srspla.authenticators import model_io
from srspla.authenticators.network import SeResNet1dConfig, NonFiniteActivation
from srspla.authenticators.pearson import enroll as pearson_enroll, DegenerateReference
from srspla.authenticators.training import (
    TrainConfig, TrainedModel, Diverged, EmptySplit, DimensionMismatch, train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

SPLIT_NAMES = {"chrono": "chronological", "random": "random"}


def default_pipeline_config(seed: int = 0) -> dict:
    gen = synth.default_dataset_config(seed)
    return {
        "seed": seed,
        "paths": {
            "traces_dir": "traces",
            "features_file": "features.srsfeat",
            "model_file": "model.srsmdl",
            "report_dir": "reports",
        },
        "generator": {
            "sessions": [
                {
                    "session_id": s.session_id,
                    "label": s.label,
                    "n_probes": s.n_probes,
                    "rnti": s.rnti,
                    "seed": s.seed,
                    "probe_period_ns": s.probe_period_ns,
                    "start_timestamp_ns": s.start_timestamp_ns,
                    "device": s.device.to_dict(),
                }
                for s in gen.sessions
            ],
        },
        "split": {"seed": seed},
        "train": TrainConfig(seed=seed).to_dict(),
        "model": {"kind": "resnet", "config": SeResNet1dConfig().to_dict()},
    }


class PipelineConfig:
    """Validated pipeline configuration; all sections parsed before any work."""

    def __init__(self, raw: dict, seed_override: int | None = None):
        try:
            self.seed = int(raw.get("seed", 0))
            if seed_override is not None:
                self.seed = seed_override
                raw = _reseed(raw, seed_override)
            paths = raw.get("paths", {})
            self.traces_dir = paths.get("traces_dir", "traces")
            self.features_file = paths.get("features_file", "features.srsfeat")
            self.model_file = paths.get("model_file", "model.srsmdl")
            self.report_dir = paths.get("report_dir", "reports")
            self.dataset = _parse_generator(raw.get("generator", {}))
            self.split_seed = int(raw.get("split", {}).get("seed", self.seed))
            self.train_config = TrainConfig.from_dict(
                raw.get("train", TrainConfig(seed=self.seed).to_dict()))
            model = raw.get("model", {})
            self.model_kind = model.get("kind", "resnet")
            self.model_config = SeResNet1dConfig.from_dict(
                model.get("config", SeResNet1dConfig().to_dict()))
            if self.model_kind not in ("resnet", "pearson"):
                raise synth.ConfigError(f"model.kind must be resnet|pearson, "
                                        f"got {self.model_kind!r}")
            self.train_config.validate()
            self.model_config.validate()
            self.dataset.validate()
        except (TypeError, ValueError, KeyError) as exc:
            raise synth.ConfigError(f"invalid pipeline config: {exc}") from exc


def _reseed(raw: dict, seed: int) -> dict:
    """Propagate a --seed override into every stochastic component."""
    raw = json.loads(json.dumps(raw))  # deep copy
    raw["seed"] = seed
    for idx, sess in enumerate(raw.get("generator", {}).get("sessions", [])):
        sess["seed"] = seed * 1000 + idx
    raw.setdefault("split", {})["seed"] = seed
    raw.setdefault("train", TrainConfig().to_dict())["seed"] = seed
    return raw


def _parse_generator(gen: dict) -> synth.DatasetConfig:
    if not gen or not gen.get("sessions"):
        return synth.default_dataset_config()
    devices = {name: synth.DeviceProfile.from_dict(d)
               for name, d in gen.get("devices", {}).items()}
    sessions = []
    for s in gen["sessions"]:
        s = dict(s)
        if "device_ref" in s:
            ref = s.pop("device_ref")
            if ref not in devices:
                raise synth.ConfigError(f"session {s.get('session_id')}: "
                                        f"unknown device_ref {ref!r}")
            device = devices[ref]
        else:
            try:
                device = synth.DeviceProfile.from_dict(s.pop("device"))
            except TypeError as exc:
                raise synth.ConfigError(
                    f"session {s.get('session_id')}: bad device profile: {exc}") from exc
        try:
            sessions.append(synth.SessionSpec(device=device, **s))
        except TypeError as exc:
            raise synth.ConfigError(f"bad session entry: {exc}") from exc
    return synth.DatasetConfig(sessions=sessions)


def load_config(path: str | None, seed_override: int | None = None) -> PipelineConfig:
    if path is None:
        raw = default_pipeline_config(seed_override if seed_override is not None else 0)
        return PipelineConfig(raw, seed_override)
    if not os.path.exists(path):
        raise synth.ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise synth.ConfigError(f"config is not valid JSON: {exc}") from exc
    return PipelineConfig(raw, seed_override)


def _write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _write_csv(path: str, header: list[str], rows) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def _report_files(report: ev.EvalReport, out_dir: str, tag: str) -> None:
    _write_json(os.path.join(out_dir, f"report_{tag}.json"), report.to_dict())
    _write_csv(os.path.join(out_dir, f"det_{tag}.csv"),
               ["far_pct", "frr_pct"], report.det_points)
    hl, ha = report.histograms["legit"], report.histograms["attack"]
    edges = hl["bin_edges"]
    rows = [[edges[i], edges[i + 1], hl["density"][i], ha["density"][i]]
            for i in range(len(hl["density"]))]
    _write_csv(os.path.join(out_dir, f"hist_{tag}.csv"),
               ["bin_lo", "bin_hi", "legit_density", "attack_density"], rows)


# -- subcommands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = load_config(args.config, args.seed)
    out_dir = args.out or cfg.traces_dir
    manifest = synth.gen_dataset(cfg.dataset, out_dir)
    counts = manifest["counts"]
    print(f"wrote {len(manifest['sessions'])} sessions to {out_dir} "
          f"(legit {counts['legit']}, attack {counts['attack']}, "
          f"ratio {manifest['legit_to_attack_ratio']:.1f}:1)")
    return EXIT_OK


def cmd_extract(args) -> int:
    manifest_path = os.path.join(args.traces, "manifest.json")
    if not os.path.exists(manifest_path):
        raise fio.FeatureFileError(f"manifest not found: {manifest_path}")
    manifest = synth.load_manifest(manifest_path)
    fm = fio.extract_dataset(manifest, args.traces)
    fio.write_feature_matrix(args.out, fm)
    print(f"extracted {len(fm)} rows x {feat.FEATURE_DIM} features -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    fm = fio.read_feature_matrix(args.features)
    method = SPLIT_NAMES[args.split]
    splits = ev.make_splits(fm, ev.SplitSpec(method, seed=cfg.split_seed))
    y = (fm.labels == fio.LABEL_CODES["legit"]).astype(np.int64)
    model = train(fm.features[splits.train], y[splits.train],
                  fm.features[splits.val], y[splits.val],
                  cfg.train_config, cfg.model_config, verbose=args.verbose)
    out = args.out or cfg.model_file
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    model_io.save_model(out, model)
    _write_csv(os.path.splitext(out)[0] + "_history.csv",
               ["epoch", "lr", "train_loss", "val_accuracy"],
               [[h["epoch"], h["lr"], h["train_loss"], h["val_accuracy"]]
                for h in model.history])
    print(f"trained {cfg.model_kind} ({model.network().n_params():,} params), "
          f"best epoch {model.best_epoch} "
          f"(val acc {model.best_val_accuracy:.4f}) -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.seed)
    fm = fio.read_feature_matrix(args.features)
    out_dir = args.out or cfg.report_dir
    kind = args.model or cfg.model_kind
    if args.compare_splits or args.split == "both":
        result = ev.run_experiment(fm, kind, split_seed=cfg.split_seed,
                                   train_config=cfg.train_config,
                                   model_config=cfg.model_config,
                                   verbose=args.verbose)
        for method in ("chronological", "random"):
            _report_files(result[method], out_dir, f"{kind}_{method}")
        comparison = {
            "model_kind": kind,
            "eer_chronological": result["chronological"].eer,
            "eer_random": result["random"].eer,
            "delta_eer": result["delta_eer"],
            "auc_chronological": result["chronological"].auc,
            "auc_random": result["random"].auc,
        }
        _write_json(os.path.join(out_dir, f"comparison_{kind}.json"), comparison)
        print(f"{kind}: EER chrono {result['chronological'].eer:.4f}, "
              f"random {result['random'].eer:.4f}, "
              f"delta {result['delta_eer']:+.4f} -> {out_dir}")
    else:
        method = SPLIT_NAMES[args.split]
        splits = ev.make_splits(fm, ev.SplitSpec(method, seed=cfg.split_seed))
        if method == "chronological":
            ev.check_chronological_purity(fm, splits)
        s_legit, s_attack, info = ev.fit_and_score(
            fm, splits, kind, cfg.train_config, cfg.model_config, verbose=args.verbose)
        info.pop("model")
        report = ev.evaluate_scores(s_legit, s_attack,
                                    ev.split_class_sizes(fm, splits), extra=info)
        _report_files(report, out_dir, f"{kind}_{method}")
        print(f"{kind} {method}: EER {report.eer:.4f} "
              f"(threshold {report.eer_threshold:.4f}), AUC {report.auc:.4f} "
              f"-> {out_dir}")
    return EXIT_OK


def _bench_model(cfg: PipelineConfig, model_path: str | None) -> TrainedModel:
    if model_path and os.path.exists(model_path):
        return model_io.load_model(model_path)
    # latency depends on shapes only; a fresh init has identical cost
    net_cfg = cfg.model_config
    from srspla.authenticators.network import SeResNet1d
    net = SeResNet1d(net_cfg, seed=0)
    return TrainedModel(
        model_config=net_cfg, train_config=cfg.train_config,
        state={k: v.copy() for k, v in net.state_tensors().items()},
        feat_mean=np.zeros(net_cfg.input_dim, np.float32),
        feat_std=np.ones(net_cfg.input_dim, np.float32),
    )


def cmd_bench(args) -> int:
    cfg = load_config(args.config, args.seed)
    n = args.n_probes
    warmup = min(100, max(5, n // 10))
    spec = synth.SessionSpec(device=synth.LEGIT_PROFILE, n_probes=n + warmup + 1,
                             rnti=1, label="legit", seed=cfg.seed,
                             session_id="bench")
    probes = list(synth.gen_session(spec))
    model = _bench_model(cfg, args.model_file)
    amps = np.stack([feat.amplitude_features(p) for p in probes[:32]])
    auth = pearson_enroll(amps)
    table = ev.bench_latency(probes, model, auth, n_probes=n, warmup=warmup)
    out = args.out or os.path.join(cfg.report_dir, "latency.json")
    _write_json(out, table)
    print(f"{'stage':14s} {'mean (us)':>12s} {'max (us)':>12s}")
    for stage in ev.BENCH_STAGES:
        row = table[stage]
        print(f"{stage:14s} {row['mean_us']:12.1f} {row['max_us']:12.1f}")
    print(f"{'total':14s} {table['total']['mean_us']:12.1f}")
    print(f"({table['n_probes']} probes, {warmup} warm-up excluded) -> {out}")
    return EXIT_OK


def cmd_run_all(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = args.out or "."
    traces_dir = os.path.join(out, cfg.traces_dir)
    features_file = os.path.join(out, cfg.features_file)
    model_file = os.path.join(out, cfg.model_file)
    report_dir = os.path.join(out, cfg.report_dir)

    manifest = synth.gen_dataset(cfg.dataset, traces_dir)
    print(f"[1/4] generated {len(manifest['sessions'])} sessions "
          f"({manifest['counts']['legit']} legit / {manifest['counts']['attack']} attack)")

    fm = fio.extract_dataset(manifest, traces_dir)
    fio.write_feature_matrix(features_file, fm)
    print(f"[2/4] extracted {len(fm)} x {feat.FEATURE_DIM} feature rows")

    result = ev.run_experiment(fm, cfg.model_kind, split_seed=cfg.split_seed,
                               train_config=cfg.train_config,
                               model_config=cfg.model_config, verbose=args.verbose)
    if cfg.model_kind == "resnet":
        model = result["models"]["chronological"]
        os.makedirs(os.path.dirname(model_file) or ".", exist_ok=True)
        model_io.save_model(model_file, model)
        _write_csv(os.path.splitext(model_file)[0] + "_history.csv",
                   ["epoch", "lr", "train_loss", "val_accuracy"],
                   [[h["epoch"], h["lr"], h["train_loss"], h["val_accuracy"]]
                    for h in model.history])
    print(f"[3/4] {cfg.model_kind}: EER chrono {result['chronological'].eer:.4f}, "
          f"random {result['random'].eer:.4f}")

    baseline = ev.run_experiment(fm, "pearson", split_seed=cfg.split_seed)
    for kind, res in ((cfg.model_kind, result), ("pearson", baseline)):
        for method in ("chronological", "random"):
            _report_files(res[method], report_dir, f"{kind}_{method}")
        _write_json(os.path.join(report_dir, f"comparison_{kind}.json"), {
            "model_kind": kind,
            "eer_chronological": res["chronological"].eer,
            "eer_random": res["random"].eer,
            "delta_eer": res["delta_eer"],
            "auc_chronological": res["chronological"].auc,
            "auc_random": res["random"].auc,
        })
    print(f"[4/4] pearson baseline: EER chrono {baseline['chronological'].eer:.4f}, "
          f"random {baseline['random'].eer:.4f}; reports -> {report_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srspla",
        description="SRS physical-layer authentication pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=None,
                       help="override every stochastic seed")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("gen", help="synthesize trace files + manifest")
    add_common(p)
    p.add_argument("--out", help="output directory for .srstrace files")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("extract", help="parse traces and extract feature rows")
    add_common(p)
    p.add_argument("--traces", required=True, help="directory with manifest.json")
    p.add_argument("--out", required=True, help="output .srsfeat path")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the classifier on one split")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--split", choices=["chrono", "random"], default="chrono")
    p.add_argument("--out", help="output model path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate on held-out test probes")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--model", choices=["pearson", "resnet"], default=None)
    p.add_argument("--split", choices=["chrono", "random", "both"], default="both")
    p.add_argument("--compare-splits", action="store_true",
                   help="paired chronological/random reports plus delta EER")
    p.add_argument("--out", help="report directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-stage latency benchmark")
    add_common(p)
    p.add_argument("--n-probes", type=int, default=1000)
    p.add_argument("--model-file", help="trained model to time (default: fresh init)")
    p.add_argument("--out", help="latency JSON path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("run-all", help="full pipeline: gen, extract, train, eval")
    add_common(p)
    p.add_argument("--out", help="root output directory", default=".")
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (synth.ConfigError, synth.QuantizationOverflow) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (tf.TraceFormatError, fio.FeatureFileError, model_io.ModelFileError,
            ev.SessionTooSmall, ev.EmptyClass, EmptySplit, DimensionMismatch,
            DegenerateReference, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (Diverged, NonFiniteActivation) as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
