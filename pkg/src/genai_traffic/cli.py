"""Command-line front end: characterize, markov, dissect, classify, fixtures.

Exit codes: 0 success, 1 finished with warnings, 2 usage or contract error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from . import fixtures
from .classifier import (
    CheckpointError,
    EvalReport,
    PayloadCNNClassifier,
    Task,
    TrainConfig,
    build_samples,
    evaluate,
    occlusion_delta,
    stratified_split,
)
from .dissect import (
    dissect_biflow,
    protocol_mix,
    reason_counts,
    sni_share_table,
    tls_version_mix,
)
from .flows import (
    UNKNOWN_APP,
    Biflow,
    Content,
    LabelFileError,
    apply_labels,
    assemble_biflows,
    load_label_map,
    sidecar_path,
)
from .markov import MarkovModel, fit_binning, fit_model, flow_pl_values, generate, render_matrix
from .metrics import RATE_COLUMNS, SUMMARY_COLUMNS, directional_profile, group_biflows, rate_distribution, rate_series, summarize
from .pcapio import CaptureError, IpProto, read_capture, write_capture
from .reports import ReportWriter, RunManifest
from .series import Metric, aggregate, extract_flow_vector

EXIT_OK, EXIT_WARN, EXIT_USAGE = 0, 1, 2

CAPTURE_SUFFIXES = (".pcap", ".pcapng", ".cap")

DEFAULTS = {
    "out": "out",
    "seed": 0,
    "delta": 1.0,
    "jobs": 1,
    "require_labels": False,
    "client_rule": "first",
    "n": 50,
    "k": 50,
    "shared_bins": False,
    "min_sni_pct": 1.0,
    "length": 1000,
    "task": "APP",
    "seeds": [0, 1, 2, 3, 4],
    "epochs": 30,
    "batch": 64,
    "lr": 1e-3,
    "split": 0.8,
    "dropout": 0.2,
    "kind": "all",
    "n_samples": 2000,
}
# keys that only select inputs; they are not part of the recorded config
_NON_CONFIG = {"command", "action", "inputs", "model", "dataset", "checkpoints", "config"}


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


# ---------------------------------------------------------------- config


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"{path}: unknown config keys {unknown}")
    return doc


def resolve_config(args: argparse.Namespace) -> dict:
    """flags > config file > defaults."""
    cfg = dict(DEFAULTS)
    cfg.update(load_config(getattr(args, "config", None)))
    cfg.update({k: v for k, v in vars(args).items() if k in DEFAULTS})
    if cfg["delta"] <= 0:
        raise UsageError("--delta must be positive")
    if cfg["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    return cfg


# ---------------------------------------------------------------- inputs


@dataclass
class LoadedCapture:
    path: Path
    biflows: list[Biflow]
    group: tuple[str, Content]
    labeled: bool
    frames: int
    skipped: dict


def find_captures(inputs) -> list[Path]:
    found = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            found.extend(sorted(q for q in p.rglob("*") if q.suffix in CAPTURE_SUFFIXES and q.is_file()))
        elif p.is_file():
            found.append(p)
        else:
            raise UsageError(f"no such file or directory: {p}")
    if not found:
        raise UsageError("no captures found")
    return found


def _load_one(path: Path, client_rule: str, require_labels: bool) -> LoadedCapture:
    try:
        trace = read_capture(path)
    except CaptureError as exc:
        raise StageError("read_capture", str(exc)) from None
    flows = assemble_biflows(trace, client_rule=client_rule, source_path=str(path))
    labels = sidecar_path(path)
    if labels.exists():
        try:
            lm = load_label_map(labels)
        except LabelFileError as exc:
            raise StageError("apply_labels", str(exc)) from None
        return LoadedCapture(path, apply_labels(flows, lm), (lm.app, lm.content), True,
                             trace.total_frames, dict(trace.skipped))
    if require_labels:
        raise UsageError(f"missing label file {labels}")
    flows = [replace(f, app=UNKNOWN_APP, content=Content.NONE) for f in flows]
    return LoadedCapture(path, flows, (UNKNOWN_APP, Content.NONE), False, trace.total_frames, dict(trace.skipped))


def load_captures(inputs, cfg: dict, manifest: RunManifest) -> list[LoadedCapture]:
    paths = find_captures(inputs)
    with manifest.stage("read"):
        args = [(p, cfg["client_rule"], cfg["require_labels"]) for p in paths]
        if cfg["jobs"] > 1 and len(paths) > 1:
            with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
                loaded = list(pool.map(_load_one, *zip(*args)))
        else:
            loaded = [_load_one(*a) for a in args]
    for cap in loaded:
        manifest.add_input(cap.path)
        if cap.labeled:
            manifest.add_input(sidecar_path(cap.path))
        else:
            manifest.warn(f"no label file for {cap.path.name}; biflows labeled {UNKNOWN_APP}")
        manifest.counters["frames"] += cap.frames
        manifest.counters["biflows"] += len(cap.biflows)
        for reason, n in cap.skipped.items():
            manifest.counters[f"skipped.{reason}"] += n
    return loaded


def _group_name(group) -> str:
    app, content = group
    return f"{app}:{content.value}"


# ---------------------------------------------------------------- commands


def cmd_characterize(args, cfg, manifest: RunManifest, writer: ReportWriter) -> None:
    caps = load_captures(args.inputs, cfg, manifest)
    flows = [f for c in caps for f in c.biflows]
    with manifest.stage("summarize"):
        writer.csv("table1_summary.csv", (s.as_row() for s in summarize(flows)), SUMMARY_COLUMNS)

    with manifest.stage("rates"):
        rows, prof_rows, stats_rows = [], [], []
        by_group: dict = {}
        for cap in caps:
            if not cap.biflows:
                continue
            rs = rate_series(cap.biflows, cfg["delta"])
            by_group.setdefault(cap.group, []).append(rs)
            for w in rs.windows:
                rows.append({"group": _group_name(cap.group), "capture": cap.path.name, "window": w.index,
                             "up_bytes": w.up_bytes, "down_bytes": w.down_bytes,
                             "up_pkts": w.up_pkts, "down_pkts": w.down_pkts})
            manifest.counters["windows.excluded_empty"] += rs.empty_excluded
            prof = directional_profile(cap.biflows, cfg["delta"])
            for i in range(len(prof)):
                prof_rows.append({"group": _group_name(cap.group), "capture": cap.path.name, "window": i + 1,
                                  "up_bytes": int(prof.up_bytes[i]), "down_bytes": int(prof.down_bytes[i])})
        for group, series in sorted(by_group.items(), key=lambda kv: _group_name(kv[0])):
            for st in rate_distribution(series):
                stats_rows.append({"group": _group_name(group), "metric": st.metric, "n_windows": st.n_windows,
                                   "excluded_windows": sum(s.empty_excluded for s in series),
                                   "q1": st.q1, "median": st.median, "q3": st.q3, "mean": st.mean})
        writer.csv("fig2_rates.csv", rows, RATE_COLUMNS)
        writer.csv("fig2_rate_stats.csv", stats_rows,
                   ("group", "metric", "n_windows", "excluded_windows", "q1", "median", "q3", "mean"))
        writer.csv("fig7_profiles.csv", prof_rows, ("group", "capture", "window", "up_bytes", "down_bytes"))

    with manifest.stage("series"):
        series_rows = []
        for group, gflows in group_biflows(flows).items():
            vectors = [extract_flow_vector(f, cfg["n"]) for f in gflows]
            manifest.counters["iat.clamped"] += sum(v.clamped for v in vectors)
            if not any(len(v) for v in vectors):
                manifest.warn(f"group {_group_name(group)}: no payload-carrying packets")
                continue
            for metric in Metric:
                agg = aggregate(vectors, metric, cfg["n"])
                for i, (m, s) in enumerate(zip(agg.mean_at_index, agg.support_at_index)):
                    series_rows.append({"group": _group_name(group), "metric": metric.value, "index": i + 1,
                                        "mean": "" if s == 0 else float(m), "support": int(s)})
        writer.csv("fig3_series.csv", series_rows, ("group", "metric", "index", "mean", "support"))


def cmd_markov_fit(args, cfg, manifest: RunManifest, writer: ReportWriter) -> None:
    caps = load_captures(args.inputs, cfg, manifest)
    flows = [f for c in caps for f in c.biflows]
    provenance = {"inputs": dict(manifest.inputs)}
    groups = group_biflows(flows)
    shared = None
    if cfg["shared_bins"]:
        with manifest.stage("binning"):
            shared = _binning(flow_pl_values(flows), cfg)
    matrix_rows = []
    fitted = 0
    for group, gflows in groups.items():
        with manifest.stage("fit"):
            pl = flow_pl_values(gflows)
            if pl.size == 0:
                manifest.warn(f"group {_group_name(group)}: no payload-carrying packets")
                continue
            try:
                binning = shared or _binning(pl, cfg)
            except ValueError as exc:
                manifest.warn(f"group {_group_name(group)}: {exc}")
                continue
            model = fit_model(gflows, binning, cfg["seed"], {**provenance, "group": _group_name(group)})
        name = f"markov/{group[0]}_{group[1].value}.json"
        model.save(writer._register(name))
        fitted += 1
        manifest.counters["markov.dead_rows"] += int(model.dead_rows.sum())
        R = render_matrix(model)
        for i in range(R.shape[0]):
            for j in range(R.shape[1]):
                matrix_rows.append({"group": _group_name(group), "row": i, "col": j, "prob": float(R[i, j])})
    writer.csv("fig4_matrix.csv", matrix_rows, ("group", "row", "col", "prob"))
    if not fitted:
        raise StageError("fit_model", "no group could be fitted")


def _binning(pl, cfg):
    return fit_binning(pl, cfg["k"], cfg["seed"])


SYNTH_CLIENT = ("10.0.0.2", 40000)
SYNTH_SERVER = ("203.0.113.250", 443)
SYNTH_T0 = 1_700_000_000_000_000
SYNTH_STEP_US = 1000


def synthetic_packets(pl, dirs) -> list:
    """One TCP biflow: an empty client packet fixes the direction, then the generated packets."""
    if len(pl) == 0:
        return []
    pkts = [fixtures.packet(SYNTH_T0, SYNTH_CLIENT, SYNTH_SERVER, IpProto.TCP)]
    for i, (n, d) in enumerate(zip(pl, dirs), start=1):
        src, dst = (SYNTH_CLIENT, SYNTH_SERVER) if d < 0 else (SYNTH_SERVER, SYNTH_CLIENT)
        pkts.append(fixtures.packet(SYNTH_T0 + i * SYNTH_STEP_US, src, dst, IpProto.TCP, bytes(int(n))))
    return pkts


def cmd_markov_generate(args, cfg, manifest: RunManifest, writer: ReportWriter) -> None:
    manifest.add_input(args.model)
    try:
        model = MarkovModel.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load model {args.model}: {exc}") from None
    if cfg["length"] < 0:
        raise UsageError("--length must be >= 0")
    with manifest.stage("generate"):
        seq = generate(model, cfg["length"], cfg["seed"])
    manifest.counters["generate.fallbacks"] += seq.fallbacks
    write_capture(synthetic_packets(seq.pl, seq.dir), writer._register("synthetic.pcap"))
    writer.csv("generated.csv", ({"index": i + 1, "pl": int(p), "dir": int(d)} for i, (p, d) in enumerate(zip(seq.pl, seq.dir))),
               ("index", "pl", "dir"))


def cmd_dissect(args, cfg, manifest: RunManifest, writer: ReportWriter) -> None:
    caps = load_captures(args.inputs, cfg, manifest)
    flows = [f for c in caps for f in c.biflows]
    with manifest.stage("dissect"):
        dis = [dissect_biflow(f) for f in flows]
    for reason, n in reason_counts(dis).items():
        manifest.counters[f"reason.{reason}"] += n
    writer.csv("fig5_protocols.csv", protocol_mix(flows, dis), ("app", "content", "protocol", "biflows", "biflow_pct"))
    writer.csv("tls_versions.csv", tls_version_mix(flows, dis), ("app", "content", "version", "biflows", "biflow_pct"))
    writer.csv("table2_sni.csv", (r.as_row() for r in sni_share_table(flows, dis, cfg["min_sni_pct"])),
               ("app", "content", "sni", "biflows", "packets", "volume", "biflow_pct", "packet_pct", "volume_pct", "via_quic"))
    writer.csv("flows_dissect.csv", (
        {"flow_id": f.flow_id, "app": f.app, "content": f.content.value, "protocol": d.label.value,
         "reason": d.reason.value, "sni": d.tls.sni if d.tls else "",
         "tls_version": d.tls.negotiated_version.value if d.tls else "",
         "via_quic": d.tls.via_quic if d.tls else "", "error": d.error or ""}
        for f, d in zip(flows, dis)),
        ("flow_id", "app", "content", "protocol", "reason", "sni", "tls_version", "via_quic", "error"))


def _dataset_samples(args, cfg, manifest):
    caps = load_captures([args.dataset], cfg, manifest)
    flows = [f for c in caps for f in c.biflows]
    with manifest.stage("dissect"):
        dis = [dissect_biflow(f) for f in flows]
    samples = build_samples(flows, Task(cfg["task"]), dis)
    for reason, n in samples.excluded.items():
        manifest.counters[f"samples.excluded.{reason}"] += n
    manifest.counters["samples"] += len(samples)
    manifest.counters["samples.without_sni"] += sum(1 for r in samples.sni_ranges if r is None)
    if len(samples) == 0:
        raise UsageError("dataset holds no labeled payload-carrying biflows")
    return samples


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(seed=cfg["seed"], split=cfg["split"], epochs=cfg["epochs"], batch=cfg["batch"],
                       lr=cfg["lr"], dropout=cfg["dropout"])


def cmd_classify_train(args, cfg, manifest: RunManifest, writer: ReportWriter) -> None:
    samples = _dataset_samples(args, cfg, manifest)
    manifest.seeds = list(cfg["seeds"])
    base = _train_config(cfg)
    X, y = samples.X, samples.y
    curves = {}
    for seed in cfg["seeds"]:
        try:
            tr, _ = stratified_split(y, base.split, seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        with manifest.stage(f"train.seed{seed}"):
            model = TrainConfig(**{**base.__dict__, "seed": seed}).estimator().fit(X[tr], y[tr])
        model.save(writer._register(f"checkpoints/{samples.task.value}_seed{seed}.npz"),
                   extra={"task": samples.task.value, "split": base.split, "split_seed": seed,
                          "run_id": manifest.run_id})
        curves[str(seed)] = model.loss_curve_
    writer.json(f"train_{samples.task.value}.json", {"task": samples.task.value, "classes": samples.classes,
                                                     "loss_curves": curves})


def _load_checkpoints(args, cfg, samples, writer: ReportWriter, manifest: RunManifest):
    paths = [Path(p) for p in (args.checkpoints or [])]
    if not paths:
        paths = sorted((writer.out_dir / "checkpoints").glob(f"{samples.task.value}_seed*.npz"))
    if not paths:
        raise UsageError("no checkpoints found; run 'classify train' first or pass --checkpoints")
    models = []
    for p in paths:
        try:
            model = PayloadCNNClassifier.load(p)
        except CheckpointError as exc:
            raise UsageError(str(exc)) from None
        manifest.add_input(p)
        ck_classes = [str(c) for c in model.classes_]
        if ck_classes != samples.classes:
            raise UsageError(f"{p}: checkpoint has {len(ck_classes)} classes {ck_classes}, "
                             f"dataset has {len(samples.classes)} {samples.classes}")
        extra = model.checkpoint_meta_.get("extra", {})
        if extra.get("task", samples.task.value) != samples.task.value:
            raise UsageError(f"{p}: checkpoint was trained for task {extra.get('task')}")
        models.append((int(extra.get("split_seed", model.random_state)), float(extra.get("split", cfg["split"])), model))
    manifest.seeds = [s for s, _, _ in models]
    if len(set(manifest.seeds)) != len(models):
        raise UsageError("several checkpoints share one split seed")
    return models


def _evaluate_all(samples, models, occlude: bool, manifest: RunManifest) -> EvalReport:
    report = EvalReport(samples.task, occlude, samples.classes)
    X, y, ranges = samples.X, samples.y, samples.sni_ranges
    for seed, split, model in models:
        _, te = stratified_split(y, split, seed)
        with manifest.stage(f"eval.seed{seed}.{'masked' if occlude else 'plain'}"):
            run = evaluate(model, X[te], y[te], [ranges[i] for i in te], occlude, seed, samples.classes)
        report.runs.append(run)
        if occlude:
            manifest.counters["occlusion.masked"] += run.n_masked
            manifest.counters["occlusion.unmasked_no_sni"] += run.n_test - run.n_masked
    return report


def cmd_classify_eval(args, cfg, manifest: RunManifest, writer: ReportWriter) -> None:
    samples = _dataset_samples(args, cfg, manifest)
    models = _load_checkpoints(args, cfg, samples, writer, manifest)
    report = _evaluate_all(samples, models, False, manifest)
    writer.json(f"eval_{samples.task.value}.json", report.to_dict())
    writer.text(f"eval_{samples.task.value}.txt", report.table())


def cmd_classify_occlude(args, cfg, manifest: RunManifest, writer: ReportWriter) -> None:
    samples = _dataset_samples(args, cfg, manifest)
    models = _load_checkpoints(args, cfg, samples, writer, manifest)
    plain = _evaluate_all(samples, models, False, manifest)
    masked = _evaluate_all(samples, models, True, manifest)
    delta = occlusion_delta(plain, masked)
    t = samples.task.value
    writer.json(f"occlusion_{t}.json", {"unmasked": plain.to_dict(), "masked": masked.to_dict(),
                                        "delta": delta.to_dict()})
    lines = [plain.table(), "", masked.table(), "",
             f"macro F1 delta (masked - unmasked) = {100 * delta.macro_f1_delta:+.2f} pp"]
    lines += [f"  recall delta {c:<22}{100 * d:+.2f} pp" for c, d in zip(delta.classes, delta.recall_delta)]
    writer.text(f"occlusion_{t}.txt", "\n".join(lines))


def cmd_fixtures_make(args, cfg, manifest: RunManifest, writer: ReportWriter) -> None:
    out = writer.out_dir
    if cfg["kind"] in ("protocol", "all"):
        for path in fixtures.write_protocol_fixtures(out / "protocol", cfg["seed"]).values():
            manifest.outputs.append(str(path.relative_to(out)))
            manifest.outputs.append(str(sidecar_path(path).relative_to(out)))
    if cfg["kind"] in ("classification", "all"):
        for path in fixtures.write_classification_dataset(out / "classification", cfg["n_samples"], cfg["seed"]):
            manifest.outputs.append(str(path.relative_to(out)))
            manifest.outputs.append(str(sidecar_path(path).relative_to(out)))


# ---------------------------------------------------------------- parser


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("global options")
    g.add_argument("--out", help="output directory (default: out)")
    g.add_argument("--config", help="JSON config file; flags override it")
    g.add_argument("--seed", type=int, help="random seed (default: 0)")
    g.add_argument("--delta", type=float, help="window length in seconds (default: 1)")
    g.add_argument("--jobs", type=int, help="captures read in parallel (default: 1)")
    g.add_argument("--require-labels", action="store_true", help="fail when a capture has no label sidecar")
    g.add_argument("--client-rule", choices=("first", "private"), help="how the client endpoint is chosen")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="genai-traffic", parents=[common],
                                     description="Traffic characterization, modeling, dissection and classification.")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("characterize", parents=[common], help="trace summaries, windowed rates, flow series")
    p.add_argument("inputs", nargs="+", help="capture files or directories")
    p.add_argument("--n", type=int, default=S, help="packets per flow series (default: 50)")
    p.set_defaults(func=cmd_characterize)

    mk = sub.add_parser("markov", help="Markov chain fitting and generation")
    msub = mk.add_subparsers(dest="action", required=True)
    p = msub.add_parser("fit", parents=[common], help="fit one chain per (app, content) group")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--k", type=int, default=S, help="payload-length bins (default: 50)")
    p.add_argument("--shared-bins", action="store_true", default=S, help="one binning across all groups")
    p.set_defaults(func=cmd_markov_fit)
    p = msub.add_parser("generate", parents=[common], help="sample a synthetic biflow from a model")
    p.add_argument("model")
    p.add_argument("--length", type=int, default=S, help="packets to generate (default: 1000)")
    p.set_defaults(func=cmd_markov_generate)

    p = sub.add_parser("dissect", parents=[common], help="protocol mix, TLS versions, SNI shares")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--min-sni-pct", type=float, default=S, help="hide SNIs at or below this biflow share")
    p.set_defaults(func=cmd_dissect)

    cl = sub.add_parser("classify", help="payload CNN training and evaluation")
    csub = cl.add_subparsers(dest="action", required=True)
    for name, func in (("train", cmd_classify_train), ("eval", cmd_classify_eval), ("occlude", cmd_classify_occlude)):
        p = csub.add_parser(name, parents=[common])
        p.add_argument("dataset", help="directory of labeled captures")
        p.add_argument("--task", choices=[t.value for t in Task], default=S)
        p.add_argument("--seeds", type=int, nargs="+", default=S, help="split/training seeds (default: 0..4)")
        p.add_argument("--split", type=float, default=S, help="train fraction (default: 0.8)")
        if name == "train":
            p.add_argument("--epochs", type=int, default=S)
            p.add_argument("--batch", type=int, default=S)
            p.add_argument("--lr", type=float, default=S)
            p.add_argument("--dropout", type=float, default=S)
        else:
            p.add_argument("--checkpoints", nargs="+", help="checkpoint files (default: OUT/checkpoints)")
        p.set_defaults(func=func)

    fx = sub.add_parser("fixtures", help="synthetic captures")
    fsub = fx.add_subparsers(dest="action", required=True)
    p = fsub.add_parser("make", parents=[common])
    p.add_argument("--kind", choices=("protocol", "classification", "all"), default=S)
    p.add_argument("--n-samples", type=int, default=S, help="biflows in the classification set (default: 2000)")
    p.set_defaults(func=cmd_fixtures_make)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    command = " ".join(x for x in (args.command, getattr(args, "action", None)) if x)
    manifest = RunManifest(command, {k: v for k, v in sorted(cfg.items()) if k not in _NON_CONFIG and k != "out"},
                           seeds=[cfg["seed"]])
    writer = ReportWriter(cfg["out"], manifest)
    try:
        args.func(args, cfg, manifest, writer)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        writer.finish()
    for w in manifest.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_WARN if manifest.warnings else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
