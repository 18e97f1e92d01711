"""Command-line pipeline: gen, train, score, plot, cluster, eval, demo.

Every stage reads and writes plain files (PGM frames, CSV manifests and
curves, binary checkpoints, SVG diagrams), so each arrow of the pipeline
is independently runnable and testable. All commands are deterministic
for fixed config seeds. Failures print one machine-parseable line
``ERROR <code>: <message>`` and exit with 2 (missing file), 3 (invalid
config), or 4 (numeric failure).
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from glitchguard import clustering, data, model, scoring, synth
from glitchguard.config import ConfigError, RunConfig
from glitchguard.numerics import NumericError

EXIT_MISSING_FILE = 2
EXIT_BAD_CONFIG = 3
EXIT_NUMERIC = 4


def _log_config(cfg: RunConfig) -> None:
    for line in cfg.canonical_text().splitlines():
        print(f"# config: {line}", file=sys.stderr)
    print(f"config-digest sha256={cfg.digest()}")


def cmd_gen(cfg: RunConfig, out_dir) -> data.CorpusManifest:
    """Generate the synthetic labeled corpus under out_dir."""
    height, width = int(cfg["frame.height"]), int(cfg["frame.width"])
    gen_seed = int(cfg["gen.seed"])
    specs = []
    for idx in range(int(cfg["gen.normal_videos"])):
        rng = np.random.default_rng([gen_seed, idx])
        specs.append(synth.random_scene(height, width,
                                        int(cfg["gen.sprites"]),
                                        bg_seed=gen_seed, sprite_rng=rng))
    manifest = synth.make_labeled_corpus(
        specs, int(cfg["gen.buggy_videos_per_category"]), out_dir,
        categories=tuple(cfg.gen_categories()),
        n_frames=int(cfg["gen.normal_frames"]),
        buggy_frames=int(cfg["gen.buggy_frames"]),
        train_fraction=float(cfg["gen.train_fraction"]),
        sprites=int(cfg["gen.sprites"]),
        seed=gen_seed)
    print(f"gen: wrote {len(manifest)} videos to {out_dir}")
    return manifest


def cmd_train(cfg: RunConfig, manifest_path, out_checkpoint) -> None:
    """Train on the manifest's bug-free training videos; write checkpoint."""
    manifest = data.load_manifest(manifest_path)
    rows = [r for r in manifest.rows
            if r.split == "train" and r.label == "normal"]
    if not rows:
        raise ValueError("manifest has no rows with split=train and "
                         "label=normal to train on")
    window, stride = int(cfg["window"]), int(cfg["stride"])
    clips = []
    for row in sorted(rows, key=lambda r: r.video_id):
        seq = data.load_frames(row.path)
        clips.extend(data.to_clips(seq, window=window, stride=stride))
    print(f"train: {len(rows)} videos, {len(clips)} clips")
    checkpoint = model.init_params(cfg.model_config())
    hyper = cfg.hyper()

    def progress(step, loss):
        if step % 100 == 0 or step == hyper.max_steps - 1:
            print(f"train: step {step} loss {loss:.6f}")

    trained, history = model.train(checkpoint, clips, hyper,
                                   seed=int(cfg["train.seed"]),
                                   progress=progress)
    out_checkpoint = Path(out_checkpoint)
    out_checkpoint.parent.mkdir(parents=True, exist_ok=True)
    model.save_checkpoint(trained, out_checkpoint)
    history_path = out_checkpoint.with_suffix(".loss.csv")
    lines = ["step,loss"] + [f"{i},{v:.9g}" for i, v in enumerate(history)]
    history_path.write_text("\n".join(lines) + "\n")
    print(f"train: wrote {out_checkpoint} and {history_path}")


def cmd_score(cfg: RunConfig, checkpoint_path, manifest_path, out_dir) -> None:
    """Write one regularity-curve CSV per test video."""
    checkpoint = model.load_checkpoint(checkpoint_path)
    manifest = data.load_manifest(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r for r in manifest.rows if r.split == "test"]
    if not rows:
        raise ValueError("manifest has no split=test rows to score")
    for row in sorted(rows, key=lambda r: r.video_id):
        seq = data.load_frames(row.path)
        curve = scoring.score_sequence(checkpoint, seq,
                                       window=int(cfg["window"]),
                                       stride=int(cfg["stride"]),
                                       batch_size=int(cfg["score.batch"]))
        scoring.write_curve_csv(curve, out_dir / f"{row.video_id}.csv")
    print(f"score: wrote {len(rows)} curves to {out_dir}")


def cmd_plot(cfg: RunConfig, curve_csv, out_svg, category: str = "") -> None:
    """Render one curve CSV as an SVG diagram with shaded anomalies."""
    curve = scoring.read_curve_csv(curve_csv)
    threshold = cfg.threshold_for(category or "default")
    segments = scoring.detect_anomalies(curve.s, threshold)
    scoring.render_plot(curve, segments, out_svg)
    print(f"plot: wrote {out_svg} ({len(segments)} anomaly segments)")


def _load_descriptors(cfg: RunConfig, curves_dir, manifest):
    """Descriptors for every non-normal test curve, minus excluded labels."""
    curves_dir = Path(curves_dir)
    if not curves_dir.is_dir():
        raise FileNotFoundError(f"curves directory not found: {curves_dir}")
    excluded = {c.strip() for c in str(cfg["cluster.exclude"]).split(",")
                if c.strip()}
    length = int(cfg["cluster.resample"])
    descriptors, labels = [], []
    for row in sorted(manifest.rows, key=lambda r: r.video_id):
        if row.split != "test" or row.label == "normal":
            continue
        if row.label in excluded:
            continue
        path = curves_dir / f"{row.video_id}.csv"
        if not path.is_file():
            raise FileNotFoundError(f"curve file missing for video "
                                    f"'{row.video_id}': {path}")
        curve = scoring.read_curve_csv(path, video_id=row.video_id)
        descriptors.append(clustering.featurize(curve, length))
        labels.append(row.label)
    return descriptors, labels


def _pick_exemplars(descriptors, labels, per_category: int):
    """Lexicographically first video ids of each category act as pre-labeled."""
    chosen = []
    by_category: dict[str, list] = {}
    order = sorted(range(len(descriptors)),
                   key=lambda i: descriptors[i].video_id)
    for idx in order:
        bucket = by_category.setdefault(labels[idx], [])
        if len(bucket) < per_category:
            bucket.append(idx)
            chosen.append((descriptors[idx], labels[idx]))
    return chosen


def cmd_cluster(cfg: RunConfig, curves_dir, exemplars_manifest,
                out_report) -> float:
    """Cluster buggy-video curves, label clusters, write the report CSV."""
    manifest = data.load_manifest(exemplars_manifest, check_dirs=False)
    descriptors, labels = _load_descriptors(cfg, curves_dir, manifest)
    if len(descriptors) < 2:
        raise ValueError("clustering needs at least 2 buggy test curves")
    exemplars = _pick_exemplars(descriptors, labels,
                                int(cfg["cluster.exemplars_per_category"]))
    eps = float(cfg["cluster.eps"]) or None
    result = clustering.cluster_curves(descriptors, exemplars, eps=eps,
                                       min_pts=int(cfg["cluster.min_pts"]))
    assignment = clustering.LabelAssignment(
        classes=tuple(labels), clusters=tuple(int(c)
                                              for c in result.cluster_ids))
    score = clustering.homogeneity(assignment)
    rows = []
    for desc, label, cid in zip(descriptors, labels, result.cluster_ids):
        assigned = result.categories.get(int(cid), "noise")
        rows.append((desc.video_id, int(cid), assigned, label))
    out_report = Path(out_report)
    out_report.parent.mkdir(parents=True, exist_ok=True)
    clustering.write_cluster_report(out_report, rows, score)
    n_clusters = len(result.categories)
    print(f"cluster: {len(rows)} curves, {n_clusters} clusters "
          f"(eps={result.eps:.6g}, min_pts={result.min_pts}), "
          f"homogeneity={score:.6f} -> {out_report}")
    return score


def cmd_eval(cfg: RunConfig, report_path, out_path=None) -> dict:
    """Summarize a cluster report: homogeneity plus per-category stats."""
    rows, _ = clustering.read_cluster_report(report_path)
    if not rows:
        raise ValueError(f"cluster report {report_path} has no rows")
    assignment = clustering.LabelAssignment(
        classes=tuple(r[3] for r in rows),
        clusters=tuple(r[1] for r in rows))
    score = clustering.homogeneity(assignment)
    lines = [f"homogeneity={score:.9g}", f"curves={len(rows)}"]
    per_label = Counter(r[3] for r in rows)
    for label in sorted(per_label):
        subset = [r for r in rows if r[3] == label]
        clustered = [r for r in subset if r[1] != -1]
        correct = [r for r in subset if r[2] == label]
        lines.append(f"category={label} videos={len(subset)} "
                     f"clustered={len(clustered)} correct={len(correct)} "
                     f"accuracy={len(correct) / len(subset):.4f}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    out_path = Path(out_path) if out_path else \
        Path(report_path).with_suffix(".summary.txt")
    out_path.write_text(text)
    return {"homogeneity": score, "summary": text}


def _demo_detection_stats(cfg: RunConfig, manifest, curves_dir):
    """Frame-level AUC over buggy test videos and per-category dip depths."""
    curves_dir = Path(curves_dir)
    scores, truth = [], []
    dip_by_category: dict[str, list[float]] = {}
    for row in manifest.rows:
        if row.split != "test" or row.label == "normal":
            continue
        curve = scoring.read_curve_csv(curves_dir / f"{row.video_id}.csv",
                                       video_id=row.video_id)
        labels = np.zeros(len(curve), dtype=np.int8)
        for a, b in row.bug_ranges:
            labels[a:b + 1] = 1
        scores.append(1.0 - curve.s)
        truth.append(labels)
        seg_min = min(float(np.min(curve.s[a:b + 1]))
                      for a, b in row.bug_ranges)
        dip_by_category.setdefault(row.label, []).append(seg_min)
    auc = scoring.detection_auc(np.concatenate(scores), np.concatenate(truth))
    return auc, dip_by_category


def cmd_demo(cfg: RunConfig, workdir) -> dict:
    """Run gen -> train -> score -> plot -> cluster -> eval end to end."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    corpus_dir = workdir / "corpus"
    checkpoint_path = workdir / "model.ckpt"
    curves_dir = workdir / "curves"
    plots_dir = workdir / "plots"
    report_path = workdir / "report.csv"

    manifest = cmd_gen(cfg, corpus_dir)
    cmd_train(cfg, corpus_dir / "manifest.csv", checkpoint_path)
    cmd_score(cfg, checkpoint_path, corpus_dir / "manifest.csv", curves_dir)
    plots_dir.mkdir(parents=True, exist_ok=True)
    for row in sorted(manifest.rows, key=lambda r: r.video_id):
        if row.split != "test":
            continue
        cmd_plot(cfg, curves_dir / f"{row.video_id}.csv",
                 plots_dir / f"{row.video_id}.svg", category=row.label)
    score = cmd_cluster(cfg, curves_dir, corpus_dir / "manifest.csv",
                        report_path)
    evaluation = cmd_eval(cfg, report_path)

    auc, dips = _demo_detection_stats(cfg, manifest, curves_dir)
    summary = [f"homogeneity={score:.9g}", f"detection_auc={auc:.9g}"]
    for category in sorted(dips):
        worst = max(dips[category])
        summary.append(f"min_rs_within_bug.{category}.worst={worst:.9g}")

    second = _second_pass_category(cfg, evaluation["summary"])
    if second is not None:
        sub_cfg = RunConfig({**cfg.values, "cluster.exclude": second})
        second_report = workdir / "report_filtered.csv"
        second_score = cmd_cluster(sub_cfg, curves_dir,
                                   corpus_dir / "manifest.csv", second_report)
        summary.append(f"homogeneity_excluding_{second}={second_score:.9g}")
        print(f"demo: re-clustering without '{second}' changed homogeneity "
              f"{score:.4f} -> {second_score:.4f}")
    (workdir / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return {"homogeneity": score, "auc": auc, "dips": dips,
            "workdir": workdir}


def _second_pass_category(cfg: RunConfig, eval_summary: str) -> str | None:
    """Category to drop for the filtered re-clustering pass."""
    mode = str(cfg["demo.second_pass"])
    if mode == "none":
        return None
    if mode != "auto":
        return mode
    worst = None
    for line in eval_summary.splitlines():
        if not line.startswith("category="):
            continue
        fields = dict(part.split("=", 1) for part in line.split())
        key = (float(fields["accuracy"]), fields["category"])
        if worst is None or key < worst:
            worst = key
    return worst[1] if worst else None


# --- argument parsing and error mapping --------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glitchguard",
        description="Detect and categorize perceptual bugs in gameplay "
                    "recordings as reconstruction anomalies.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", default=None,
                       help="key=value config file; defaults are built in")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--set", metavar="KEY=VALUE", action="append",
                       default=[], dest="overrides",
                       help="override a single config key (repeatable)")

    p = sub.add_parser("gen", help="generate a synthetic labeled corpus")
    common(p)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("train", help="train the autoencoder on normal videos")
    common(p)
    p.add_argument("manifest", metavar="MANIFEST_CSV")
    p.add_argument("--out", required=True, metavar="CHECKPOINT")

    p = sub.add_parser("score", help="write regularity curves for test videos")
    common(p)
    p.add_argument("checkpoint", metavar="CHECKPOINT")
    p.add_argument("manifest", metavar="MANIFEST_CSV")
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("plot", help="render one curve CSV as SVG")
    common(p)
    p.add_argument("curve", metavar="CURVE_CSV")
    p.add_argument("--out", required=True, metavar="SVG")
    p.add_argument("--category", default="",
                   help="bug category whose threshold shades the plot")

    p = sub.add_parser("cluster", help="cluster curves and label bug types")
    common(p)
    p.add_argument("curves_dir", metavar="CURVES_DIR")
    p.add_argument("exemplars", metavar="EXEMPLARS_MANIFEST")
    p.add_argument("--out", required=True, metavar="REPORT_CSV")

    p = sub.add_parser("eval", help="summarize a cluster report")
    common(p)
    p.add_argument("report", metavar="REPORT_CSV")
    p.add_argument("--out", default=None, metavar="SUMMARY_TXT")

    p = sub.add_parser("demo", help="run the whole pipeline at desk scale")
    common(p)
    p.add_argument("--out", required=True, metavar="WORKDIR")
    return parser


def _config_from_args(args) -> RunConfig:
    overrides: dict[str, object] = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    return RunConfig.load(args.config, overrides)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        _log_config(cfg)
        if args.command == "gen":
            cmd_gen(cfg, args.out)
        elif args.command == "train":
            cmd_train(cfg, args.manifest, args.out)
        elif args.command == "score":
            cmd_score(cfg, args.checkpoint, args.manifest, args.out)
        elif args.command == "plot":
            cmd_plot(cfg, args.curve, args.out, category=args.category)
        elif args.command == "cluster":
            cmd_cluster(cfg, args.curves_dir, args.exemplars, args.out)
        elif args.command == "eval":
            cmd_eval(cfg, args.report, args.out)
        elif args.command == "demo":
            cmd_demo(cfg, args.out)
    except ConfigError as exc:
        print(f"ERROR {EXIT_BAD_CONFIG}: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FileNotFoundError as exc:
        print(f"ERROR {EXIT_MISSING_FILE}: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except NumericError as exc:
        print(f"ERROR {EXIT_NUMERIC}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, model.CheckpointError) as exc:
        print(f"ERROR 1: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
