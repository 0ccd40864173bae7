"""Command-line surface: data generation, training, feature extraction,
fusion, evaluation, gradient checking, and the full ladder comparison."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .tensor import Rng
from .fileio import write_tensor
from .config import default_config, load_config
from .data import Dataset, SplitSpec, SynthConfig, generate_synthetic, make_splits
from .models import ModelSpec, build_model, load_model, save_model
from . import harness


def _dataset_config(cfg) -> SynthConfig:
    return SynthConfig(
        n_classes=cfg["n_classes"],
        samples_per_class=cfg["samples_per_class"],
        t_min=cfg["t_min"],
        t_max=cfg["t_max"],
        joints=cfg["joints"],
        video_shape=cfg["video_shape"],
        n_subjects=cfg["n_subjects"],
        n_views=cfg["n_views"],
        skeleton_noise=cfg["skeleton_noise"],
        video_noise=cfg["video_noise"],
        shared_skeleton_pairs=cfg["shared_skeleton_pairs"],
        shared_video_pairs=cfg["shared_video_pairs"],
        xor_pair=cfg["xor_pair"],
    )


def _load_cfg(path):
    return load_config(path) if path else default_config()


def _splits_for(cfg, dataset):
    return make_splits(dataset, SplitSpec(cfg["split_mode"]), Rng(cfg["seed"]).derive(7))


def _write_run(out_dir, spec: ModelSpec, cfg, model, result):
    os.makedirs(out_dir, exist_ok=True)
    save_model(model, os.path.join(out_dir, "model.ckpt"))
    run = {
        "model_spec": {
            "name": spec.name,
            "input_dim": spec.input_dim,
            "n_classes": spec.n_classes,
            "hidden_dim": spec.hidden_dim,
            "keep_prob": spec.keep_prob,
            "video_shape": list(spec.video_shape),
            "cnn_filters": list(spec.cnn_filters),
            "cnn_fc_dim": spec.cnn_fc_dim,
        },
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()},
        "result": result.canonical_dict() if result else None,
    }
    with open(os.path.join(out_dir, "run.json"), "w", newline="\n") as fh:
        fh.write(json.dumps(run, sort_keys=True, indent=2) + "\n")
    if result is not None:
        harness.emit_confusion(
            result.confusion,
            list(range(spec.n_classes)),
            os.path.join(out_dir, "confusion.csv"),
        )
        with open(os.path.join(out_dir, "timing.json"), "w", newline="\n") as fh:
            fh.write(json.dumps({"wall_clock_per_step": result.wall_clock_per_step}) + "\n")


def _load_run(run_dir):
    with open(os.path.join(run_dir, "run.json")) as fh:
        run = json.load(fh)
    ms = run["model_spec"]
    spec = ModelSpec(
        name=ms["name"],
        input_dim=ms["input_dim"],
        n_classes=ms["n_classes"],
        hidden_dim=ms["hidden_dim"],
        keep_prob=ms["keep_prob"],
        video_shape=tuple(ms["video_shape"]),
        cnn_filters=tuple(ms["cnn_filters"]),
        cnn_fc_dim=ms["cnn_fc_dim"],
    )
    model = load_model(spec, os.path.join(run_dir, "model.ckpt"))
    cfg = run["config"]
    cfg["video_shape"] = tuple(cfg["video_shape"])
    return model, spec, cfg


def cmd_gen_data(args):
    cfg = _load_cfg(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    dataset = generate_synthetic(_dataset_config(cfg), Rng(cfg["seed"]))
    dataset.save(args.out)
    print(f"wrote {len(dataset)} samples to {args.out}")


def cmd_train(args):
    cfg = _load_cfg(args.config)
    dataset = Dataset.load(args.data)
    splits = _splits_for(cfg, dataset)
    spec = harness.model_spec_for(args.model, cfg, dataset)
    model = build_model(spec, Rng(cfg["seed"]).derive(1000 + list(harness.LADDER_VARIANTS).index(args.model)))
    result = harness.train(model, dataset, splits, harness.train_config_for(args.model, cfg))
    _write_run(args.out, spec, cfg, model, result)
    print(f"{args.model}: test accuracy {result.test_accuracy:.4f} -> {args.out}")


def cmd_extract(args):
    model, _, cfg = _load_run(args.run)
    dataset = Dataset.load(args.data)
    splits = _splits_for(cfg, dataset)
    indices = getattr(splits, args.split)
    feats = harness.extract_features(model, dataset, indices, args.tap)
    write_tensor(args.out, feats)
    print(f"wrote {feats.shape[0]}x{feats.shape[1]} features to {args.out}")


def cmd_eval(args):
    model, spec, cfg = _load_run(args.run)
    dataset = Dataset.load(args.data)
    splits = _splits_for(cfg, dataset)
    indices = getattr(splits, args.split)
    result = harness.evaluate(model, dataset, indices)
    print(json.dumps(result.canonical_dict(), sort_keys=True, indent=2))


def cmd_fuse_decision(args):
    rnn_model, _, cfg = _load_run(args.run_rnn)
    cnn_model, _, _ = _load_run(args.run_cnn)
    dataset = Dataset.load(args.data)
    splits = _splits_for(cfg, dataset)
    out = harness.run_decision_fusion(rnn_model, cnn_model, dataset, splits)
    _emit_fusion(out, args.out)


def cmd_fuse_feature(args):
    rnn_model, _, cfg = _load_run(args.run_rnn)
    cnn_model, _, _ = _load_run(args.run_cnn)
    dataset = Dataset.load(args.data)
    splits = _splits_for(cfg, dataset)
    svm_c = args.svm_c if args.svm_c is not None else cfg["svm_c"]
    out = harness.run_feature_fusion(rnn_model, cnn_model, dataset, splits, svm_c)
    _emit_fusion(out, args.out)


def _emit_fusion(out, out_path):
    text = json.dumps(out, sort_keys=True, indent=2)
    if out_path:
        os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
        with open(out_path, "w", newline="\n") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_gradcheck(args):
    report = harness.gradcheck_all(Rng(args.seed) if args.seed is not None else None)
    print(report.format())
    if not report.passed:
        sys.exit(1)


def cmd_ladder(args):
    cfg = _load_cfg(args.config)
    if args.data:
        dataset = Dataset.load(args.data)
    else:
        dataset = generate_synthetic(_dataset_config(cfg), Rng(cfg["seed"]))
    results, timing, _, _ = harness.run_ladder(dataset, cfg, out_dir=args.out)
    rows = {k: v.get("test_accuracy") for k, v in results.items()}
    print(json.dumps(rows, sort_keys=True, indent=2))


def main(argv=None):
    parser = argparse.ArgumentParser(prog="twostream")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic paired dataset")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train one ladder variant")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("extract", help="extract per-sample features from a trained run")
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--tap", required=True, choices=["rnn_fc", "cnn_fc6"])
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("eval", help="evaluate a trained run on a split")
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("fuse-decision", help="confidence voting from two trained runs")
    p.add_argument("--run-rnn", required=True)
    p.add_argument("--run-cnn", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_fuse_decision)

    p = sub.add_parser("fuse-feature", help="SVM over fused features from two trained runs")
    p.add_argument("--run-rnn", required=True)
    p.add_argument("--run-cnn", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--svm-c", type=float)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_fuse_feature)

    p = sub.add_parser("gradcheck", help="finite-difference checks for every layer type")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("ladder", help="train the configured model ladder plus fusion rows")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_ladder)

    args = parser.parse_args(argv)
    args.fn(args)


if __name__ == "__main__":
    main()
