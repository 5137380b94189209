"""Command-line entry point: reproducible batch workflows over the library.

Subcommands: synth, train, evaluate, explain, extract, compare. Every run
writes a manifest next to its outputs recording the resolved configuration,
master seed, and input/output digests; re-running the same command with the
same inputs reproduces the outputs byte for byte.

Flag resolution precedence: explicit flags > HORNNET_<FLAG> environment
variables > --config JSON file > built-in defaults. Exit codes: 0 success,
2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, augment, datakit, evalharness, explain, kbann, tensornet
from .datakit import CLASSES, Dataset
from .rulelang import parse_rules, rewrite_disjuncts

ENV_PREFIX = "HORNNET_"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, args: dict, seed, inputs: list[Path]):
    # `out` is where results land, not part of what they are; leaving it out
    # keeps manifests byte-identical across output locations.
    manifest = {
        "tool": "hornnet",
        "version": __version__,
        "command": command,
        "args": {k: v for k, v in sorted(args.items()) if k not in ("out", "config")},
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {},
    }
    outputs = sorted(p for p in out_dir.iterdir() if p.name != "manifest.json")
    manifest["outputs"] = {p.name: _sha256(p) for p in outputs if p.is_file()}
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _resolve(args: argparse.Namespace, parser_defaults: dict) -> None:
    """Apply config-file and environment overrides to defaulted flags."""
    config = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
    for key, default in parser_defaults.items():
        if getattr(args, key, None) != default:
            continue  # explicitly set on the command line
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            setattr(args, key, type(default)(env) if default is not None else env)
        elif key in config:
            setattr(args, key, config[key])


def _load_dataset(path) -> Dataset:
    return datakit.load_csv(path)


def _positive_int(value):
    n = int(value)
    if n <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def _add_common(sub, *, seed=True, out=True, config=True):
    if seed:
        sub.add_argument("--seed", type=int, default=0, help="master seed")
    if out:
        sub.add_argument("--out", default=".", help="output directory")
    if config:
        sub.add_argument("--config", default=None, help="JSON file with flag defaults")


_SUBPARSERS: dict[str, argparse.ArgumentParser] = {}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hornnet",
        description=__doc__.splitlines()[0],
    )
    parser.add_argument("--version", action="version", version=f"hornnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic train/test CSVs")
    p.add_argument("--rows", type=_positive_int, default=427)
    p.add_argument("--test-rows", type=_positive_int, default=85, dest="test_rows")
    p.add_argument("--class-ratio", type=float, default=364 / 427, dest="class_ratio")
    p.add_argument("--train-r", type=float, default=0.887, dest="train_r")
    p.add_argument("--test-r", type=float, default=0.632, dest="test_r")
    _add_common(p)

    p = sub.add_parser("train", help="train a model on a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--rules", default=None, help="rule file (required for --model nsai)")
    p.add_argument("--model", choices=("baseline", "nsai"), default=None)
    p.add_argument("--augment", choices=("none", "smote", "autoencoder"), default="none")
    p.add_argument("--learning-rate", type=float, default=0.03, dest="learning_rate")
    p.add_argument("--max-epochs", type=_positive_int, default=500, dest="max_epochs")
    p.add_argument("--omega", type=float, default=kbann.CompileConfig.omega)
    _add_common(p)

    p = sub.add_parser("evaluate", help="evaluate a model file on a CSV")
    p.add_argument("--model", required=True, dest="model_path")
    p.add_argument("--data", required=True)
    _add_common(p, seed=False)

    p = sub.add_parser("explain", help="surrogate explanations for a model")
    p.add_argument("--model", required=True, dest="model_path")
    p.add_argument("--data", required=True)
    p.add_argument("--samples", type=_positive_int, default=1000)
    _add_common(p)

    p = sub.add_parser("extract", help="threshold rules from a knowledge model")
    p.add_argument("--model", required=True, dest="model_path")
    p.add_argument("--data", required=True)
    p.add_argument("--tolerance", type=float, default=0.1)
    _add_common(p, seed=False)

    p = sub.add_parser("compare", help="train and compare all four models")
    p.add_argument("--train", required=True, dest="train_path")
    p.add_argument("--test", required=True, dest="test_path")
    p.add_argument("--rules", required=True)
    p.add_argument("--cv-folds", type=_positive_int, default=10, dest="cv_folds")
    _add_common(p)

    _SUBPARSERS.clear()
    _SUBPARSERS.update(sub.choices)
    return parser


# --------------------------------------------------------------------------
# Subcommand implementations
# --------------------------------------------------------------------------


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = datakit.SynthConfig(
        n_rows=args.rows,
        n_test=args.test_rows,
        class_ratio=args.class_ratio,
        train_spurious_r=args.train_r,
        test_spurious_r=args.test_r,
        seed=args.seed,
    )
    train, test = datakit.generate_synthetic(config)
    datakit.save_csv(train, out / "train.csv")
    datakit.save_csv(test, out / "test.csv")
    _write_manifest(out, "synth", vars(args), args.seed, [])
    print(f"wrote {out / 'train.csv'} ({train.n_rows} rows), {out / 'test.csv'} ({test.n_rows} rows)")
    return 0


def _cmd_train(args, parser) -> int:
    model_kind = args.model or ("nsai" if args.rules else "baseline")
    if model_kind == "nsai" and not args.rules:
        parser.error("--model nsai requires --rules")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = [Path(args.data)]

    data = _load_dataset(args.data)
    if args.augment == "smote":
        data = augment.smote(data, augment.SmoteConfig(seed=args.seed))
    elif args.augment == "autoencoder":
        data = augment.balance_with_autoencoder(data, seed=args.seed)
    normalized = datakit.normalize(data)

    train_cfg = tensornet.TrainConfig(
        learning_rate=args.learning_rate, max_epochs=args.max_epochs, seed=args.seed
    )
    if model_kind == "nsai":
        inputs.append(Path(args.rules))
        rules = rewrite_disjuncts(parse_rules(Path(args.rules).read_text(encoding="utf-8")))
        net = kbann.compile_rules(
            rules,
            normalized.feature_names,
            CLASSES,
            kbann.CompileConfig(omega=args.omega, seed=args.seed),
        )
    else:
        net = tensornet.build_mlp(
            normalized.n_features,
            list(evalharness.BASELINE_HIDDEN),
            2,
            seed=args.seed,
            input_names=list(normalized.feature_names),
            class_names=list(CLASSES),
        )
    trained, report = tensornet.train(net, normalized, train_cfg)
    tensornet.save_network(trained, out / "model.npz")
    (out / "train_report.json").write_text(
        json.dumps(
            {
                "model": model_kind,
                "augment": args.augment,
                "effective_rows": normalized.n_rows,
                "class_counts": normalized.class_counts(),
                "normalization": [list(b) for b in normalized.normalization],
                "epochs_run": report.epochs_run,
                "best_epoch": report.best_epoch,
                "stopped_early": report.stopped_early,
                "final_train_loss": report.train_loss_history[-1],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    _write_manifest(out, "train", vars(args), args.seed, inputs)
    print(f"trained {model_kind} model on {normalized.n_rows} rows -> {out / 'model.npz'}")
    return 0


def _cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net = tensornet.load_network(args.model_path)
    # model files store no bounds; data is scaled with its own observed
    # bounds, matching the training-side convention
    data = datakit.normalize(_load_dataset(args.data))
    preds = tensornet.predict_labels(net, data.rows).astype(str)
    metrics = evalharness.compute_metrics(preds, data.labels.astype(str), CLASSES)
    (out / "metrics.json").write_text(
        json.dumps(evalharness.metrics_to_dict(metrics), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    table = evalharness.render_metrics_table({"model": metrics})
    (out / "metrics.txt").write_text(table, encoding="utf-8")
    _write_manifest(out, "evaluate", vars(args), None, [Path(args.model_path), Path(args.data)])
    print(table, end="")
    return 0


def _cmd_explain(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net = tensornet.load_network(args.model_path)
    data = datakit.normalize(_load_dataset(args.data))

    def predict_fn(x):
        return np.atleast_2d(tensornet.predict_proba(net, x))

    global_exp = explain.global_explain(predict_fn, data, n_samples=args.samples, seed=args.seed)
    records = explain.misprediction_report(predict_fn, data, n_samples=args.samples, seed=args.seed)
    (out / "global_explanation.json").write_text(
        json.dumps(
            {
                "mean_signed": global_exp.mean_signed,
                "mean_abs": global_exp.mean_abs,
                "n_instances": global_exp.n_instances,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    (out / "mispredictions.txt").write_text(
        explain.format_misprediction_table(records), encoding="utf-8"
    )
    structured = [
        {
            "instance_id": rec.explanation.instance_id,
            "true_label": rec.explanation.true_label,
            "predicted": rec.explanation.predicted,
            "confidence": list(rec.explanation.confidence),
            "supporting": [list(c) for c in rec.supporting],
            "contradicting": [list(c) for c in rec.contradicting],
        }
        for rec in records
    ]
    (out / "mispredictions.json").write_text(
        json.dumps(structured, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_manifest(out, "explain", vars(args), args.seed, [Path(args.model_path), Path(args.data)])
    print(f"{len(records)} mispredicted rows explained -> {out}")
    return 0


def _cmd_extract(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net = tensornet.load_network(args.model_path)
    if not net.has_knowledge_links():
        raise ValueError(
            "model has no knowledge links to extract rules from; "
            "use `hornnet explain` for plain models"
        )
    data = datakit.normalize(_load_dataset(args.data))
    extracted = kbann.extract_rules(net, data, group_tolerance=args.tolerance)
    text = kbann.format_extracted_rules(extracted)
    (out / "rules.txt").write_text(text, encoding="utf-8")
    kbann.save_extracted_rules(extracted, out / "rules.json")
    _write_manifest(out, "extract", vars(args), None, [Path(args.model_path), Path(args.data)])
    print(text, end="")
    return 0


def _cmd_compare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_data = _load_dataset(args.train_path)
    test_data = _load_dataset(args.test_path)
    rules = parse_rules(Path(args.rules).read_text(encoding="utf-8"))
    report = evalharness.run_comparison(
        train_data, test_data, rules, master_seed=args.seed, cv_folds=args.cv_folds
    )
    (out / "report.json").write_text(evalharness.report_to_json(report), encoding="utf-8")
    (out / "report.txt").write_text(evalharness.render_report_text(report), encoding="utf-8")
    _write_manifest(
        out, "compare", vars(args), args.seed,
        [Path(args.train_path), Path(args.test_path), Path(args.rules)],
    )
    print(evalharness.render_metrics_table(report.test_metrics), end="")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    subparser = _SUBPARSERS[args.command]
    defaults = {key: subparser.get_default(key) for key in vars(args) if key != "command"}
    try:
        _resolve(args, defaults)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "train":
            return _cmd_train(args, parser)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "explain":
            return _cmd_explain(args)
        if args.command == "extract":
            return _cmd_extract(args)
        if args.command == "compare":
            return _cmd_compare(args)
        parser.error(f"unknown command {args.command!r}")
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"hornnet: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
