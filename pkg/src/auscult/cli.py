"""Operator command line: scan, split, train, evaluate, classify, spectrogram, serve.

Every subcommand is a thin composition over the library modules. Exit codes:
1 usage, 2 data, 3 model, 4 I/O.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import features as feat
from . import metrics as metrics_mod
from .dataset import load_manifest, read_wav, save_manifest, scan_dataset
from .errors import AuscultError, DataError, InvalidConfigError, ModelError
from .nn import ModelConfig, model_forward
from .preprocess import PreprocessConfig, normalize_peak, preprocess, resample, \
    standardize_length
from .service import SmtpConfig, create_app
from .store import load_metadata, load_model
from .training import TrainConfig, evaluate as eval_features, load_features, \
    save_training_run, train

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MODEL = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="auscult", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="index a dataset directory into a manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--layout", required=True, choices=["yaseen", "icbhi", "flat"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("split", help="assign train/val/test splits in place")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.175)
    p.add_argument("--test-fraction", type=float, default=0.075)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model artifact path (.ausc)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--patience", type=int, default=300)
    p.add_argument("--run-out", default=None,
                   help="training-run report path (default: <out>.run.txt)")

    p = sub.add_parser("evaluate", help="metrics tables and confusion matrices")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out-prefix", default=None,
                   help="also write <prefix>_confusion*.csv and metric CSVs")

    p = sub.add_parser("classify", help="classify one WAV file")
    p.add_argument("--model", required=True)
    p.add_argument("wav")
    p.add_argument("--organ", default="auto", choices=["heart", "lung", "auto"])

    p = sub.add_parser("spectrogram",
                       help="export raw and preprocessed mel spectrograms")
    p.add_argument("wav")
    p.add_argument("--out", required=True, help="output path prefix")

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--model", default=os.environ.get("AUSC_MODEL_PATH"))
    p.add_argument("--bind", default=os.environ.get("AUSC_BIND_ADDR", "127.0.0.1:8000"))
    p.add_argument("--data-dir", default=os.environ.get("AUSC_DATA_DIR", "auscult-data"))
    return parser


def _cmd_scan(args):
    manifest = scan_dataset(args.root, args.layout)
    save_manifest(manifest, args.out)
    counts = manifest.counts()
    print(f"scanned {len(manifest)} recordings into {args.out}")
    for label in feat.CLASSES:
        if label in counts:
            print(f"  {label}: {counts[label]}")
    return 0


def _cmd_split(args):
    from .training import stratified_split

    cfg = TrainConfig(seed=args.seed, val_fraction=args.val_fraction,
                      test_fraction=args.test_fraction)
    manifest = load_manifest(args.manifest)
    manifest = stratified_split(manifest, cfg, args.seed)
    save_manifest(manifest, args.manifest)
    for split in ("train", "val", "test"):
        print(f"{split}: {sum(1 for e in manifest if e.split == split)}")
    return 0


def _cmd_train(args):
    manifest = load_manifest(args.manifest)
    train_cfg = TrainConfig(seed=args.seed, max_epochs=args.epochs,
                            batch_size=args.batch, learning_rate=args.lr,
                            early_stop_patience=args.patience)
    model_cfg = ModelConfig()
    print("epoch train_loss train_acc val_loss val_acc")

    def log_row(row):
        print(f"{row.epoch} {row.train_loss:.6f} {row.train_acc:.6f} "
              f"{row.val_loss:.6f} {row.val_acc:.6f}", flush=True)

    run, _ = train(manifest, train_cfg, model_cfg, args.out, log_fn=log_row)
    run_path = args.run_out or (args.out + ".run.txt")
    save_training_run(run, run_path)
    print(f"best epoch {run.best_epoch} val_accuracy {run.best_val_accuracy:.6f}")
    print(f"model: {args.out}")
    print(f"run report: {run_path}")
    return 0


def _cmd_evaluate(args):
    manifest = load_manifest(args.manifest)
    params, _ = load_model(args.model)
    entries = manifest.subset(args.split)
    if not entries:
        raise DataError(f"manifest has no {args.split} entries")
    xs = np.stack([load_features(e) for e in entries])
    ys = np.asarray([feat.label_index(e.label) for e in entries])
    _, acc, preds = eval_features(params, xs, ys)
    cm = metrics_mod.confusion(ys.tolist(), preds.tolist())
    report = metrics_mod.metrics_from_confusion(cm)

    heart_rows = [m for m in report.per_class if feat.CLASS_ORGAN[m.label] == "heart"]
    lung_rows = [m for m in report.per_class if feat.CLASS_ORGAN[m.label] == "lung"]
    heart = dataclasses.replace(report, per_class=heart_rows)
    lung = dataclasses.replace(report, per_class=lung_rows)
    print(f"split: {args.split} ({len(entries)} samples), accuracy {acc:.4f}")
    print()
    print("Heart sound classes (percent):")
    print(metrics_mod.render_table(heart, fmt="text", percent=True))
    print("Lung sound classes:")
    print(metrics_mod.render_table(lung, fmt="text", percent=False))
    if args.out_prefix:
        metrics_mod.save_confusion_csv(cm, f"{args.out_prefix}_confusion.csv")
        for organ in ("heart", "lung"):
            sub = metrics_mod.organ_submatrix(cm, organ)
            names = [feat.CLASSES[i] for i in feat.organ_indices(organ)]
            metrics_mod.save_confusion_csv(
                sub, f"{args.out_prefix}_confusion_{organ}.csv", names
            )
        with open(f"{args.out_prefix}_metrics.csv", "w", encoding="utf-8") as fh:
            fh.write(metrics_mod.render_table(report, fmt="csv"))
        print(f"wrote {args.out_prefix}_confusion*.csv and {args.out_prefix}_metrics.csv")
    return 0


def _classify_payload(model_path, wav_path, organ):
    from .service import _argmax_for_organ

    params, _ = load_model(model_path)
    metadata = load_metadata(model_path)
    clip = read_wav(wav_path)
    features = feat.mfcc(preprocess(clip))
    probs = model_forward(features[None, :], params, mode="inference")[0]
    label = feat.CLASSES[_argmax_for_organ(probs, organ)]
    return {
        "label": label,
        "probabilities": [float(p) for p in probs],
        "model_version": metadata.get("model_version", os.path.basename(model_path)),
    }


def _cmd_classify(args):
    print(json.dumps(_classify_payload(args.model, args.wav, args.organ)))
    return 0


def _cmd_spectrogram(args):
    cfg = PreprocessConfig()
    clip = read_wav(args.wav)
    # "raw": resampled/standardized/normalized but unfiltered, so the export
    # pair isolates what the band-pass de-noising changes
    raw = normalize_peak(
        standardize_length(resample(clip, cfg.target_fs_hz), cfg.target_len_samples)
    )
    cleaned = preprocess(clip, cfg)
    for tag, c in (("raw", raw), ("preprocessed", cleaned)):
        mel = feat.mel_spectrogram(c)
        feat.save_mel_csv(mel, f"{args.out}_{tag}.csv")
        feat.save_mel_pgm(mel, f"{args.out}_{tag}.pgm")
        print(f"wrote {args.out}_{tag}.csv and {args.out}_{tag}.pgm")
    return 0


def _cmd_serve(args):
    import uvicorn

    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"--bind must be HOST:PORT, got {args.bind!r}")
    app = create_app(model_path=args.model, data_dir=args.data_dir,
                     smtp=SmtpConfig.from_env())
    uvicorn.run(app, host=host, port=int(port), log_level="info")
    return 0


_COMMANDS = {
    "scan": _cmd_scan,
    "split": _cmd_split,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "classify": _cmd_classify,
    "spectrogram": _cmd_spectrogram,
    "serve": _cmd_serve,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (UsageError, InvalidConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AuscultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
