"""Command-line entry point: ``dfr <command> [options]``.

Settings are layered: command-line flags override values from a
``--config`` file, which override the preset defaults. A config file holds
``key = value`` lines; ``#`` starts a comment. Keys are the long option
names with dashes or underscores.
"""
import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from dfr import keypoint_net, svm
from dfr.data import annotations, preprocess, synth
from dfr.errors import DFRError, FormatError
from dfr.eval import bench, metrics, report
from dfr.geometry import feature_matrix, load_schema
from dfr.keypoints import KEYPOINT_NAMES, KEYPOINTS_VERSION, KeypointSet

PRESET_DEFAULTS = {
    "desk": {"size": 96, "epochs": 150, "batch_size": 16, "lr": 4e-3},
    "paper": {"size": 227, "epochs": 1300, "batch_size": 50, "lr": 1e-3},
}

COMMON = {"seed": 0, "preset": "desk"}

# per command: key -> (type, default, help); None default means required
COMMANDS = {
    "synth": {
        "out": (str, None, "dataset directory to create"),
        "subjects": (int, 20, "number of subjects"),
        "per_subject": (int, 200, "samples per subject"),
        "size": (int, None, "image side in pixels (default from preset)"),
    },
    "train-kp": {
        "data": (str, None, "dataset directory"),
        "out": (str, None, "model file to write"),
        "history": (str, "", "training-history CSV (default: <out>.history.csv)"),
        "epochs": (int, None, "training epochs"),
        "batch_size": (int, None, "minibatch size"),
        "lr": (float, None, "Adam learning rate"),
        "train_fraction": (float, 0.875, "fraction of each subject used for training"),
    },
    "train-svm": {
        "data": (str, None, "dataset directory"),
        "out": (str, None, "SVM file to write"),
        "model": (str, "", "keypoint model; when given, features come from its predictions"),
        "schema": (str, "", "feature schema file (default: packaged default-v1)"),
        "kernel": (str, "rbf", "linear or rbf"),
        "c": (float, 1.0, "soft-margin penalty"),
        "gamma": (float, 0.0, "RBF width; 0 picks 1 / (n_features * variance)"),
        "tolerance": (float, 1e-3, "KKT stopping tolerance"),
        "max_passes": (int, 10, "SMO update budget, in multiples of the sample count"),
        "train_fraction": (float, 0.875, "fraction of each subject used for training"),
    },
    "predict": {
        "model": (str, None, "keypoint model file"),
        "images": (str, None, "image file or directory of PNG images"),
        "out": (str, None, "CSV of predicted keypoints"),
        "svm": (str, "", "optional SVM file; adds a predicted label column"),
        "schema": (str, "", "feature schema file"),
    },
    "eval": {
        "data": (str, None, "dataset directory"),
        "model": (str, None, "keypoint model file"),
        "svm": (str, None, "SVM file"),
        "out": (str, None, "directory for report files"),
        "schema": (str, "", "feature schema file"),
        "subset": (str, "test", "test (held-out split) or all"),
        "train_fraction": (float, 0.875, "fraction of each subject used for training"),
        "threshold": (float, metrics.DEFAULT_THRESHOLD, "detection threshold in pixels at 227x227 scale"),
        "format": (str, "both", "csv, svg or both"),
    },
    "bench": {
        "model": (str, None, "keypoint model file"),
        "svm": (str, None, "SVM file"),
        "data": (str, "", "dataset directory supplying frames (default: synthetic frames)"),
        "frames": (int, 50, "number of frames"),
        "batch": (int, 50, "frames per batch"),
        "schema": (str, "", "feature schema file"),
        "out": (str, "", "optional CSV report"),
    },
}

PRESET_KEYS = {"synth": ("size",), "train-kp": ("epochs", "batch_size", "lr")}

PAPER_WARNING = (
    "warning: --preset paper builds a 14-conv network on 227x227 input; "
    "on a CPU expect gigabytes of memory and hours per epoch"
)


class UsageError(DFRError):
    """Bad command-line or config input."""


def read_config(path):
    """Parse a ``key = value`` config file into a dict of strings."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}, line {lineno}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def resolve(command, flags, config_file=None):
    """Merge preset defaults, config-file values and flags for ``command``."""
    spec = COMMANDS[command]
    allowed = set(spec) | set(COMMON)
    file_values = read_config(config_file) if config_file else {}
    unknown = sorted(set(file_values) - allowed)
    if unknown:
        raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")
    preset = flags.get("preset") or file_values.get("preset") or COMMON["preset"]
    if preset not in PRESET_DEFAULTS:
        raise UsageError(f"unknown preset {preset!r}; choose from {sorted(PRESET_DEFAULTS)}")
    types = {k: t for k, (t, _, _) in spec.items()}
    types.update(seed=int, preset=str)
    cfg = {k: d for k, (_, d, _) in spec.items()}
    cfg.update(COMMON, preset=preset)
    for key in PRESET_KEYS.get(command, ()):
        cfg[key] = PRESET_DEFAULTS[preset][key]
    for key, raw in file_values.items():
        try:
            cfg[key] = types[key](raw)
        except ValueError as exc:
            raise UsageError(f"config key {key}: cannot parse {raw!r} as {types[key].__name__}") from exc
    cfg.update({k: v for k, v in flags.items() if v is not None})
    missing = [k for k, v in cfg.items() if v is None]
    if missing:
        raise UsageError(f"{command} needs --{missing[0].replace('_', '-')} (flag or config key)")
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(prog="dfr", description="Disguised face recognition pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--seed", type=int)
        p.add_argument("--preset", choices=sorted(PRESET_DEFAULTS))
        for key, (typ, default, text) in spec.items():
            shown = "" if default in (None, "") else f" [{default}]"
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, help=text + shown)
    return parser


# -- helpers --------------------------------------------------------------------


def _say(msg):
    print(msg, flush=True)


def _output_file(path):
    path = Path(path)
    if not path.parent.is_dir():
        raise UsageError(f"output directory {path.parent} does not exist; create it first")
    return path


def _input_path(path, what):
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} {path} not found")
    return path


def _dataset(directory):
    directory = _input_path(directory, "dataset directory")
    layout = annotations.load_manifest(directory).get("keypoints", KEYPOINTS_VERSION)
    if layout != KEYPOINTS_VERSION:
        raise FormatError(f"dataset uses keypoint layout {layout}, this build uses {KEYPOINTS_VERSION}", "manifest")
    return annotations.load_dataset(directory)


def _schema(path):
    return load_schema(_input_path(path, "schema file") if path else None)


def _check_schema(svm_model, schema):
    if svm_model.schema and svm_model.schema != schema.version:
        raise FormatError(
            f"SVM was trained on feature schema {svm_model.schema}, but schema {schema.version} is loaded", "schema"
        )


def _fit_images(samples, size):
    """Images at ``size`` plus annotations rescaled to match."""
    images, points = [], []
    for s in samples:
        if s.image.shape == (size, size):
            images.append(s.image)
            points.append(s.annotation)
        else:
            img, kps = preprocess.resize_with_keypoints(s.image, s.annotation, size)
            images.append(img)
            points.append(kps)
    return np.stack(images), points


def _partition(samples, cfg, subset="train"):
    train, test = preprocess.split(samples, cfg["train_fraction"], seed=cfg["seed"])
    return train if subset == "train" else test


def _features(samples, model, schema):
    """Feature matrix from annotations, or from model predictions when a model is given."""
    if model is None:
        return feature_matrix([s.annotation for s in samples], schema)[0]
    images, _ = _fit_images(samples, model.input_size)
    flat = keypoint_net.predict_flat(model, images)
    sets = [KeypointSet.from_flat(p, s.annotation.visible) for p, s in zip(flat, samples)]
    return feature_matrix(sets, schema)[0]


# -- commands -------------------------------------------------------------------


def cmd_synth(cfg):
    out = Path(cfg["out"])
    if not out.parent.is_dir():
        raise UsageError(f"output directory {out.parent} does not exist; create it first")
    samples = synth.generate_dataset(cfg["subjects"], cfg["per_subject"], seed=cfg["seed"], size=cfg["size"])
    manifest = {"seed": cfg["seed"], "subjects": cfg["subjects"], "per_subject": cfg["per_subject"], "size": cfg["size"]}
    annotations.save_dataset(samples, out, manifest)
    disguises = len({s.disguise_id for s in samples})
    _say(
        f"wrote {len(samples)} samples ({cfg['subjects']} subjects x {cfg['per_subject']}, "
        f"{disguises} disguises, {cfg['size']}x{cfg['size']}, {KEYPOINTS_VERSION}) to {out}"
    )


def cmd_train_kp(cfg):
    out = _output_file(cfg["out"])
    history_path = _output_file(cfg["history"] or f"{out}.history.csv")
    config = keypoint_net.preset_config(cfg["preset"], seed=cfg["seed"])
    samples = _partition(_dataset(cfg["data"]), cfg)
    images, points = _fit_images(samples, config.input_size)
    targets = np.stack([p.flat() for p in points])
    model = keypoint_net.build_model(config)
    start = time.perf_counter()

    def progress(epoch, loss):
        if epoch == 1 or epoch % 10 == 0 or epoch == cfg["epochs"]:
            _say(f"epoch {epoch}/{cfg['epochs']}  loss {loss:.6f}  ({time.perf_counter() - start:.0f} s)")

    keypoint_net.train(model, images, targets, cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"], progress=progress)
    keypoint_net.save_model(model, out)
    with open(history_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        writer.writerows((e, repr(loss)) for e, loss in model.history)
    _say(f"trained {cfg['preset']} model on {len(samples)} images for {cfg['epochs']} epochs; wrote {out} and {history_path}")


def cmd_train_svm(cfg):
    out = _output_file(cfg["out"])
    schema = _schema(cfg["schema"])
    model = keypoint_net.load_model(_input_path(cfg["model"], "model file")) if cfg["model"] else None
    samples = _partition(_dataset(cfg["data"]), cfg)
    X = _features(samples, model, schema)
    params = svm.SvmParams(
        kernel=cfg["kernel"], C=cfg["c"], gamma=cfg["gamma"] or None,
        tolerance=cfg["tolerance"], max_passes=cfg["max_passes"], seed=cfg["seed"],
    )
    machine = svm.train_svm(X, [s.subject_id for s in samples], params)
    machine.schema = schema.version
    svm.save_svm(machine, out)
    source = "predicted" if model else "annotated"
    _say(f"trained SVM on {len(samples)} samples ({source} keypoints, {len(machine.classes)} subjects); wrote {out}")


def _image_files(path):
    path = _input_path(path, "image path")
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp", ".pgm"))
        if not files:
            raise UsageError(f"no images found in {path}")
        return files
    return [path]


def cmd_predict(cfg):
    from PIL import Image

    out = _output_file(cfg["out"])
    model = keypoint_net.load_model(_input_path(cfg["model"], "model file"))
    schema = _schema(cfg["schema"])
    machine = None
    if cfg["svm"]:
        machine = svm.load_svm(_input_path(cfg["svm"], "SVM file"))
        _check_schema(machine, schema)
    size = model.input_size
    rows, resized = [], 0
    for f in _image_files(cfg["images"]):
        with Image.open(f) as im:
            image = np.asarray(im.convert("L"))
        h, w = image.shape
        ready = image if (h, w) == (size, size) else preprocess.resize_image(image, size)
        resized += (h, w) != (size, size)
        kps = keypoint_net.predict_keypoints(model, ready)
        if (h, w) != (size, size):
            # map back onto the original image through the same per-axis scaling
            _, kps = preprocess.resize_with_keypoints(ready, kps, (w, h))
        label = ""
        if machine is not None:
            label = machine.predict_many(feature_matrix([kps], schema)[0])[0]
        rows.append([str(f), label] + [repr(float(v)) for v in kps.flat()])
    header = ["image_path", "label"] + [f"{a}_{n}" for n in KEYPOINT_NAMES for a in ("x", "y")]
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    if resized:
        _say(f"note: resized {resized} image(s) to {size}x{size}; keypoints are reported in original image coordinates")
    _say(f"wrote {len(rows)} prediction(s) to {out}")


def cmd_eval(cfg):
    if cfg["subset"] not in ("test", "all"):
        raise UsageError(f"subset must be 'test' or 'all', got {cfg['subset']!r}")
    if cfg["format"] not in ("csv", "svg", "both"):
        raise UsageError(f"format must be csv, svg or both, got {cfg['format']!r}")
    out = Path(cfg["out"])
    if not out.is_dir():
        raise UsageError(f"output directory {out} does not exist; create it first")
    model = keypoint_net.load_model(_input_path(cfg["model"], "model file"))
    machine = svm.load_svm(_input_path(cfg["svm"], "SVM file"))
    schema = _schema(cfg["schema"])
    _check_schema(machine, schema)
    samples = _dataset(cfg["data"])
    if cfg["subset"] == "test":
        samples = _partition(samples, cfg, "test")
    images, truth = _fit_images(samples, model.input_size)
    flat = keypoint_net.predict_flat(model, images)
    preds = [KeypointSet.from_flat(p, t.visible) for p, t in zip(flat, truth)]
    kp_report = metrics.keypoint_errors(preds, truth, metrics.scaled_threshold(model.input_size, cfg["threshold"]))
    labels = machine.predict_many(feature_matrix(preds, schema)[0])
    cls_report = metrics.classification_report(labels, [s.subject_id for s in samples], [s.disguise_id for s in samples])
    metrics.check_consistency(cls_report)
    formats = ("csv", "svg") if cfg["format"] == "both" else (cfg["format"],)
    written = []
    for name, rep in (("keypoints", kp_report), ("classification", cls_report)):
        for fmt in formats:
            written.append(report.emit_report(rep, out / f"{name}.{fmt}", fmt))
    _say(f"{len(samples)} samples: keypoint MAE {kp_report.mae:.3f} px, "
         f"detection accuracy {100 * kp_report.accuracy:.1f}% at {kp_report.threshold:.2f} px, "
         f"subject accuracy {100 * cls_report.accuracy:.1f}%")
    for d, (correct, total) in cls_report.per_disguise.items():
        if total:
            _say(f"  {d:<20} {correct}/{total}")
    _say("wrote " + ", ".join(str(p) for p in written))


def cmd_bench(cfg):
    out = _output_file(cfg["out"]) if cfg["out"] else None
    model = keypoint_net.load_model(_input_path(cfg["model"], "model file"))
    machine = svm.load_svm(_input_path(cfg["svm"], "SVM file"))
    schema = _schema(cfg["schema"])
    _check_schema(machine, schema)
    if cfg["frames"] < 1:
        raise UsageError("frames must be >= 1")
    if cfg["data"]:
        frames = [s.image for s in _dataset(cfg["data"])][: cfg["frames"]]
    else:
        subjects = synth.make_subjects(2, cfg["seed"])
        frames = [
            synth.generate_sample(subjects[0], i, i, cfg["seed"], model.input_size).image for i in range(cfg["frames"])
        ]
    result = bench.fps_benchmark(model, machine, frames, batch=cfg["batch"], schema=schema)
    _say(bench.describe(result))
    if out:
        report.write_csv(result, out)
        _say(f"wrote {out}")


HANDLERS = {
    "synth": cmd_synth,
    "train-kp": cmd_train_kp,
    "train-svm": cmd_train_svm,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = resolve(args.command, flags, args.config)
        if cfg["preset"] == "paper":
            print(PAPER_WARNING, file=sys.stderr)
        HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"dfr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DFRError, OSError, ValueError) as exc:
        print(f"dfr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
