"""CSV and SVG output for evaluation reports.

Every CSV uses the same four columns, ``section,key,field,value``, one value
per row. Reals are written with ``repr`` so reading a file back gives the
exact in-memory report. An empty report writes the header only.
"""
import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from dfr.data.disguises import DISGUISE_IDS
from dfr.errors import FormatError, ParameterError
from dfr.eval.bench import FpsReport, Timing
from dfr.eval.metrics import HISTOGRAM_EDGES, ClassificationReport, KeypointErrorReport
from dfr.keypoints import KEYPOINT_NAMES

CSV_HEADER = ["section", "key", "field", "value"]
KINDS = ("keypoints", "classification", "fps")


def _num(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _bin_label(k):
    lo, hi = HISTOGRAM_EDGES[k], HISTOGRAM_EDGES[k + 1]
    return f"[{_num(lo)},{_num(hi)})"


def report_kind(report):
    if isinstance(report, KeypointErrorReport):
        return "keypoints"
    if isinstance(report, ClassificationReport):
        return "classification"
    if isinstance(report, FpsReport):
        return "fps"
    raise ParameterError(f"unsupported report type {type(report).__name__}")


def report_rows(report):
    kind = report_kind(report)
    rows = []
    if kind == "keypoints":
        if report.n_samples == 0:
            return rows
        rows += [
            ("summary", "", "n_samples", _num(report.n_samples)),
            ("summary", "", "mae", _num(report.mae)),
            ("summary", "", "threshold_px", _num(report.threshold)),
            ("summary", "", "accuracy", _num(report.accuracy)),
        ]
        for k, name in enumerate(KEYPOINT_NAMES):
            rows.append(("keypoint", name, "mean_error_px", _num(report.per_keypoint_error[k])))
        for k, name in enumerate(KEYPOINT_NAMES):
            for b in range(len(HISTOGRAM_EDGES) - 1):
                rows.append(("histogram", name, _bin_label(b), _num(report.histogram[k, b])))
        for t, acc in report.curve:
            rows.append(("curve", _num(t), "accuracy", _num(acc)))
    elif kind == "classification":
        if report.total == 0:
            return rows
        rows += [
            ("summary", "", "total", _num(report.total)),
            ("summary", "", "accuracy", _num(report.accuracy)),
        ]
        for d, (correct, total) in report.per_disguise.items():
            rows.append(("disguise", d, "correct", _num(correct)))
            rows.append(("disguise", d, "total", _num(total)))
            rows.append(("disguise", d, "accuracy", _num(correct / total) if total else ""))
        for i, t in enumerate(report.labels):
            rows.append(("label", t, "index", _num(i)))
        for i, t in enumerate(report.labels):
            for j, p in enumerate(report.labels):
                if report.confusion[i, j]:
                    rows.append(("confusion", t, p, _num(report.confusion[i, j])))
        for name, simple, complex_ in report.reference:
            rows.append(("reference", name, "simple_pct", _num(simple)))
            rows.append(("reference", name, "complex_pct", _num(complex_)))
    else:
        rows.append(("summary", "", "batch", _num(report.batch)))
        for key, t in (("inference", report.inference), ("with_preprocessing", report.with_preprocessing)):
            rows += [
                ("timing", key, "frames", _num(t.frames)),
                ("timing", key, "wall_time_s", _num(t.wall_time)),
                ("timing", key, "seconds_per_frame", _num(t.seconds_per_frame)),
                ("timing", key, "fps", _num(t.fps)),
            ]
    return rows


def write_csv(report, path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            writer.writerows(report_rows(report))
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc


def read_csv(path, kind):
    """Rebuild a report of ``kind`` from a CSV written by :func:`write_csv`."""
    if kind not in KINDS:
        raise ParameterError(f"kind must be one of {KINDS}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise FormatError(f"{path}: unexpected header {header}", "header")
        rows = [r for r in reader if r]
    if kind == "keypoints":
        return _read_keypoints(rows)
    if kind == "classification":
        return _read_classification(rows)
    return _read_fps(rows)


def _read_keypoints(rows):
    from dfr.eval.metrics import keypoint_errors

    if not rows:
        return keypoint_errors([], [])
    summary = {f: v for s, _, f, v in rows if s == "summary"}
    err = {k: float(v) for s, k, _, v in rows if s == "keypoint"}
    nb = len(HISTOGRAM_EDGES) - 1
    hist = np.zeros((len(KEYPOINT_NAMES), nb), dtype=int)
    labels = [_bin_label(b) for b in range(nb)]
    for s, k, f, v in rows:
        if s == "histogram":
            hist[KEYPOINT_NAMES.index(k), labels.index(f)] = int(v)
    curve = [(float(k), float(v)) for s, k, _, v in rows if s == "curve"]
    return KeypointErrorReport(
        n_samples=int(summary["n_samples"]),
        per_keypoint_error=np.array([err[n] for n in KEYPOINT_NAMES]),
        histogram=hist,
        mae=float(summary["mae"]),
        threshold=float(summary["threshold_px"]),
        accuracy=float(summary["accuracy"]),
        curve=curve,
    )


def _read_classification(rows):
    from dfr.eval.metrics import classification_report

    if not rows:
        return classification_report([], [], [])
    labels = [k for s, k, _, _ in sorted((r for r in rows if r[0] == "label"), key=lambda r: int(r[3]))]
    pos = {lab: i for i, lab in enumerate(labels)}
    confusion = np.zeros((len(labels), len(labels)), dtype=int)
    per, reference = {}, {}
    for s, k, f, v in rows:
        if s == "confusion":
            confusion[pos[k], pos[f]] = int(v)
        elif s == "disguise" and f in ("correct", "total"):
            c, n = per.get(k, (0, 0))
            per[k] = (int(v), n) if f == "correct" else (c, int(v))
        elif s == "reference":
            reference.setdefault(k, {})[f] = float(v)
    ref = tuple((name, vals["simple_pct"], vals["complex_pct"]) for name, vals in reference.items())
    return ClassificationReport(labels, confusion, per, ref)


def _read_fps(rows):
    summary = {f: v for s, _, f, v in rows if s == "summary"}
    timing = {}
    for s, k, f, v in rows:
        if s == "timing":
            timing.setdefault(k, {})[f] = v
    return FpsReport(
        int(summary["batch"]),
        *(Timing(int(timing[k]["frames"]), float(timing[k]["wall_time_s"])) for k in ("inference", "with_preprocessing")),
    )


# -- SVG ------------------------------------------------------------------------


def _svg_document(width, height, body, title):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def keypoint_svg(report: KeypointErrorReport):
    """Horizontal bars of mean error per keypoint, keypoints down the y axis."""
    left, top, bar_h, gap, plot_w = 130, 34, 14, 4, 360
    names = list(KEYPOINT_NAMES)
    vals = [0.0 if math.isnan(v) else float(v) for v in report.per_keypoint_error]
    vmax = max(vals + [1e-9])
    scale = plot_w / (math.ceil(vmax) or 1)
    height = top + len(names) * (bar_h + gap) + 40
    width = left + plot_w + 60
    body = []
    for i, (name, v) in enumerate(zip(names, vals)):
        y = top + i * (bar_h + gap)
        body.append(f'<text x="{left - 6}" y="{y + bar_h - 3}" text-anchor="end">{escape(name)}</text>')
        body.append(f'<rect x="{left}" y="{y}" width="{v * scale:.2f}" height="{bar_h}" fill="#4a7ebb"/>')
        body.append(f'<text x="{left + v * scale + 4:.2f}" y="{y + bar_h - 3}">{v:.2f}</text>')
    axis_y = top + len(names) * (bar_h + gap)
    body.append(f'<line x1="{left}" y1="{axis_y}" x2="{left + plot_w}" y2="{axis_y}" stroke="black"/>')
    body.append(f'<text x="{left + plot_w / 2}" y="{axis_y + 28}" text-anchor="middle">mean Euclidean error (px)</text>')
    return _svg_document(width, height, body, "Average prediction error per keypoint")


def classification_svg(report: ClassificationReport):
    """Vertical bars of accuracy per disguise."""
    ids = [d for d in report.per_disguise if d in DISGUISE_IDS] + [d for d in report.per_disguise if d not in DISGUISE_IDS]
    left, top, plot_h, bar_w, gap = 50, 34, 220, 34, 14
    width = left + len(ids) * (bar_w + gap) + 20
    height = top + plot_h + 110
    base = top + plot_h
    body = [f'<line x1="{left}" y1="{base}" x2="{width - 10}" y2="{base}" stroke="black"/>']
    for tick in (0, 25, 50, 75, 100):
        y = base - plot_h * tick / 100
        body.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{tick}%</text>')
    for i, d in enumerate(ids):
        acc = report.disguise_accuracy(d)
        x = left + gap / 2 + i * (bar_w + gap)
        if not math.isnan(acc):
            h = plot_h * acc
            body.append(f'<rect x="{x:.1f}" y="{base - h:.2f}" width="{bar_w}" height="{h:.2f}" fill="#c0504d"/>')
            body.append(f'<text x="{x + bar_w / 2:.1f}" y="{base - h - 4:.2f}" text-anchor="middle">{100 * acc:.0f}</text>')
        body.append(
            f'<text x="{x + bar_w / 2:.1f}" y="{base + 12}" text-anchor="end" '
            f'transform="rotate(-45 {x + bar_w / 2:.1f} {base + 12})">{escape(d)}</text>'
        )
    return _svg_document(width, height, body, f"Classification accuracy per disguise (overall {100 * report.accuracy:.1f}%)")


def write_svg(report, path):
    kind = report_kind(report)
    if kind == "keypoints":
        text = keypoint_svg(report)
    elif kind == "classification":
        text = classification_svg(report)
    else:
        raise ParameterError("no SVG rendering for throughput reports")
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc


def emit_report(report, path, format="csv"):
    if format == "csv":
        write_csv(report, path)
    elif format == "svg":
        write_svg(report, path)
    else:
        raise ParameterError(f"format must be 'csv' or 'svg', got {format!r}")
    return Path(path)
