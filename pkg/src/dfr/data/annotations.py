"""Annotation CSV and on-disk dataset layout.

A dataset directory holds ``annotations.csv``, ``images/*.png`` and
``manifest.json``. The CSV has one row per sample::

    image_path,subject_id,disguise_id,viewpoint,x_<kp>,y_<kp>,v_<kp>,...

with the 20 keypoints in ``keypoints-v1`` order. Coordinates are written
with ``repr`` so they read back bit-exactly; visibility is ``1`` or ``0``.
"""
import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from dfr.data.synth import Sample
from dfr.errors import FormatError, ParseError
from dfr.keypoints import KEYPOINT_NAMES, KEYPOINTS_VERSION, KeypointSet

BASE_COLUMNS = ["image_path", "subject_id", "disguise_id", "viewpoint"]
KEYPOINT_COLUMNS = [f"{axis}_{name}" for name in KEYPOINT_NAMES for axis in ("x", "y", "v")]
HEADER = BASE_COLUMNS + KEYPOINT_COLUMNS
ANNOTATIONS_FILE = "annotations.csv"
MANIFEST_FILE = "manifest.json"
IMAGES_DIR = "images"


@dataclass
class Annotation:
    image_path: str
    subject_id: str
    disguise_id: str
    viewpoint: float
    keypoints: KeypointSet

    def __eq__(self, other):
        if not isinstance(other, Annotation):
            return NotImplemented
        return (
            self.image_path == other.image_path
            and self.subject_id == other.subject_id
            and self.disguise_id == other.disguise_id
            and self.viewpoint == other.viewpoint
            and self.keypoints == other.keypoints
        )


def annotation_of(sample: Sample) -> Annotation:
    return Annotation(sample.image_path, sample.subject_id, sample.disguise_id, sample.viewpoint, sample.annotation)


def annotation_row(ann: Annotation):
    row = [ann.image_path, ann.subject_id, ann.disguise_id, repr(float(ann.viewpoint))]
    for (x, y), v in zip(ann.keypoints.points, ann.keypoints.visible):
        row += [repr(float(x)), repr(float(y)), "1" if v else "0"]
    return row


def save_annotations(records, path):
    """Write samples or :class:`Annotation` records to ``path``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for rec in records:
            writer.writerow(annotation_row(rec if isinstance(rec, Annotation) else annotation_of(rec)))


def _number(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row, column) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite value {text!r}", row, column)
    return value


def load_annotations(path):
    """Parse an annotation CSV into :class:`Annotation` records.

    Row numbers in errors are file line numbers (the header is row 1).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header row", 1, "") from None
        missing = [c for c in HEADER if c not in header]
        if missing:
            raise ParseError(f"missing column(s) {missing}", 1, missing[0])
        col = {name: header.index(name) for name in HEADER}
        records = []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                n_coords = sum(1 for c in header[: len(row)] if c[:2] in ("x_", "y_"))
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)} ({n_coords} coordinates, need {2 * len(KEYPOINT_NAMES)})",
                    rowno,
                    header[len(row)] if len(row) < len(header) else "<extra>",
                )
            pts, vis = [], []
            for name in KEYPOINT_NAMES:
                x = _number(row[col[f"x_{name}"]], rowno, f"x_{name}")
                y = _number(row[col[f"y_{name}"]], rowno, f"y_{name}")
                flag = row[col[f"v_{name}"]].strip()
                if flag not in ("0", "1"):
                    raise ParseError(f"visibility must be 0 or 1, got {flag!r}", rowno, f"v_{name}")
                pts.append((x, y))
                vis.append(flag == "1")
            records.append(
                Annotation(
                    row[col["image_path"]],
                    row[col["subject_id"]],
                    row[col["disguise_id"]],
                    _number(row[col["viewpoint"]], rowno, "viewpoint"),
                    KeypointSet(pts, vis),
                )
            )
    return records


def save_dataset(samples, directory, manifest=None):
    """Write PNG images, the annotation CSV and a manifest under ``directory``."""
    directory = Path(directory)
    (directory / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(samples):
        s.image_path = f"{IMAGES_DIR}/{i:06d}.png"
        Image.fromarray(s.image).save(directory / s.image_path)
    save_annotations(samples, directory / ANNOTATIONS_FILE)
    meta = dict(manifest or {})
    meta.update(
        keypoints=KEYPOINTS_VERSION,
        count=len(samples),
        backgrounds=[s.background_id for s in samples],
    )
    with open(directory / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def load_manifest(directory):
    path = Path(directory) / MANIFEST_FILE
    if not path.exists():
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_dataset(directory):
    """Read a dataset directory back into :class:`Sample` objects."""
    directory = Path(directory)
    csv_path = directory / ANNOTATIONS_FILE
    if not csv_path.exists():
        raise FormatError(f"{csv_path} not found", "annotations")
    records = load_annotations(csv_path)
    backgrounds = load_manifest(directory).get("backgrounds", [])
    samples = []
    for i, rec in enumerate(records):
        img_path = directory / rec.image_path
        with Image.open(img_path) as im:
            image = np.asarray(im.convert("L"))
        bg = backgrounds[i] if i < len(backgrounds) else -1
        samples.append(Sample(image, rec.keypoints, rec.subject_id, rec.disguise_id, rec.viewpoint, bg, rec.image_path))
    return samples
