"""End-to-end throughput measurement: image -> keypoints -> features -> label."""
import time
from dataclasses import dataclass

import numpy as np

from dfr import keypoint_net
from dfr.data.preprocess import resize_image
from dfr.errors import ParameterError
from dfr.geometry import extract_features, load_schema
from dfr.keypoints import KeypointSet


@dataclass
class Timing:
    frames: int
    wall_time: float

    @property
    def seconds_per_frame(self):
        return self.wall_time / self.frames

    @property
    def fps(self):
        return self.frames / self.wall_time

    def describe(self):
        return (
            f"{self.frames} frames in {self.wall_time:.3f} seconds: "
            f"{self.seconds_per_frame:.4f} seconds/frame, {self.fps:.1f} frames/second"
        )


@dataclass
class FpsReport:
    """Model-only timing and timing that includes resizing each raw frame."""

    batch: int
    inference: Timing
    with_preprocessing: Timing

    @property
    def frames(self):
        return self.inference.frames

    @property
    def wall_time(self):
        return self.inference.wall_time

    @property
    def seconds_per_frame(self):
        return self.inference.seconds_per_frame

    @property
    def fps(self):
        return self.inference.fps


def pipeline(model, svm_model, images, schema, visibility=None):
    """Classify a batch of model-sized images; returns the predicted labels."""
    flat = keypoint_net.predict_flat(model, images)
    rows = []
    for i, pts in enumerate(flat):
        vis = None if visibility is None else visibility[i]
        rows.append(extract_features(KeypointSet.from_flat(pts, vis), schema).values)
    return svm_model.predict_many(np.stack(rows))


def _timed(run, batches, clock):
    start = clock()
    for b in batches:
        run(b)
    elapsed = clock() - start
    if not elapsed > 0:
        raise ParameterError(f"clock reported non-positive elapsed time {elapsed}")
    return elapsed


def fps_benchmark(model, svm_model, frames, batch=50, schema=None, clock=time.perf_counter, warmup=True):
    """Time the full pipeline over ``frames`` in batches of ``batch``.

    One untimed warm-up pass over the first batch runs before each
    measurement. ``clock`` is read exactly twice per measurement, so a
    scripted clock gives exact, reproducible numbers.
    """
    if len(frames) == 0:
        raise ParameterError("no frames to benchmark")
    if batch < 1:
        raise ParameterError(f"batch must be >= 1, got {batch}")
    schema = schema or load_schema()
    size = model.input_size
    raw = [np.asarray(f) for f in frames]
    ready = np.stack([f if f.shape == (size, size) else resize_image(f, size) for f in raw])
    n = len(raw)
    ready_batches = [ready[i:i + batch] for i in range(0, n, batch)]
    raw_batches = [raw[i:i + batch] for i in range(0, n, batch)]

    def infer(b):
        pipeline(model, svm_model, b, schema)

    def preprocess_and_infer(b):
        pipeline(model, svm_model, np.stack([resize_image(f, size) for f in b]), schema)

    if warmup:
        infer(ready_batches[0])
    t_infer = _timed(infer, ready_batches, clock)
    if warmup:
        preprocess_and_infer(raw_batches[0])
    t_pre = _timed(preprocess_and_infer, raw_batches, clock)
    return FpsReport(batch, Timing(n, t_infer), Timing(n, t_pre))


def describe(report: FpsReport):
    return "\n".join(
        [
            f"inference only:     {report.inference.describe()}",
            f"with preprocessing: {report.with_preprocessing.describe()}",
        ]
    )
