"""Keypoint geometry: distances, slopes, inter-line angles and feature vectors.

Feature vectors hold distance ratios followed by unsigned inter-line
angles. Both are similarity invariants, so translating, rotating or
uniformly scaling a face leaves its features unchanged.
"""
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from dfr.errors import ConfigurationError, DimensionError, FormatError, ParameterError, VerticalLineError
from dfr.keypoints import CANONICAL_TEMPLATE, INDEX, N_KEYPOINTS, KeypointSet

DEFAULT_SCHEMA = "default-v1"


def euclidean_distance(p1, p2) -> float:
    return math.hypot(p1[0] - p2[0], p1[1] - p2[1])


def slope(p1, p2) -> float:
    """Rise over run of the line through ``p1`` and ``p2``.

    Raises :class:`VerticalLineError` when the line is vertical; use
    :func:`angle_between_lines` for angles, which has no such case.
    """
    dx = p2[0] - p1[0]
    if dx == 0:
        raise VerticalLineError(f"vertical line through x={p1[0]}")
    return (p2[1] - p1[1]) / dx


def angle_between_lines(line_a, line_b) -> float:
    """Unsigned intersection angle of two lines, in degrees within [0, 90].

    Computed from direction vectors as ``atan2(|cross|, |dot|)``, which equals
    ``|atan((m1 - m2) / (1 + m1 m2))|`` wherever the slope form is defined and
    stays well defined for vertical and perpendicular lines.
    """
    (a0, a1), (b0, b1) = line_a, line_b
    ux, uy = a1[0] - a0[0], a1[1] - a0[1]
    vx, vy = b1[0] - b0[0], b1[1] - b0[1]
    if (ux == 0 and uy == 0) or (vx == 0 and vy == 0):
        raise ParameterError("a line needs two distinct endpoints")
    cross = ux * vy - uy * vx
    dot = ux * vx + uy * vy
    return math.degrees(math.atan2(abs(cross), abs(dot)))


def distance_ratio(pair_a, pair_b):
    """``|pair_a| / |pair_b|``, or ``None`` when the denominator is zero."""
    den = euclidean_distance(*pair_b)
    if den == 0:
        return None
    return euclidean_distance(*pair_a) / den


@dataclass(frozen=True)
class FeatureSchema:
    """Which ratios and angles make up a feature vector.

    Each ratio is ``((a, b), (c, d))`` meaning ``|ab| / |cd|``; each angle is
    ``((a, b), (c, d))`` meaning the angle between line ``ab`` and line ``cd``.
    """

    version: str
    ratio_pairs: tuple
    angle_pairs: tuple

    def __len__(self):
        return len(self.ratio_pairs) + len(self.angle_pairs)

    def names(self):
        out = [f"ratio:{a}-{b}/{c}-{d}" for (a, b), (c, d) in self.ratio_pairs]
        out += [f"angle:{a}-{b}|{c}-{d}" for (a, b), (c, d) in self.angle_pairs]
        return out

    def validate(self):
        for entry in self.ratio_pairs + self.angle_pairs:
            for name in (*entry[0], *entry[1]):
                if name not in INDEX:
                    raise ConfigurationError(f"schema {self.version} references unknown keypoint {name!r}")
        tmpl = CANONICAL_TEMPLATE
        for (a, b), (c, d) in self.ratio_pairs:
            if euclidean_distance(tmpl[INDEX[c]], tmpl[INDEX[d]]) == 0:
                raise ConfigurationError(f"degenerate ratio denominator {c}-{d} in schema {self.version}")
        for (a, b), (c, d) in self.angle_pairs:
            if a == b or c == d:
                raise ConfigurationError(f"degenerate line in angle {a}-{b}|{c}-{d}")
        return self

    @property
    def template_values(self):
        return _template_values(self)


def parse_schema(text, origin="<string>"):
    version = None
    ratios, angles = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, _, rest = line.partition(" ")
        try:
            if kind == "version":
                version = rest.strip()
            elif kind in ("ratio", "angle"):
                sep = "/" if kind == "ratio" else "|"
                left, right = rest.split(sep)
                a, b = left.split()
                c, d = right.split()
                (ratios if kind == "ratio" else angles).append(((a, b), (c, d)))
            else:
                raise ValueError(f"unknown entry {kind!r}")
        except ValueError as exc:
            raise FormatError(f"{origin}:{lineno}: {exc}", f"line {lineno}") from exc
    if not version:
        raise FormatError(f"{origin}: missing version line", "version")
    return FeatureSchema(version, tuple(ratios), tuple(angles)).validate()


def load_schema(path=None) -> FeatureSchema:
    """Load a schema file; ``None`` loads the packaged default."""
    if path is None:
        text = resources.files("dfr.schema").joinpath(DEFAULT_SCHEMA).read_text(encoding="utf-8")
        return parse_schema(text, DEFAULT_SCHEMA)
    path = Path(path)
    return parse_schema(path.read_text(encoding="utf-8"), str(path))


_TEMPLATE_CACHE = {}


def _raw_features(points, schema):
    vals = []
    for pa, pb in schema.ratio_pairs:
        r = distance_ratio(
            (points[INDEX[pa[0]]], points[INDEX[pa[1]]]),
            (points[INDEX[pb[0]]], points[INDEX[pb[1]]]),
        )
        vals.append(math.nan if r is None else r)
    for la, lb in schema.angle_pairs:
        a = (points[INDEX[la[0]]], points[INDEX[la[1]]])
        b = (points[INDEX[lb[0]]], points[INDEX[lb[1]]])
        try:
            vals.append(angle_between_lines(a, b))
        except ParameterError:
            vals.append(math.nan)
    return np.array(vals, dtype=np.float64)


def _template_values(schema):
    key = (schema.version, schema.ratio_pairs, schema.angle_pairs)
    if key not in _TEMPLATE_CACHE:
        _TEMPLATE_CACHE[key] = _raw_features(CANONICAL_TEMPLATE, schema)
    return _TEMPLATE_CACHE[key]


def _entry_indices(schema):
    return [
        [INDEX[n] for n in (*first, *second)]
        for first, second in schema.ratio_pairs + schema.angle_pairs
    ]


@dataclass
class FeatureVector:
    """Feature values with ``mask[i]`` true when entry ``i`` was measured.

    Unmeasured entries (an occluded or degenerate keypoint) hold the
    canonical-template value.
    """

    values: np.ndarray
    mask: np.ndarray

    def __len__(self):
        return len(self.values)


def extract_features(kps: KeypointSet, schema: FeatureSchema = None) -> FeatureVector:
    schema = load_schema() if schema is None else schema
    if kps.points.shape != (N_KEYPOINTS, 2):
        raise DimensionError(f"expected {N_KEYPOINTS} keypoints")
    values = _raw_features(kps.points, schema)
    mask = np.array([bool(kps.visible[idx].all()) for idx in _entry_indices(schema)])
    mask &= np.isfinite(values)
    values = np.where(mask, values, schema.template_values)
    return FeatureVector(values, mask)


def feature_matrix(keypoint_sets, schema: FeatureSchema = None):
    """Stack feature vectors of many keypoint sets into ``(values, masks)`` arrays."""
    schema = load_schema() if schema is None else schema
    fvs = [extract_features(k, schema) for k in keypoint_sets]
    if not fvs:
        return np.zeros((0, len(schema))), np.zeros((0, len(schema)), dtype=bool)
    return np.stack([f.values for f in fvs]), np.stack([f.mask for f in fvs])
