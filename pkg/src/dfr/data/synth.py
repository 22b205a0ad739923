"""Procedural disguised-face dataset.

Faces are flat-shaded drawings of the keypoint geometry with occluder
shapes on top, composited over one of eight textured backgrounds. Every
sample draws from its own generator seeded by ``(seed, sample index)`` so
output never depends on generation order.
"""
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from dfr.data.disguises import DISGUISE_IDS, NO_DISGUISE, get_disguise
from dfr.errors import ParameterError
from dfr.keypoints import CANONICAL_TEMPLATE, INDEX, KeypointSet

VIEWPOINTS = (-20, -10, 0, 10, 20)
N_BACKGROUNDS = 8
FACE_SCALE = 0.44  # face-frame unit in image widths
SUPERSAMPLE = 4

# range (+/-) of each per-subject offset, in face-frame units
OFFSET_RANGES = {
    "eye_spacing": 0.12,
    "eye_width": 0.12,
    "eye_height": 0.14,
    "brow_height": 0.13,
    "brow_tilt": 0.05,
    "nose_length": 0.18,
    "nose_width": 0.08,
    "mouth_width": 0.22,
    "mouth_height": 0.12,
    "jaw_width": 0.22,
    "eye_tilt": 0.07,
    "bridge_height": 0.09,
}
MIN_SEPARATION = 0.08
N_CANDIDATES = 4096


@dataclass
class SubjectTemplate:
    subject_id: str
    offsets: dict

    def face_points(self):
        """The 20 keypoints in the unit face frame."""
        p = CANONICAL_TEMPLATE.copy()
        o = self.offsets
        left = [INDEX[n] for n in ("left_eye_outer", "left_eye_inner", "left_eye_center")]
        right = [INDEX[n] for n in ("right_eye_outer", "right_eye_inner", "right_eye_center")]
        p[left, 0] -= o["eye_spacing"]
        p[right, 0] += o["eye_spacing"]
        half = o["eye_width"] / 2
        p[INDEX["left_eye_outer"], 0] -= half
        p[INDEX["left_eye_inner"], 0] += half
        p[INDEX["right_eye_inner"], 0] -= half
        p[INDEX["right_eye_outer"], 0] += half
        p[left + right, 1] += o["eye_height"]
        p[[INDEX["left_eye_outer"], INDEX["right_eye_outer"]], 1] -= o["eye_tilt"]
        p[INDEX["nose_bridge"], 1] += o["bridge_height"]
        brows = [INDEX[n] for n in ("left_brow_outer", "left_brow_inner", "right_brow_inner", "right_brow_outer")]
        p[brows, 1] += o["eye_height"] - o["brow_height"]
        p[[INDEX["left_brow_inner"], INDEX["right_brow_inner"]], 1] += o["brow_tilt"]
        p[[INDEX["left_brow_outer"], INDEX["right_brow_outer"]], 1] -= o["brow_tilt"]
        nose = [INDEX[n] for n in ("nose_tip", "left_nostril", "right_nostril")]
        p[nose, 1] += o["nose_length"]
        p[INDEX["left_nostril"], 0] -= o["nose_width"]
        p[INDEX["right_nostril"], 0] += o["nose_width"]
        mouth = [INDEX[n] for n in ("mouth_left", "mouth_right", "upper_lip", "lower_lip")]
        p[mouth, 1] += o["mouth_height"] + 0.5 * o["nose_length"]
        p[INDEX["mouth_left"], 0] -= o["mouth_width"]
        p[INDEX["mouth_right"], 0] += o["mouth_width"]
        p[INDEX["jaw_left"], 0] -= o["jaw_width"]
        p[INDEX["jaw_right"], 0] += o["jaw_width"]
        return p


@dataclass
class Sample:
    image: np.ndarray  # (H, W) uint8 grayscale
    annotation: KeypointSet
    subject_id: str
    disguise_id: str
    viewpoint: float
    background_id: int
    image_path: str = field(default="")

    @property
    def size(self):
        return self.image.shape[0]


def make_subjects(n_subjects, seed):
    """Spread subjects over the offset box by farthest-point selection.

    Candidates are drawn uniformly from the box; each new subject is the
    candidate farthest (in range-normalized units) from those already
    chosen. Every pair ends up differing in at least one offset by
    ``MIN_SEPARATION``.
    """
    if n_subjects < 2:
        raise ParameterError(f"need at least 2 subjects, got {n_subjects}")
    rng = np.random.default_rng([seed, 0x5EED])
    names = list(OFFSET_RANGES)
    limits = np.array([OFFSET_RANGES[n] for n in names])
    pool = rng.uniform(-1.0, 1.0, size=(max(N_CANDIDATES, 4 * n_subjects), len(names)))
    chosen = [0]
    nearest = np.linalg.norm(pool - pool[0], axis=1)
    while len(chosen) < n_subjects:
        k = int(np.argmax(nearest))
        chosen.append(k)
        nearest = np.minimum(nearest, np.linalg.norm(pool - pool[k], axis=1))
    vectors = pool[chosen] * limits
    for i in range(n_subjects):
        for j in range(i):
            if np.max(np.abs(vectors[i] - vectors[j])) < MIN_SEPARATION:
                raise ParameterError(f"subjects {j} and {i} are too similar; use fewer subjects")
    return [
        SubjectTemplate(f"s{i:02d}", {n: float(v) for n, v in zip(names, vec)})
        for i, vec in enumerate(vectors)
    ]


def face_to_image(face_pts, size, viewpoint):
    """Map face-frame points to pixels, rotating by ``viewpoint`` about the face centre."""
    a = np.deg2rad(viewpoint)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return face_pts @ rot.T * (FACE_SCALE * size) + size / 2.0


def _background(kind, size, rng):
    yy, xx = np.mgrid[0:size, 0:size] / size
    lo, hi = sorted(rng.uniform(20, 235, size=2))
    period = rng.uniform(0.06, 0.2)
    phase = rng.uniform(0, 1)
    if kind == 0:
        img = np.full((size, size), (lo + hi) / 2)
    elif kind == 1:
        img = lo + (hi - lo) * xx
    elif kind == 2:
        img = np.where(((xx / period + phase) % 1) < 0.5, lo, hi)
    elif kind == 3:
        img = np.where(((yy / period + phase) % 1) < 0.5, lo, hi)
    elif kind == 4:
        img = np.where((np.floor(xx / period) + np.floor(yy / period)) % 2 == 0, lo, hi)
    elif kind == 5:
        img = np.where((((xx + yy) / period + phase) % 1) < 0.5, lo, hi)
    elif kind == 6:
        coarse = rng.uniform(lo, hi, size=(6, 6))
        img = np.asarray(Image.fromarray(coarse.astype(np.float32), mode="F").resize((size, size), Image.BICUBIC))
    else:
        r = np.hypot(xx - rng.uniform(0, 1), yy - rng.uniform(0, 1))
        img = np.where(((r / period + phase) % 1) < 0.5, lo, hi)
    return np.clip(img, 0, 255).astype(np.uint8)


def _ellipse(draw, to_px, center, rx, ry, fill, n=24):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = np.stack([center[0] + rx * np.cos(t), center[1] + ry * np.sin(t)], axis=1)
    draw.polygon([tuple(q) for q in to_px(pts)], fill=fill)


def _poly(draw, to_px, pts, fill=None, outline=None, width=1):
    xy = [tuple(q) for q in to_px(np.asarray(pts, dtype=np.float64))]
    if fill is not None:
        draw.polygon(xy, fill=fill)
    if outline is not None:
        draw.line(xy + [xy[0]], fill=outline, width=width)


def _line(draw, to_px, pts, fill, width):
    draw.line([tuple(q) for q in to_px(np.asarray(pts, dtype=np.float64))], fill=fill, width=width)


def render_face(face_pts, disguise, size, viewpoint, background_id, rng):
    """Draw one grayscale face image of ``size`` pixels."""
    big = size * SUPERSAMPLE
    canvas = Image.fromarray(_background(background_id, big, rng), mode="L")
    draw = ImageDraw.Draw(canvas)

    def to_px(pts):
        return face_to_image(np.atleast_2d(pts), big, viewpoint)

    p = {name: face_pts[i] for name, i in INDEX.items()}
    lw = max(1, big // 64)
    skin = int(rng.uniform(150, 200))
    dark = int(rng.uniform(20, 55))

    jl, jr = p["jaw_left"], p["jaw_right"]
    outline = [
        (-0.70, -0.30), (-0.62, -0.70), (-0.30, -0.90), (0.0, -0.94), (0.30, -0.90), (0.62, -0.70),
        (0.70, -0.30), (0.72, 0.10), tuple(jr), (0.34, 0.80), (0.0, 0.88), (-0.34, 0.80), tuple(jl),
        (-0.72, 0.10),
    ]
    _poly(draw, to_px, outline, fill=skin, outline=dark, width=lw)

    for side in ("left", "right"):
        _line(draw, to_px, [p[f"{side}_brow_outer"], p[f"{side}_brow_inner"]], dark, 3 * lw)
        outer, inner, centre = p[f"{side}_eye_outer"], p[f"{side}_eye_inner"], p[f"{side}_eye_center"]
        mid = (outer + inner) / 2
        half_h = 0.06
        eye = [outer, mid + (0, -half_h), inner, mid + (0, half_h)]
        _poly(draw, to_px, eye, fill=240, outline=dark, width=lw)
        _ellipse(draw, to_px, centre, 0.04, 0.04, fill=dark)

    _line(draw, to_px, [p["nose_bridge"], p["nose_tip"]], dark, lw)
    _line(draw, to_px, [p["left_nostril"], p["nose_tip"], p["right_nostril"]], dark, lw)
    for side in ("left", "right"):
        _ellipse(draw, to_px, p[f"{side}_nostril"], 0.03, 0.02, fill=dark)
    mouth = [p["mouth_left"], p["upper_lip"], p["mouth_right"], p["lower_lip"]]
    _poly(draw, to_px, mouth, fill=90, outline=dark, width=lw)

    acc = disguise.accessories
    if "beard" in acc:
        beard_tone = int(rng.uniform(35, 70))
        lower = max(p["lower_lip"][1], p["mouth_left"][1]) + 0.04
        beard = [
            (-0.78, 0.30), (-0.40, 0.38), (-0.36, lower), (0.36, lower), (0.40, 0.38), (0.78, 0.30),
            (jr[0] + 0.12, jr[1] + 0.10), (0.36, 0.92), (0.0, 1.0), (-0.36, 0.92), (jl[0] - 0.12, jl[1] + 0.10),
        ]
        _poly(draw, to_px, beard, fill=beard_tone)
    if "scarf" in acc:
        scarf_tone = int(rng.uniform(60, 220))
        top = min(p["nose_tip"][1], p["left_nostril"][1]) - 0.08
        scarf = [(-0.95, top), (0.95, top), (1.0, 1.1), (-1.0, 1.1)]
        _poly(draw, to_px, scarf, fill=scarf_tone, outline=dark, width=lw)
    if "glasses" in acc:
        for side in ("left", "right"):
            _ellipse(draw, to_px, p[f"{side}_eye_center"], 0.10, 0.075, fill=25)
        _line(draw, to_px, [p["left_eye_center"] + (0.10, 0), p["right_eye_center"] - (0.10, 0)], 25, lw)
    if "cap" in acc:
        cap_tone = int(rng.uniform(40, 230))
        brim = max(p["left_brow_outer"][1], p["right_brow_outer"][1], p["left_brow_inner"][1]) + 0.07
        cap = [(-0.85, brim), (0.85, brim), (0.80, -0.75), (0.40, -1.05), (-0.40, -1.05), (-0.80, -0.75)]
        _poly(draw, to_px, cap, fill=cap_tone, outline=dark, width=lw)

    small = canvas.resize((size, size), Image.BOX)
    img = np.asarray(small, dtype=np.float64)
    gain = rng.uniform(0.8, 1.15)
    img = img * gain + rng.normal(0.0, 3.0, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_sample(subject, index_in_subject, sample_index, seed, size, disguises=DISGUISE_IDS):
    rng = np.random.default_rng([seed, sample_index])
    disguise = get_disguise(disguises[index_in_subject % len(disguises)])
    viewpoint = float(rng.choice(VIEWPOINTS))
    background = int(rng.integers(N_BACKGROUNDS))
    face = subject.face_points()
    image = render_face(face, disguise, size, viewpoint, background, rng)
    pts = np.clip(face_to_image(face, size, viewpoint), 0, size)
    annotation = KeypointSet(pts, disguise.visibility())
    return Sample(image, annotation, subject.subject_id, disguise.id, viewpoint, background)


def generate_dataset(n_subjects, per_subject, seed=0, size=96, disguises=DISGUISE_IDS):
    """Synthesize ``n_subjects * per_subject`` annotated samples.

    Disguises cycle through ``disguises`` within each subject; viewpoints and
    backgrounds are drawn per sample.
    """
    if per_subject < 1:
        raise ParameterError(f"per_subject must be >= 1, got {per_subject}")
    if size < 16:
        raise ParameterError(f"image size must be >= 16, got {size}")
    for d in disguises:
        if d != NO_DISGUISE:
            get_disguise(d)
    subjects = make_subjects(n_subjects, seed)
    samples = []
    for s, subject in enumerate(subjects):
        for k in range(per_subject):
            samples.append(generate_sample(subject, k, s * per_subject + k, seed, size, tuple(disguises)))
    return samples
