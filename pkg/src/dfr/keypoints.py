"""The 20-point facial keypoint layout (``keypoints-v1``).

"left"/"right" refer to image left/right. Coordinates of the canonical
template live in a unit face frame: origin at the face centre, x to the
right, y downwards, face half-width roughly 0.7.
"""
from dataclasses import dataclass, field

import numpy as np

from dfr.errors import DimensionError

KEYPOINTS_VERSION = "keypoints-v1"

KEYPOINT_NAMES = (
    "left_brow_outer",
    "left_brow_inner",
    "right_brow_inner",
    "right_brow_outer",
    "left_eye_outer",
    "left_eye_inner",
    "right_eye_inner",
    "right_eye_outer",
    "left_eye_center",
    "right_eye_center",
    "nose_bridge",
    "nose_tip",
    "left_nostril",
    "right_nostril",
    "mouth_left",
    "mouth_right",
    "upper_lip",
    "lower_lip",
    "jaw_left",
    "jaw_right",
)
N_KEYPOINTS = len(KEYPOINT_NAMES)
INDEX = {name: i for i, name in enumerate(KEYPOINT_NAMES)}

CANONICAL_TEMPLATE = np.array(
    [
        (-0.58, -0.53),
        (-0.18, -0.55),
        (0.18, -0.55),
        (0.58, -0.53),
        (-0.52, -0.25),
        (-0.20, -0.25),
        (0.20, -0.25),
        (0.52, -0.25),
        (-0.36, -0.25),
        (0.36, -0.25),
        (0.00, -0.15),
        (0.00, 0.14),
        (-0.11, 0.19),
        (0.11, 0.19),
        (-0.28, 0.45),
        (0.28, 0.45),
        (0.00, 0.40),
        (0.00, 0.53),
        (-0.62, 0.52),
        (0.62, 0.52),
    ]
)


@dataclass
class KeypointSet:
    """20 ``(x, y)`` points in pixels with per-point visibility."""

    points: np.ndarray
    visible: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if self.points.shape != (N_KEYPOINTS, 2):
            raise DimensionError(f"expected {N_KEYPOINTS} keypoints, got {self.points.shape[0]}")
        if self.visible is None:
            self.visible = np.ones(N_KEYPOINTS, dtype=bool)
        self.visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if self.visible.shape != (N_KEYPOINTS,):
            raise DimensionError(f"expected {N_KEYPOINTS} visibility flags, got {self.visible.size}")

    names = KEYPOINT_NAMES

    def __getitem__(self, name):
        return self.points[INDEX[name]]

    def __eq__(self, other):
        if not isinstance(other, KeypointSet):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(self.visible, other.visible)

    def flat(self):
        """Coordinates as ``[x0, y0, x1, y1, ...]``."""
        return self.points.reshape(-1).copy()

    @classmethod
    def from_flat(cls, values, visible=None):
        return cls(np.asarray(values, dtype=np.float64).reshape(N_KEYPOINTS, 2), visible)

    def transformed(self, scale=1.0, angle_deg=0.0, shift=(0.0, 0.0), center=(0.0, 0.0)):
        """Rotate about ``center`` by ``angle_deg``, scale, then translate."""
        a = np.deg2rad(angle_deg)
        rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        c = np.asarray(center, dtype=np.float64)
        pts = (self.points - c) @ rot.T * scale + c + np.asarray(shift, dtype=np.float64)
        return KeypointSet(pts, self.visible.copy())
