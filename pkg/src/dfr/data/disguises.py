"""Disguise combinations and the keypoints each accessory hides."""
from dataclasses import dataclass

from dfr.errors import ParameterError
from dfr.keypoints import INDEX

# keypoints hidden by each single accessory
ACCESSORY_OCCLUSION = {
    "beard": ("jaw_left", "jaw_right"),
    "cap": ("left_brow_outer", "left_brow_inner", "right_brow_inner", "right_brow_outer"),
    "glasses": ("left_eye_center", "right_eye_center"),
    "scarf": (
        "nose_tip",
        "left_nostril",
        "right_nostril",
        "mouth_left",
        "mouth_right",
        "upper_lip",
        "lower_lip",
        "jaw_left",
        "jaw_right",
    ),
}

# the ten combinations, in a fixed order used for cycling and for reports
DISGUISE_IDS = (
    "beard",
    "cap",
    "glasses",
    "scarf",
    "cap+glasses",
    "beard+glasses",
    "beard+cap",
    "scarf+glasses",
    "cap+scarf",
    "cap+glasses+scarf",
)
NO_DISGUISE = "none"


@dataclass(frozen=True)
class Disguise:
    id: str
    accessories: tuple
    occluded: frozenset

    @property
    def has_scarf(self):
        return "scarf" in self.accessories

    def visibility(self):
        vis = [True] * len(INDEX)
        for name in self.occluded:
            vis[INDEX[name]] = False
        return vis


def get_disguise(disguise_id: str) -> Disguise:
    if disguise_id == NO_DISGUISE:
        return Disguise(NO_DISGUISE, (), frozenset())
    if disguise_id not in DISGUISE_IDS:
        raise ParameterError(f"unknown disguise id {disguise_id!r}; expected one of {DISGUISE_IDS}")
    parts = tuple(disguise_id.split("+"))
    hidden = frozenset(name for part in parts for name in ACCESSORY_OCCLUSION[part])
    return Disguise(disguise_id, parts, hidden)
