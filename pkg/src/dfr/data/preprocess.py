"""Resizing with proportional keypoint rescaling, and stratified splitting."""
import math

import numpy as np
from PIL import Image

from dfr.errors import ParameterError, StratificationError
from dfr.keypoints import KeypointSet


def _target_shape(target):
    if isinstance(target, (tuple, list)):
        w, h = int(target[0]), int(target[1])
    else:
        w = h = int(target)
    if w < 1 or h < 1:
        raise ParameterError(f"target size must be >= 1, got {target}")
    return w, h


def resize_image(image, target):
    """Bilinear resize of a 2-d image to ``target`` (side or ``(width, height)``)."""
    w, h = _target_shape(target)
    image = np.asarray(image)
    if image.shape[:2] == (h, w):
        return image.copy()
    if image.dtype == np.uint8:
        return np.asarray(Image.fromarray(image).resize((w, h), Image.BILINEAR))
    resized = Image.fromarray(image.astype(np.float32), mode="F").resize((w, h), Image.BILINEAR)
    return np.asarray(resized).astype(image.dtype)


def resize_with_keypoints(image, kps: KeypointSet, target):
    """Resize ``image`` and scale each keypoint coordinate by the same per-axis ratio."""
    w, h = _target_shape(target)
    image = np.asarray(image)
    orig_h, orig_w = image.shape[:2]
    scale = np.array([w / orig_w, h / orig_h])
    return resize_image(image, (w, h)), KeypointSet(kps.points * scale, kps.visible.copy())


def split(dataset, train_fraction, seed=0, key=lambda s: s.subject_id):
    """Stratified train/test split.

    Each subject's samples are shuffled with a generator seeded by ``seed``
    and ``round((1 - train_fraction) * n)`` of them (at least one, at most
    ``n - 1``) go to the test partition. Both partitions keep the original
    dataset order.
    """
    if not 0 < train_fraction < 1:
        raise ParameterError(f"train_fraction must be in (0, 1), got {train_fraction}")
    groups = {}
    for i, sample in enumerate(dataset):
        groups.setdefault(key(sample), []).append(i)
    rng = np.random.default_rng(seed)
    test_idx = set()
    for subject in sorted(groups):
        members = groups[subject]
        if len(members) < 2:
            raise StratificationError(f"subject {subject!r} has {len(members)} sample(s); need at least 2")
        n_test = math.floor((1 - train_fraction) * len(members) + 0.5)
        n_test = min(max(n_test, 1), len(members) - 1)
        order = rng.permutation(len(members))
        test_idx.update(members[k] for k in order[:n_test])
    train = [s for i, s in enumerate(dataset) if i not in test_idx]
    test = [s for i, s in enumerate(dataset) if i in test_idx]
    return train, test
