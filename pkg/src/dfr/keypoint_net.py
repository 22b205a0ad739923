"""Keypoint regression network: presets, training, inference, model files."""
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from dfr.errors import ConfigurationError, DimensionError, FormatError, ParameterError
from dfr.keypoints import KEYPOINTS_VERSION, N_KEYPOINTS, KeypointSet
from dfr.nn import layers as L
from dfr.nn.optim import Adam
from dfr.nn.tensor import Tensor, mae_loss

log = logging.getLogger(__name__)

MAGIC = b"DFRM"
FORMAT_VERSION = 1
DTYPE = np.float32


@dataclass
class ModelConfig:
    """Architecture and seed of a keypoint regressor.

    ``conv_schedule`` lists the feature extractor layers (conv, relu and
    maxpool specs). A flatten, the hidden dense layers with relu, and a
    linear output layer of ``output_count`` units are appended by
    :meth:`layer_specs`.
    """

    input_size: int
    conv_schedule: list
    fc_schedule: tuple
    output_count: int = 2 * N_KEYPOINTS
    seed: int = 0
    preset: str = "custom"

    def validate(self):
        if self.output_count != 2 * N_KEYPOINTS:
            raise ConfigurationError(f"output_count must be {2 * N_KEYPOINTS}, got {self.output_count}")
        if self.input_size < 1:
            raise ConfigurationError(f"input_size must be positive, got {self.input_size}")
        if any(u < 1 for u in self.fc_schedule):
            raise ConfigurationError(f"dense widths must be positive, got {self.fc_schedule}")

    @property
    def n_conv(self):
        return sum(s.kind == "conv" for s in self.conv_schedule)

    @property
    def n_dense(self):
        return len(self.fc_schedule) + 1

    def layer_specs(self):
        specs = list(self.conv_schedule) + [L.flatten()]
        for units in self.fc_schedule:
            specs += [L.dense(units), L.relu()]
        specs.append(L.dense(self.output_count))
        return specs


def _conv_blocks(widths, counts):
    specs = []
    for width, count in zip(widths, counts):
        for _ in range(count):
            specs += [L.conv(width, kernel=3, stride=1, padding=1), L.relu()]
        specs.append(L.maxpool(2))
    return specs


def paper_config(seed=0):
    """14 conv layers in four blocks (3/3/4/4) and 4 dense layers on 227x227 input."""
    return ModelConfig(
        input_size=227,
        conv_schedule=_conv_blocks((32, 64, 128, 256), (3, 3, 4, 4)),
        fc_schedule=(1024, 512, 256),
        seed=seed,
        preset="paper",
    )


def desk_config(seed=0):
    """4 conv layers, each followed by 2x2 pooling, and one hidden dense layer on 96x96 input."""
    return ModelConfig(
        input_size=96,
        conv_schedule=_conv_blocks((16, 32, 64, 64), (1, 1, 1, 1)),
        fc_schedule=(128,),
        seed=seed,
        preset="desk",
    )


PRESETS = {"paper": paper_config, "desk": desk_config}


def preset_config(name, seed=0):
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](seed)


@dataclass
class TrainedModel:
    config: ModelConfig
    network: L.Sequential
    history: list = field(default_factory=list)  # (epoch, mean training loss)
    optimizer: Adam = None

    @property
    def input_size(self):
        return self.config.input_size

    def parameters(self):
        return self.network.parameters()


def build_model(config: ModelConfig) -> TrainedModel:
    config.validate()
    network = L.Sequential(
        config.layer_specs(), (1, config.input_size, config.input_size), seed=config.seed, dtype=DTYPE
    )
    if network.output_shape != (config.output_count,):
        raise ConfigurationError(f"network emits {network.output_shape}, expected ({config.output_count},)")
    return TrainedModel(config, network)


def _as_batch(images, size):
    arr = np.asarray(images)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.shape[1:] != (size, size):
        raise DimensionError(f"expected {size}x{size} images, got {arr.shape[1:]}")
    return (arr.astype(DTYPE) / DTYPE(255.0))[:, None]


def cosine_lr(base_lr, epoch, total_epochs, floor=0.01):
    """Learning rate for 1-based ``epoch``, decaying from ``base_lr`` to ``floor * base_lr``."""
    if total_epochs <= 1:
        return base_lr
    frac = (epoch - 1) / (total_epochs - 1)
    return base_lr * (floor + (1 - floor) * 0.5 * (1 + np.cos(np.pi * frac)))


def train(model: TrainedModel, images, targets, epochs, batch_size=50, lr=1e-3, schedule="cosine", progress=None):
    """Fit ``model`` to keypoint targets with MAE loss and Adam.

    ``images`` is ``(N, S, S)`` uint8, ``targets`` is ``(N, 40)`` pixel
    coordinates; targets are divided by the input size for regression.
    Each epoch visits the samples in an order drawn from a generator seeded
    by the model seed and the epoch number, so a fixed dataset and seed give
    an identical history. ``schedule`` is ``"cosine"`` (decay over this
    call's epochs) or ``"constant"``.
    """
    images = np.asarray(images)
    targets = np.asarray(targets, dtype=np.float64)
    if len(images) == 0:
        raise ParameterError("cannot train on an empty dataset")
    if len(images) != len(targets):
        raise DimensionError(f"{len(images)} images but {len(targets)} targets")
    if targets.shape[1:] != (model.config.output_count,):
        raise DimensionError(f"targets must have {model.config.output_count} columns, got {targets.shape[1:]}")
    if batch_size < 1 or epochs < 0:
        raise ParameterError(f"batch_size must be >= 1 and epochs >= 0, got {batch_size}, {epochs}")
    size = model.input_size
    x_all = _as_batch(images, size)
    y_all = (targets / size).astype(DTYPE)
    if model.optimizer is None:
        model.optimizer = Adam(model.parameters(), lr=lr)
    opt = model.optimizer
    start = model.history[-1][0] if model.history else 0
    n = len(x_all)
    if schedule not in ("cosine", "constant"):
        raise ParameterError(f"unknown schedule {schedule!r}")
    for k, epoch in enumerate(range(start + 1, start + epochs + 1), 1):
        opt.state.lr = cosine_lr(lr, k, epochs) if schedule == "cosine" else lr
        order = np.random.default_rng([model.config.seed, epoch]).permutation(n)
        total = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            xb, yb = x_all[idx], y_all[idx]
            opt.zero_grad()
            loss = mae_loss(model.network(Tensor(xb)), yb)
            loss.backward()
            opt.step()
            total += float(loss.data) * len(xb)
        mean = total / n
        model.history.append((epoch, mean))
        if progress is not None:
            progress(epoch, mean)
        log.debug("epoch %d loss %.6f", epoch, mean)
    return model


def predict_flat(model: TrainedModel, images, batch_size=64):
    """Raw ``(N, 40)`` pixel predictions, clamped to the image rectangle."""
    size = model.input_size
    x = _as_batch(images, size)
    out = np.concatenate(
        [model.network.predict(x[lo:lo + batch_size]) for lo in range(0, len(x), batch_size)]
    )
    return np.clip(out.astype(np.float64) * size, 0, size)


def predict_keypoints(model: TrainedModel, image) -> KeypointSet:
    image = np.asarray(image)
    if image.ndim != 2:
        raise DimensionError(f"expected a single 2-d image, got shape {image.shape}")
    return KeypointSet.from_flat(predict_flat(model, image[None])[0])


# -- model files --------------------------------------------------------------
#
# layout: MAGIC | u16 version | u32 metadata length | metadata (utf-8 key=value
# lines) | u32 array count | per array: u32 element count + float32 LE data


def _config_to_meta(model):
    cfg = model.config
    lines = [
        f"keypoints={KEYPOINTS_VERSION}",
        f"preset={cfg.preset}",
        f"input_size={cfg.input_size}",
        f"output_count={cfg.output_count}",
        f"seed={cfg.seed}",
        "conv_schedule=" + ";".join(s.describe() for s in cfg.conv_schedule),
        "fc_schedule=" + ",".join(str(u) for u in cfg.fc_schedule),
        "history=" + ";".join(f"{e}:{loss!r}" for e, loss in model.history),
    ]
    return "\n".join(lines) + "\n"


def _parse_spec(text):
    text = text.strip()
    if "(" not in text:
        return L.LayerSpec(text)
    kind, args = text[:-1].split("(", 1)
    params = {}
    for item in args.split(","):
        key, value = item.split("=")
        params[key] = int(value)
    return L.LayerSpec(kind, params)


def _meta_to_config(meta):
    kv = {}
    for line in meta.splitlines():
        if line:
            key, _, value = line.partition("=")
            kv[key] = value
    layout = kv.get("keypoints", KEYPOINTS_VERSION)
    if layout != KEYPOINTS_VERSION:
        raise FormatError(
            f"model was trained for keypoint layout {layout}, this build uses {KEYPOINTS_VERSION}", "metadata"
        )
    conv = [_parse_spec(t) for t in kv["conv_schedule"].split(";") if t]
    fc = tuple(int(u) for u in kv["fc_schedule"].split(",") if u)
    cfg = ModelConfig(
        input_size=int(kv["input_size"]),
        conv_schedule=conv,
        fc_schedule=fc,
        output_count=int(kv["output_count"]),
        seed=int(kv["seed"]),
        preset=kv.get("preset", "custom"),
    )
    history = []
    for item in kv.get("history", "").split(";"):
        if item:
            e, loss = item.split(":")
            history.append((int(e), float(loss)))
    return cfg, history


def save_model(model: TrainedModel, path):
    meta = _config_to_meta(model).encode("utf-8")
    params = model.parameters()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            data = np.ascontiguousarray(p.data, dtype="<f4")
            fh.write(struct.pack("<I", data.size))
            fh.write(data.tobytes())


def _read(fh, n, section):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file in {section}: wanted {n} bytes, got {len(buf)}", section)
    return buf


def load_model(path) -> TrainedModel:
    """Read a model file; nothing is returned unless every section parses."""
    with open(path, "rb") as fh:
        magic = _read(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", "magic")
        (version,) = struct.unpack("<H", _read(fh, 2, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported model format version {version} (reader supports {FORMAT_VERSION})", "version")
        (meta_len,) = struct.unpack("<I", _read(fh, 4, "metadata"))
        try:
            meta = _read(fh, meta_len, "metadata").decode("utf-8")
            config, history = _meta_to_config(meta)
            model = build_model(config)
        except FormatError:
            raise
        except (KeyError, ValueError, UnicodeDecodeError) as exc:
            raise FormatError(f"invalid metadata: {exc}", "metadata") from exc
        params = model.parameters()
        (count,) = struct.unpack("<I", _read(fh, 4, "parameters"))
        if count != len(params):
            raise FormatError(f"file holds {count} arrays, config needs {len(params)}", "parameters")
        for i, p in enumerate(params):
            (size,) = struct.unpack("<I", _read(fh, 4, f"parameters[{i}]"))
            if size != p.data.size:
                raise FormatError(f"array {i} has {size} elements, expected {p.data.size}", f"parameters[{i}]")
            arr = np.frombuffer(_read(fh, 4 * size, f"parameters[{i}]"), dtype="<f4")
            p.data[...] = arr.reshape(p.data.shape)
        if fh.read(1):
            raise FormatError("trailing bytes after parameters", "parameters")
    model.history = history
    return model
