"""Encoder and classifier networks plus checkpoint persistence.

Encoder: three 3x3 valid convolutions with channel widths 1->16->16->32, a
2x2 max-pool between the second and third, ReLU after each convolution, and
a dense map from the flattened feature volume to a 64-dimensional embedding
(for a 39x10 input the spatial chain is 37x8 -> 35x6 -> 17x3 -> 15x1).

Classifier: dense 64 -> 512 -> 128 -> 2 with GELU after the hidden layers.

Parameters are float64 tensors initialized uniformly at +-1/sqrt(fan_in).
Checkpoints are a text header (format version, architecture shapes, config,
seed) followed by one flat block of little-endian 64-bit floats holding
every parameter in declared order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, conv2d, dense, gelu, maxpool2, relu, reshape

D_EMBED = 64
CHECKPOINT_MAGIC = "tslab-checkpoint v1"
_BINARY_MARKER = b"\n[params]\n"


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


@dataclass
class EncoderParams:
    input_shape: tuple              # (rows, cols) of one sample matrix
    params: dict = field(default_factory=dict)   # name -> Tensor, declared order

    @property
    def d_e(self) -> int:
        return D_EMBED


@dataclass
class ClassifierParams:
    d_in: int = D_EMBED
    params: dict = field(default_factory=dict)


def conv_chain_shapes(input_shape) -> list[tuple]:
    """Spatial shapes after each encoder stage; raises if the input is too small."""
    h, w = input_shape
    shapes = [(h, w)]
    for stage in ("conv", "conv", "pool", "conv"):
        if stage == "conv":
            h, w = h - 2, w - 2
        else:
            h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ValueError(f"input {input_shape} too small for the encoder stack")
        shapes.append((h, w))
    return shapes


def init_encoder(input_shape, seed: int) -> EncoderParams:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 101]))
    shapes = conv_chain_shapes(input_shape)
    flat = shapes[-1][0] * shapes[-1][1] * 32
    spec = [
        ("conv1.w", (16, 1, 3, 3), 1 * 9), ("conv1.b", (16,), 1 * 9),
        ("conv2.w", (16, 16, 3, 3), 16 * 9), ("conv2.b", (16,), 16 * 9),
        ("conv3.w", (32, 16, 3, 3), 16 * 9), ("conv3.b", (32,), 16 * 9),
        ("fc.w", (flat, D_EMBED), flat), ("fc.b", (D_EMBED,), flat),
    ]
    params = {name: Tensor(_uniform_init(rng, shape, fan), requires_grad=True)
              for name, shape, fan in spec}
    return EncoderParams(input_shape=tuple(input_shape), params=params)


def init_classifier(seed: int, d_in: int = D_EMBED) -> ClassifierParams:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 202]))
    spec = [
        ("fc1.w", (d_in, 512), d_in), ("fc1.b", (512,), d_in),
        ("fc2.w", (512, 128), 512), ("fc2.b", (128,), 512),
        ("fc3.w", (128, 2), 128), ("fc3.b", (2,), 128),
    ]
    params = {name: Tensor(_uniform_init(rng, shape, fan), requires_grad=True)
              for name, shape, fan in spec}
    return ClassifierParams(d_in=d_in, params=params)


def set_trainable(container, trainable: bool) -> None:
    for t in container.params.values():
        t.requires_grad = trainable


def encode(enc: EncoderParams, x) -> Tensor:
    """Forward pass: (B, rows, cols) or (B, 1, rows, cols) -> (B, 64)."""
    if not isinstance(x, Tensor):
        x = Tensor(x)
    data_shape = x.data.shape
    if x.data.ndim == 3:
        x = reshape(x, (data_shape[0], 1, data_shape[1], data_shape[2]))
    p = enc.params
    h = relu(conv2d(x, p["conv1.w"], p["conv1.b"]))
    h = relu(conv2d(h, p["conv2.w"], p["conv2.b"]))
    h = maxpool2(h)
    h = relu(conv2d(h, p["conv3.w"], p["conv3.b"]))
    flat = h.data.shape[1] * h.data.shape[2] * h.data.shape[3]
    h = reshape(h, (h.data.shape[0], flat))
    return dense(h, p["fc.w"], p["fc.b"])


def classify(clf: ClassifierParams, z) -> Tensor:
    if not isinstance(z, Tensor):
        z = Tensor(z)
    p = clf.params
    h = gelu(dense(z, p["fc1.w"], p["fc1.b"]))
    h = gelu(dense(h, p["fc2.w"], p["fc2.b"]))
    return dense(h, p["fc3.w"], p["fc3.b"])


def predict_logits(enc: EncoderParams, clf: ClassifierParams, x: np.ndarray,
                   batch: int = 256) -> np.ndarray:
    """Inference without graph construction."""
    was_enc = [t.requires_grad for t in enc.params.values()]
    was_clf = [t.requires_grad for t in clf.params.values()]
    set_trainable(enc, False)
    set_trainable(clf, False)
    try:
        outs = []
        for k in range(0, len(x), batch):
            z = encode(enc, x[k:k + batch])
            outs.append(classify(clf, z).data)
        return np.concatenate(outs, axis=0)
    finally:
        for t, f in zip(enc.params.values(), was_enc):
            t.requires_grad = f
        for t, f in zip(clf.params.values(), was_clf):
            t.requires_grad = f


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, named_parts: dict, meta: dict) -> None:
    """``named_parts``: part name -> EncoderParams/ClassifierParams."""
    lines = [CHECKPOINT_MAGIC]
    for key, value in meta.items():
        lines.append(f"{key} = {value}")
    blobs = []
    for part, container in named_parts.items():
        if isinstance(container, EncoderParams):
            lines.append(f"part {part} encoder {container.input_shape[0]} {container.input_shape[1]}")
        else:
            lines.append(f"part {part} classifier {container.d_in}")
        for name, t in container.params.items():
            shape = " ".join(str(s) for s in t.data.shape)
            lines.append(f"tensor {part}.{name} {shape}")
            blobs.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    payload = "\n".join(lines).encode() + _BINARY_MARKER + b"".join(blobs)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (parts, meta); parts maps name -> EncoderParams/ClassifierParams."""
    raw = Path(path).read_bytes()
    pos = raw.find(_BINARY_MARKER)
    if pos < 0:
        raise ValueError(f"{path}: not a checkpoint file")
    header = raw[:pos].decode().splitlines()
    blob = raw[pos + len(_BINARY_MARKER):]
    if header[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: unsupported checkpoint version {header[0]!r}")

    meta: dict = {}
    parts: dict = {}
    tensor_specs: list[tuple[str, str, tuple]] = []
    for line in header[1:]:
        if line.startswith("part "):
            fields = line.split()
            if fields[2] == "encoder":
                parts[fields[1]] = EncoderParams(input_shape=(int(fields[3]), int(fields[4])))
            else:
                parts[fields[1]] = ClassifierParams(d_in=int(fields[3]))
        elif line.startswith("tensor "):
            fields = line.split()
            part, name = fields[1].split(".", 1)
            tensor_specs.append((part, name, tuple(int(s) for s in fields[2:])))
        elif " = " in line:
            key, _, value = line.partition(" = ")
            meta[key] = value

    offset = 0
    for part, name, shape in tensor_specs:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += count * 8
        # parameters live in float32 (the storage block stays 64-bit)
        parts[part].params[name] = Tensor(arr.astype(np.float32), requires_grad=True)
    if offset != len(blob):
        raise ValueError(f"{path}: parameter block size mismatch")
    return parts, meta
