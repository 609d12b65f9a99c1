"""Frozen, CRC-guarded binary format for dense networks (``.nnfc``).

Little-endian layout::

    magic        4 bytes  b"NNFC" (policy) / b"NNCR" (critic sidecar)
    version      u32      1
    obs_dim      u32
    act_dim      u32
    num_layers   u32
    per layer    u32 in_dim, u32 out_dim, u32 activation (0 linear, 1 relu, 2 tanh)
    per layer    float32 weights (out x in, row-major), float32 bias (out)
    crc32        u32 over every preceding byte

Weights stay in the blob (read in place, like flash on a microcontroller);
only two ping-pong activation buffers of the widest layer need RAM.
"""

from __future__ import annotations

import struct
import zlib
from importlib import resources
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BudgetError, CorruptionError, FormatError
from .nn import MLP

POLICY_MAGIC = b"NNFC"
CRITIC_MAGIC = b"NNCR"
VERSION = 1
LINEAR, RELU, TANH = 0, 1, 2
ACTIVATION_NAMES = {LINEAR: "linear", RELU: "relu", TANH: "tanh"}
DEFAULT_BUDGET_BYTES = 50_000
MAX_LAYERS = 64
MAX_WIDTH = 1 << 16

_HEADER = struct.Struct("<4sIIII")
_LAYER = struct.Struct("<III")
_CRC = struct.Struct("<I")


def crc32(data: bytes, crc: int = 0) -> int:
    """Reflected CRC-32 (poly 0xEDB88320, init/xorout 0xFFFFFFFF).

    Pass the previous result as ``crc`` to continue a stream.
    """
    return zlib.crc32(data, crc) & 0xFFFFFFFF


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: int
    weights: np.ndarray  # (out, in) float32, read-only view into the blob
    bias: np.ndarray


@dataclass(frozen=True)
class ModelDescription:
    obs_dim: int
    act_dim: int
    layers: tuple
    blob: bytes
    magic: bytes = POLICY_MAGIC

    @property
    def max_width(self) -> int:
        return max([self.obs_dim] + [l.out_dim for l in self.layers])

    @property
    def file_bytes(self) -> int:
        return len(self.blob)

    @property
    def dims(self) -> tuple:
        return (self.layers[0].in_dim,) + tuple(l.out_dim for l in self.layers)

    @property
    def activations(self) -> tuple:
        return tuple(l.activation for l in self.layers)


def required_arena_bytes(max_width: int) -> int:
    return 4 * 2 * max_width


def pack_layers(weights, biases, activations, magic: bytes = POLICY_MAGIC) -> bytes:
    if not (len(weights) == len(biases) == len(activations)) or not weights:
        raise FormatError("weights, biases and activations must be non-empty and equally long")
    header = [_HEADER.pack(magic, VERSION, weights[0].shape[1], weights[-1].shape[0], len(weights))]
    payload = []
    for w, b, act in zip(weights, biases, activations):
        w = np.asarray(w, dtype="<f4")
        b = np.asarray(b, dtype="<f4")
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise FormatError(f"bad layer shapes {w.shape}, {b.shape}")
        header.append(_LAYER.pack(w.shape[1], w.shape[0], act))
        payload.append(np.ascontiguousarray(w).tobytes())
        payload.append(np.ascontiguousarray(b).tobytes())
    body = b"".join(header + payload)
    return body + _CRC.pack(crc32(body))


def export(policy: MLP) -> bytes:
    """Serialize a policy MLP: ReLU hidden layers, tanh output head.

    The exploration log-std and the critic are not part of the blob.
    """
    acts = [RELU] * (policy.num_layers - 1) + [TANH]
    return pack_layers(policy.weights, policy.biases, acts, POLICY_MAGIC)


def export_critic(critic: MLP) -> bytes:
    acts = [RELU] * (critic.num_layers - 1) + [LINEAR]
    return pack_layers(critic.weights, critic.biases, acts, CRITIC_MAGIC)


def parse(blob: bytes, magic: bytes = POLICY_MAGIC) -> ModelDescription:
    """Validate and decode a blob without any budget check."""
    blob = bytes(blob)
    n = len(blob)
    if n < _HEADER.size + _CRC.size:
        raise FormatError(f"blob too short ({n} bytes)")
    got_magic, version, obs_dim, act_dim, num_layers = _HEADER.unpack_from(blob, 0)
    if got_magic != magic:
        raise FormatError(f"bad magic {got_magic!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if not 1 <= num_layers <= MAX_LAYERS:
        raise FormatError(f"bad layer count {num_layers}")
    off = _HEADER.size
    if n < off + num_layers * _LAYER.size + _CRC.size:
        raise FormatError("blob truncated inside layer table")
    table = []
    payload_bytes = 0
    for _ in range(num_layers):
        in_dim, out_dim, act = _LAYER.unpack_from(blob, off)
        off += _LAYER.size
        if not (0 < in_dim <= MAX_WIDTH and 0 < out_dim <= MAX_WIDTH):
            raise FormatError(f"bad layer dims {in_dim}x{out_dim}")
        if act not in ACTIVATION_NAMES:
            raise FormatError(f"unknown activation code {act}")
        table.append((in_dim, out_dim, act))
        payload_bytes += 4 * (in_dim * out_dim + out_dim)
    expected = off + payload_bytes + _CRC.size
    if n != expected:
        raise FormatError(f"blob is {n} bytes, header implies {expected}")
    (stored_crc,) = _CRC.unpack_from(blob, n - _CRC.size)
    if crc32(blob[: n - _CRC.size]) != stored_crc:
        raise CorruptionError("CRC mismatch")
    if table[0][0] != obs_dim or table[-1][1] != act_dim:
        raise FormatError("first/last layer dims disagree with obs_dim/act_dim")
    for (_, out_a, _), (in_b, _, _) in zip(table[:-1], table[1:]):
        if out_a != in_b:
            raise FormatError(f"layer chain broken: {out_a} -> {in_b}")
    layers = []
    for in_dim, out_dim, act in table:
        w = np.frombuffer(blob, dtype="<f4", count=in_dim * out_dim, offset=off).reshape(out_dim, in_dim)
        off += 4 * in_dim * out_dim
        b = np.frombuffer(blob, dtype="<f4", count=out_dim, offset=off)
        off += 4 * out_dim
        layers.append(LayerSpec(in_dim, out_dim, act, w, b))
    return ModelDescription(obs_dim, act_dim, tuple(layers), blob, magic)


def load(blob: bytes, budget_bytes: int | None = DEFAULT_BUDGET_BYTES, magic: bytes = POLICY_MAGIC):
    """Validate a blob and size its activation arena.

    Returns:
        (description, required_arena_bytes)

    Raises:
        FormatError: bad magic/version/dims or truncation.
        CorruptionError: CRC mismatch.
        BudgetError: file + arena exceeds ``budget_bytes``.
    """
    desc = parse(blob, magic)
    arena = required_arena_bytes(desc.max_width)
    if budget_bytes is not None and desc.file_bytes + arena > budget_bytes:
        raise BudgetError(
            f"static footprint {desc.file_bytes + arena} bytes exceeds budget {budget_bytes} bytes"
        )
    return desc, arena


def footprint(desc: ModelDescription) -> int:
    return desc.file_bytes + required_arena_bytes(desc.max_width)


def to_mlp(desc: ModelDescription) -> MLP:
    """Rebuild a float32 training-side MLP (output head without tanh)."""
    net = MLP(desc.dims, dtype=np.float32)
    for k, layer in enumerate(desc.layers):
        net.weights[k][...] = layer.weights
        net.biases[k][...] = layer.bias
    return net


def reexport(desc: ModelDescription) -> bytes:
    return pack_layers([l.weights for l in desc.layers], [l.bias for l in desc.layers],
                       [l.activation for l in desc.layers], desc.magic)


def save(blob: bytes, path: str | Path) -> None:
    Path(path).write_bytes(blob)


def bundled_policy_path() -> Path:
    """Policy trained with the packaged configs and seed, shipped for demos."""
    return Path(str(resources.files("neuralfc") / "data" / "policy.nnfc"))


def read(path: str | Path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    return path.read_bytes()
