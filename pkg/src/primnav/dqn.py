"""
The two-lane Q-network.

Lane 1 reads the 32x32 depth image through three convolutions and a dense layer;
lane 2 feeds each body-frame component of the relative position to its own small
dense sub-lane (x gets the wider one) before merging them. Both lanes are
concatenated and passed through the fusion head, which outputs one Q-value per
motion primitive.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from primnav.common import CheckpointError, InputValidationError, get_logger
from primnav.tensor_nn import (
    REAL,
    AdamState,
    LayerSpec,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    relu,
    relu_backward,
)

logger = get_logger(__name__)

ACTION_COUNT = 18
DEPTH_SIZE = 32
EXPECTED_PARAMETER_COUNT = 69_786

CONV_LAYERS = ("conv1", "conv2", "conv3")
POSITION_LANES = ("position_x", "position_y", "position_z")


def _build_architecture() -> dict[str, LayerSpec]:
    conv1 = LayerSpec.convolution((DEPTH_SIZE, DEPTH_SIZE, 1), filters=8, kernel_size=10, stride=2)
    conv2 = LayerSpec.convolution(conv1.output_shape, filters=16, kernel_size=6, stride=1)
    conv3 = LayerSpec.convolution(conv2.output_shape, filters=32, kernel_size=3, stride=1)
    flat = int(np.prod(conv3.output_shape))
    depth_dense = LayerSpec.dense(flat, 64)
    lanes = {
        "position_x": LayerSpec.dense(1, 16),
        "position_y": LayerSpec.dense(1, 8),
        "position_z": LayerSpec.dense(1, 8),
    }
    merge = LayerSpec.dense(sum(lane.output_shape[0] for lane in lanes.values()), 16)
    head_1 = LayerSpec.dense(depth_dense.output_shape[0] + merge.output_shape[0], 64)
    head_2 = LayerSpec.dense(64, 32)
    q_values = LayerSpec.dense(32, ACTION_COUNT, activation="none")
    return {
        "conv1": conv1,
        "conv2": conv2,
        "conv3": conv3,
        "depth_dense": depth_dense,
        **lanes,
        "position_merge": merge,
        "head_1": head_1,
        "head_2": head_2,
        "q_values": q_values,
    }


ARCHITECTURE = _build_architecture()


def architecture_fingerprint() -> list[list[Any]]:
    """Layer shape list stored in checkpoints: [name, kind, weight shape, bias shape]."""
    return [
        [name, spec.kind, list(spec.weight_shape), list(spec.bias_shape)]
        for name, spec in ARCHITECTURE.items()
    ]


@dataclass
class QNetworkParams:
    weights: dict[str, np.ndarray]
    biases: dict[str, np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases in architecture order: [w_conv1, b_conv1, w_conv2, ...]."""
        out = []
        for name in ARCHITECTURE:
            out.append(self.weights[name])
            out.append(self.biases[name])
        return out

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> QNetworkParams:
        names = list(ARCHITECTURE)
        return cls(
            weights={name: arrays[2 * n] for n, name in enumerate(names)},
            biases={name: arrays[2 * n + 1] for n, name in enumerate(names)},
        )

    @property
    def parameter_count(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> QNetworkParams:
        return QNetworkParams.from_arrays([a.copy() for a in self.arrays()])


def build_network(seed: int) -> QNetworkParams:
    rng = np.random.default_rng(seed)
    weights, biases = {}, {}
    for name, spec in ARCHITECTURE.items():
        weights[name], biases[name] = spec.init_params(rng)
    params = QNetworkParams(weights, biases)
    assert params.parameter_count == EXPECTED_PARAMETER_COUNT, params.parameter_count
    return params


@dataclass
class ForwardCache:
    depth: np.ndarray
    positions: np.ndarray
    activations: dict[str, np.ndarray] = field(default_factory=dict)


def _validate_inputs(depths: np.ndarray, positions: np.ndarray) -> None:
    if depths.shape[1:] != (DEPTH_SIZE, DEPTH_SIZE):
        raise InputValidationError(f"depth images must be {DEPTH_SIZE}x{DEPTH_SIZE}, got {depths.shape[1:]}")
    if positions.shape != (depths.shape[0], 3):
        raise InputValidationError(f"relative positions must be 3-vectors, got {positions.shape}")
    if not np.all(np.isfinite(depths)) or np.any(depths < 0.0) or np.any(depths > 1.0):
        raise InputValidationError("depth values must lie in [0, 1]")
    if not np.all(np.isfinite(positions)):
        raise InputValidationError("relative position must be finite")


def forward_batch(
    params: QNetworkParams, depths: np.ndarray, positions: np.ndarray, keep_cache: bool = False
) -> tuple[np.ndarray, ForwardCache | None]:
    """Q-values for a batch: depths (B, 32, 32), positions (B, 3) -> (B, 18)."""
    depths = np.asarray(depths, dtype=REAL)
    positions = np.asarray(positions, dtype=REAL)
    _validate_inputs(depths, positions)
    w, b = params.weights, params.biases
    acts: dict[str, np.ndarray] = {}

    x = depths[..., np.newaxis]
    for name in CONV_LAYERS:
        x = relu(conv2d_forward(x, w[name], b[name], ARCHITECTURE[name].stride))
        acts[name] = x
    flat = x.reshape(x.shape[0], -1)
    acts["flatten"] = flat
    acts["depth_dense"] = relu(dense_forward(flat, w["depth_dense"], b["depth_dense"]))

    lane_outputs = []
    for axis, name in enumerate(POSITION_LANES):
        acts[name] = relu(dense_forward(positions[:, axis : axis + 1], w[name], b[name]))
        lane_outputs.append(acts[name])
    acts["position_concat"] = np.concatenate(lane_outputs, axis=1)
    acts["position_merge"] = relu(dense_forward(acts["position_concat"], w["position_merge"], b["position_merge"]))

    acts["fused"] = np.concatenate([acts["depth_dense"], acts["position_merge"]], axis=1)
    acts["head_1"] = relu(dense_forward(acts["fused"], w["head_1"], b["head_1"]))
    acts["head_2"] = relu(dense_forward(acts["head_1"], w["head_2"], b["head_2"]))
    q = dense_forward(acts["head_2"], w["q_values"], b["q_values"])

    cache = ForwardCache(depths, positions, acts) if keep_cache else None
    return q, cache


def activation_pattern(params: QNetworkParams, depths: np.ndarray, positions: np.ndarray) -> bytes:
    """Packed on/off mask of every ReLU unit; constant within one linear region of the network."""
    _, cache = forward_batch(params, depths, positions, keep_cache=True)
    relu_layers = [*CONV_LAYERS, "depth_dense", *POSITION_LANES, "position_merge", "head_1", "head_2"]
    return b"".join(np.packbits(cache.activations[name] > 0.0).tobytes() for name in relu_layers)


def forward(params: QNetworkParams, depth: np.ndarray, relpos: np.ndarray) -> np.ndarray:
    """Q-values (18,) for one depth image and one body-frame relative position."""
    q, _ = forward_batch(params, np.asarray(depth)[np.newaxis], np.asarray(relpos)[np.newaxis])
    return q[0]


def backward(params: QNetworkParams, cache: ForwardCache, grad_q: np.ndarray) -> list[np.ndarray]:
    """Gradients of a loss w.r.t. every parameter, aligned with `params.arrays()`."""
    w, acts = params.weights, cache.activations
    grads: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    g, gw, gb = dense_backward(acts["head_2"], w["q_values"], grad_q)
    grads["q_values"] = (gw, gb)
    g, gw, gb = dense_backward(acts["head_1"], w["head_2"], relu_backward(acts["head_2"], g))
    grads["head_2"] = (gw, gb)
    g, gw, gb = dense_backward(acts["fused"], w["head_1"], relu_backward(acts["head_1"], g))
    grads["head_1"] = (gw, gb)

    depth_width = acts["depth_dense"].shape[1]
    g_depth, g_position = g[:, :depth_width], g[:, depth_width:]

    g, gw, gb = dense_backward(
        acts["position_concat"], w["position_merge"], relu_backward(acts["position_merge"], g_position)
    )
    grads["position_merge"] = (gw, gb)
    offset = 0
    for axis, name in enumerate(POSITION_LANES):
        width = acts[name].shape[1]
        lane_grad = relu_backward(acts[name], g[:, offset : offset + width])
        _, gw, gb = dense_backward(cache.positions[:, axis : axis + 1], w[name], lane_grad)
        grads[name] = (gw, gb)
        offset += width

    g, gw, gb = dense_backward(acts["flatten"], w["depth_dense"], relu_backward(acts["depth_dense"], g_depth))
    grads["depth_dense"] = (gw, gb)
    g = g.reshape(acts["conv3"].shape)

    conv_inputs = {"conv1": cache.depth[..., np.newaxis], "conv2": acts["conv1"], "conv3": acts["conv2"]}
    for name in reversed(CONV_LAYERS):
        g = relu_backward(acts[name], g)
        g, gw, gb = conv2d_backward(
            conv_inputs[name], w[name], g, ARCHITECTURE[name].stride, need_input_grad=name != "conv1"
        )
        grads[name] = (gw, gb)

    out = []
    for name in ARCHITECTURE:
        out.extend(grads[name])
    return out


def select_action(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; greedy ties resolve to the lowest action index."""
    if rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def td_target(reward: float, next_q: np.ndarray, gamma: float, terminal: bool) -> float:
    if terminal:
        return float(reward)
    return float(reward + gamma * np.max(next_q))


def td_targets(rewards: np.ndarray, next_q: np.ndarray, gamma: float, terminals: np.ndarray) -> np.ndarray:
    """Batched `td_target`: next_q has shape (B, 18)."""
    bootstrap = gamma * np.max(next_q, axis=1)
    return np.where(terminals, rewards, rewards + bootstrap)


# ---------------------------------------------------------------------------
# Checkpoints

MAGIC = b"PRIMNAV-DQN"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: QNetworkParams
    optimizer: AdamState | None = None
    metadata: dict[str, Any] = field(default_factory=dict)


def _json_block(payload: Any) -> bytes:
    encoded = json.dumps(payload, sort_keys=True).encode("utf-8")
    return struct.pack("<I", len(encoded)) + encoded


def _blob(arrays: list[np.ndarray]) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)


def save_checkpoint(
    params: QNetworkParams,
    optimizer: AdamState | None = None,
    metadata: dict[str, Any] | None = None,
) -> bytes:
    """
    Encode a checkpoint: magic, u32 version, architecture fingerprint, metadata,
    little-endian float64 parameter blob, optional Adam state.
    """
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        _json_block(architecture_fingerprint()),
        _json_block(metadata or {}),
        struct.pack("<Q", params.parameter_count),
        _blob(params.arrays()),
    ]
    if optimizer is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", 1))
        parts.append(
            struct.pack(
                "<Q4d",
                optimizer.step_count,
                optimizer.learning_rate,
                optimizer.beta1,
                optimizer.beta2,
                optimizer.epsilon_hat,
            )
        )
        parts.append(_blob(optimizer.first_moment))
        parts.append(_blob(optimizer.second_moment))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"checkpoint truncated while reading {what}")
        chunk = bytes(self.data[self.offset : self.offset + size])
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def json_block(self, what: str) -> Any:
        (size,) = self.unpack("<I", what)
        try:
            return json.loads(self.take(size, what).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt {what}: {exc}") from exc

    def arrays(self, shapes: list[tuple[int, ...]], what: str) -> list[np.ndarray]:
        out = []
        for shape in shapes:
            count = int(np.prod(shape))
            raw = self.take(8 * count, what)
            out.append(np.frombuffer(raw, dtype="<f8").astype(REAL).reshape(shape))
        return out


def load_checkpoint(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("not a primnav checkpoint (bad magic string)")
    (version,) = reader.unpack("<I", "format version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}, expected {FORMAT_VERSION}")
    fingerprint = reader.json_block("architecture fingerprint")
    if fingerprint != architecture_fingerprint():
        raise CheckpointError("checkpoint architecture fingerprint does not match this network")
    metadata = reader.json_block("metadata")
    (count,) = reader.unpack("<Q", "parameter count")
    if count != EXPECTED_PARAMETER_COUNT:
        raise CheckpointError(f"checkpoint holds {count} parameters, expected {EXPECTED_PARAMETER_COUNT}")

    shapes = []
    for spec in ARCHITECTURE.values():
        shapes.extend([spec.weight_shape, spec.bias_shape])
    params = QNetworkParams.from_arrays(reader.arrays(shapes, "parameter blob"))

    (has_optimizer,) = reader.unpack("<B", "optimizer flag")
    optimizer = None
    if has_optimizer == 1:
        step_count, learning_rate, beta1, beta2, epsilon_hat = reader.unpack("<Q4d", "optimizer header")
        optimizer = AdamState(
            first_moment=reader.arrays(shapes, "optimizer first moment"),
            second_moment=reader.arrays(shapes, "optimizer second moment"),
            step_count=step_count,
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon_hat=epsilon_hat,
        )
    elif has_optimizer != 0:
        raise CheckpointError(f"corrupt optimizer flag {has_optimizer}")
    if reader.offset != len(reader.data):
        raise CheckpointError(f"{len(reader.data) - reader.offset} trailing bytes after checkpoint")
    return Checkpoint(params, optimizer, metadata)


def write_checkpoint(path: Path, params: QNetworkParams, optimizer: AdamState | None = None, metadata=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(save_checkpoint(params, optimizer, metadata))
    logger.info(f"Checkpoint written to {path}")
    return path


def read_checkpoint(path: Path) -> Checkpoint:
    return load_checkpoint(Path(path).read_bytes())
