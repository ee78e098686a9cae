"""Small numpy neural network engine: Conv1D / Dense / ReLU / Flatten.

Activations are channels-last, ``(batch, length, channels)`` for the
convolutional part and ``(batch, features)`` after ``Flatten``.  Conv1D
kernels are stored as ``(kernel_size, in_channels, out_channels)`` and Dense
weights as ``(in_features, out_features)``.

Only the pieces needed to train the models in :mod:`tinylidarnet.zoo` are
here: exact reverse-mode gradients, Huber loss and Adam.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np


class ShapeError(ValueError):
    """Input or parameter shape does not match the network spec."""


@dataclass(frozen=True)
class Conv1D:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel_size, self.stride) < 1:
            raise ValueError(f"Conv1D dims must be >= 1: {self}")

    def output_length(self, length: int) -> int:
        if length < self.kernel_size:
            raise ShapeError(
                f"Conv1D kernel {self.kernel_size} longer than input length {length}"
            )
        return (length - self.kernel_size) // self.stride + 1


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int

    def __post_init__(self):
        if min(self.in_features, self.out_features) < 1:
            raise ValueError(f"Dense dims must be >= 1: {self}")


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[Conv1D, Dense, ReLU, Flatten]
_KINDS = {"Conv1D": Conv1D, "Dense": Dense, "ReLU": ReLU, "Flatten": Flatten}


@dataclass(frozen=True)
class NetSpec:
    """Ordered layer recipe plus the expected input length.

    The input is a single-channel range array; a network starting with a
    Dense layer consumes it flat.
    """

    name: str
    input_length: int
    layers: tuple = ()

    def learnable(self) -> list[tuple[int, LayerSpec]]:
        return [(i, l) for i, l in enumerate(self.layers) if isinstance(l, (Conv1D, Dense))]

    def param_shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        """(weight_shape, bias_shape) per learnable layer, in order."""
        shapes = []
        for _, layer in self.learnable():
            if isinstance(layer, Conv1D):
                shapes.append(
                    ((layer.kernel_size, layer.in_channels, layer.out_channels), (layer.out_channels,))
                )
            else:
                shapes.append(((layer.in_features, layer.out_features), (layer.out_features,)))
        return shapes

    def activation_shapes(self) -> list[tuple[int, ...]]:
        """Per-sample shape after each layer; validates the whole chain."""
        shape: tuple[int, ...] = (self.input_length, 1)
        flat = False
        out = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv1D):
                if flat:
                    raise ShapeError(f"layer {i} Conv1D after Flatten")
                if shape[1] != layer.in_channels:
                    raise ShapeError(
                        f"layer {i} Conv1D expects {layer.in_channels} channels, got {shape[1]}"
                    )
                shape = (layer.output_length(shape[0]), layer.out_channels)
            elif isinstance(layer, Dense):
                n = int(np.prod(shape))
                if n != layer.in_features:
                    raise ShapeError(
                        f"layer {i} Dense expects {layer.in_features} features, got {n}"
                    )
                shape = (layer.out_features,)
                flat = True
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
                flat = True
            out.append(shape)
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_length": self.input_length,
            "layers": [{"kind": type(l).__name__, **l.__dict__} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        layers = []
        for item in d["layers"]:
            item = dict(item)
            kind = item.pop("kind")
            layers.append(_KINDS[kind](**item))
        return cls(d["name"], int(d["input_length"]), tuple(layers))


@dataclass
class NetParams:
    """Weights and biases for a :class:`NetSpec`, flattened as [W0, b0, W1, b1, ...]."""

    spec: NetSpec
    tensors: list = field(default_factory=list)

    def __post_init__(self):
        expected = [s for pair in self.spec.param_shapes() for s in pair]
        if len(expected) != len(self.tensors):
            raise ShapeError(f"expected {len(expected)} tensors, got {len(self.tensors)}")
        for k, (shape, t) in enumerate(zip(expected, self.tensors)):
            if tuple(t.shape) != shape:
                raise ShapeError(f"tensor {k}: expected shape {shape}, got {tuple(t.shape)}")

    @property
    def dtype(self):
        return self.tensors[0].dtype if self.tensors else np.dtype(np.float32)

    def layer_params(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.tensors[2 * k], self.tensors[2 * k + 1]

    def astype(self, dtype) -> "NetParams":
        return NetParams(self.spec, [t.astype(dtype) for t in self.tensors])

    def copy(self) -> "NetParams":
        return NetParams(self.spec, [t.copy() for t in self.tensors])


def init_params(spec: NetSpec, seed: int = 0, dtype=np.float32) -> NetParams:
    """He-uniform for layers followed by ReLU, Xavier-uniform otherwise; zero biases."""
    rng = np.random.default_rng(seed)
    tensors = []
    for (idx, layer), (wshape, bshape) in zip(spec.learnable(), spec.param_shapes()):
        if isinstance(layer, Conv1D):
            fan_in = layer.kernel_size * layer.in_channels
            fan_out = layer.kernel_size * layer.out_channels
        else:
            fan_in, fan_out = layer.in_features, layer.out_features
        followed_by_relu = idx + 1 < len(spec.layers) and isinstance(spec.layers[idx + 1], ReLU)
        if followed_by_relu:
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        tensors.append(rng.uniform(-limit, limit, size=wshape).astype(dtype))
        tensors.append(np.zeros(bshape, dtype=dtype))
    return NetParams(spec, tensors)


def zero_params(spec: NetSpec, dtype=np.float32) -> NetParams:
    return NetParams(spec, [np.zeros(s, dtype=dtype) for pair in spec.param_shapes() for s in pair])


# ---------------------------------------------------------------------------
# forward / backward


def _windows(x: np.ndarray, kernel_size: int, stride: int) -> np.ndarray:
    """(N, L, C) -> (N, L_out, k, C) strided view."""
    win = np.lib.stride_tricks.sliding_window_view(x, kernel_size, axis=1)
    # sliding_window_view puts the window axis last: (N, L-k+1, C, k)
    return win[:, ::stride].transpose(0, 1, 3, 2)


def _check_input(spec: NetSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[1] != spec.input_length or x.shape[2] != 1:
        raise ShapeError(
            f"{spec.name}: input layer expects (batch, {spec.input_length}), got {tuple(np.shape(x))}"
        )
    return x


@dataclass
class Tape:
    """Cached per-layer inputs from :func:`forward_train`."""

    inputs: list = field(default_factory=list)
    output: np.ndarray | None = None


def _run(params: NetParams, x: np.ndarray, tape: Tape | None) -> np.ndarray:
    spec = params.spec
    h = _check_input(spec, x).astype(params.dtype, copy=False)
    k = 0
    for layer in spec.layers:
        if tape is not None:
            tape.inputs.append(h)
        if isinstance(layer, Conv1D):
            w, b = params.layer_params(k)
            k += 1
            if h.shape[2] != layer.in_channels:
                raise ShapeError(f"Conv1D expects {layer.in_channels} channels, got {h.shape[2]}")
            win = _windows(h, layer.kernel_size, layer.stride)
            n, lout = win.shape[:2]
            cols = win.reshape(n * lout, -1)
            h = (cols @ w.reshape(-1, layer.out_channels) + b).reshape(n, lout, layer.out_channels)
        elif isinstance(layer, Dense):
            w, b = params.layer_params(k)
            k += 1
            h = h.reshape(h.shape[0], -1)
            if h.shape[1] != layer.in_features:
                raise ShapeError(f"Dense expects {layer.in_features} features, got {h.shape[1]}")
            h = h @ w + b
        elif isinstance(layer, ReLU):
            h = np.maximum(h, 0)
        elif isinstance(layer, Flatten):
            h = h.reshape(h.shape[0], -1)
    return h


def forward(params: NetParams, x: np.ndarray) -> np.ndarray:
    """Batched inference. ``x`` is ``(batch, input_length)`` or a single scan."""
    out = _run(params, x, None)
    return out[0] if np.ndim(x) == 1 else out


def forward_train(params: NetParams, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    tape = Tape()
    tape.output = _run(params, x, tape)
    return tape.output, tape


def backward(params: NetParams, tape: Tape | None, grad_out: np.ndarray) -> list[np.ndarray]:
    """Gradients of the loss wrt every tensor in ``params.tensors``.

    ``grad_out`` is dLoss/d(network output), shape ``(batch, outputs)``.
    """
    if tape is None or not tape.inputs:
        raise RuntimeError("backward called without a cached forward pass")
    spec = params.spec
    if len(tape.inputs) != len(spec.layers):
        raise RuntimeError("tape does not belong to this network")
    grads: list[np.ndarray] = [None] * len(params.tensors)  # type: ignore[list-item]
    g = np.asarray(grad_out, dtype=params.dtype)
    if g.shape != tape.output.shape:
        raise ShapeError(f"grad_out shape {g.shape} != output shape {tape.output.shape}")
    k = len(spec.learnable())
    for layer, h in zip(reversed(spec.layers), reversed(tape.inputs)):
        if isinstance(layer, Conv1D):
            k -= 1
            w, _ = params.layer_params(k)
            win = _windows(h, layer.kernel_size, layer.stride)
            n, lout = win.shape[:2]
            cols = win.reshape(n * lout, -1)
            g2 = g.reshape(n * lout, layer.out_channels)
            grads[2 * k] = (cols.T @ g2).reshape(w.shape)
            grads[2 * k + 1] = g2.sum(axis=0)
            dcols = (g2 @ w.reshape(-1, layer.out_channels).T).reshape(
                n, lout, layer.kernel_size, layer.in_channels
            )
            dx = np.zeros_like(h)
            stop = layer.stride * (lout - 1) + 1
            for j in range(layer.kernel_size):
                dx[:, j : j + stop : layer.stride, :] += dcols[:, :, j, :]
            g = dx
        elif isinstance(layer, Dense):
            k -= 1
            w, _ = params.layer_params(k)
            flat = h.reshape(h.shape[0], -1)
            grads[2 * k] = flat.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = (g @ w.T).reshape(h.shape)
        elif isinstance(layer, ReLU):
            g = g * (h > 0)
        elif isinstance(layer, Flatten):
            g = g.reshape(h.shape)
    return grads


# ---------------------------------------------------------------------------
# loss and optimizer


def huber_loss(pred: np.ndarray, target: np.ndarray, delta: float = 1.0) -> tuple[float, np.ndarray]:
    """Huber loss summed over outputs and averaged over the batch.

    Returns ``(loss, dloss/dpred)``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    pred = np.atleast_2d(pred)
    target = np.atleast_2d(target)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(target))):
        raise ValueError("non-finite values in huber_loss input")
    r = pred - target
    a = np.abs(r)
    quad = a <= delta
    per = np.where(quad, 0.5 * r * r, delta * (a - 0.5 * delta))
    n = pred.shape[0]
    loss = float(per.sum() / n)
    grad = np.where(quad, r, delta * np.sign(r)) / n
    return loss, grad.astype(pred.dtype, copy=False)


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: NetParams, lr: float = 5e-5) -> "AdamState":
        return cls(
            m=[np.zeros_like(t) for t in params.tensors],
            v=[np.zeros_like(t) for t in params.tensors],
            lr=lr,
        )


def adam_step(state: AdamState, params: NetParams, grads: Sequence[np.ndarray]) -> NetParams:
    """In-place Adam update with bias correction; returns ``params``."""
    if len(grads) != len(params.tensors) or len(state.m) != len(params.tensors):
        raise ShapeError("gradient / optimizer state count does not match parameters")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params.tensors, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params


# ---------------------------------------------------------------------------
# checkpoint I/O
#
# Layout (all little-endian):
#   8 bytes   magic  b"TLNFP32\0"
#   u32       format version (1)
#   u32       n = byte length of the NetSpec JSON
#   n bytes   NetSpec JSON, UTF-8
#   then for each learnable layer in declaration order:
#             weight tensor as f32 (row-major, shape from the NetSpec),
#             bias tensor as f32

FP32_MAGIC = b"TLNFP32\0"
FORMAT_VERSION = 1


def _header(magic: bytes, spec: NetSpec) -> bytes:
    blob = json.dumps(spec.to_dict(), sort_keys=True).encode("utf-8")
    return magic + struct.pack("<II", FORMAT_VERSION, len(blob)) + blob


def _read_header(buf: bytes, magic: bytes) -> tuple[NetSpec, int]:
    if buf[:8] != magic:
        raise ValueError(f"bad checkpoint magic {buf[:8]!r}, expected {magic!r}")
    if len(buf) < 16:
        raise ValueError("checkpoint truncated inside the header")
    version, n = struct.unpack_from("<II", buf, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if len(buf) < 16 + n:
        raise ValueError("checkpoint truncated inside the header")
    spec = NetSpec.from_dict(json.loads(buf[16 : 16 + n].decode("utf-8")))
    return spec, 16 + n


def params_to_bytes(params: NetParams) -> bytes:
    parts = [_header(FP32_MAGIC, params.spec)]
    parts += [np.ascontiguousarray(t, dtype="<f4").tobytes() for t in params.tensors]
    return b"".join(parts)


def params_from_bytes(buf: bytes) -> NetParams:
    spec, off = _read_header(buf, FP32_MAGIC)
    tensors = []
    for shape in (s for pair in spec.param_shapes() for s in pair):
        count = int(np.prod(shape))
        t = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(shape)
        tensors.append(t.astype(np.float32))
        off += 4 * count
    if off != len(buf):
        raise ValueError(f"checkpoint has {len(buf) - off} trailing bytes")
    return NetParams(spec, tensors)


def save_params(params: NetParams, path) -> None:
    with open(path, "wb") as f:
        f.write(params_to_bytes(params))


def load_params(path) -> NetParams:
    with open(path, "rb") as f:
        return params_from_bytes(f.read())
