"""Post-training int8 quantization and integer-only inference.

Weights are symmetric int8 with one scale per output channel (zero point
0), activations are asymmetric per-tensor int8, biases are int32 at scale
``s_in * s_w[c]``.  Each Conv1D/Dense output channel ``c`` is requantized
with its own fixed-point multiplier::

    q_out = clamp(round(acc * mantissa[c] / 2**(31 + shift[c])) + z_out, lo, 127)

where ``round`` is half away from zero and ``lo`` is ``z_out`` when the
layer is followed by ReLU (ReLU fused into the clamp), else -128.  All
integer math is exact in int64, so results are identical on every platform.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .nn import (FP32_MAGIC, Conv1D, NetParams, NetSpec, ReLU, Tape, _check_input, _header,
                 _read_header, _run, _windows, forward, params_from_bytes, params_to_bytes)

EPS = 1e-8
INT8_MIN, INT8_MAX = -128, 127
INT32_MAX = 2**31 - 1
INT8_MAGIC = b"TLNINT8\0"


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not INT8_MIN <= self.zero_point <= INT8_MAX:
            raise ValueError(f"zero point {self.zero_point} outside int8")

    def quantize(self, x) -> np.ndarray:
        q = round_half_away(np.asarray(x, dtype=np.float64) / self.scale) + self.zero_point
        return np.clip(q, INT8_MIN, INT8_MAX).astype(np.int8)

    def dequantize(self, q) -> np.ndarray:
        return (np.asarray(q, dtype=np.float64) - self.zero_point) * self.scale


def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def rounding_rshift(p: np.ndarray, shift) -> np.ndarray:
    """Integer ``p / 2**shift`` rounded half away from zero (int64, exact).

    ``shift`` may be an array broadcasting against ``p``.
    """
    p = np.asarray(p, dtype=np.int64)
    shift = np.asarray(shift, dtype=np.int64)
    half = np.where(shift > 0, np.int64(1) << np.maximum(shift - 1, 0), 0)
    mag = (np.abs(p) + half) >> shift
    return np.where(p < 0, -mag, mag)


def quantize_multiplier(m: float) -> tuple[int, int]:
    """``m`` in (0, 1) -> (mantissa, shift) with m ~= mantissa * 2**-(31 + shift).

    The mantissa is normalized to [2**30, 2**31) unless ``m`` is so small that
    the shift would exceed 31.
    """
    if not 0 < m < 1:
        raise ValueError(f"requantization multiplier {m} outside (0, 1)")
    frac, exp = math.frexp(m)  # m = frac * 2**exp, frac in [0.5, 1)
    mantissa = int(round(frac * 2**31))
    if mantissa == 2**31:
        mantissa //= 2
        exp += 1
    shift = -exp
    if shift > 31:
        shift = 31
        mantissa = int(round(m * 2**62))
    if shift < 0:
        raise ValueError(f"requantization multiplier {m} needs a left shift")
    return mantissa, shift


def activation_qparams(lo: float, hi: float) -> QuantParams:
    """Asymmetric int8 params covering [lo, hi] (always widened to contain 0)."""
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi - lo < EPS:
        hi = lo + EPS
    scale = (hi - lo) / 255.0
    zp = int(np.clip(round_half_away(INT8_MIN - lo / scale), INT8_MIN, INT8_MAX))
    return QuantParams(scale, zp)


def quantize_weights(w: np.ndarray, per_channel: bool = False):
    """Symmetric int8: scale = max|w| / 127, per tensor or per output channel (last axis)."""
    w = np.asarray(w, dtype=np.float64)
    if per_channel:
        amax = np.abs(w).reshape(-1, w.shape[-1]).max(axis=0) if w.size else np.zeros(w.shape[-1])
        scale = np.maximum(amax / 127.0, EPS)
    else:
        scale = max(float(np.max(np.abs(w))) / 127.0, EPS) if w.size else EPS
    q = np.clip(round_half_away(w / scale), -127, 127).astype(np.int8)
    return q, scale


# ---------------------------------------------------------------------------
# calibration


@dataclass
class Calibration:
    """Running [min, max] of the input and of every Conv1D/Dense output (after fused ReLU)."""

    ranges: list  # [input, layer0, layer1, ...] as [lo, hi] lists
    count: int = 0

    def update(self, params: NetParams, x: np.ndarray) -> None:
        for r, a in zip(self.ranges, _float_activations(params, x)):
            r[0] = min(r[0], float(a.min()))
            r[1] = max(r[1], float(a.max()))
        self.count += len(x)


def _fused_relu(spec: NetSpec, idx: int) -> bool:
    return idx + 1 < len(spec.layers) and isinstance(spec.layers[idx + 1], ReLU)


def _float_activations(params: NetParams, x: np.ndarray) -> list[np.ndarray]:
    """The input and each learnable layer's output, as the int8 path sees them."""
    tape = Tape()
    out = _run(params, x, tape)
    acts = [tape.inputs[0]]
    spec = params.spec
    for idx, _ in spec.learnable():
        nxt = idx + 1 if _fused_relu(spec, idx) else idx
        acts.append(tape.inputs[nxt + 1] if nxt + 1 < len(spec.layers) else out)
    return acts


def calibrate(params: NetParams, rep_data: np.ndarray, batch_size: int = 256) -> Calibration:
    rep = np.asarray(rep_data, dtype=np.float32)
    if rep.ndim == 1:
        rep = rep[None]
    if len(rep) == 0:
        raise ValueError("calibration set is empty")
    n_ranges = 1 + len(params.spec.learnable())
    cal = Calibration([[math.inf, -math.inf] for _ in range(n_ranges)])
    for i in range(0, len(rep), batch_size):
        cal.update(params, rep[i : i + batch_size])
    for r in cal.ranges:
        if r[1] - r[0] < EPS:
            r[1] = r[0] + EPS
    return cal


# ---------------------------------------------------------------------------
# quantized network


@dataclass(frozen=True)
class QuantLayer:
    weight: np.ndarray  # int8, same layout as the float weight
    bias: np.ndarray  # int32, per output channel
    weight_scale: np.ndarray  # float64, per output channel
    output: QuantParams
    mantissa: np.ndarray  # int64, per output channel
    shift: np.ndarray  # int64, per output channel
    relu: bool


@dataclass(frozen=True)
class QuantizedNet:
    spec: NetSpec
    input: QuantParams
    layers: tuple  # QuantLayer per learnable layer

    def layer_params(self):
        return zip([l for _, l in self.spec.learnable()], self.layers)


def quantize(params: NetParams, calibration: Calibration) -> QuantizedNet:
    spec = params.spec
    learn = spec.learnable()
    if len(calibration.ranges) != len(learn) + 1:
        raise ValueError("calibration does not cover every layer")
    in_q = activation_qparams(*calibration.ranges[0])
    s_in = in_q.scale
    layers = []
    for k, (idx, layer) in enumerate(learn):
        w, b = params.layer_params(k)
        wq, s_w = quantize_weights(w, per_channel=True)
        lo, hi = calibration.ranges[k + 1]
        out_q = activation_qparams(lo, hi)
        s_b = s_in * s_w
        if s_b.max() >= out_q.scale:
            # keep every multiplier below 1 (right shifts only) by widening the range
            f = s_b.max() / out_q.scale * (1 + 1e-6)
            out_q = activation_qparams(lo * f, hi * f)
        bq = np.clip(round_half_away(np.asarray(b, dtype=np.float64) / s_b),
                     -INT32_MAX, INT32_MAX).astype(np.int32)
        fan_in = wq.shape[0] * (wq.shape[1] if wq.ndim == 3 else 1)
        bound = fan_in * 127 * 255 + int(np.abs(bq.astype(np.int64)).max(initial=0))
        # acc * mantissa stays below 2**62, inside int64
        if bound >= 2**31:
            raise OverflowError(f"layer {idx}: worst-case accumulator {bound} exceeds int32")
        pairs = [quantize_multiplier(m) for m in s_b / out_q.scale]
        mantissa = np.array([m for m, _ in pairs], dtype=np.int64)
        shift = np.array([sh for _, sh in pairs], dtype=np.int64)
        layers.append(QuantLayer(wq, bq, s_w, out_q, mantissa, shift, _fused_relu(spec, idx)))
        s_in = out_q.scale
    return QuantizedNet(spec, in_q, tuple(layers))


def dequantize_weights(qnet: QuantizedNet) -> list[np.ndarray]:
    return [l.weight.astype(np.float64) * l.weight_scale for l in qnet.layers]


def forward_int8(qnet: QuantizedNet, x_q: np.ndarray, return_intermediates: bool = False):
    """Integer-only inference on int8 input codes; returns dequantized outputs.

    ``x_q`` is ``(batch, input_length)`` or a single int8 vector.
    """
    x_q = np.asarray(x_q)
    if x_q.dtype != np.int8:
        raise TypeError(f"forward_int8 expects int8 input codes, got {x_q.dtype}")
    single = x_q.ndim == 1
    h = _check_input(qnet.spec, x_q)
    zp = qnet.input.zero_point
    inter = []
    for layer, ql in qnet.layer_params():
        xi = h.astype(np.int64) - zp
        if isinstance(layer, Conv1D):
            win = _windows(xi, layer.kernel_size, layer.stride)
            n, lout = win.shape[:2]
            acc = win.reshape(n * lout, -1) @ ql.weight.reshape(-1, layer.out_channels).astype(np.int64)
            acc = acc.reshape(n, lout, layer.out_channels)
        else:
            xi = xi.reshape(xi.shape[0], -1)
            if xi.shape[1] != layer.in_features:
                raise ValueError(f"Dense expects {layer.in_features} features, got {xi.shape[1]}")
            acc = xi @ ql.weight.astype(np.int64)
        acc = acc + ql.bias
        y = rounding_rshift(acc * ql.mantissa, 31 + ql.shift) + ql.output.zero_point
        lo = ql.output.zero_point if ql.relu else INT8_MIN
        h = np.clip(y, lo, INT8_MAX).astype(np.int8)
        zp = ql.output.zero_point
        inter.append(h)
    out = qnet.layers[-1].output.dequantize(h.reshape(h.shape[0], -1))
    if single:
        out = out[0]
    return (out, inter) if return_intermediates else out


def predict(model, x: np.ndarray) -> np.ndarray:
    """Float in, float out, for either a NetParams or a QuantizedNet."""
    if isinstance(model, QuantizedNet):
        return forward_int8(model, model.input.quantize(x))
    return forward(model, x)


# ---------------------------------------------------------------------------
# checkpoint I/O
#
# Layout (little-endian), extending the fp32 checkpoint:
#   8 bytes   magic  b"TLNINT8\0"
#   u32       format version (1)
#   u32       n = byte length of the NetSpec JSON
#   n bytes   NetSpec JSON, UTF-8
#   f64, i32  input scale, input zero point
#   then for each learnable layer in declaration order, with C output channels:
#     f64 output scale, i32 output zero point, u8 fused-ReLU flag,
#     C x f64 weight scales, C x i32 requant mantissas, C x i32 requant shifts,
#     int8 weights (row-major, float-checkpoint shape), C x i32 biases

_LAYER_HDR = struct.Struct("<diB")


def qnet_to_bytes(qnet: QuantizedNet) -> bytes:
    parts = [_header(INT8_MAGIC, qnet.spec), struct.pack("<di", qnet.input.scale, qnet.input.zero_point)]
    for ql in qnet.layers:
        parts.append(_LAYER_HDR.pack(ql.output.scale, ql.output.zero_point, int(ql.relu)))
        parts.append(np.ascontiguousarray(ql.weight_scale, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(ql.mantissa, dtype="<i4").tobytes())
        parts.append(np.ascontiguousarray(ql.shift, dtype="<i4").tobytes())
        parts.append(np.ascontiguousarray(ql.weight, dtype=np.int8).tobytes())
        parts.append(np.ascontiguousarray(ql.bias, dtype="<i4").tobytes())
    return b"".join(parts)


def qnet_from_bytes(buf: bytes) -> QuantizedNet:
    try:
        return _qnet_from_bytes(buf)
    except struct.error as e:
        raise ValueError(f"int8 checkpoint truncated: {e}") from None


def _qnet_from_bytes(buf: bytes) -> QuantizedNet:
    spec, off = _read_header(buf, INT8_MAGIC)
    scale, zp = struct.unpack_from("<di", buf, off)
    off += 12

    def take(dtype, count):
        nonlocal off
        a = np.frombuffer(buf, dtype=dtype, count=count, offset=off)
        off += a.nbytes
        return a

    layers = []
    for wshape, (c,) in spec.param_shapes():
        os_, ozp, relu = _LAYER_HDR.unpack_from(buf, off)
        off += _LAYER_HDR.size
        ws = take("<f8", c).astype(np.float64)
        mant = take("<i4", c).astype(np.int64)
        shift = take("<i4", c).astype(np.int64)
        w = take(np.int8, int(np.prod(wshape))).reshape(wshape).copy()
        b = take("<i4", c).astype(np.int32)
        layers.append(QuantLayer(w, b, ws, QuantParams(os_, ozp), mant, shift, bool(relu)))
    if off != len(buf):
        raise ValueError(f"checkpoint has {len(buf) - off} trailing bytes")
    return QuantizedNet(spec, QuantParams(scale, zp), tuple(layers))


def save_qnet(qnet: QuantizedNet, path) -> None:
    with open(path, "wb") as f:
        f.write(qnet_to_bytes(qnet))


def model_to_bytes(model) -> bytes:
    return qnet_to_bytes(model) if isinstance(model, QuantizedNet) else params_to_bytes(model)


def load_model(path):
    """Load either checkpoint kind, dispatching on the magic bytes."""
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:8] == INT8_MAGIC:
        return qnet_from_bytes(buf)
    if buf[:8] == FP32_MAGIC:
        return params_from_bytes(buf)
    raise ValueError(f"{path}: not a model checkpoint (magic {buf[:8]!r})")

