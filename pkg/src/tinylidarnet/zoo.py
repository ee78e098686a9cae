"""TinyLidarNet and MLP256 builders, with parameter / MAC accounting."""

from __future__ import annotations

from .nn import Conv1D, Dense, Flatten, NetSpec, ReLU

INPUT_LENGTHS = {"L": 1081, "M": 541, "S": 271}
DOWNSAMPLE = {"L": 1, "M": 2, "S": 4}
FAMILIES = ("tinylidarnet", "mlp256")

# (out_channels, kernel, stride) for the five convolutions
_TLN_CONVS = ((24, 10, 4), (36, 8, 4), (48, 4, 2), (64, 3, 1), (64, 3, 1))
_TLN_DENSE = (100, 50, 10)


def _check_size(size: str) -> str:
    size = size.upper()
    if size not in INPUT_LENGTHS:
        raise ValueError(f"unknown model size {size!r}, expected one of L/M/S")
    return size


def build_tinylidarnet(size: str = "L") -> NetSpec:
    size = _check_size(size)
    length = INPUT_LENGTHS[size]
    layers = []
    channels = 1
    for out_ch, k, s in _TLN_CONVS:
        layers += [Conv1D(channels, out_ch, k, s), ReLU()]
        channels = out_ch
        length = (length - k) // s + 1
    layers.append(Flatten())
    features = length * channels
    for width in _TLN_DENSE:
        layers += [Dense(features, width), ReLU()]
        features = width
    layers.append(Dense(features, 2))
    return NetSpec(f"tinylidarnet-{size}", INPUT_LENGTHS[size], tuple(layers))


def build_mlp256(size: str = "L") -> NetSpec:
    size = _check_size(size)
    n = INPUT_LENGTHS[size]
    layers = (Dense(n, 256), ReLU(), Dense(256, 256), ReLU(), Dense(256, 2))
    return NetSpec(f"mlp256-{size}", n, layers)


def build(family: str, size: str) -> NetSpec:
    if family == "tinylidarnet":
        return build_tinylidarnet(size)
    if family == "mlp256":
        return build_mlp256(size)
    raise ValueError(f"unknown model family {family!r}, expected one of {FAMILIES}")


def count_params(spec: NetSpec) -> int:
    total = 0
    for w, b in spec.param_shapes():
        total += _prod(w) + _prod(b)
    return total


def count_macs(spec: NetSpec) -> int:
    """Multiply-accumulates of the weight products only (no bias adds, no activations)."""
    if not spec.layers:
        return 0
    total = 0
    length = spec.input_length
    for layer in spec.layers:
        if isinstance(layer, Conv1D):
            length = layer.output_length(length)
            total += length * layer.out_channels * layer.kernel_size * layer.in_channels
        elif isinstance(layer, Dense):
            total += layer.in_features * layer.out_features
    return total


def layer_table(spec: NetSpec) -> list[dict]:
    """One row per layer: kind, output shape, params, MACs."""
    rows = []
    shapes = spec.activation_shapes()
    length = spec.input_length
    for layer, shape in zip(spec.layers, shapes):
        params = macs = 0
        if isinstance(layer, Conv1D):
            length = layer.output_length(length)
            params = layer.kernel_size * layer.in_channels * layer.out_channels + layer.out_channels
            macs = length * layer.out_channels * layer.kernel_size * layer.in_channels
            desc = f"Conv1D({layer.in_channels}->{layer.out_channels}, k={layer.kernel_size}, s={layer.stride})"
        elif isinstance(layer, Dense):
            params = layer.in_features * layer.out_features + layer.out_features
            macs = layer.in_features * layer.out_features
            desc = f"Dense({layer.in_features}->{layer.out_features})"
        else:
            desc = type(layer).__name__
        rows.append({"layer": desc, "output": shape, "params": params, "macs": macs})
    return rows


def _prod(shape) -> int:
    n = 1
    for d in shape:
        n *= d
    return n
