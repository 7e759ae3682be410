"""Model description, initialization, and the client/local forward passes.

A ModelSpec lists the whole network; split_index cuts it so the client owns
layers [0, split_index) plus the final softmax, while the single linear
layer after the cut belongs to the server. The flatten between the last
pooling layer and the linear layer is implicit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError, ParameterError, ShapeError
from . import layers
from .loss import softmax

CHECKPOINT_MAGIC = b"HSW1"


@dataclass(frozen=True)
class Conv1D:
    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1


@dataclass(frozen=True)
class LeakyReLU:
    alpha: float = 0.01


@dataclass(frozen=True)
class MaxPool1D:
    window: int


@dataclass(frozen=True)
class Linear:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class Softmax:
    pass


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    split_index: int
    in_channels: int
    in_length: int

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ParameterError("model must end with softmax")
        linear_positions = [i for i, l in enumerate(self.layers) if isinstance(l, Linear)]
        after_split = [i for i in linear_positions if i >= self.split_index]
        if len(after_split) != 1:
            raise ParameterError("exactly one linear layer must lie after the split")
        if not 0 < self.split_index < len(self.layers) - 1:
            raise ParameterError("split index outside the layer stack")
        if self.layers[self.split_index] is not self.layers[after_split[0]]:
            raise ParameterError("the layer at the split must be the server linear layer")
        # shape composition
        ch, length = self.in_channels, self.in_length
        for i, layer in enumerate(self.layers[: self.split_index]):
            if isinstance(layer, Conv1D):
                if layer.in_ch != ch:
                    raise ParameterError(f"layer {i}: channels {ch} != {layer.in_ch}")
                if length < layer.kernel:
                    raise ParameterError(f"layer {i}: kernel {layer.kernel} > length {length}")
                length = (length - layer.kernel) // layer.stride + 1
                ch = layer.out_ch
            elif isinstance(layer, MaxPool1D):
                length //= layer.window
                if length == 0:
                    raise ParameterError(f"layer {i}: pooling empties the signal")
            elif isinstance(layer, Linear):
                raise ParameterError("linear layers before the split are not supported")
        linear = self.layers[self.split_index]
        if linear.in_features != ch * length:
            raise ParameterError(
                f"linear expects {linear.in_features} features, client produces {ch * length}"
            )

    @property
    def server_linear(self) -> Linear:
        return self.layers[self.split_index]

    @property
    def feature_count(self) -> int:
        """Width of the flattened activation map crossing the split."""
        return self.server_linear.in_features

    @property
    def num_classes(self) -> int:
        return self.server_linear.out_features

    @property
    def client_layers(self) -> tuple:
        return self.layers[: self.split_index]


def default_model_spec(in_channels: int, in_length: int, num_classes: int = 5,
                       channels: int = 16) -> ModelSpec:
    """Two conv/pool blocks (kernels 7 then 5) into one linear classifier."""
    l1 = in_length - 7 + 1
    l1p = l1 // 2
    l2 = l1p - 5 + 1
    l2p = l2 // 2
    feat = channels * l2p
    return ModelSpec(
        layers=(
            Conv1D(in_channels, channels, 7),
            LeakyReLU(),
            MaxPool1D(2),
            Conv1D(channels, channels, 5),
            LeakyReLU(),
            MaxPool1D(2),
            Linear(feat, num_classes),
            Softmax(),
        ),
        split_index=6,
        in_channels=in_channels,
        in_length=in_length,
    )


@dataclass
class TrainConfig:
    epochs: int
    lr: float
    batch_size: int
    batch_count: int
    seed: int

    def __post_init__(self):
        # zero epochs is allowed (a no-op run returns the initial weights)
        if self.epochs < 0 or self.batch_size < 1 or self.batch_count < 1:
            raise ParameterError("epochs must be >= 0; batch size and count positive")
        if not (self.lr > 0 and np.isfinite(self.lr)):
            raise ParameterError("learning rate must be positive and finite")
        if self.seed < 0:
            raise ParameterError("seed must be non-negative")


def _init_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    # small random values; plain U[-1,1] diverges at these widths, so the
    # usual 1/sqrt(fan_in) scaling is applied
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, shape)


def init_client_params(spec: ModelSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    for i, layer in enumerate(spec.client_layers):
        if isinstance(layer, Conv1D):
            fan_in = layer.in_ch * layer.kernel
            params[f"conv{i}.w"] = _init_uniform(rng, (layer.out_ch, layer.in_ch, layer.kernel), fan_in)
            params[f"conv{i}.b"] = _init_uniform(rng, (layer.out_ch,), fan_in)
    return params


def init_linear_params(spec: ModelSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    linear = spec.server_linear
    w = _init_uniform(rng, (linear.out_features, linear.in_features), linear.in_features)
    b = _init_uniform(rng, (linear.out_features,), linear.in_features)
    return w, b


def forward_client(x: np.ndarray, spec: ModelSpec, params: dict[str, np.ndarray]):
    """Client layers up to the split; output is flattened to [n, features]."""
    if x.ndim != 3 or x.shape[1] != spec.in_channels:
        raise ShapeError(f"input shape {x.shape} does not match the model")
    caches = []
    h = x
    for i, layer in enumerate(spec.client_layers):
        if isinstance(layer, Conv1D):
            h, c = layers.conv1d_forward(h, params[f"conv{i}.w"], params[f"conv{i}.b"], layer.stride)
        elif isinstance(layer, LeakyReLU):
            h, c = layers.leaky_relu_forward(h, layer.alpha)
        elif isinstance(layer, MaxPool1D):
            h, c = layers.maxpool1d_forward(h, layer.window)
        else:
            raise ParameterError(f"unsupported client layer {layer}")
        caches.append(c)
    pre_flat_shape = h.shape
    return h.reshape(h.shape[0], -1), (caches, pre_flat_shape)


def backward_client(grad_flat: np.ndarray, spec: ModelSpec, client_cache) -> dict[str, np.ndarray]:
    """Gradient of the loss w.r.t. every client parameter."""
    caches, pre_flat_shape = client_cache
    grad = grad_flat.reshape(pre_flat_shape)
    grads: dict[str, np.ndarray] = {}
    for i in range(len(caches) - 1, -1, -1):
        layer = spec.client_layers[i]
        if isinstance(layer, Conv1D):
            grad, gw, gb = layers.conv1d_backward(grad, caches[i])
            grads[f"conv{i}.w"] = gw
            grads[f"conv{i}.b"] = gb
        elif isinstance(layer, LeakyReLU):
            grad = layers.leaky_relu_backward(grad, caches[i])
        elif isinstance(layer, MaxPool1D):
            grad = layers.maxpool1d_backward(grad, caches[i])
    return grads


def forward_local(x: np.ndarray, spec: ModelSpec, params, linear_w, linear_b):
    """Whole network in one process; the oracle for split-mode equivalence."""
    a_l, client_cache = forward_client(x, spec, params)
    logits, linear_cache = layers.linear_forward(a_l, linear_w, linear_b)
    return softmax(logits), (client_cache, linear_cache)


def backward_local(grad_logits: np.ndarray, spec: ModelSpec, cache):
    client_cache, linear_cache = cache
    grad_al, grad_w, grad_b = layers.linear_backward(grad_logits, linear_cache)
    client_grads = backward_client(grad_al, spec, client_cache)
    return client_grads, grad_w, grad_b


# --- persistence ---------------------------------------------------------------


_LAYER_TAGS = {"conv1d": Conv1D, "leaky_relu": LeakyReLU, "maxpool1d": MaxPool1D,
               "linear": Linear, "softmax": Softmax}


def _layer_to_str(layer) -> str:
    if isinstance(layer, Conv1D):
        return f"conv1d(in={layer.in_ch},out={layer.out_ch},kernel={layer.kernel},stride={layer.stride})"
    if isinstance(layer, LeakyReLU):
        return f"leaky_relu(alpha={layer.alpha})"
    if isinstance(layer, MaxPool1D):
        return f"maxpool1d(window={layer.window})"
    if isinstance(layer, Linear):
        return f"linear(in={layer.in_features},out={layer.out_features})"
    return "softmax()"


def _layer_from_str(text: str):
    name, _, args = text.partition("(")
    if name not in _LAYER_TAGS or not args.endswith(")"):
        raise FormatError(f"unparseable layer {text!r}")
    kv = {}
    body = args[:-1]
    if body:
        for part in body.split(","):
            k, _, v = part.partition("=")
            kv[k.strip()] = v.strip()
    try:
        if name == "conv1d":
            return Conv1D(int(kv["in"]), int(kv["out"]), int(kv["kernel"]), int(kv.get("stride", 1)))
        if name == "leaky_relu":
            return LeakyReLU(float(kv.get("alpha", 0.01)))
        if name == "maxpool1d":
            return MaxPool1D(int(kv["window"]))
        if name == "linear":
            return Linear(int(kv["in"]), int(kv["out"]))
        return Softmax()
    except (KeyError, ValueError) as exc:
        raise FormatError(f"unparseable layer {text!r}: {exc}") from None


def save_config(path, spec: ModelSpec, cfg: TrainConfig) -> None:
    """Human-readable key=value file describing the model and run."""
    lines = [
        "# splitlab model/run configuration",
        f"in_channels={spec.in_channels}",
        f"in_length={spec.in_length}",
        f"split_index={spec.split_index}",
        "layers=" + ";".join(_layer_to_str(l) for l in spec.layers),
        f"epochs={cfg.epochs}",
        f"lr={cfg.lr!r}",
        f"batch_size={cfg.batch_size}",
        f"batch_count={cfg.batch_count}",
        f"seed={cfg.seed}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_config(path) -> tuple[ModelSpec, TrainConfig]:
    kv = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, sep, v = line.partition("=")
            if not sep:
                raise FormatError(f"malformed config line {line!r}")
            kv[k.strip()] = v.strip()
    try:
        spec = ModelSpec(
            layers=tuple(_layer_from_str(t) for t in kv["layers"].split(";")),
            split_index=int(kv["split_index"]),
            in_channels=int(kv["in_channels"]),
            in_length=int(kv["in_length"]),
        )
        cfg = TrainConfig(
            epochs=int(kv["epochs"]),
            lr=float(kv["lr"]),
            batch_size=int(kv["batch_size"]),
            batch_count=int(kv["batch_count"]),
            seed=int(kv["seed"]),
        )
    except KeyError as exc:
        raise FormatError(f"config missing key {exc}") from None
    return spec, cfg


def save_weights(path, tensors: dict[str, np.ndarray]) -> None:
    """Flat binary checkpoint: HSW1 | count | per tensor name, shape, f64 data."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_weights(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError("not a splitlab checkpoint")
    off = 4
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + nlen].decode()
            off += nlen
            (ndim,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            size = int(np.prod(shape)) * 8
            arr = np.frombuffer(data[off : off + size], dtype="<f8").reshape(shape)
            off += size
            tensors[name] = arr.copy()
    except (struct.error, ValueError) as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from None
    if off != len(data):
        raise FormatError("trailing bytes in checkpoint")
    return tensors
