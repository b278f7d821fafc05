"""Layers, the two miniature presets, forward/backward, freezing, checkpoints.

Parameters live in a flat ``{name: ndarray}`` dict keyed ``block.layer.param``
(for example ``block2.dw_bn.gamma``). Batch-norm running statistics sit in the
same dict as non-trainable buffers so a checkpoint captures everything needed
for inference.
"""
from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import core
from .errors import DataError
from .rng import Rng

Params = Dict[str, np.ndarray]
Shape = Tuple[int, int, int]


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Sign-branched logistic that never overflows."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Layer:
    kind = "layer"
    buffers: Tuple[str, ...] = ()

    def __init__(self):
        self.name = ""
        self.trainable = True

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {}

    def init_params(self, rng: Rng) -> Params:
        return {}

    def out_shape(self, shape):
        return shape

    def forward(self, p: Params, x: np.ndarray, train: bool):
        raise NotImplementedError

    def backward(self, p: Params, cache, gy: np.ndarray):
        raise NotImplementedError

    def _expect_channels(self, x: np.ndarray, channels: int):
        if x.ndim != 4 or x.shape[1] != channels:
            raise ValueError(f"layer {self.name}: expected N x {channels} x H x W input, got {x.shape}")

    def __repr__(self):
        return f"{type(self).__name__}({self.name})"


class Conv(Layer):
    """Dense k x k convolution without bias (always followed by batch norm)."""

    kind = "conv"

    def __init__(self, in_ch: int, out_ch: int, k: int = 1, stride: int = 1):
        super().__init__()
        if k % 2 == 0:
            raise ValueError("kernel sizes must be odd")
        self.in_ch, self.out_ch, self.k, self.stride = in_ch, out_ch, k, stride

    def param_shapes(self):
        return {"weight": (self.out_ch, self.in_ch, self.k, self.k)}

    def init_params(self, rng):
        return {"weight": core.he_init(self.param_shapes()["weight"], self.in_ch * self.k * self.k, rng)}

    def out_shape(self, shape):
        if shape[0] != self.in_ch:
            raise ValueError(f"layer {self.name}: expected {self.in_ch} channels, got {shape[0]}")
        return (self.out_ch, -(-shape[1] // self.stride), -(-shape[2] // self.stride))

    def _pad(self, x):
        return core.same_padding(x.shape[2], self.k, self.stride)

    def forward(self, p, x, train):
        self._expect_channels(x, self.in_ch)
        return core.conv2d_forward(x, p["weight"], self.stride, self._pad(x)), x

    def backward(self, p, x, gy):
        gx, gw = core.conv2d_backward(x, p["weight"], gy, self.stride, self._pad(x))
        return gx, {"weight": gw}


class DepthwiseConv(Layer):
    kind = "depthwise_conv"

    def __init__(self, channels: int, k: int = 3, stride: int = 1):
        super().__init__()
        self.channels, self.k, self.stride = channels, k, stride

    def param_shapes(self):
        return {"weight": (self.channels, self.k, self.k)}

    def init_params(self, rng):
        return {"weight": core.he_init((self.channels, self.k, self.k), self.k * self.k, rng)}

    def out_shape(self, shape):
        if shape[0] != self.channels:
            raise ValueError(f"layer {self.name}: expected {self.channels} channels, got {shape[0]}")
        return (self.channels, -(-shape[1] // self.stride), -(-shape[2] // self.stride))

    def _pad(self, x):
        return core.same_padding(x.shape[2], self.k, self.stride)

    def forward(self, p, x, train):
        self._expect_channels(x, self.channels)
        return core.depthwise_conv2d_forward(x, p["weight"], self.stride, self._pad(x)), x

    def backward(self, p, x, gy):
        gx, gw = core.depthwise_conv2d_backward(x, p["weight"], gy, self.stride, self._pad(x))
        return gx, {"weight": gw}


class BatchNorm(Layer):
    """Per-channel batch norm over N, H, W.

    Trainable layers normalize with batch statistics in train mode and fold
    them into the running averages; frozen layers and infer mode use the
    running statistics.
    """

    kind = "batch_norm"
    buffers = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.channels, self.momentum, self.eps = channels, momentum, eps

    def param_shapes(self):
        c = (self.channels,)
        return {"gamma": c, "beta": c, "running_mean": c, "running_var": c}

    def init_params(self, rng):
        c = self.channels
        return {"gamma": np.ones(c, np.float32), "beta": np.zeros(c, np.float32),
                "running_mean": np.zeros(c, np.float32), "running_var": np.ones(c, np.float32)}

    def out_shape(self, shape):
        if shape[0] != self.channels:
            raise ValueError(f"layer {self.name}: expected {self.channels} channels, got {shape[0]}")
        return shape

    def forward(self, p, x, train):
        self._expect_channels(x, self.channels)
        batch_stats = train and self.trainable
        if batch_stats:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
        else:
            mean, var = p["running_mean"], p["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        y = p["gamma"][None, :, None, None] * xhat + p["beta"][None, :, None, None]
        updates = None
        if batch_stats:
            m = self.momentum
            updates = {"running_mean": (m * p["running_mean"] + (1 - m) * mean).astype(p["running_mean"].dtype),
                       "running_var": (m * p["running_var"] + (1 - m) * var).astype(p["running_var"].dtype)}
        return y, (xhat, inv_std, batch_stats, updates)

    def backward(self, p, cache, gy):
        xhat, inv_std, batch_stats, _ = cache
        grads = {"gamma": np.einsum("nchw,nchw->c", gy, xhat), "beta": gy.sum(axis=(0, 2, 3))}
        gxhat = gy * p["gamma"][None, :, None, None]
        if batch_stats:
            m = gy.shape[0] * gy.shape[2] * gy.shape[3]
            s1 = gxhat.sum(axis=(0, 2, 3))[None, :, None, None]
            s2 = np.einsum("nchw,nchw->c", gxhat, xhat)[None, :, None, None]
            gx = (gxhat - s1 / m - xhat * s2 / m) * inv_std[None, :, None, None]
        else:
            gx = gxhat * inv_std[None, :, None, None]
        return gx, grads


class Activation(Layer):
    kind = "activation"

    def __init__(self, fn: str):
        super().__init__()
        if fn not in ("relu6", "silu"):
            raise ValueError(f"unknown activation {fn!r}")
        self.fn = fn

    def forward(self, p, x, train):
        if self.fn == "relu6":
            return np.clip(x, 0, 6), x
        s = sigmoid(x)
        return x * s, (x, s)

    def backward(self, p, cache, gy):
        if self.fn == "relu6":
            x = cache
            return gy * ((x > 0) & (x < 6)), {}
        x, s = cache
        return gy * (s * (1 + x * (1 - s))), {}


class SqueezeExcite(Layer):
    """Channel gate: x * sigmoid(W2 silu(W1 mean_hw(x) + b1) + b2)."""

    kind = "squeeze_excite"

    def __init__(self, channels: int, ratio: int = 4):
        super().__init__()
        self.channels, self.ratio = channels, ratio
        self.reduced = max(1, channels // ratio)

    def param_shapes(self):
        c, r = self.channels, self.reduced
        return {"w1": (c, r), "b1": (r,), "w2": (r, c), "b2": (c,)}

    def init_params(self, rng):
        c, r = self.channels, self.reduced
        return {"w1": core.he_init((c, r), c, rng), "b1": np.zeros(r, np.float32),
                "w2": core.he_init((r, c), r, rng), "b2": np.zeros(c, np.float32)}

    def out_shape(self, shape):
        if shape[0] != self.channels:
            raise ValueError(f"layer {self.name}: expected {self.channels} channels, got {shape[0]}")
        return shape

    def forward(self, p, x, train):
        self._expect_channels(x, self.channels)
        s = x.mean(axis=(2, 3))
        h = s @ p["w1"] + p["b1"]
        sh = sigmoid(h)
        a = h * sh
        z = sigmoid(a @ p["w2"] + p["b2"])
        return x * z[:, :, None, None], (x, s, h, sh, a, z)

    def backward(self, p, cache, gy):
        x, s, h, sh, a, z = cache
        gz = np.einsum("nchw,nchw->nc", gy, x)
        gg = gz * z * (1 - z)
        ga = gg @ p["w2"].T
        gh = ga * (sh * (1 + h * (1 - sh)))
        gs = gh @ p["w1"].T
        grads = {"w2": a.T @ gg, "b2": gg.sum(axis=0), "w1": s.T @ gh, "b1": gh.sum(axis=0)}
        hw = x.shape[2] * x.shape[3]
        gx = gy * z[:, :, None, None] + (gs / hw)[:, :, None, None]
        return gx, grads


class GlobalAvgPool(Layer):
    kind = "global_avg_pool"

    def out_shape(self, shape):
        return (shape[0],)

    def forward(self, p, x, train):
        if x.ndim != 4:
            raise ValueError(f"layer {self.name}: expected N x C x H x W input, got {x.shape}")
        return core.global_avg_pool(x), x.shape

    def backward(self, p, shape, gy):
        return core.global_avg_pool_backward(gy, shape), {}


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features

    def param_shapes(self):
        return {"weight": (self.in_features, self.out_features), "bias": (self.out_features,)}

    def init_params(self, rng):
        return {"weight": core.he_init((self.in_features, self.out_features), self.in_features, rng),
                "bias": np.zeros(self.out_features, np.float32)}

    def out_shape(self, shape):
        if shape != (self.in_features,):
            raise ValueError(f"layer {self.name}: expected ({self.in_features},) features, got {shape}")
        return (self.out_features,)

    def forward(self, p, x, train):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"layer {self.name}: expected N x {self.in_features} input, got {x.shape}")
        return x @ p["weight"] + p["bias"], x

    def backward(self, p, x, gy):
        return gy @ p["weight"].T, {"weight": x.T @ gy, "bias": gy.sum(axis=0)}


class Softmax(Layer):
    kind = "softmax"

    def forward(self, p, x, train):
        y = softmax(x)
        return y, y

    def backward(self, p, y, gy):
        return y * (gy - (gy * y).sum(axis=1, keepdims=True)), {}


@dataclass
class Block:
    name: str
    layers: List[Layer]
    residual: bool = False


@dataclass
class ModelSpec:
    name: str
    blocks: List[Block]
    num_classes: int
    in_channels: int
    input_size: int = 224

    def layers(self):
        for block in self.blocks:
            yield from block.layers

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Every checkpoint entry, trainable or buffer, in canonical order."""
        out = {}
        for layer in self.layers():
            for suffix, shape in layer.param_shapes().items():
                out[f"{layer.name}.{suffix}"] = shape
        return out

    def trainable_names(self) -> List[str]:
        return [f"{layer.name}.{s}" for layer in self.layers() if layer.trainable
                for s in layer.param_shapes() if s not in layer.buffers]

    def parameter_count(self, include_buffers: bool = False) -> int:
        total = 0
        for layer in self.layers():
            for suffix, shape in layer.param_shapes().items():
                if include_buffers or suffix not in layer.buffers:
                    total += int(np.prod(shape))
        return total

    def output_shape(self, input_shape: Sequence[int]):
        """Propagate a C x H x W shape through the graph, checking every block."""
        shape = tuple(input_shape)
        for block in self.blocks:
            start = shape
            for layer in block.layers:
                shape = layer.out_shape(shape)
            if block.residual and shape != start:
                raise ValueError(f"block {block.name}: residual shapes differ {start} vs {shape}")
        return shape


PRESETS = ("mini-mobilenetv2", "mini-efficientnetb0")
# (out_channels, stride, expansion) per inverted-residual block
BLOCK_TABLE = ((16, 1, 2), (24, 2, 4), (24, 1, 4), (32, 2, 4), (32, 1, 4))
STEM_CHANNELS = 8
HEAD_CHANNELS = 64


def _named(block: str, pairs) -> List[Layer]:
    layers = []
    for tag, layer in pairs:
        layer.name = f"{block}.{tag}"
        layers.append(layer)
    return layers


def build_preset(name: str, num_classes: int, in_channels: int = 3, input_size: int = 224) -> ModelSpec:
    """Width/depth-reduced MobileNetV2 (ReLU6) or EfficientNetB0 (SiLU + SE)."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if in_channels not in (1, 3):
        raise ValueError(f"in_channels must be 1 or 3, got {in_channels}")
    act = "relu6" if name == "mini-mobilenetv2" else "silu"
    use_se = name == "mini-efficientnetb0"
    blocks = [Block("stem", _named("stem", [
        ("conv", Conv(in_channels, STEM_CHANNELS, 3, 2)),
        ("bn", BatchNorm(STEM_CHANNELS)),
        ("act", Activation(act)),
    ]))]
    ch = STEM_CHANNELS
    for i, (out_ch, stride, expansion) in enumerate(BLOCK_TABLE, start=1):
        hidden = ch * expansion
        bname = f"block{i}"
        pairs = [
            ("expand", Conv(ch, hidden, 1)),
            ("expand_bn", BatchNorm(hidden)),
            ("expand_act", Activation(act)),
            ("dw", DepthwiseConv(hidden, 3, stride)),
            ("dw_bn", BatchNorm(hidden)),
            ("dw_act", Activation(act)),
        ]
        if use_se:
            pairs.append(("se", SqueezeExcite(hidden, 4)))
        pairs += [("project", Conv(hidden, out_ch, 1)), ("project_bn", BatchNorm(out_ch))]
        blocks.append(Block(bname, _named(bname, pairs), residual=stride == 1 and ch == out_ch))
        ch = out_ch
    blocks.append(Block("head", _named("head", [
        ("conv", Conv(ch, HEAD_CHANNELS, 1)),
        ("bn", BatchNorm(HEAD_CHANNELS)),
        ("act", Activation(act)),
    ])))
    blocks.append(Block("pool", _named("pool", [("gap", GlobalAvgPool())])))
    blocks.append(Block("classifier", _named("classifier", [("dense", Dense(HEAD_CHANNELS, num_classes))])))
    blocks.append(Block("output", _named("output", [("softmax", Softmax())])))
    spec = ModelSpec(name, blocks, num_classes, in_channels, input_size)
    out = spec.output_shape((in_channels, input_size, input_size))
    assert out == (num_classes,)
    return spec


def init_params(model: ModelSpec, rng: Rng) -> Params:
    params = {}
    for layer in model.layers():
        for suffix, value in layer.init_params(rng).items():
            params[f"{layer.name}.{suffix}"] = value
    return params


def _layer_params(params: Params, layer: Layer) -> Params:
    prefix = layer.name + "."
    return {s: params[prefix + s] for s in layer.param_shapes()}


class ForwardCache(NamedTuple):
    block_inputs: List[np.ndarray]
    layer_caches: List[List[object]]
    logits: np.ndarray
    train: bool


def forward(model: ModelSpec, params: Params, x: np.ndarray, mode: str = "infer",
            update_stats: bool = True) -> Tuple[np.ndarray, ForwardCache]:
    """Run the network on an N x C x H x W batch; returns (probabilities, cache).

    ``mode="train"`` normalizes trainable batch-norm layers with batch
    statistics and, when ``update_stats`` is set, writes their updated running
    statistics back into ``params``.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    train = mode == "train"
    if x.ndim != 4 or x.shape[1] != model.in_channels:
        raise ValueError(f"model {model.name}: expected N x {model.in_channels} x H x W input, got {x.shape}")
    block_inputs, caches = [], []
    logits = None
    for block in model.blocks:
        block_inputs.append(x)
        bc = []
        h = x
        for layer in block.layers:
            if isinstance(layer, Softmax):
                logits = h
            h, c = layer.forward(_layer_params(params, layer), h, train)
            bc.append(c)
            if isinstance(layer, BatchNorm) and c[3] is not None and update_stats:
                for suffix, value in c[3].items():
                    params[f"{layer.name}.{suffix}"] = value
        if block.residual:
            h = h + x
        caches.append(bc)
        x = h
    return x, ForwardCache(block_inputs, caches, logits, train)


def _first_trainable_block(model: ModelSpec) -> Optional[int]:
    for i, block in enumerate(model.blocks):
        if any(layer.trainable and layer.param_shapes() for layer in block.layers):
            return i
    return None


def backward(model: ModelSpec, params: Params, cache: ForwardCache, grad_logits: np.ndarray,
             return_input_grad: bool = False):
    """Gradients of every trainable parameter given dL/dlogits.

    ``grad_logits`` is the gradient with respect to the Softmax input, so the
    Softmax layer itself is passed through. Frozen layers get no entries and
    backpropagation stops at the earliest trainable block unless the input
    gradient is requested.
    """
    if len(cache.layer_caches) != len(model.blocks):
        raise ValueError("cache does not belong to this model")
    stop = 0 if return_input_grad else _first_trainable_block(model)
    grads: Params = {}
    if stop is None:
        return (grads, None) if return_input_grad else grads
    g = grad_logits
    for bi in range(len(model.blocks) - 1, stop - 1, -1):
        block = model.blocks[bi]
        gy = g
        for li in range(len(block.layers) - 1, -1, -1):
            layer = block.layers[li]
            if isinstance(layer, Softmax):
                continue
            g, lg = layer.backward(_layer_params(params, layer), cache.layer_caches[bi][li], g)
            if layer.trainable:
                for suffix, value in lg.items():
                    grads[f"{layer.name}.{suffix}"] = value
        if block.residual:
            g = g + gy
    return (grads, g) if return_input_grad else grads


def block_forward(block: Block, params: Params, x: np.ndarray, train: bool = True):
    caches, h = [], x
    for layer in block.layers:
        h, c = layer.forward(_layer_params(params, layer), h, train)
        caches.append(c)
    return (h + x if block.residual else h), caches


def block_backward(block: Block, params: Params, caches, gy: np.ndarray):
    g, grads = gy, {}
    for layer, c in zip(reversed(block.layers), reversed(caches)):
        g, lg = layer.backward(_layer_params(params, layer), c, g)
        grads.update({f"{layer.name}.{s}": v for s, v in lg.items()})
    return (g + gy if block.residual else g), grads


def freeze_backbone(model: ModelSpec, unfreeze_last_block: bool = False) -> ModelSpec:
    """Copy of ``model`` where only the classifier (and optionally the last
    inverted-residual block plus head conv) stays trainable."""
    frozen = copy.deepcopy(model)
    keep = {"classifier", "output"}
    if unfreeze_last_block:
        keep |= {f"block{len(BLOCK_TABLE)}", "head"}
    for block in frozen.blocks:
        for layer in block.layers:
            layer.trainable = block.name in keep
    return frozen


# ---------------------------------------------------------------- checkpoints

MAGIC = b"OLWT"
VERSION = 1


class CheckpointError(DataError):
    pass


@dataclass
class CheckpointMeta:
    epoch: int = 0
    best_val_metric: float = 0.0


def save_checkpoint(model: ModelSpec, params: Params, meta: CheckpointMeta = CheckpointMeta()) -> bytes:
    out = [MAGIC, struct.pack("<I", VERSION)]
    name = model.name.encode("utf-8")
    out.append(struct.pack("<H", len(name)) + name)
    shapes = model.param_shapes()
    out.append(struct.pack("<I", len(shapes)))
    for key, shape in shapes.items():
        value = params[key]
        if tuple(value.shape) != tuple(shape):
            raise ValueError(f"parameter {key} has shape {value.shape}, model expects {shape}")
        kb = key.encode("utf-8")
        out.append(struct.pack("<H", len(kb)) + kb)
        out.append(struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}I", *shape))
        out.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    out.append(struct.pack("<If", meta.epoch, meta.best_val_metric))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("unexpected end of checkpoint")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(data: bytes):
    """Parse without a model: ``(model_name, {entry: array}, meta)``."""
    r = _Reader(data)
    magic = r.take(4)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    (nlen,) = r.unpack("<H")
    name = r.take(nlen).decode("utf-8")
    (count,) = r.unpack("<I")
    entries = {}
    for _ in range(count):
        (klen,) = r.unpack("<H")
        key = r.take(klen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(dims)) if dims else 1
        values = np.frombuffer(r.take(4 * size), dtype="<f4").astype(np.float32).reshape(dims)
        entries[key] = values
    epoch, metric = r.unpack("<If")
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after checkpoint metadata")
    return name, entries, CheckpointMeta(epoch, metric)


def load_checkpoint(data: bytes, model: ModelSpec) -> Tuple[Params, CheckpointMeta]:
    """Parse and validate every entry name and shape against ``model``."""
    name, entries, meta = read_checkpoint(data)
    expected = list(model.param_shapes().items())
    found = list(entries.items())
    for i, (key, shape) in enumerate(expected):
        if i >= len(found):
            raise CheckpointError(f"checkpoint is missing entry {key!r} (has {len(found)} entries)")
        fkey, fval = found[i]
        if fkey != key:
            raise CheckpointError(f"checkpoint entry {i} is {fkey!r}, model expects {key!r}")
        if tuple(fval.shape) != tuple(shape):
            raise CheckpointError(f"checkpoint entry {key!r} has shape {fval.shape}, model expects {shape}")
    if len(found) > len(expected):
        raise CheckpointError(f"checkpoint has extra entry {found[len(expected)][0]!r}")
    if name != model.name:
        raise CheckpointError(f"checkpoint is for model {name!r}, not {model.name!r}")
    return {k: v.copy() for k, v in entries.items()}, meta


def transfer_params(entries: Params, model: ModelSpec, rng: Rng,
                    head_prefixes: Sequence[str] = ("classifier.",)) -> Params:
    """Initialize ``model`` from pretrained entries, re-drawing a mismatched head.

    Backbone entries must match by name and shape; classifier entries whose
    shape differs (new class count) are freshly initialized.
    """
    fresh = init_params(model, rng)
    params = {}
    for key, shape in model.param_shapes().items():
        src = entries.get(key)
        if src is not None and tuple(src.shape) == tuple(shape):
            params[key] = src.astype(np.float32).copy()
        elif key.startswith(tuple(head_prefixes)):
            params[key] = fresh[key]
        else:
            raise CheckpointError(f"pretrained checkpoint has no compatible entry for {key!r}")
    return params


def infer_dims(entries: Params) -> Tuple[int, int]:
    """``(in_channels, num_classes)`` recovered from checkpoint entry shapes."""
    try:
        return int(entries["stem.conv.weight"].shape[1]), int(entries["classifier.dense.weight"].shape[1])
    except KeyError as exc:
        raise CheckpointError(f"checkpoint lacks entry {exc.args[0]!r}") from None


def cast_params(params: Params, dtype) -> Params:
    return {k: v.astype(dtype) for k, v in params.items()}
