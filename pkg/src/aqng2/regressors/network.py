"""Forward and backward passes of a small 1-D convolutional regressor.

Activations are kept channels-last, shape ``(batch, length, channels)``.
A dense layer flattens that array position-major, channel-minor.  All
parameters live in one flat vector; :class:`PccnnModel` records where each
layer's weights and bias sit inside it.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .._validation import check_windows
from ..exceptions import ShapeMismatch

DEFAULT_WINDOW = 5000

DEFAULT_LAYERS = (
    {"kind": "conv1d", "filters": 8, "kernel": 16, "stride": 4},
    {"kind": "activation", "fn": "relu"},
    {"kind": "pool", "size": 4},
    {"kind": "conv1d", "filters": 16, "kernel": 8, "stride": 2},
    {"kind": "activation", "fn": "relu"},
    {"kind": "pool", "size": 4},
    {"kind": "dense", "units": 1},
)

_KINDS = ("conv1d", "activation", "pool", "dense")


@dataclass(frozen=True)
class LayerSlot:
    """Where one layer's parameters live in the flat vector."""

    offset: int
    weight_shape: tuple
    bias_size: int

    @property
    def weight_size(self):
        return int(np.prod(self.weight_shape)) if self.weight_shape else 0

    @property
    def size(self):
        return self.weight_size + self.bias_size


def plan(layer_spec, input_len):
    """Output shapes and parameter slots for a layer stack.

    Returns ``(shapes, slots)`` where ``shapes[i]`` is the ``(length,
    channels)`` after layer ``i`` and ``slots[i]`` is a :class:`LayerSlot`
    or ``None`` for parameter-free layers.
    """
    length, channels = int(input_len), 1
    shapes, slots, offset = [], [], 0
    for layer in layer_spec:
        kind = layer["kind"]
        if kind == "conv1d":
            k, s, f = layer["kernel"], layer.get("stride", 1), layer["filters"]
            if length < k:
                raise ShapeMismatch(f"conv kernel {k} longer than its input ({length})")
            length = (length - k) // s + 1
            bias = f if layer.get("bias", True) else 0
            slot = LayerSlot(offset, (f, channels, k), bias)
            channels = f
        elif kind == "pool":
            length //= layer["size"]
            if length < 1:
                raise ShapeMismatch("pooling reduced the signal to zero length")
            slot = None
        elif kind == "activation":
            if layer.get("fn", "relu") != "relu":
                raise ValueError(f"unsupported activation {layer['fn']!r}")
            slot = None
        elif kind == "dense":
            units = layer.get("units", 1)
            bias = units if layer.get("bias", True) else 0
            slot = LayerSlot(offset, (units, length * channels), bias)
            length, channels = 1, units
        else:
            raise ValueError(f"unknown layer kind {kind!r}; expected one of {_KINDS}")
        if slot is not None:
            offset += slot.size
        shapes.append((length, channels))
        slots.append(slot)
    if layer_spec[-1]["kind"] != "dense" or shapes[-1] != (1, 1):
        raise ValueError("the last layer must be a dense layer with one unit")
    return shapes, slots


def _unpack(theta, slot):
    w = theta[slot.offset : slot.offset + slot.weight_size].reshape(slot.weight_shape)
    b = theta[slot.offset + slot.weight_size : slot.offset + slot.size]
    return w, b


@dataclass
class PccnnModel:
    """Layer description, input length and flat parameter vector."""

    layer_spec: tuple = DEFAULT_LAYERS
    input_len: int = DEFAULT_WINDOW
    parameters: np.ndarray = None
    slots: list = field(init=False, repr=False)

    def __post_init__(self):
        self.layer_spec = tuple(dict(layer) for layer in self.layer_spec)
        _, self.slots = plan(self.layer_spec, self.input_len)
        if self.parameters is None:
            self.parameters = np.zeros(self.n_parameters, dtype=np.float32)
        self.parameters = np.asarray(self.parameters)
        if self.parameters.shape != (self.n_parameters,):
            raise ShapeMismatch(
                f"expected {self.n_parameters} parameters, got {self.parameters.shape}"
            )

    @property
    def n_parameters(self):
        return sum(s.size for s in self.slots if s is not None)

    @property
    def param_layout(self):
        return [None if s is None else (s.offset, s.weight_shape, s.bias_size) for s in self.slots]

    def counted_layers(self):
        return len(self.layer_spec)


def init_parameters(layer_spec, input_len, seed):
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
    _, slots = plan(layer_spec, input_len)
    rng = np.random.default_rng(seed)
    theta = np.zeros(sum(s.size for s in slots if s is not None))
    for layer, slot in zip(layer_spec, slots):
        if slot is None:
            continue
        if layer["kind"] == "conv1d":
            f, c, k = slot.weight_shape
            fan_in, fan_out = c * k, f * k
        else:
            fan_out, fan_in = slot.weight_shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        theta[slot.offset : slot.offset + slot.weight_size] = rng.uniform(-limit, limit, slot.weight_size)
    return theta


def _pool_sum(a, p, n_out):
    n, _, c = a.shape
    groups = a[:, : n_out * p].reshape(n, n_out, p, c)
    total = groups[:, :, 0] + groups[:, :, 1] if p > 1 else groups[:, :, 0].copy()
    for j in range(2, p):
        total += groups[:, :, j]
    return total


def forward_batch(layer_spec, slots, theta, x, keep_cache=False):
    """Predictions for a ``(batch, length)`` array; optionally the backward cache."""
    theta = theta.astype(x.dtype, copy=False)
    a = x[:, :, np.newaxis]
    owned = False  # True once ``a`` is a buffer of our own that may be overwritten
    cache = []
    for layer, slot in zip(layer_spec, slots):
        kind = layer["kind"]
        if kind == "conv1d":
            w, b = _unpack(theta, slot)
            f, c, k = w.shape
            s = layer.get("stride", 1)
            n, length, _ = a.shape
            n_out = (length - k) // s + 1
            win = sliding_window_view(a, k, axis=1)[:, : s * (n_out - 1) + 1 : s]
            # BLAS needs a contiguous operand; matmul on the strided view is ~10x slower
            cols = np.ascontiguousarray(win).reshape(n * n_out, c * k)
            out = cols @ w.reshape(f, c * k).T
            if b.size:
                out += b
            if keep_cache:
                cache.append((cols, length))
            a = out.reshape(n, n_out, f)
            owned = True
        elif kind == "activation":
            a = np.maximum(a, 0, out=a if owned and not keep_cache else None)
            owned = True
            if keep_cache:
                cache.append(a)
        elif kind == "pool":
            p = layer["size"]
            n_out = a.shape[1] // p
            if keep_cache:
                cache.append(a.shape[1])
            a = _pool_sum(a, p, n_out)
            a *= 1.0 / p
            owned = True
        else:
            w, b = _unpack(theta, slot)
            flat = a.reshape(a.shape[0], -1)
            if keep_cache:
                cache.append((flat, a.shape))
            # row-wise sums keep each prediction independent of the batch size
            a = np.stack([(flat * w[u]).sum(axis=1) for u in range(w.shape[0])], axis=1)
            if b.size:
                a = a + b
            owned = True
    y = a.reshape(a.shape[0], -1)[:, 0]
    return (y, cache) if keep_cache else y


def _conv_columns(a, k, s, n_out):
    """Channels-first patches ``(n, c * k, n_out)``, tap index fastest within a channel."""
    n, c, _ = a.shape
    cols = np.empty((n, c, k, n_out), dtype=a.dtype)
    if k % s == 0:
        # split time into phases so every copy is a contiguous run
        span = s * (n_out - 1 + k // s)
        phases = np.ascontiguousarray(a[:, :, :span].reshape(n, c, span // s, s).transpose(0, 1, 3, 2))
        blocks = cols.reshape(n, c, k // s, s, n_out)
        for j in range(k // s):
            blocks[:, :, j] = phases[:, :, :, j : j + n_out]
    else:
        for j in range(k):
            cols[:, :, j] = a[:, :, j : j + s * (n_out - 1) + 1 : s]
    return cols.reshape(n, c * k, n_out)


def infer_batch(layer_spec, slots, theta, x):
    """Inference-only forward pass in channels-first layout.

    Mathematically identical to :func:`forward_batch`; the layout lets each
    convolution run as one wide matrix product per window, which is
    roughly twice as fast.  Rounding can differ from the training pass in
    the last bits, so every prediction goes through this function.
    """
    theta = theta.astype(x.dtype, copy=False)
    a = x[:, np.newaxis, :]
    owned = False
    for layer, slot in zip(layer_spec, slots):
        kind = layer["kind"]
        if kind == "conv1d":
            w, b = _unpack(theta, slot)
            f, c, k = w.shape
            s = layer.get("stride", 1)
            n_out = (a.shape[2] - k) // s + 1
            a = w.reshape(f, c * k) @ _conv_columns(a, k, s, n_out)
            if b.size:
                a += b[:, np.newaxis]
            owned = True
        elif kind == "activation":
            a = np.maximum(a, 0, out=a if owned else None)
            owned = True
        elif kind == "pool":
            p = layer["size"]
            n, c, length = a.shape
            groups = a[:, :, : (length // p) * p].reshape(n, c, length // p, p)
            total = groups[..., 0] + groups[..., 1] if p > 1 else groups[..., 0].copy()
            for j in range(2, p):
                total += groups[..., j]
            total *= 1.0 / p
            a, owned = total, True
        else:
            w, b = _unpack(theta, slot)
            # dense weights index the channels-last flattening
            flat = np.ascontiguousarray(a.transpose(0, 2, 1)).reshape(a.shape[0], -1)
            a = np.stack([(flat * w[u]).sum(axis=1) for u in range(w.shape[0])], axis=1)
            if b.size:
                a = a + b
            a, owned = a[:, :, np.newaxis], True
    return a.reshape(a.shape[0], -1)[:, 0]


def backward_batch(layer_spec, slots, theta, cache, dy, need_input_grad=False):
    """Gradient of ``sum(dy * y)`` with respect to ``theta`` (and the input)."""
    dtype = dy.dtype
    theta = theta.astype(dtype, copy=False)
    grad = np.zeros(theta.shape, dtype=dtype)
    da = dy.reshape(-1, 1)
    for i in range(len(layer_spec) - 1, -1, -1):
        layer, slot, saved = layer_spec[i], slots[i], cache[i]
        kind = layer["kind"]
        first = i == 0
        if kind == "dense":
            flat, in_shape = saved
            w, b = _unpack(theta, slot)
            grad[slot.offset : slot.offset + slot.weight_size] = (da.T @ flat).ravel()
            if slot.bias_size:
                grad[slot.offset + slot.weight_size : slot.offset + slot.size] = da.sum(axis=0)
            if first and not need_input_grad:
                break
            da = (da @ w).reshape(in_shape)
        elif kind == "pool":
            length = saved
            p = layer["size"]
            n, n_out, c = da.shape
            full = np.zeros((n, length, c), dtype=da.dtype)
            scaled = da * (1.0 / p)
            for j in range(p):
                full[:, j : n_out * p : p] = scaled
            da = full
        elif kind == "activation":
            da = da * (saved > 0)
        else:
            cols, length = saved
            w, b = _unpack(theta, slot)
            f, c, k = w.shape
            s = layer.get("stride", 1)
            n, n_out, _ = da.shape
            gw = da.reshape(-1, f).T @ cols
            grad[slot.offset : slot.offset + slot.weight_size] = gw.ravel()
            if slot.bias_size:
                grad[slot.offset + slot.weight_size : slot.offset + slot.size] = da.sum(axis=(0, 1))
            if first and not need_input_grad:
                break
            dcols = (da.reshape(-1, f) @ w.reshape(f, c * k)).reshape(n, n_out, c, k)
            dx = np.zeros((n, length, c), dtype=da.dtype)
            stop = s * (n_out - 1) + 1
            for j in range(k):
                dx[:, j : j + stop : s] += dcols[:, :, :, j]
            da = dx
    if need_input_grad:
        return grad, da[:, :, 0]
    return grad


def forward(model, window, dtype=np.float32):
    """Scalar prediction for one window (already standardised)."""
    x = check_windows(window, model.input_len, dtype=dtype)
    if x.shape[0] != 1:
        raise ShapeMismatch("forward takes a single window; use predict_batch")
    return float(infer_batch(model.layer_spec, model.slots, np.asarray(model.parameters), x)[0])


def backward(model, window, label, theta=None):
    """Gradient of ``(forward(window) - label) ** 2`` with respect to the parameters.

    Evaluated in float64; ``theta`` overrides the model's parameter vector.
    """
    x = check_windows(window, model.input_len)
    if x.shape[0] != 1:
        raise ShapeMismatch("backward takes a single window")
    theta = np.asarray(model.parameters if theta is None else theta, dtype=np.float64)
    y, cache = forward_batch(model.layer_spec, model.slots, theta, x, keep_cache=True)
    return backward_batch(model.layer_spec, model.slots, theta, cache, 2.0 * (y - label))


def fold_input_affine(model, mean, scale):
    """Equivalent model on raw windows, with ``(x - mean) / scale`` absorbed by the first convolution.

    Returns None when the first layer is not a convolution with a bias.
    """
    slot = model.slots[0]
    if model.layer_spec[0]["kind"] != "conv1d" or not slot.bias_size:
        return None
    theta = np.asarray(model.parameters, dtype=np.float64).copy()
    w, b = _unpack(theta, slot)
    b -= mean * w.reshape(w.shape[0], -1).sum(axis=1) / scale
    w /= scale
    return replace(model, parameters=theta.astype(np.asarray(model.parameters).dtype))


def predict_raw(model, x, batch_size=32, dtype=np.float32, validate=True):
    """Predictions for standardised windows, evaluated in fixed-size chunks.

    Small chunks keep the convolution buffers in cache; results do not
    depend on ``batch_size``.
    """
    if validate:
        x = check_windows(x, model.input_len, dtype=dtype)
    theta = np.asarray(model.parameters)
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], batch_size):
        out[start : start + batch_size] = infer_batch(
            model.layer_spec, model.slots, theta, x[start : start + batch_size]
        )
    return out
