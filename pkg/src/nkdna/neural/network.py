"""Feedforward networks as immutable values: init, forward, loss, backprop, SGD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BadShape
from . import kernels

ACTIVATIONS = tuple(kernels.ACT_CODES)


def _frozen(arr) -> np.ndarray:
    a = np.array(arr, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Layer widths, activations and parameters of an MLP.

    ``weights[l]`` has shape ``(layer_sizes[l+1], layer_sizes[l])``.
    Arrays are stored read-only; derive new networks instead of mutating.
    """

    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        object.__setattr__(self, "activations", tuple(self.activations))
        object.__setattr__(self, "weights", tuple(_frozen(w) for w in self.weights))
        object.__setattr__(self, "biases", tuple(_frozen(b) for b in self.biases))
        check_spec(self)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def __eq__(self, other):
        if not isinstance(other, NetworkSpec):
            return NotImplemented
        return (
            self.layer_sizes == other.layer_sizes
            and self.activations == other.activations
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    __hash__ = None

    # flat-vector view used by the kernels
    def pack(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def sizes_array(self) -> np.ndarray:
        return np.asarray(self.layer_sizes, dtype=np.int64)

    def act_codes(self) -> np.ndarray:
        return np.asarray([kernels.ACT_CODES[a] for a in self.activations], dtype=np.int64)

    def unpack(self, params: np.ndarray) -> "NetworkSpec":
        """Same architecture, parameters taken from a flat vector."""
        ws, bs = [], []
        for W, b in kernels._np_layers(np.asarray(params, dtype=np.float64), self.layer_sizes):
            ws.append(W)
            bs.append(b)
        return NetworkSpec(self.layer_sizes, self.activations, tuple(ws), tuple(bs))


@dataclass(frozen=True, eq=False)
class Gradients:
    d_weights: tuple[np.ndarray, ...]
    d_biases: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.d_weights, self.d_biases):
            parts.append(np.ravel(W))
            parts.append(b)
        return np.concatenate(parts)

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))


def check_spec(net: NetworkSpec) -> None:
    sizes = net.layer_sizes
    if len(sizes) < 2:
        raise BadShape(f"need at least 2 layer widths, got {list(sizes)}")
    if any(n <= 0 for n in sizes):
        raise BadShape(f"layer widths must be positive, got {list(sizes)}")
    L = len(sizes) - 1
    if len(net.activations) != L:
        raise BadShape(f"expected {L} activations, got {len(net.activations)}")
    for a in net.activations:
        if a not in kernels.ACT_CODES:
            raise BadShape(f"unknown activation {a!r}")
    if len(net.weights) != L or len(net.biases) != L:
        raise BadShape("weights/biases must have one entry per layer")
    for l in range(L):
        if net.weights[l].shape != (sizes[l + 1], sizes[l]):
            raise BadShape(f"layer {l} weight shape {net.weights[l].shape} != {(sizes[l + 1], sizes[l])}")
        if net.biases[l].shape != (sizes[l + 1],):
            raise BadShape(f"layer {l} bias shape {net.biases[l].shape} != {(sizes[l + 1],)}")
        if not (np.all(np.isfinite(net.weights[l])) and np.all(np.isfinite(net.biases[l]))):
            raise BadShape(f"layer {l} has non-finite parameters")


def _unflatten(net: NetworkSpec, flat: np.ndarray) -> Gradients:
    ws, bs = zip(*kernels._np_layers(flat, net.layer_sizes))
    return Gradients(tuple(np.array(w) for w in ws), tuple(np.array(b) for b in bs))


def init_network(layer_sizes, activations, seed: int) -> NetworkSpec:
    """Uniform ``±1/sqrt(fan_in)`` weights, zero biases, seeded by ``seed``."""
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or any(n <= 0 for n in sizes):
        raise BadShape(f"invalid layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for nin, nout in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(nin)
        ws.append(rng.uniform(-lim, lim, size=(nout, nin)))
        bs.append(np.zeros(nout))
    return NetworkSpec(tuple(sizes), tuple(activations), tuple(ws), tuple(bs))


def _vec(x, n: int, what: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != n:
        raise BadShape(f"{what} must have length {n}, got shape {v.shape}")
    return v


def forward(net: NetworkSpec, x, backend: str | None = None) -> np.ndarray:
    x = _vec(x, net.n_inputs, "input")
    k = kernels.get_backend(backend)
    return k.forward_batch(net.pack(), net.sizes_array(), net.act_codes(), x[None, :])[0]


def loss_mse_masked(y, target, mask) -> float:
    y = np.asarray(y, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not (y.shape == target.shape == mask.shape) or y.ndim != 1:
        raise BadShape(f"shape mismatch: y{y.shape} target{target.shape} mask{mask.shape}")
    if not mask.any():
        return 0.0
    d = y[mask] - target[mask]
    return float(np.mean(d * d))


def backprop(net: NetworkSpec, x, target, mask, backend: str | None = None) -> Gradients:
    x = _vec(x, net.n_inputs, "input")
    target = _vec(target, net.n_outputs, "target")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (net.n_outputs,):
        raise BadShape(f"mask must have length {net.n_outputs}")
    k = kernels.get_backend(backend)
    _, g = k.grad_batch(
        net.pack(), net.sizes_array(), net.act_codes(), x[None, :], target[None, :], mask[None, :]
    )
    return _unflatten(net, g)


def apply_gradients(net: NetworkSpec, g: Gradients, lr: float) -> NetworkSpec:
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    if len(g.d_weights) != len(net.weights) or any(
        np.shape(dw) != w.shape for dw, w in zip(g.d_weights, net.weights)
    ) or any(np.shape(db) != b.shape for db, b in zip(g.d_biases, net.biases)):
        raise BadShape("gradient shapes do not match network")
    ws = tuple(w - lr * np.asarray(dw) for w, dw in zip(net.weights, g.d_weights))
    bs = tuple(b - lr * np.asarray(db) for b, db in zip(net.biases, g.d_biases))
    return NetworkSpec(net.layer_sizes, net.activations, ws, bs)


def finite_diff(net: NetworkSpec, x, target, mask, h: float = 1e-5) -> Gradients:
    """Central-difference gradient estimate.

    Evaluates the loss through the numpy forward path regardless of the
    active backend, so it stays an independent check on :func:`backprop`.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    x = _vec(x, net.n_inputs, "input")
    target = _vec(target, net.n_outputs, "target")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (net.n_outputs,):
        raise BadShape(f"mask must have length {net.n_outputs}")
    sizes, acts = net.layer_sizes, [kernels.ACT_CODES[a] for a in net.activations]
    p = net.pack()
    X = x[None, :]

    def loss_at(q):
        return loss_mse_masked(kernels.np_forward_batch(q, sizes, acts, X)[0], target, mask)

    g = np.empty_like(p)
    for i in range(p.size):
        old = p[i]
        p[i] = old + h
        up = loss_at(p)
        p[i] = old - h
        down = loss_at(p)
        p[i] = old
        g[i] = (up - down) / (2.0 * h)
    return _unflatten(net, g)
