"""A minimal sequential MLP with hand-written reverse-mode gradients and Adam.

Hidden layers use Softplus; the last layer is linear.  Inputs are batches
of row vectors, so a forward pass on ``(B, n_in)`` returns ``(B, n_out)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit

__all__ = [
    "MLP",
    "Tape",
    "AdamState",
    "StaleTapeError",
    "softplus",
    "softplus_grad",
    "forward",
    "backward",
    "adam_step",
    "save_mlps",
    "load_mlps",
]


def softplus(x):
    """``ln(1 + e^x)`` evaluated without overflow."""
    x = np.asarray(x, dtype=float)
    pos = x > 0
    out = np.empty_like(x)
    out[pos] = x[pos] + np.log1p(np.exp(-x[pos]))
    out[~pos] = np.log1p(np.exp(x[~pos]))
    return out if out.ndim else float(out)


def softplus_grad(x):
    return expit(x)


class StaleTapeError(RuntimeError):
    pass


class MLP:
    """Dense layers ``(W, b)`` with ``W`` of shape ``(out, in)``."""

    def __init__(self, layers: Sequence[Tuple[np.ndarray, np.ndarray]], hidden_activation: bool = True):
        self.layers = [(np.array(W, dtype=float), np.array(b, dtype=float).reshape(-1)) for W, b in layers]
        for (W, b), (W2, _) in zip(self.layers, self.layers[1:]):
            if W2.shape[1] != W.shape[0]:
                raise ValueError("consecutive layer shapes do not compose")
        for W, b in self.layers:
            if b.shape[0] != W.shape[0]:
                raise ValueError("bias length does not match layer width")
        self.hidden_activation = hidden_activation
        self.version = 0

    @classmethod
    def init(cls, widths: Sequence[int], seed: int = 0, hidden_activation: bool = True) -> "MLP":
        """Glorot-uniform weights and zero biases for layer widths ``[n_in, ..., n_out]``."""
        rng = np.random.default_rng(seed)
        layers = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append((rng.uniform(-a, a, size=(fan_out, fan_in)), np.zeros(fan_out)))
        return cls(layers, hidden_activation)

    @classmethod
    def zeros(cls, widths: Sequence[int], hidden_activation: bool = True) -> "MLP":
        return cls([(np.zeros((o, i)), np.zeros(o)) for i, o in zip(widths[:-1], widths[1:])], hidden_activation)

    @property
    def widths(self) -> List[int]:
        return [self.layers[0][0].shape[1]] + [W.shape[0] for W, _ in self.layers]

    @property
    def n_in(self):
        return self.layers[0][0].shape[1]

    @property
    def n_out(self):
        return self.layers[-1][0].shape[0]

    def params(self) -> List[np.ndarray]:
        return [p for layer in self.layers for p in layer]

    def set_params(self, flat: Sequence[np.ndarray]):
        it = iter(flat)
        self.layers = [(np.array(next(it)), np.array(next(it))) for _ in self.layers]
        self.version += 1

    def copy(self) -> "MLP":
        net = MLP([(W.copy(), b.copy()) for W, b in self.layers], self.hidden_activation)
        return net

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class Tape:
    inputs: List[np.ndarray]
    pre: List[np.ndarray]
    version: int
    net_id: int


def forward(net: MLP, x):
    """Run the network; returns the output and a tape for :func:`backward`."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != net.n_in:
        raise ValueError(f"expected input width {net.n_in}, got {h.shape[1]}")
    inputs, pre = [], []
    last = len(net.layers) - 1
    for i, (W, b) in enumerate(net.layers):
        inputs.append(h)
        a = h @ W.T + b
        pre.append(a)
        h = softplus(a) if (i < last and net.hidden_activation) else a
    out = h[0] if single else h
    return out, Tape(inputs, pre, net.version, id(net))


def backward(net: MLP, tape: Tape, grad_output):
    """Gradients of ``sum(output * grad_output)`` w.r.t. every parameter and the input.

    Returns ``(grads, grad_input)`` where ``grads`` is a list of ``(dW, db)``
    aligned with ``net.layers``.  Batch contributions are summed.
    """
    if tape.version != net.version or tape.net_id != id(net):
        raise StaleTapeError("tape was recorded for different parameters")
    g = np.atleast_2d(np.asarray(grad_output, dtype=float))
    single = np.asarray(grad_output).ndim == 1
    grads = [None] * len(net.layers)
    last = len(net.layers) - 1
    for i in range(last, -1, -1):
        W, _ = net.layers[i]
        if i < last and net.hidden_activation:
            g = g * softplus_grad(tape.pre[i])
        grads[i] = (g.T @ tape.inputs[i], g.sum(axis=0))
        g = g @ W
    return grads, (g[0] if single else g)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> List[np.ndarray]:
    """One bias-corrected Adam update; returns new parameter arrays and advances ``state``."""
    if len(params) != len(grads):
        raise ValueError("parameter and gradient lists differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        out.append(p - state.lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps))
    return out


# Binary layout (little endian): b"MLPS", u32 network count, then per network
# u32 layer count, u8 hidden-activation flag, (u32 out, u32 in) per layer,
# followed by each layer's W (row-major) and b as float64.
_MAGIC = b"MLPS"


def save_mlps(path, nets: Sequence[MLP]):
    chunks = [_MAGIC, struct.pack("<I", len(nets))]
    for net in nets:
        chunks.append(struct.pack("<IB", len(net.layers), int(net.hidden_activation)))
        for W, _ in net.layers:
            chunks.append(struct.pack("<II", *W.shape))
        for W, b in net.layers:
            chunks.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
            chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_mlps(path) -> List[MLP]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not an MLP checkpoint")
    pos = 4
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    nets = []
    for _ in range(count):
        n_layers, act = struct.unpack_from("<IB", data, pos)
        pos += 5
        shapes = []
        for _ in range(n_layers):
            shapes.append(struct.unpack_from("<II", data, pos))
            pos += 8
        layers = []
        for out, inp in shapes:
            W = np.frombuffer(data, dtype="<f8", count=out * inp, offset=pos).reshape(out, inp).astype(float)
            pos += 8 * out * inp
            b = np.frombuffer(data, dtype="<f8", count=out, offset=pos).astype(float)
            pos += 8 * out
            layers.append((W, b))
        nets.append(MLP(layers, bool(act)))
    return nets
