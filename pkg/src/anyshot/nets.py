"""Dense-network machinery: layers, reverse-mode gradients, optimizer.

Parameters live in float32; loss reductions run in float64.  The
checkpoint container is a little-endian sequence of named float32
tensors:

    magic "SPCK" | u32 version=1 | u32 count
    per tensor: u32 name_len | UTF-8 name | u32 rank | rank u32 dims | data
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, ContractError, NumericError, ShapeError

ACTIVATIONS = ("relu", "sigmoid", "identity", "leaky_relu")
LEAKY_SLOPE = 0.2


@dataclass
class Layer:
    w: np.ndarray
    b: np.ndarray
    activation: str


@dataclass
class DenseNet:
    layers: list[Layer]
    rng_seed: int = 0

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[1]


def init_dense(sizes: list[int], activations: list[str], seed: int) -> DenseNet:
    """Glorot-uniform weights, zero biases, deterministic in the seed."""
    if len(activations) != len(sizes) - 1:
        raise ShapeError("need one activation per layer")
    for act in activations:
        if act not in ACTIVATIONS:
            raise ContractError(f"unknown activation {act!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(sizes, sizes[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)
        b = np.zeros(fan_out, dtype=np.float32)
        layers.append(Layer(w=w, b=b, activation=act))
    return DenseNet(layers=layers, rng_seed=seed)


def clone_net(net: DenseNet) -> DenseNet:
    return DenseNet(
        layers=[Layer(l.w.copy(), l.b.copy(), l.activation) for l in net.layers],
        rng_seed=net.rng_seed,
    )


def cast_net(net: DenseNet, dtype) -> DenseNet:
    return DenseNet(
        layers=[
            Layer(l.w.astype(dtype), l.b.astype(dtype), l.activation)
            for l in net.layers
        ],
        rng_seed=net.rng_seed,
    )


def parameters(net: DenseNet) -> list[np.ndarray]:
    """Flat view of all parameter arrays, layer order, weight before bias."""
    out = []
    for layer in net.layers:
        out.append(layer.w)
        out.append(layer.b)
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if kind == "sigmoid":
        return _sigmoid(z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "leaky_relu":
        return np.where(z > 0, z.dtype.type(1), z.dtype.type(LEAKY_SLOPE))
    if kind == "sigmoid":
        return a * (1 - a)
    return np.ones_like(z)


@dataclass
class ForwardCache:
    net: DenseNet
    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)


def forward(net: DenseNet, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the net on a (B, in) batch; cache feeds backward()."""
    x = np.asarray(batch)
    if x.ndim != 2:
        raise ShapeError(f"batch must be 2-d, got shape {x.shape}")
    if x.shape[1] != net.in_dim:
        raise ShapeError(f"batch width {x.shape[1]} != input dim {net.in_dim}")
    cache = ForwardCache(net=net)
    a = x
    for layer in net.layers:
        z = a @ layer.w + layer.b
        cache.inputs.append(a)
        cache.preacts.append(z)
        a = _activate(z, layer.activation)
        cache.outputs.append(a)
    return a, cache


def backward(
    net: DenseNet, cache: ForwardCache, upstream: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of sum(output * upstream) w.r.t. parameters and input.

    Returns grads aligned with parameters(net), then the input gradient.
    """
    if cache.net is not net or len(cache.inputs) != len(net.layers):
        raise ContractError("cache does not belong to this net")
    g = np.asarray(upstream)
    if g.shape != cache.outputs[-1].shape:
        raise ShapeError(
            f"upstream shape {g.shape} != output shape {cache.outputs[-1].shape}"
        )
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        dz = g * _activation_grad(cache.preacts[i], cache.outputs[i], layer.activation)
        grads[2 * i] = cache.inputs[i].T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        g = dz @ layer.w.T
    return grads, g


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators mirroring one parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int
    lr: float
    beta1: float
    beta2: float
    eps: float


def adam_init(
    params: list[np.ndarray],
    lr: float = 1e-4,
    beta1: float = 0.5,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> OptimizerState:
    return OptimizerState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        t=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState
) -> None:
    """One in-place update of every parameter array."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ShapeError("params, grads and state lengths differ")
    for g in grads:
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def softmax_cross_entropy(
    logits: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross entropy and its logit gradient (softmax minus one-hot)/B."""
    z = np.asarray(logits)
    t = np.asarray(targets)
    if z.ndim != 2 or t.shape != (z.shape[0],):
        raise ShapeError(f"logits {z.shape} vs targets {t.shape}")
    if t.size and (int(t.max()) >= z.shape[1] or int(t.min()) < 0):
        raise ShapeError("target index out of range")
    z64 = z.astype(np.float64)
    z64 -= z64.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z64).sum(axis=1, keepdims=True))
    logp = z64 - logsum
    loss = float(-logp[np.arange(t.size), t].mean())
    grad = np.exp(logp)
    grad[np.arange(t.size), t] -= 1.0
    grad /= t.size
    return loss, grad.astype(z.dtype)


def grad_check(net: DenseNet, loss_fn, batch) -> float:
    """Worst relative difference between analytic and central-difference grads.

    loss_fn(net, batch) must return (loss, grads aligned with
    parameters(net)) and be deterministic.  The net is promoted to
    float64 first; float32 steps of h=1e-5 cannot resolve 1e-4 errors.
    """
    net64 = cast_net(net, np.float64)
    _, analytic = loss_fn(net64, batch)
    params = parameters(net64)
    if len(analytic) != len(params):
        raise ShapeError("loss_fn returned misaligned gradients")
    h = 1e-5
    worst = 0.0
    for p, g in zip(params, analytic):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g, dtype=np.float64).reshape(-1)
        for j in range(flat_p.size):
            keep = flat_p[j]
            flat_p[j] = keep + h
            up, _ = loss_fn(net64, batch)
            flat_p[j] = keep - h
            down, _ = loss_fn(net64, batch)
            flat_p[j] = keep
            numeric = (up - down) / (2.0 * h)
            rel = abs(flat_g[j] - numeric) / max(1e-6, abs(flat_g[j]) + abs(numeric))
            worst = max(worst, rel)
    return worst


CKPT_MAGIC = b"SPCK"
CKPT_VERSION = 1


def save_tensors(path, tensors: list[tuple[str, np.ndarray]]) -> None:
    """Write named tensors as float32, preserving order."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", CKPT_MAGIC, CKPT_VERSION, len(tensors)))
        for name, arr in tensors:
            raw = name.encode("utf-8")
            a = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(a.tobytes())


def load_tensors(path) -> list[tuple[str, np.ndarray]]:
    with open(path, "rb") as fh:
        buf = fh.read()

    def take(off: int, n: int, what: str) -> tuple[bytes, int]:
        if off + n > len(buf):
            raise CheckpointError(f"checkpoint ends inside {what}")
        return buf[off : off + n], off + n

    raw, off = take(0, 12, "header")
    magic, version, count = struct.unpack("<4sII", raw)
    if magic != CKPT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported version {version}")
    out = []
    for _ in range(count):
        raw, off = take(off, 4, "name length")
        (nlen,) = struct.unpack("<I", raw)
        raw, off = take(off, nlen, "name")
        name = raw.decode("utf-8")
        raw, off = take(off, 4, "rank")
        (rank,) = struct.unpack("<I", raw)
        raw, off = take(off, 4 * rank, "dims")
        dims = struct.unpack(f"<{rank}I", raw)
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw, off = take(off, 4 * size, f"tensor {name!r}")
        out.append((name, np.frombuffer(raw, dtype="<f4").reshape(dims).copy()))
    if off != len(buf):
        raise CheckpointError(f"{len(buf) - off} trailing bytes")
    return out
