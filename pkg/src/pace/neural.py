"""The emergent channel: architect message net, builder net, losses and Adam.

Both networks are small ReLU MLPs written directly in numpy.  All parameters
of a network live in one flat vector so the optimiser update is a handful of
vectorised operations; layer weights are views into it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import NUM_CELLS

VOCAB = 30
N_CAP = 64
HIDDEN = 200
LOG_EPS = 1e-12
PROB_CLAMP = 1e-7


class ActionIdOverflow(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class DenseNet:
    """Fully connected net, ReLU on hidden layers, linear output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, dtype=np.float32):
        self.sizes = tuple(int(s) for s in sizes)
        self.dtype = np.dtype(dtype)
        count = sum(i * o + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))
        self.params = np.empty(count, dtype=self.dtype)
        self._bind()
        for (W, b), fan_in in zip(self.layers, self.sizes[:-1]):
            bound = 1.0 / np.sqrt(fan_in)
            W[...] = rng.uniform(-bound, bound, size=W.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)

    def _bind(self) -> None:
        self.layers = []
        offset = 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            W = self.params[offset : offset + i * o].reshape(i, o)
            offset += i * o
            b = self.params[offset : offset + o]
            offset += o
            self.layers.append((W, b))

    def __deepcopy__(self, memo):
        clone = DenseNet.__new__(DenseNet)
        clone.sizes = self.sizes
        clone.dtype = self.dtype
        clone.params = self.params.copy()
        clone._bind()
        return clone

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        acts = [x]
        h = x
        last = len(self.layers) - 1
        for k, (W, b) in enumerate(self.layers):
            h = h @ W + b
            if k < last:
                h = np.maximum(h, 0)
            acts.append(h)
        return h, acts

    def backward(self, acts: list, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradient of the flat parameter vector and of the input."""
        grad = np.empty_like(self.params)
        views = []
        offset = 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            views.append((grad[offset : offset + i * o].reshape(i, o), grad[offset + i * o : offset + i * o + o]))
            offset += i * o + o
        delta = dout
        for k in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[k]
            gW, gb = views[k]
            np.matmul(acts[k].T, delta, out=gW)
            gb[...] = delta.sum(axis=0)
            delta = delta @ W.T
            if k > 0:
                delta = delta * (acts[k] > 0)
        return grad, delta

    def state(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for k, (W, b) in enumerate(self.layers):
            out[f"{prefix}.W{k}"] = W.copy()
            out[f"{prefix}.b{k}"] = b.copy()
        return out

    def load_state(self, prefix: str, arrays) -> None:
        for k, (W, b) in enumerate(self.layers):
            W[...] = arrays[f"{prefix}.W{k}"]
            b[...] = arrays[f"{prefix}.b{k}"]


def make_architect(rng, n_cap: int = N_CAP, hidden: int = HIDDEN, vocab: int = VOCAB, dtype=np.float32) -> DenseNet:
    return DenseNet([n_cap, hidden, vocab], rng, dtype)


def make_builder(rng, hidden: int = HIDDEN, vocab: int = VOCAB, dtype=np.float32) -> DenseNet:
    return DenseNet([NUM_CELLS + vocab + NUM_CELLS, hidden, hidden, NUM_CELLS], rng, dtype)


@dataclass
class Adam:
    size: int
    lr: float = 0.0009
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    dtype: object = np.float32

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size, dtype=self.dtype)
        if self.v is None:
            self.v = np.zeros(self.size, dtype=self.dtype)

    def copy(self) -> Adam:
        return Adam(self.size, self.lr, self.beta1, self.beta2, self.eps, self.t, self.m.copy(), self.v.copy(), self.dtype)


def adam_step(opt: Adam, params: np.ndarray, grads: np.ndarray) -> None:
    if params.shape != grads.shape or params.shape != opt.m.shape:
        raise ShapeMismatch(f"params {params.shape}, grads {grads.shape}, state {opt.m.shape}")
    opt.t += 1
    tmp = np.multiply(grads, 1 - opt.beta1, dtype=opt.m.dtype)
    opt.m *= opt.beta1
    opt.m += tmp
    np.multiply(grads, grads, out=tmp, dtype=opt.m.dtype)
    tmp *= 1 - opt.beta2
    opt.v *= opt.beta2
    opt.v += tmp
    # m_hat / (sqrt(v_hat) + eps), bias corrections folded into scalars
    np.multiply(opt.v, 1.0 / (1 - opt.beta2**opt.t), out=tmp)
    np.sqrt(tmp, out=tmp)
    tmp += opt.eps
    np.divide(opt.m, tmp, out=tmp)
    tmp *= opt.lr / (1 - opt.beta1**opt.t)
    params -= tmp


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def one_hot(indices, width: int, dtype=np.float32) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    out = np.zeros((indices.size, width), dtype=dtype)
    out[np.arange(indices.size), indices] = 1
    return out


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    return -np.log(-np.log(u + 1e-20) + 1e-20)


@dataclass
class GumbelSample:
    message: np.ndarray  # forward value (one-hot when hard)
    soft: np.ndarray  # relaxed sample the gradient flows through
    noise: np.ndarray


def gumbel_softmax_sample(
    logits: np.ndarray,
    temperature: float,
    rng: np.random.Generator | None = None,
    hard: bool = True,
    noise: np.ndarray | None = None,
) -> GumbelSample:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = np.asarray(logits)
    if noise is None:
        noise = sample_gumbel(logits.shape, rng).astype(logits.dtype)
    soft = softmax((logits + noise) / temperature)
    if hard:
        message = np.zeros_like(soft)
        np.put_along_axis(message, soft.argmax(axis=-1)[..., None], 1, axis=-1)
    else:
        message = soft
    return GumbelSample(message, soft, noise)


def straight_through_backward(sample: GumbelSample, dmessage: np.ndarray, temperature: float) -> np.ndarray:
    """Gradient w.r.t. logits: the hard forward value is treated as the soft sample."""
    y = sample.soft
    return y * (dmessage - (y * dmessage).sum(axis=-1, keepdims=True)) / temperature


def check_action_ids(action_ids, n_cap: int) -> np.ndarray:
    ids = np.asarray(action_ids, dtype=np.int64).reshape(-1)
    if ids.size and (ids.max() >= n_cap or ids.min() < 0):
        raise ActionIdOverflow(f"action id {int(ids.max())} does not fit the {n_cap}-wide input")
    return ids


def architect_forward(
    net: DenseNet,
    action_ids,
    rng: np.random.Generator | None = None,
    temperature: float = 1.0,
    train: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Message logits and the message: a hard Gumbel sample in training, argmax otherwise."""
    ids = check_action_ids(action_ids, net.sizes[0])
    logits, _ = net.forward(one_hot(ids, net.sizes[0], net.dtype))
    if train:
        message = gumbel_softmax_sample(logits, temperature, rng, hard=True).message
    else:
        message = one_hot(logits.argmax(axis=-1), logits.shape[-1], net.dtype)
    return logits, message


def builder_input(grids: np.ndarray, messages: np.ndarray, anchors) -> np.ndarray:
    grids = np.atleast_2d(grids)
    messages = np.atleast_2d(messages)
    anchors_1h = one_hot(anchors, NUM_CELLS, grids.dtype)
    return np.concatenate([grids, messages.astype(grids.dtype), anchors_1h], axis=1)


def builder_forward(net: DenseNet, grids: np.ndarray, messages: np.ndarray, anchors) -> np.ndarray:
    """Per-cell occupancy probabilities of the next grid."""
    logits, _ = net.forward(builder_input(grids, messages, anchors))
    return sigmoid(logits)


def bce(target: np.ndarray, probs: np.ndarray) -> float:
    p = np.clip(probs, PROB_CLAMP, 1 - PROB_CLAMP)
    return float(np.mean(-(target * np.log(p) + (1 - target) * np.log(1 - p))))


def positive_signalling(message_logits: np.ndarray, beta: float = 1.0) -> float:
    """-(H(mean message dist) - beta * mean per-input entropy)."""
    pi = softmax(message_logits)
    mean = pi.mean(axis=0)
    h_mean = -np.sum(mean * np.log(mean + LOG_EPS))
    h_cond = -np.mean(np.sum(pi * np.log(pi + LOG_EPS), axis=1))
    return float(-(h_mean - beta * h_cond))


def communication_loss(
    target: np.ndarray, probs: np.ndarray, message_logits: np.ndarray, lam_ps: float = 0.1, beta: float = 1.0
) -> float:
    return bce(target, probs) + lam_ps * positive_signalling(message_logits, beta)


@dataclass
class BatchResult:
    loss: float
    architect_grad: np.ndarray
    builder_grad: np.ndarray
    probs: np.ndarray
    messages: np.ndarray
    logits: np.ndarray


def loss_and_grads(
    architect: DenseNet,
    builder: DenseNet,
    actions: np.ndarray,
    anchors: np.ndarray,
    grids: np.ndarray,
    targets: np.ndarray,
    noise: np.ndarray,
    temperature: float = 1.0,
    hard: bool = True,
    lam_ps: float = 0.1,
    beta: float = 1.0,
) -> BatchResult:
    """Forward both nets on a batch of transitions and backpropagate the total loss."""
    batch = len(actions)
    ids = check_action_ids(actions, architect.sizes[0])
    logits, arch_acts = architect.forward(one_hot(ids, architect.sizes[0], architect.dtype))
    sample = gumbel_softmax_sample(logits, temperature, hard=hard, noise=noise)

    x = builder_input(grids, sample.message, anchors)
    out, bldr_acts = builder.forward(x)
    probs = sigmoid(out)
    # BCE on logits: softplus(z) - t * z
    bce_value = np.mean(np.maximum(out, 0) - out * targets + np.log1p(np.exp(-np.abs(out))))

    pi = softmax(logits)
    mean = pi.mean(axis=0)
    log_mean = np.log(mean + LOG_EPS)
    log_pi = np.log(pi + LOG_EPS)
    h_mean = -np.sum(mean * log_mean)
    h_cond = -np.mean(np.sum(pi * log_pi, axis=1))
    loss = float(bce_value + lam_ps * -(h_mean - beta * h_cond))

    d_out = (probs - targets) / (batch * out.shape[1])
    builder_grad, d_in = builder.backward(bldr_acts, d_out.astype(builder.dtype))
    d_message = d_in[:, NUM_CELLS : NUM_CELLS + logits.shape[1]]
    d_logits = straight_through_backward(sample, d_message, temperature)
    if lam_ps:
        d_pi = lam_ps * ((log_mean + 1) - beta * (log_pi + 1)) / batch
        d_logits = d_logits + pi * (d_pi - (pi * d_pi).sum(axis=1, keepdims=True))
    architect_grad, _ = architect.backward(arch_acts, d_logits.astype(architect.dtype))
    return BatchResult(loss, architect_grad, builder_grad, probs, sample.message, logits)


def exact_match(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """1.0 where the thresholded prediction reproduces the whole target grid."""
    return np.all((probs > 0.5) == (targets > 0.5), axis=1).astype(np.float64)


def save_checkpoint(path: str | Path, architect: DenseNet, builder: DenseNet) -> None:
    arrays = {**architect.state("architect"), **builder.state("builder")}
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path, architect: DenseNet, builder: DenseNet) -> None:
    with np.load(path) as arrays:
        architect.load_state("architect", arrays)
        builder.load_state("builder", arrays)
