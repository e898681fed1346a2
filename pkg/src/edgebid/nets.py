"""Small dense nets with exact reverse-mode gradients, Adam, and a concrete relaxation.

Everything is float64 numpy.  A net is a stack of affine layers with ReLU in
between and one of three output heads: identity, a logistic head rescaled to
[0, head_scale], or a row-wise softmax.  backward() hands back gradients for
every parameter and for the input, so callers can chain nets through their own
chain rule without an autograd framework.  Inputs may be single vectors or row
batches; parameter gradients are summed over the batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

HEADS = ("identity", "bounded", "softmax")
CKPT_FORMAT = "edgebid-nets"
CKPT_VERSION = 1


@dataclass
class GradientBundle:
    weights: list
    biases: list
    input: np.ndarray


def _as_rows(x):
    x = np.asarray(x, float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ValueError(f"expected vector or row batch, got shape {x.shape}")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class MlpNet:
    """ReLU multilayer perceptron; `sizes` runs input through hiddens to output."""

    def __init__(self, sizes, head="identity", head_scale=1.0, rng=None):
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        if any(int(s) < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive: {sizes}")
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}; expected one of {HEADS}")
        if head_scale <= 0.0:
            raise ValueError("head_scale must be positive")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        self.head_scale = float(head_scale)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if rng is None:
                w = np.zeros((fan_out, fan_in))
            else:
                # He scale keeps ReLU activations in range at init
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    def copy(self):
        dup = MlpNet(self.sizes, self.head, self.head_scale)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def _run(self, x):
        # activations[i] feeds layer i; the last pre-activation is returned raw
        acts = [x]
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w.T + b, 0.0)
            acts.append(a)
        z = a @ self.weights[-1].T + self.biases[-1]
        return acts, z

    def forward(self, x):
        x2, single = _as_rows(x)
        if x2.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x2.shape[1]} != {self.sizes[0]}")
        _, z = self._run(x2)
        if self.head == "identity":
            y = z
        elif self.head == "bounded":
            y = self.head_scale * _sigmoid(z)
        else:
            y = _softmax(z)
        return y[0] if single else y

    def backward(self, x, upstream, at_preact=False):
        """Gradients of sum(upstream * output) w.r.t. parameters and input.

        With at_preact=True the upstream couples to the final affine output
        before the head nonlinearity; callers that fold the head into their
        own chain rule use this to inject exact downstream gradients.
        """
        x2, single = _as_rows(x)
        up, _ = _as_rows(upstream)
        if up.shape[0] != x2.shape[0] or up.shape[1] != self.sizes[-1]:
            raise ValueError(f"upstream shape {up.shape} does not match output")
        acts, z = self._run(x2)
        if at_preact or self.head == "identity":
            dz = up
        elif self.head == "bounded":
            s = _sigmoid(z)
            dz = up * self.head_scale * s * (1.0 - s)
        else:
            y = _softmax(z)
            dz = y * (up - np.sum(y * up, axis=1, keepdims=True))
        n_layers = len(self.weights)
        d_ws = [None] * n_layers
        d_bs = [None] * n_layers
        grad = dz
        d_acts = None
        for li in range(n_layers - 1, -1, -1):
            d_ws[li] = grad.T @ acts[li]
            d_bs[li] = grad.sum(axis=0)
            d_acts = grad @ self.weights[li]
            if li > 0:
                grad = d_acts * (acts[li] > 0.0)
        d_input = d_acts[0] if single else d_acts
        return GradientBundle(weights=d_ws, biases=d_bs, input=d_input)


class Adam:
    """Adam with bias correction, bound to one net's parameter shapes."""

    def __init__(self, net, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0.0:
            raise ValueError("lr must be nonnegative")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m_w = [np.zeros_like(w) for w in net.weights]
        self.v_w = [np.zeros_like(w) for w in net.weights]
        self.m_b = [np.zeros_like(b) for b in net.biases]
        self.v_b = [np.zeros_like(b) for b in net.biases]

    def step(self, net, grads):
        """One in-place descent step; rejects non-finite gradients."""
        for g in (*grads.weights, *grads.biases):
            if not np.all(np.isfinite(g)):
                raise ValueError("non-finite gradient passed to Adam")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        params = (*net.weights, *net.biases)
        moms = (*self.m_w, *self.m_b)
        vels = (*self.v_w, *self.v_b)
        gs = (*grads.weights, *grads.biases)
        for p, m, v, g in zip(params, moms, vels, gs):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def soft_update(target, online, tau):
    """target <- tau * online + (1 - tau) * target, parameter-wise in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if target.sizes != online.sizes or target.head != online.head:
        raise ValueError("architecture mismatch between target and online nets")
    for tp, op in zip((*target.weights, *target.biases), (*online.weights, *online.biases)):
        tp *= 1.0 - tau
        tp += tau * op


def gumbel_softmax(logits, tau, rng):
    """Concrete relaxation draw: softmax((log_softmax(logits) + gumbel) / tau).

    The argmax of the returned vector follows softmax(logits) for every tau
    (the additive noise decides the winner); tau only controls how far the
    vector itself is from one-hot.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    z, single = _as_rows(logits)
    zmax = z.max(axis=1, keepdims=True)
    logp = z - zmax - np.log(np.sum(np.exp(z - zmax), axis=1, keepdims=True))
    u = rng.random(z.shape)
    u = np.clip(u, np.finfo(float).tiny, np.nextafter(1.0, 0.0))  # keep both logs finite
    g = -np.log(-np.log(u))
    y = _softmax((logp + g) / tau)
    return y[0] if single else y


def net_to_doc(net):
    return {
        "sizes": list(net.sizes),
        "head": net.head,
        "head_scale": net.head_scale,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def net_from_doc(doc):
    net = MlpNet(doc["sizes"], doc["head"], doc["head_scale"])
    weights = [np.asarray(w, float) for w in doc["weights"]]
    biases = [np.asarray(b, float) for b in doc["biases"]]
    for have, want in zip(weights, net.weights):
        if have.shape != want.shape:
            raise ValueError(f"weight shape {have.shape} does not match sizes {net.sizes}")
    for have, want in zip(biases, net.biases):
        if have.shape != want.shape:
            raise ValueError(f"bias shape {have.shape} does not match sizes {net.sizes}")
    net.weights = weights
    net.biases = biases
    return net


def save_nets(path, nets, extra=None):
    """Write named nets to one versioned JSON document."""
    doc = {
        "format": CKPT_FORMAT,
        "version": CKPT_VERSION,
        "nets": {name: net_to_doc(net) for name, net in nets.items()},
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_nets(path):
    """Read a checkpoint written by save_nets; version mismatch is an error."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CKPT_FORMAT or doc.get("version") != CKPT_VERSION:
        raise ValueError(
            f"unsupported checkpoint {doc.get('format')!r} v{doc.get('version')!r}; "
            f"expected {CKPT_FORMAT} v{CKPT_VERSION}"
        )
    return {name: net_from_doc(d) for name, d in doc["nets"].items()}, doc.get("extra", {})
