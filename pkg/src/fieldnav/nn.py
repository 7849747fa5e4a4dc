"""Dense feed-forward networks with hand-written backprop and Adam.

All parameters of a network live in one contiguous float64 buffer; the
per-layer weight and bias arrays are views into it. That keeps Adam, hard
copies and soft updates down to a handful of vector operations, which matters
when training runs take hundreds of thousands of updates on one core.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "linear", "tanh")
HEADS = ("plain", "dueling")


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    activation: str = "relu"

    def __post_init__(self):
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError(f"layer widths must be >= 1, got {self}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Trace:
    """Everything `forward` saw, enough for an exact backward pass."""

    inputs: list  # input to each layer, batch-major
    pre: list  # pre-activation of each layer
    output: np.ndarray
    value: np.ndarray | None = None
    advantage: np.ndarray | None = None
    squeeze: bool = False
    net_id: int = 0


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


class Mlp:
    """Stack of dense layers with an optional dueling head.

    For ``head="dueling"`` the last entry of ``layers`` is the trunk's final
    hidden layer; two linear maps (value: width 1, advantage: ``n_actions``)
    branch off it and are recombined with :func:`dueling_combine`.
    """

    def __init__(self, layers, head="plain", n_actions=None, rng=None, params=None):
        layers = [l if isinstance(l, LayerSpec) else LayerSpec(*l) for l in layers]
        if not layers:
            raise ValueError("an Mlp needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.output_width != b.input_width:
                raise ShapeError(f"layer widths do not chain: {a} -> {b}")
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        if head == "dueling" and not n_actions:
            raise ValueError("dueling head needs n_actions")
        self.layers = tuple(layers)
        self.head = head
        self.n_actions = int(n_actions) if head == "dueling" else None

        shapes = []
        for spec in self.layers:
            shapes.append((spec.output_width, spec.input_width))
            shapes.append((spec.output_width,))
        if head == "dueling":
            hidden = self.layers[-1].output_width
            shapes += [(1, hidden), (1,), (self.n_actions, hidden), (self.n_actions,)]
        self._shapes = shapes
        self.size = int(sum(np.prod(s) for s in shapes))
        self.flat = np.zeros(self.size)
        self.params = self._views(self.flat)

        if params is not None:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (self.size,):
                raise ShapeError(f"expected {self.size} parameters, got {params.shape}")
            self.flat[:] = params
        elif rng is not None:
            self.init_uniform(rng)

    def _views(self, buf):
        out, offset = [], 0
        for shape in self._shapes:
            n = int(np.prod(shape))
            out.append(buf[offset:offset + n].reshape(shape))
            offset += n
        return out

    @property
    def input_width(self):
        return self.layers[0].input_width

    @property
    def output_width(self):
        return self.n_actions if self.head == "dueling" else self.layers[-1].output_width

    @property
    def weights(self):
        return self.params[0::2]

    @property
    def biases(self):
        return self.params[1::2]

    def init_uniform(self, rng):
        """Uniform in +-1/sqrt(fan_in) for every weight and bias."""
        for w, b in zip(self.weights, self.biases):
            bound = 1.0 / np.sqrt(w.shape[1])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)

    def architecture(self):
        return {
            "layers": [[l.input_width, l.output_width, l.activation] for l in self.layers],
            "head": self.head,
            "n_actions": self.n_actions,
        }

    def same_architecture(self, other):
        return self.architecture() == other.architecture()

    def clone(self):
        return Mlp(self.layers, self.head, self.n_actions, params=self.flat.copy())

    def copy_from(self, other):
        """Hard copy: make every parameter bit-equal to ``other``'s."""
        if not self.same_architecture(other):
            raise ShapeError("cannot copy between different architectures")
        self.flat[:] = other.flat

    def __call__(self, x):
        return forward(self, x).output


def forward(net, x):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_width:
        raise ShapeError(f"expected input width {net.input_width}, got shape {x.shape}")

    inputs, pre = [], []
    a = x
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        inputs.append(a)
        z = a @ w.T + b
        pre.append(z)
        a = _activate(z, spec.activation)

    trace = Trace(inputs, pre, a, squeeze=squeeze, net_id=id(net))
    if net.head == "dueling":
        wv, bv, wa, ba = net.params[-4:]
        inputs.append(a)
        trace.value = a @ wv.T + bv
        trace.advantage = a @ wa.T + ba
        trace.output = dueling_combine(trace.value, trace.advantage)
    if squeeze:
        trace.output = trace.output[0]
    return trace


def backward(net, trace, output_grad, grad_buf=None, input_grad=True):
    """Reverse-mode pass. Returns (flat parameter gradient, input gradient).

    Pass ``input_grad=False`` to skip the input gradient (returned as None).

    ``output_grad`` has the shape of ``trace.output``. The flat gradient is laid
    out exactly like ``net.flat``; ``net._views(grad)`` splits it per layer.
    """
    if trace.net_id != id(net):
        raise ShapeError("trace was produced by a different network")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != trace.output.shape:
        raise ShapeError(f"output_grad shape {g.shape} != output shape {trace.output.shape}")
    if trace.squeeze:
        g = g[None, :]

    grad = np.zeros(net.size) if grad_buf is None else grad_buf
    views = net._views(grad)
    n_layers = len(net.layers)

    if net.head == "dueling":
        h = trace.inputs[-1]
        wv, _, wa, _ = net.params[-4:]
        # Q = V + A - mean(A): dV = sum_a dQ, dA = dQ - mean(dQ)
        g_v = g.sum(axis=1, keepdims=True)
        g_a = g - g.mean(axis=1, keepdims=True)
        np.matmul(g_v.T, h, out=views[-4])
        views[-3][...] = g_v.sum(axis=0)
        np.matmul(g_a.T, h, out=views[-2])
        views[-1][...] = g_a.sum(axis=0)
        g = g_v @ wv + g_a @ wa

    for k in range(n_layers - 1, -1, -1):
        spec = net.layers[k]
        z = trace.pre[k]
        a = trace.output if (k == n_layers - 1 and net.head == "plain") else None
        if spec.activation == "relu":
            g = g * (z > 0.0)
        elif spec.activation == "tanh":
            if a is None:
                a = np.tanh(z)
            elif trace.squeeze:
                a = a[None, :]
            g = g * (1.0 - a * a)
        np.matmul(g.T, trace.inputs[k], out=views[2 * k])
        views[2 * k + 1][...] = g.sum(axis=0)
        if k > 0 or input_grad:
            g = g @ net.weights[k]
        else:
            g = None

    if trace.squeeze and g is not None:
        g = g[0]
    return grad, g


@dataclass
class AdamState:
    size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)
        self._scratch = None

    def scratch(self):
        if self._scratch is None:
            self._scratch = (np.empty(self.size), np.empty(self.size))
        return self._scratch


def adam_step(params, grads, state, lr):
    """Bias-corrected Adam, in place on the flat ``params`` array."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError("params, grads and optimizer state must share a shape")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("non-finite gradient; update rejected")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    tmp, denom = state.scratch()
    state.m *= b1
    np.multiply(grads, 1.0 - b1, out=tmp)
    state.m += tmp
    state.v *= b2
    np.multiply(grads, grads, out=tmp)
    tmp *= 1.0 - b2
    state.v += tmp
    # bias correction folded into the step size and epsilon
    correction = np.sqrt(1.0 - b2 ** t)
    np.sqrt(state.v, out=denom)
    denom += state.eps * correction
    np.divide(state.m, denom, out=tmp)
    tmp *= lr * correction / (1.0 - b1 ** t)
    params -= tmp
    return params, state


def soft_update(target, source, tau):
    """target <- tau * source + (1 - tau) * target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if not target.same_architecture(source):
        raise ShapeError("soft update between different architectures")
    if tau == 1.0:
        target.flat[:] = source.flat
    elif tau > 0.0:
        target.flat *= 1.0 - tau
        target.flat += tau * source.flat
    return target


def dueling_combine(value, advantages):
    """Q = V + (A - mean(A)), row-wise for batched input."""
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.size == 0 or advantages.shape[-1] == 0:
        raise ValueError("advantages must be non-empty")
    value = np.asarray(value, dtype=np.float64)
    if advantages.ndim == 2 and value.ndim == 1:
        value = value[:, None]
    return value + (advantages - advantages.mean(axis=-1, keepdims=True))


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} differ")
    diff = pred - target
    n = diff.size
    return float(np.dot(diff.ravel(), diff.ravel()) / n), 2.0 * diff / n


def save_checkpoint(net, path):
    """Write architecture and parameters to an ``.npz`` file."""
    meta = json.dumps(net.architecture())
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(meta), params=net.flat)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        params = data["params"]
    layers = [LayerSpec(*l) for l in meta["layers"]]
    return Mlp(layers, meta["head"], meta["n_actions"], params=params)


def build_mlp(sizes, hidden_activation="relu", output_activation="linear", head="plain",
              n_actions=None, rng=None):
    """Convenience constructor: ``sizes = [in, h1, ..., out]``.

    For a dueling head the last entry of ``sizes`` is the final hidden width.
    """
    specs = []
    for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
        last = i == len(sizes) - 2
        act = hidden_activation if (head == "dueling" or not last) else output_activation
        specs.append(LayerSpec(a, b, act))
    return Mlp(specs, head=head, n_actions=n_actions, rng=rng)
