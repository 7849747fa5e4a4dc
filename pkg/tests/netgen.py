"""Random network generation and finite-difference checks shared by the test modules."""
import numpy as np

from fieldnav.nn import LayerSpec, Mlp, backward, forward
from oracles import central_difference, max_relative_error

KINK_CLEARANCE = 1e-3


def random_net(rng, head=None):
    depth = int(rng.integers(1, 4))
    widths = [int(w) for w in rng.integers(1, 17, size=depth + 1)]
    acts = rng.choice(["relu", "linear", "tanh"], size=depth)
    specs = [LayerSpec(widths[i], widths[i + 1], str(acts[i])) for i in range(depth)]
    head = head or str(rng.choice(["plain", "dueling"]))
    n_actions = int(rng.integers(1, 6)) if head == "dueling" else None
    return Mlp(specs, head=head, n_actions=n_actions, rng=rng)


def _safe_input(net, rng, batch):
    """Inputs whose ReLU pre-activations all keep clear of the kink at 0.

    Central differences are meaningless across a kink, so such points are
    redrawn rather than compared.
    """
    for _ in range(1000):
        x = rng.normal(size=(batch, net.input_width))
        trace = forward(net, x)
        if all(np.min(np.abs(z)) > KINK_CLEARANCE
               for z, spec in zip(trace.pre, net.layers) if spec.activation == "relu"):
            return x
    raise RuntimeError("could not find a kink-free input")


def fd_check(net, rng, batch=3):
    x = _safe_input(net, rng, batch)
    c = rng.normal(size=(batch, net.output_width))

    def loss(flat):
        probe = Mlp(net.layers, net.head, net.n_actions, params=flat)
        return float(np.sum(c * forward(probe, x).output))

    grad, gx = backward(net, forward(net, x), c)
    numeric = central_difference(loss, net.flat)
    numeric_x = central_difference(
        lambda xs: float(np.sum(c * forward(net, xs.reshape(x.shape)).output)), x.ravel())
    return max_relative_error(grad, numeric), max_relative_error(gx.ravel(), numeric_x)
