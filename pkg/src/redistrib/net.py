"""Dense ReLU multilayer perceptron: forward, manual backprop, Adam, text format.

Networks are tiny (tens of hidden nodes, at most two hidden layers) and map
``input_dim`` reals to a single real.  An optional direct input-to-output
affine term (``skip_weights``) lets a network carry a linear tail without
spending hidden nodes on it; the exact certifier encodes that term without
binary variables.

All arithmetic is float64.  ``Mlp`` values are treated as immutable: every
update returns a new instance with fresh arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericalError, ParseError


def _as_f64(a):
    return np.asarray(a, dtype=np.float64)


@dataclass(frozen=True)
class Mlp:
    """Fully connected ReLU network with one output node.

    weights[l] has shape (layer_sizes[l+1], layer_sizes[l]) where
    layer_sizes = (input_dim, *hidden_sizes, 1).  ``skip_weights``, when
    present, is added to the output as ``skip_weights @ x``.
    """

    input_dim: int
    hidden_sizes: tuple
    weights: tuple
    biases: tuple
    skip_weights: np.ndarray | None = None

    def __post_init__(self):
        sizes = (self.input_dim, *self.hidden_sizes, 1)
        if self.input_dim < 1 or any(k < 1 for k in self.hidden_sizes):
            raise ContractViolation(f"invalid layer sizes {sizes}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ContractViolation("weights/biases do not match the layer count")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ContractViolation(
                    f"layer {l}: expected {(sizes[l + 1], sizes[l])}, got {w.shape}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ContractViolation(f"layer {l}: non-finite parameters")
        if self.skip_weights is not None:
            if self.skip_weights.shape != (self.input_dim,):
                raise ContractViolation("skip_weights must have length input_dim")
            if not np.isfinite(self.skip_weights).all():
                raise ContractViolation("skip_weights non-finite")

    @property
    def layer_sizes(self):
        return (self.input_dim, *self.hidden_sizes, 1)

    def hidden_node_count(self):
        return int(sum(self.hidden_sizes))

    def parameters(self):
        """All parameter arrays in a fixed order (weights, biases, skip)."""
        out = list(self.weights) + list(self.biases)
        if self.skip_weights is not None:
            out.append(self.skip_weights)
        return out


@dataclass(frozen=True)
class MlpGrads:
    """Gradient arrays mirroring an Mlp's parameters."""

    weights: tuple
    biases: tuple
    skip_weights: np.ndarray | None = None


@dataclass(frozen=True)
class AdamState:
    """Adam optimizer moments; shapes mirror the network's parameters."""

    step: int
    first_moment: MlpGrads
    second_moment: MlpGrads
    learning_rate: float = 0.0001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_random(input_dim, hidden_sizes, seed):
    """Seeded network: weights uniform on +-sqrt(1/fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    sizes = (int(input_dim), *(int(k) for k in hidden_sizes), 1)
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        bound = np.sqrt(1.0 / sizes[l])
        weights.append(rng.uniform(-bound, bound, size=(sizes[l + 1], sizes[l])))
        biases.append(np.zeros(sizes[l + 1]))
    return Mlp(sizes[0], tuple(sizes[1:-1]), tuple(weights), tuple(biases))


def init_adam(net, learning_rate=0.0001, beta1=0.9, beta2=0.999, epsilon=1e-8):
    zeros = lambda: MlpGrads(
        tuple(np.zeros_like(w) for w in net.weights),
        tuple(np.zeros_like(b) for b in net.biases),
        None if net.skip_weights is None else np.zeros_like(net.skip_weights),
    )
    return AdamState(0, zeros(), zeros(), learning_rate, beta1, beta2, epsilon)


def _forward_full(net, x):
    """Per-layer pre-activations for a batch x of shape (batch, input_dim)."""
    pre = []
    act = x
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = act @ w.T + b
        if not np.isfinite(z).all():
            raise NumericalError(f"non-finite pre-activation in layer {l}")
        pre.append(z)
        act = np.maximum(z, 0.0) if l < len(net.weights) - 1 else z
    out = act[:, 0]
    if net.skip_weights is not None:
        out = out + x @ net.skip_weights
    return pre, out


def forward_batch(net, inputs):
    """Network values for a (batch, input_dim) array."""
    inputs = _as_f64(inputs)
    if inputs.ndim != 2 or inputs.shape[1] != net.input_dim:
        raise ContractViolation(
            f"expected (batch, {net.input_dim}) inputs, got {inputs.shape}"
        )
    _, out = _forward_full(net, inputs)
    return out


def forward(net, x):
    """Network value at a single input vector."""
    x = _as_f64(x)
    if x.shape != (net.input_dim,):
        raise ContractViolation(f"expected input of length {net.input_dim}, got {x.shape}")
    return float(forward_batch(net, x[None, :])[0])


def gradients_arrays(net, inputs, upstream):
    """Sum over the batch of upstream * d(output)/d(params).

    A pre-activation of exactly zero propagates a zero subgradient.
    """
    inputs = _as_f64(inputs)
    upstream = _as_f64(upstream)
    pre, _ = _forward_full(net, inputs)
    acts = [inputs] + [np.maximum(z, 0.0) for z in pre[:-1]]

    n_layers = len(net.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    delta = upstream[:, None]  # d loss / d pre-activation of the current layer
    for l in range(n_layers - 1, -1, -1):
        gw[l] = delta.T @ acts[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l]) * (pre[l - 1] > 0.0)
    gskip = None
    if net.skip_weights is not None:
        gskip = upstream @ inputs
    return MlpGrads(tuple(gw), tuple(gb), gskip)


def gradients(net, batch):
    """Batch of (input, upstream-gradient) pairs -> summed parameter gradients."""
    if not batch:
        raise ContractViolation("gradient batch must be nonempty")
    inputs = np.stack([_as_f64(x) for x, _ in batch])
    upstream = np.array([float(u) for _, u in batch])
    if inputs.shape[1] != net.input_dim:
        raise ContractViolation("gradient batch input length mismatch")
    return gradients_arrays(net, inputs, upstream)


def adam_step(net, state, grads):
    """One bias-corrected Adam update; returns (new net, new state)."""
    t = state.step + 1
    b1, b2, eps, lr = state.beta1, state.beta2, state.epsilon, state.learning_rate

    def upd(p, m, v, g):
        if p.shape != g.shape:
            raise ContractViolation("gradient shape mismatch")
        m2 = b1 * m + (1 - b1) * g
        v2 = b2 * v + (1 - b2) * g * g
        mhat = m2 / (1 - b1**t)
        vhat = v2 / (1 - b2**t)
        return p - lr * mhat / (np.sqrt(vhat) + eps), m2, v2

    new_w, m_w, v_w = [], [], []
    for p, m, v, g in zip(net.weights, state.first_moment.weights,
                          state.second_moment.weights, grads.weights):
        a, b, c = upd(p, m, v, g)
        new_w.append(a); m_w.append(b); v_w.append(c)
    new_b, m_b, v_b = [], [], []
    for p, m, v, g in zip(net.biases, state.first_moment.biases,
                          state.second_moment.biases, grads.biases):
        a, b, c = upd(p, m, v, g)
        new_b.append(a); m_b.append(b); v_b.append(c)
    new_s = m_s = v_s = None
    if net.skip_weights is not None:
        new_s, m_s, v_s = upd(net.skip_weights, state.first_moment.skip_weights,
                              state.second_moment.skip_weights, grads.skip_weights)
    net2 = Mlp(net.input_dim, net.hidden_sizes, tuple(new_w), tuple(new_b), new_s)
    state2 = AdamState(t, MlpGrads(tuple(m_w), tuple(m_b), m_s),
                       MlpGrads(tuple(v_w), tuple(v_b), v_s),
                       lr, b1, b2, eps)
    return net2, state2


# -- text format --------------------------------------------------------------
#
# A mechanism file is a single JSON document with fields
#   n, input_dim, hidden_sizes, weights, biases, skip_weights, shift
# where reals are written with 17 significant digits (lossless for float64)
# so that deserialize(serialize(x)) reproduces the file byte for byte.

def format_real(x):
    return "%.17g" % float(x)


def _fmt(value):
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, float):
        return format_real(value)
    return json.dumps(value)


def serialize(net, n, shift=0.0):
    """Deterministic text form of a network plus its feasibility shift."""
    lines = ["{"]
    fields = [
        ("n", int(n)),
        ("input_dim", int(net.input_dim)),
        ("hidden_sizes", [int(k) for k in net.hidden_sizes]),
        ("weights", [[[float(x) for x in row] for row in w] for w in net.weights]),
        ("biases", [[float(x) for x in b] for b in net.biases]),
        ("skip_weights", None if net.skip_weights is None
         else [float(x) for x in net.skip_weights]),
        ("shift", float(shift)),
    ]
    for i, (key, value) in enumerate(fields):
        comma = "," if i < len(fields) - 1 else ""
        lines.append(f'  "{key}": {_fmt(value)}{comma}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def deserialize(text):
    """Parse the text form back into (net, n, shift)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid mechanism file at position {e.pos}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError("mechanism file must be a JSON object")
    try:
        n = int(doc["n"])
        input_dim = int(doc["input_dim"])
        hidden = tuple(int(k) for k in doc["hidden_sizes"])
        weights = tuple(_as_f64(w) for w in doc["weights"])
        biases = tuple(_as_f64(b) for b in doc["biases"])
        raw_skip = doc.get("skip_weights")
        skip = None if raw_skip is None else _as_f64(raw_skip)
        shift = float(doc["shift"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"invalid mechanism file: {e}") from e
    try:
        net = Mlp(input_dim, hidden, weights, biases, skip)
    except ContractViolation as e:
        raise ParseError(f"inconsistent mechanism file: {e}") from e
    return net, n, shift
