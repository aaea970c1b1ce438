"""Dense-tensor reverse-mode differentiation and the toy operation vocabulary.

Everything is double precision and define-by-run: ops record their parents
and a closure that maps the output gradient to parent gradients, and
`backward` replays the tape in reverse topological order. The vocabulary
is deliberately small (affine + tanh candidates, affine task heads, MSE),
just enough to train the supergraph and branched networks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax as _softmax

from .errors import BoundsError, DimensionMismatch, DomainError, ModeError, NumericError
from .graph import SupergraphSpec


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast during the forward op."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse mode.

    Construction validates finiteness, so a NaN or Inf produced anywhere
    in a forward pass raises immediately instead of corrupting training.
    """

    __slots__ = ("data", "grad", "_parents", "_grad_fn")

    def __init__(self, data, _parents=(), _grad_fn=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor holds NaN or Inf")
        self.data = arr
        self.grad = None
        self._parents = _parents
        self._grad_fn = _grad_fn

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __matmul__(self, other):
        other = _wrap(other)
        a, b = self.data, other.data

        def grad_fn(g):
            return g @ b.T, a.T @ g

        return Tensor(a @ b, (self, other), grad_fn)

    def __add__(self, other):
        other = _wrap(other)

        def grad_fn(g):
            return (
                _unbroadcast(g, self.data.shape),
                _unbroadcast(g, other.data.shape),
            )

        return Tensor(self.data + other.data, (self, other), grad_fn)

    def __sub__(self, other):
        other = _wrap(other)

        def grad_fn(g):
            return (
                _unbroadcast(g, self.data.shape),
                _unbroadcast(-g, other.data.shape),
            )

        return Tensor(self.data - other.data, (self, other), grad_fn)

    def __mul__(self, other):
        other = _wrap(other)
        a, b = self.data, other.data

        def grad_fn(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor(a * b, (self, other), grad_fn)

    __rmul__ = __mul__

    def __getitem__(self, idx):
        def grad_fn(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor(np.array(self.data[idx]), (self,), grad_fn)

    def tanh(self):
        out = np.tanh(self.data)

        def grad_fn(g):
            return (g * (1.0 - out * out),)

        return Tensor(out, (self,), grad_fn)

    def mean(self):
        size = self.data.size

        def grad_fn(g):
            return (np.full(self.data.shape, float(g) / size),)

        return Tensor(self.data.mean(), (self,), grad_fn)

    def softmax1d(self):
        if self.data.ndim != 1:
            raise DimensionMismatch("softmax1d expects a vector")
        y = _softmax(self.data)

        def grad_fn(g):
            return (y * (g - float(y @ g)),)

        return Tensor(y, (self,), grad_fn)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topo_order(root: Tensor) -> list:
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))
    order.reverse()
    return order


def backward(root: Tensor, seed: float = 1.0):
    """Populate .grad along the tape rooted at a scalar.

    Gradients accumulate into any existing .grad, so several backward
    calls sum their contributions; use reset_grads between steps.
    """
    if not isinstance(root, Tensor):
        raise ModeError("backward needs the recorded forward output")
    if root.data.shape != ():
        raise DimensionMismatch("backward root must be a scalar")
    pending = {id(root): np.asarray(float(seed))}
    for node in _topo_order(root):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._grad_fn is None:
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            got = pending.get(id(parent))
            pending[id(parent)] = pg if got is None else got + pg


def collect_grads(params) -> list:
    """Gradients in parameter order; parameters off the tape count as zero."""
    return [
        p.grad if p.grad is not None else np.zeros_like(p.data) for p in params
    ]


def reset_grads(params):
    for p in params:
        p.grad = None


@dataclass(frozen=True)
class LossWeights:
    omega: tuple[float, ...]

    def __post_init__(self):
        omega = tuple(float(w) for w in self.omega)
        object.__setattr__(self, "omega", omega)
        if any(w <= 0 for w in omega):
            raise DomainError("task weights must be positive")

    @classmethod
    def ones(cls, num_tasks: int) -> "LossWeights":
        return cls((1.0,) * num_tasks)


class OperationParams:
    """Supergraph weights: per (layer, candidate) an affine op, per task a head.

    Candidates within a layer are shape-identical duplicates; `init` draws
    one weight matrix per layer and copies it so that, before any training,
    the mixed output is independent of the routing.
    """

    def __init__(self, weights, biases, head_weights, head_biases):
        self.weights = weights
        self.biases = biases
        self.head_weights = head_weights
        self.head_biases = head_biases
        for layer in weights:
            shapes = {w.shape for w in layer}
            if len(shapes) != 1:
                raise DimensionMismatch("candidates in a layer must share shapes")

    @classmethod
    def init(
        cls,
        spec: SupergraphSpec,
        head_dims,
        rng: np.random.Generator,
    ) -> "OperationParams":
        weights, biases = [], []
        for in_dim, out_dim in spec.layer_dims:
            w = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, out_dim))
            weights.append([Tensor(w.copy()) for _ in range(spec.num_tasks)])
            biases.append([Tensor(np.zeros(out_dim)) for _ in range(spec.num_tasks)])
        enc_out = spec.layer_dims[-1][1]
        head_w, head_b = [], []
        for dim in head_dims:
            w = rng.normal(0.0, 1.0 / np.sqrt(enc_out), size=(enc_out, dim))
            head_w.append(Tensor(w))
            head_b.append(Tensor(np.zeros(dim)))
        return cls(weights, biases, head_w, head_b)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_candidates(self) -> int:
        return len(self.weights[0])

    @property
    def num_heads(self) -> int:
        return len(self.head_weights)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for l, (ws, bs) in enumerate(zip(self.weights, self.biases), start=1):
            for j, (w, b) in enumerate(zip(ws, bs)):
                named.append((f"l{l}.c{j}.w", w))
                named.append((f"l{l}.c{j}.b", b))
        for t, (w, b) in enumerate(zip(self.head_weights, self.head_biases)):
            named.append((f"head.{t}.w", w))
            named.append((f"head.{t}.b", b))
        return named

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def to_json(self) -> dict:
        return {
            name: {"shape": list(p.shape), "data": p.data.ravel().tolist()}
            for name, p in self.named_parameters()
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OperationParams":
        def read(name):
            rec = obj[name]
            return Tensor(np.array(rec["data"]).reshape(rec["shape"]))

        layers = sorted(
            {int(n.split(".")[0][1:]) for n in obj if n.startswith("l")}
        )
        weights, biases = [], []
        for l in layers:
            cands = sorted(
                int(n.split(".")[1][1:])
                for n in obj
                if n.startswith(f"l{l}.") and n.endswith(".w")
            )
            weights.append([read(f"l{l}.c{j}.w") for j in cands])
            biases.append([read(f"l{l}.c{j}.b") for j in cands])
        tasks = sorted(
            int(n.split(".")[1]) for n in obj if n.startswith("head.") and n.endswith(".w")
        )
        return cls(
            weights,
            biases,
            [read(f"head.{t}.w") for t in tasks],
            [read(f"head.{t}.b") for t in tasks],
        )


def candidate_forward(params: OperationParams, layer: int, candidate: int, x) -> Tensor:
    """tanh(x W + b) for one candidate op; layer is 1-based."""
    if not 1 <= layer <= params.num_layers:
        raise BoundsError(f"layer {layer} out of range")
    if not 0 <= candidate < params.num_candidates:
        raise BoundsError(f"candidate {candidate} out of range")
    x = _wrap(x)
    w = params.weights[layer - 1][candidate]
    if x.shape[-1] != w.shape[0]:
        raise DimensionMismatch(
            f"input width {x.shape[-1]} does not match layer width {w.shape[0]}"
        )
    return (x @ w + params.biases[layer - 1][candidate]).tanh()


def mixed_layer_forward(params: OperationParams, layer: int, z_row, x) -> Tensor:
    """Convex mixture of all candidate outputs, weighted by the routing row.

    A Tensor z_row participates in differentiation (soft routing); a plain
    array is treated as constants (discrete or frozen routing).
    """
    values = z_row.data if isinstance(z_row, Tensor) else np.asarray(z_row, dtype=np.float64)
    if values.shape != (params.num_candidates,):
        raise DimensionMismatch("routing row length must equal candidate count")
    if abs(float(values.sum()) - 1.0) > 1e-9:
        raise DomainError("routing row must sum to 1")
    out = None
    for j in range(params.num_candidates):
        zj = z_row[(j,)] if isinstance(z_row, Tensor) else float(values[j])
        term = zj * candidate_forward(params, layer, j, x)
        out = term if out is None else out + term
    return out


def head_forward(params: OperationParams, task: int, features) -> Tensor:
    """Affine task head; excluded from every resource cost."""
    if not 0 <= task < params.num_heads:
        raise BoundsError(f"task {task} out of range")
    features = _wrap(features)
    return features @ params.head_weights[task] + params.head_biases[task]


def task_loss(prediction, target, task_kind: str = "regression") -> Tensor:
    if task_kind != "regression":
        raise ModeError(f"unknown task kind {task_kind!r}")
    prediction = _wrap(prediction)
    target = _wrap(target)
    if prediction.shape != target.shape:
        raise DimensionMismatch("prediction and target shapes disagree")
    diff = prediction - target
    return (diff * diff).mean()


def weighted_task_loss(losses, omega) -> Tensor:
    weights = omega.omega if isinstance(omega, LossWeights) else tuple(omega)
    if len(losses) != len(weights):
        raise DimensionMismatch("one weight per task loss required")
    total = None
    for loss, w in zip(losses, weights):
        term = float(w) * _wrap(loss)
        total = term if total is None else total + term
    return total


class SGD:
    """Momentum SGD, L2 weight decay folded into the gradient.

    lr_scales supports the shared-op rule of dividing the learning rate by
    the number of tasks using a parameter; reset_momentum implements the
    restart that follows an architecture change.
    """

    def __init__(self, params, lr, momentum=0.9, weight_decay=0.0, lr_scales=None):
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        scales = lr_scales if lr_scales is not None else [1.0] * len(self.params)
        self.lr_scales = [float(s) for s in scales]
        if len(self.lr_scales) != len(self.params):
            raise DimensionMismatch("one lr scale per parameter required")
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads=None):
        grads = grads if grads is not None else collect_grads(self.params)
        if len(grads) != len(self.params):
            raise DimensionMismatch("one gradient per parameter required")
        for p, v, g, s in zip(self.params, self.velocity, grads, self.lr_scales):
            g = g + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data = p.data - self.lr * s * v

    def reset_momentum(self):
        for v in self.velocity:
            v[...] = 0.0


class Adam:
    def __init__(self, params, lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = float(lr)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads=None):
        grads = grads if grads is not None else collect_grads(self.params)
        if len(grads) != len(self.params):
            raise DimensionMismatch("one gradient per parameter required")
        self.t += 1
        b1, b2 = self.betas
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            g = g + self.weight_decay * p.data
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1 ** self.t)
            v_hat = v / (1.0 - b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def sgd_step(state: SGD, grads=None):
    state.step(grads)


def adam_step(state: Adam, grads=None):
    state.step(grads)
