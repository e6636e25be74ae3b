"""Dense MLP head with hand-written backprop and Adam.

The classifier is a fixed four-affine-layer network: three ReLU hidden
layers of 256, 128, and 64 units on top of the frozen embedding, then a
linear output layer producing one logit per class. Gradients come from
exact analytic backpropagation of the mean softmax cross-entropy (the
output-layer delta uses the fused softmax-minus-onehot form). All
arithmetic is float64; persistence (training module) downcasts to float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HIDDEN_DIMS = (256, 128, 64)

PROB_FLOOR = 1e-12


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]  # per layer, (out, in) float64
    biases: list[np.ndarray]  # per layer, (out,) float64
    class_names: tuple[str, ...]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def class_count(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_dims=self.layer_dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            class_names=self.class_names,
        )


@dataclass
class ForwardCache:
    """Per-batch intermediates needed for the backward pass."""

    inputs: np.ndarray  # (n, D)
    pre_activations: list[np.ndarray]  # z per affine layer, (n, out)
    activations: list[np.ndarray]  # ReLU outputs per hidden layer, (n, out)

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class AdamState:
    """Adam accumulators; defaults follow the optimizer's original formulation."""

    t: int
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_mlp(
    input_dim: int,
    class_count: int,
    seed: int,
    class_names: tuple[str, ...] | None = None,
) -> MlpModel:
    """Build a freshly initialized model, deterministic for a given seed.

    Hidden layers use Kaiming-uniform fan-in scaling (paired with ReLU),
    the output layer Glorot-uniform; biases start at zero.
    """
    if input_dim <= 0:
        raise ValueError(f"input_dim must be positive, got {input_dim}")
    if class_count < 2:
        raise ValueError(f"class_count must be at least 2, got {class_count}")
    if class_names is None:
        class_names = tuple(f"class_{i}" for i in range(class_count))
    if len(class_names) != class_count:
        raise ValueError(
            f"{len(class_names)} class names for {class_count} classes"
        )
    dims = (input_dim, *HIDDEN_DIMS, class_count)
    rng = np.random.default_rng(seed)
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        if layer < len(HIDDEN_DIMS):
            bound = np.sqrt(6.0 / fan_in)
        else:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases, tuple(class_names))


def forward(model: MlpModel, X: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a batch, returning logits and the backward cache."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(
            f"input shape {X.shape} does not match input dim {model.input_dim}"
        )
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = []
    a = X
    n_hidden = len(model.weights) - 1
    for layer in range(n_hidden):
        z = a @ model.weights[layer].T + model.biases[layer]
        pre.append(z)
        a = np.maximum(z, 0.0)
        post.append(a)
    logits = a @ model.weights[-1].T + model.biases[-1]
    pre.append(logits)
    return logits, ForwardCache(inputs=X, pre_activations=pre, activations=post)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, max-shifted so huge logits cannot overflow."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-probability of the true classes.

    Probabilities are floored at 1e-12 inside the log so a confidently
    wrong prediction yields a large finite loss instead of infinity.
    """
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.ndim != 1 or probs.ndim != 2 or probs.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: probs {probs.shape}, y {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= probs.shape[1]):
        raise ValueError("class index out of range")
    picked = probs[np.arange(len(y)), y]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def backward(model: MlpModel, cache: ForwardCache, y: np.ndarray) -> Gradients:
    """Exact gradient of the mean cross-entropy w.r.t. every weight and bias."""
    y = np.asarray(y, dtype=np.int64)
    n = cache.batch_size
    if y.shape != (n,):
        raise ValueError(f"stale cache: batch size {n}, label shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= model.class_count):
        raise ValueError("class index out of range")
    logits = cache.pre_activations[-1]
    delta = softmax(logits)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    n_layers = len(model.weights)
    grad_w: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for layer in range(n_layers - 1, -1, -1):
        layer_in = cache.inputs if layer == 0 else cache.activations[layer - 1]
        grad_w[layer] = delta.T @ layer_in
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer]) * (
                cache.pre_activations[layer - 1] > 0.0
            )
    return Gradients(weights=grad_w, biases=grad_b)


def adam_init(
    params: list[np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    return AdamState(
        t=0,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied in place.

    Refuses the step (raising, leaving params and state untouched) if any
    gradient entry is non-finite.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state must be congruent")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(
                f"gradient {i} shape {g.shape} does not match parameter {p.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient entries in array {i}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def model_params(model: MlpModel) -> list[np.ndarray]:
    """Flat parameter list (weights then biases) for the optimizer."""
    return list(model.weights) + list(model.biases)


def grad_list(grads: Gradients) -> list[np.ndarray]:
    """Gradient list congruent with model_params."""
    return list(grads.weights) + list(grads.biases)


def predict(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Top-1 class index per row; ties break toward the lowest index."""
    logits, _ = forward(model, X)
    return np.argmax(logits, axis=1)
