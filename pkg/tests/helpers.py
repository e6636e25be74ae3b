"""Shared test utilities: independent oracles and synthetic data builders.

The oracles here deliberately avoid the code paths they check: numeric
gradients use only the forward pass, and the metric oracles are plain
Python loops over raw label/prediction pairs.
"""

from __future__ import annotations

import numpy as np

from patcls.dataset import LabeledDataset
from patcls.neuralnet import MlpModel, cross_entropy, forward, softmax


def make_small_mlp(rng: np.random.Generator, input_dim: int, class_count: int,
                   hidden: tuple[int, ...] = (6, 5, 4)) -> MlpModel:
    """Tiny random MLP (production layer count, small widths).

    forward/backward are width-generic; small widths keep exhaustive
    finite-difference checks inside the runtime budget.
    """
    dims = (input_dim, *hidden, class_count)
    weights = [rng.normal(scale=0.8, size=(o, i)) for i, o in zip(dims[:-1], dims[1:])]
    biases = [rng.normal(scale=0.2, size=o) for o in dims[1:]]
    names = tuple(f"class_{i}" for i in range(class_count))
    return MlpModel(dims, weights, biases, names)


def batch_loss(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward(model, X)
    return cross_entropy(softmax(logits), y)


def numeric_gradients(model: MlpModel, X: np.ndarray, y: np.ndarray,
                      h: float = 1e-5) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Central finite differences of the batch loss for every parameter."""
    grad_w = []
    grad_b = []
    for arrays, grads in ((model.weights, grad_w), (model.biases, grad_b)):
        for arr in arrays:
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                up = batch_loss(model, X, y)
                arr[idx] = orig - h
                down = batch_loss(model, X, y)
                arr[idx] = orig
                g[idx] = (up - down) / (2.0 * h)
            grads.append(g)
    return grad_w, grad_b


def min_abs_preactivation(model: MlpModel, X: np.ndarray) -> float:
    """Distance of hidden pre-activations from the ReLU kink."""
    _, cache = forward(model, X)
    return min(float(np.min(np.abs(z))) for z in cache.pre_activations[:-1])


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(np.abs(a - b) / denom))


def oracle_per_class_recall(y_true, y_pred, num_classes: int) -> list[float | None]:
    recalls: list[float | None] = []
    for c in range(num_classes):
        total = sum(1 for t in y_true if t == c)
        if total == 0:
            recalls.append(None)
            continue
        correct = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        recalls.append(correct / total)
    return recalls


def oracle_macro(y_true, y_pred, num_classes: int) -> float:
    recalls = [r for r in oracle_per_class_recall(y_true, y_pred, num_classes)
               if r is not None]
    return sum(recalls) / len(recalls)


def oracle_micro(y_true, y_pred) -> float:
    return sum(1 for t, p in zip(y_true, y_pred) if t == p) / len(y_true)


def make_clusters(seed: int, n: int = 64, dim: int = 16, classes: int = 4,
                  sigma: float = 0.1,
                  class_names: tuple[str, ...] | None = None,
                  center_scale: float = 2.0) -> LabeledDataset:
    """Well-separated Gaussian clusters; linearly separable for small sigma."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(classes, dim)) * center_scale
    y = np.arange(n) % classes
    X = centers[y] + rng.normal(scale=sigma, size=(n, dim))
    if class_names is None:
        class_names = tuple(f"class_{i}" for i in range(classes))
    return LabeledDataset(
        X=X.astype(np.float32),
        y=y.astype(np.int64),
        ids=tuple(f"s{i:04d}" for i in range(n)),
        class_names=class_names,
    )
