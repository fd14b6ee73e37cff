"""Minimal neural toolkit: MLP with analytic gradients, Adam, categoricals.

Everything runs in float64: single precision loses too many digits against
the C$-scale rewards of the long case studies.  Networks are plain
ReLU-hidden, linear-output MLPs; gradients are exact reverse-mode and are
checked against central finite differences in the test suite.

Checkpoint format: ``numpy.savez`` archive with keys ``version`` (currently
1), ``sizes`` (layer widths including input), and ``W0, b0, W1, b1, ...``
per layer, weights stored as (n_in, n_out).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class Mlp:
    """Fully connected ReLU network with a linear output layer."""

    def __init__(self, sizes: tuple[int, ...],
                 weights: list[np.ndarray] | None = None,
                 biases: list[np.ndarray] | None = None):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        if weights is None:
            self.weights = [np.zeros((a, b)) for a, b in zip(sizes, sizes[1:])]
            self.biases = [np.zeros(b) for b in sizes[1:]]
        else:
            self.weights = weights
            self.biases = biases

    @classmethod
    def init_random(cls, sizes: tuple[int, ...], rng: np.random.Generator) -> "Mlp":
        """He-initialized hidden layers, small-scale output layer."""
        weights, biases = [], []
        n_layers = len(sizes) - 1
        for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
            scale = 0.01 if i == n_layers - 1 else np.sqrt(2.0 / a)
            weights.append(rng.normal(0.0, scale, size=(a, b)))
            biases.append(np.zeros(b))
        return cls(sizes, weights, biases)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Forward pass; accepts a single vector or a (batch, in) matrix."""
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray):
        """Forward pass returning the per-layer activations for backward()."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x.reshape(1, -1) if squeeze else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.sizes[0]}")
        activations = [h]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
            activations.append(h)
        out = activations[-1][0] if squeeze else activations[-1]
        return out, activations

    def backward(self, activations: list[np.ndarray],
                 grad_out: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Gradients of sum(grad_out * output) w.r.t. all parameters.

        ``activations`` comes from :meth:`forward_cached`; ``grad_out`` is the
        upstream gradient, one row per batch sample.
        """
        g = np.asarray(grad_out, dtype=float)
        if g.ndim == 1:
            g = g.reshape(1, -1)
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            grads[i] = (activations[i].T @ g, g.sum(axis=0))
            if i > 0:
                g = (g @ self.weights[i].T) * (activations[i] > 0.0)
        return grads

    # Parameter plumbing -----------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])

    def copy_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def load_flat(self, vector: np.ndarray) -> None:
        offset = 0
        for p in self.parameters():
            p[...] = vector[offset:offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != vector.size:
            raise ValueError("flat parameter vector has the wrong length")

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    # Checkpointing ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        arrays = {"version": np.array(CHECKPOINT_VERSION),
                  "sizes": np.array(self.sizes)}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "Mlp":
        with np.load(path) as archive:
            version = int(archive["version"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            sizes = tuple(int(s) for s in archive["sizes"])
            weights = [archive[f"W{i}"] for i in range(len(sizes) - 1)]
            biases = [archive[f"b{i}"] for i in range(len(sizes) - 1)]
        return cls(sizes, weights, biases)


class Adam:
    """Adam optimizer over a list of parameter arrays (updated in place)."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def mlp_grads_to_list(grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    """Flatten backward() output into the parameters() ordering."""
    return [g[0] for g in grads] + [g[1] for g in grads]


# ---------------------------------------------------------------------------
# Categorical distribution helpers (numerically stable under logit shifts)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def categorical_sample(logits: np.ndarray, rng: np.random.Generator) -> int:
    probs = softmax(logits)
    return int(rng.choice(len(probs), p=probs))


def categorical_logprob(logits: np.ndarray, index: int) -> float:
    return float(log_softmax(logits)[index])


def categorical_entropy(logits: np.ndarray) -> np.ndarray:
    """Entropy along the last axis."""
    p = softmax(logits)
    logp = log_softmax(logits)
    return -(p * logp).sum(axis=-1)
