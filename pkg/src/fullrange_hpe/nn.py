"""Small numpy networks with hand-written backward passes.

Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``grads`` during ``backward``.  All
arithmetic is float64.
"""
from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params, self.grads = {}, {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


class Linear(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 1.0):
        super().__init__()
        self.params["W"] = rng.normal(scale=gain / np.sqrt(n_in), size=(n_in, n_out))
        self.params["b"] = np.zeros(n_out)
        self.zero_grad()

    def forward(self, x):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, g):
        self.grads["W"] += self._x.T @ g
        self.grads["b"] += g.sum(axis=0)
        return g @ self.params["W"].T


class Tanh(Layer):
    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, g):
        return g * (1.0 - self._y ** 2)


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return g * self._mask


class L2Normalize(Layer):
    def __init__(self, eps: float = 1e-12):
        super().__init__()
        self.eps = eps

    def forward(self, x):
        self._n = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), self.eps)
        self._y = x / self._n
        return self._y

    def backward(self, g):
        y = self._y
        return (g - np.sum(g * y, axis=1, keepdims=True) * y) / self._n


ACTIVATIONS = {"tanh": Tanh, "relu": ReLU}


class Sequential(Layer):
    def __init__(self, layers: Iterable[Layer]):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()


class Model:
    """Base for the encoder and the pose head: named parameter access."""

    def layers_with_params(self) -> list[tuple[str, Layer]]:
        raise NotImplementedError

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for lname, layer in self.layers_with_params():
            for k in sorted(layer.params):
                out.append((f"{lname}.{k}", layer.params[k]))
        return out

    def named_grads(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for lname, layer in self.layers_with_params():
            for k in sorted(layer.params):
                out.append((f"{lname}.{k}", layer.grads[k]))
        return out

    def zero_grad(self):
        for _, layer in self.layers_with_params():
            layer.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.named_params()}

    def load_state(self, state: dict[str, np.ndarray]):
        for k, v in self.named_params():
            if state[k].shape != v.shape:
                raise ValueError(f"shape mismatch for {k}: {state[k].shape} vs {v.shape}")
            v[...] = state[k]

    def checksum(self) -> str:
        h = hashlib.sha256()
        for k, v in self.named_params():
            h.update(k.encode())
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()

    def n_params(self) -> int:
        return sum(v.size for _, v in self.named_params())


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * p
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
