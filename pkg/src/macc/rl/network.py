"""Multilayer perceptron Q-function with hand-written backpropagation."""

from __future__ import annotations

import numpy as np


class QNetwork:
    """ReLU MLP mapping a flattened state window to one Q-value per action.

    ``weights[l]`` has shape ``(dims[l+1], dims[l])`` and the output layer is
    linear. All arithmetic is float64.
    """

    def __init__(self, layer_dims, weights, biases, agent_id=0):
        self.layer_dims = [int(d) for d in layer_dims]
        if len(self.layer_dims) < 2:
            raise ValueError("a network needs at least an input and an output layer")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.agent_id = int(agent_id)
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[l + 1], self.layer_dims[l])
            if w.shape != shape or b.shape != (shape[0],):
                raise ValueError(f"layer {l}: expected W{shape} and b({shape[0]},), got W{w.shape} b{b.shape}")

    @classmethod
    def initialize(cls, layer_dims, rng, agent_id=0):
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(layer_dims, weights, biases, agent_id)

    @property
    def n_inputs(self):
        return self.layer_dims[0]

    @property
    def n_actions(self):
        return self.layer_dims[-1]

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return QNetwork(self.layer_dims, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.agent_id)

    def load_state(self, other):
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_inputs:
            raise ValueError(f"state has dimension {x.shape[-1]}, network expects {self.n_inputs}")
        return x

    def forward(self, x):
        """Q-values for a single state ``(d,)`` or a batch ``(n, d)``."""
        h = self._check(x)
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if l < last:
                h = np.maximum(h, 0.0)
        return h

    __call__ = forward

    def forward_cached(self, x):
        """Batch forward pass keeping the activations needed by :meth:`backward`."""
        h = self._check(np.atleast_2d(x))
        acts = [h]
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = np.maximum(z, 0.0) if l < last else z
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out):
        """Gradients ``[dW1, db1, ...]`` given dLoss/dOutput for a cached batch."""
        grads = [None] * (2 * len(self.weights))
        g = grad_out
        for l in range(len(self.weights) - 1, -1, -1):
            grads[2 * l] = g.T @ acts[l]
            grads[2 * l + 1] = g.sum(axis=0)
            if l > 0:
                g = (g @ self.weights[l]) * (acts[l] > 0.0)
        return grads

    def sgd_step(self, grads, lr):
        for p, g in zip(self.params, grads):
            p -= lr * g

    def all_finite(self):
        return all(np.isfinite(p).all() for p in self.params)


def forward(net: QNetwork, s):
    return net.forward(s)
