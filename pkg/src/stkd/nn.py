"""Dense layers and small feed-forward networks with hand-written backprop.

Arrays are plain ``numpy.ndarray`` in float64.  A forward pass that will be
differentiated returns a :class:`Trace` holding the cached activations; the
network itself keeps no per-call state, so one network can serve several
independent evaluations.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    pass


class StaleStateError(RuntimeError):
    pass


class Affine:
    kind = "affine"

    def __init__(self, weight, bias):
        weight = np.ascontiguousarray(weight, dtype=DTYPE)
        bias = np.ascontiguousarray(bias, dtype=DTYPE)
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise ShapeError(
                f"affine weight {weight.shape} and bias {bias.shape} do not agree"
            )
        self.weight = weight
        self.bias = bias

    @classmethod
    def init(cls, fan_in: int, fan_out: int, rng: np.random.Generator) -> "Affine":
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        return cls(w, b)

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        return x @ self.weight.T + self.bias

    def backward(self, x, grad_out):
        grad_w = grad_out.T @ x
        grad_b = grad_out.sum(axis=0)
        return grad_out @ self.weight, [grad_w, grad_b]

    def __repr__(self):
        return f"Affine({self.in_features} -> {self.out_features})"


class ReLU:
    kind = "relu"

    def params(self):
        return []

    def forward(self, x):
        return np.maximum(x, 0.0)

    def backward(self, x, grad_out):
        return grad_out * (x > 0), []

    def __repr__(self):
        return "ReLU()"


@dataclass
class Trace:
    """Cached inputs of every layer from one forward pass."""

    network: "Network"
    generation: int
    inputs: list = field(repr=False)
    logits: np.ndarray = field(repr=False)


class Network:
    """An ordered stack of :class:`Affine` / :class:`ReLU` layers."""

    def __init__(self, layers):
        self.layers = list(layers)
        self.generation = 0
        width = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Affine):
                if width is not None and layer.in_features != width:
                    raise ShapeError(
                        f"layer {i}: expects {layer.in_features} inputs, "
                        f"previous layer produces {width}"
                    )
                width = layer.out_features
        if width is None:
            raise ShapeError("network needs at least one affine layer")

    @classmethod
    def mlp(cls, in_dim: int, hidden, n_classes: int, rng: np.random.Generator):
        """Affine+ReLU stack with the given hidden widths, ending in an affine layer."""
        sizes = [in_dim, *hidden, n_classes]
        layers = []
        for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            layers.append(Affine.init(a, b, rng))
            if k < len(sizes) - 2:
                layers.append(ReLU())
        return cls(layers)

    @property
    def in_features(self) -> int:
        return self._affines()[0].in_features

    @property
    def out_features(self) -> int:
        return self._affines()[-1].out_features

    def _affines(self):
        return [l for l in self.layers if isinstance(l, Affine)]

    def parameters(self):
        return [p for layer in self.layers for p in layer.params()]

    def bump(self):
        """Mark parameters as changed; traces recorded earlier become stale."""
        self.generation += 1

    def copy(self) -> "Network":
        layers = [
            Affine(l.weight.copy(), l.bias.copy()) if isinstance(l, Affine) else ReLU()
            for l in self.layers
        ]
        return Network(layers)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return h.hexdigest()

    def _check_input(self, x):
        x = np.asarray(x, dtype=DTYPE)
        if x.ndim != 2:
            raise ShapeError(f"layer 0: expected a 2-D batch, got shape {x.shape}")
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Affine):
                if x.shape[1] != layer.in_features:
                    raise ShapeError(
                        f"layer {i}: input width {x.shape[1]} != {layer.in_features}"
                    )
                break
        return x

    def __call__(self, x):
        """Inference-only forward pass; returns logits."""
        h = self._check_input(x)
        for layer in self.layers:
            h = layer.forward(h)
        return h

    def forward(self, x) -> Trace:
        h = self._check_input(x)
        inputs = []
        for layer in self.layers:
            inputs.append(h)
            h = layer.forward(h)
        return Trace(self, self.generation, inputs, h)

    def backward(self, trace, grad_logits):
        """Return ``(grad_input, param_grads)`` for a recorded forward pass.

        ``param_grads`` lines up one-to-one with :meth:`parameters`.
        """
        if trace is None:
            raise StaleStateError("backward called without a forward trace")
        if trace.network is not self or trace.generation != self.generation:
            raise StaleStateError(
                "trace was recorded before the parameters were last updated"
            )
        g = np.asarray(grad_logits, dtype=DTYPE)
        if g.shape != trace.logits.shape:
            raise ShapeError(
                f"gradient shape {g.shape} != logits shape {trace.logits.shape}"
            )
        per_layer = []
        for layer, x in zip(reversed(self.layers), reversed(trace.inputs)):
            g, pg = layer.backward(x, g)
            per_layer.append(pg)
        grads = [p for pg in reversed(per_layer) for p in pg]
        return g, grads

    def penultimate(self, x):
        """Activations entering the final affine layer."""
        h = self._check_input(x)
        last = max(i for i, l in enumerate(self.layers) if isinstance(l, Affine))
        for layer in self.layers[:last]:
            h = layer.forward(h)
        return h

    def __repr__(self):
        return f"Network({self.layers!r})"


def softmax(logits):
    z = np.asarray(logits, dtype=DTYPE)
    if np.isnan(z).any():
        raise ValueError("softmax received NaN logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = np.asarray(logits, dtype=DTYPE)
    if np.isnan(z).any():
        raise ValueError("log_softmax received NaN logits")
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def predict(net: Network, x):
    """Class indices by argmax of the logits; ties go to the lowest index."""
    return np.argmax(net(x), axis=1)
