"""Dense feedforward networks with hand-written reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class Mlp:
    """y = W_L s(... s(W_1 x + b_1) ...) + b_L, weights stored as (out, in)."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        W = tuple(np.array(w, dtype=float, ndmin=2) for w in self.weights)
        b = tuple(np.array(v, dtype=float).reshape(-1) for v in self.biases)
        acts = tuple(self.activations)
        if not (len(W) == len(b) == len(acts)) or not W:
            raise ValueError("weights, biases and activations must have equal non-zero length")
        for i, (w, v, a) in enumerate(zip(W, b, acts)):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
            if v.size != w.shape[0]:
                raise ValueError(f"layer {i}: bias size {v.size} != rows {w.shape[0]}")
            if i and w.shape[1] != W[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dim {w.shape[1]} != {W[i - 1].shape[0]}")
        for w in W + b:
            w.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "activations", acts)

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator, activation: str = "tanh") -> "Mlp":
        """Uniform(+-1/sqrt(fan_in)) weights and zero biases; last layer is linear."""
        weights, biases, acts = [], [], []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
            acts.append("identity" if i == len(sizes) - 2 else activation)
        return cls(tuple(weights), tuple(biases), tuple(acts))

    @classmethod
    def zeros(cls, sizes: Sequence[int], activation: str = "tanh") -> "Mlp":
        n = len(sizes) - 1
        return cls(
            tuple(np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])),
            tuple(np.zeros(o) for o in sizes[1:]),
            tuple(activation if k < n - 1 else "identity" for k in range(n)),
        )

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def to_vec(self) -> np.ndarray:
        """All weights (row-major, layer order) followed by all biases."""
        return np.concatenate([w.ravel() for w in self.weights] + [b for b in self.biases])

    def from_vec(self, theta: np.ndarray) -> "Mlp":
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        weights, biases, k = [], [], 0
        for w in self.weights:
            weights.append(theta[k:k + w.size].reshape(w.shape).copy())
            k += w.size
        for b in self.biases:
            biases.append(theta[k:k + b.size].copy())
            k += b.size
        return Mlp(tuple(weights), tuple(biases), self.activations)

    def _check_input(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.input_dim:
            raise ValueError(f"input dimension {X.shape[1]} != {self.input_dim}")
        return X, single

    def _forward(self, X):
        # cache holds the input of every layer and the post-activations
        inputs, z = [], X
        for W, b, act in zip(self.weights, self.biases, self.activations):
            inputs.append(z)
            z = z @ W.T + b
            if act == "tanh":
                z = np.tanh(z)
        return z, inputs

    def forward(self, X: np.ndarray) -> np.ndarray:
        X, single = self._check_input(X)
        y, _ = self._forward(X)
        return y[0] if single else y

    __call__ = forward

    def _backward(self, y, inputs, upstream, per_sample: bool):
        g = np.asarray(upstream, dtype=float).reshape(y.shape)
        gW, gb = [None] * len(self.weights), [None] * len(self.weights)
        for i in reversed(range(len(self.weights))):
            if self.activations[i] == "tanh":
                out = inputs[i + 1] if i + 1 < len(inputs) else y
                g = g * (1.0 - out**2)
            if per_sample:
                gW[i] = g[:, :, None] * inputs[i][:, None, :]
                gb[i] = g
            else:
                gW[i] = g.T @ inputs[i]
                gb[i] = g.sum(axis=0)
            g = g @ self.weights[i]
        if per_sample:
            N = y.shape[0]
            return np.concatenate([w.reshape(N, -1) for w in gW] + gb, axis=1), g
        return np.concatenate([w.ravel() for w in gW] + gb), g

    def forward_vjp(self, X: np.ndarray):
        """Batched forward pass plus a pullback reusing its activations.

        The pullback maps an output cotangent (N, out) to the summed parameter
        gradient and the per-sample input cotangent (N, in).
        """
        X, _ = self._check_input(X)
        y, inputs = self._forward(X)

        def pullback(upstream):
            return self._backward(y, inputs, upstream, per_sample=False)

        return y, pullback

    def grad_params(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Gradient of sum_k <upstream_k, net(x_k)> with respect to ``to_vec()``."""
        X, single = self._check_input(X)
        upstream = np.atleast_2d(upstream) if not single else np.reshape(upstream, (1, -1))
        y, inputs = self._forward(X)
        return self._backward(y, inputs, upstream, per_sample=False)[0]

    def grad_params_per_sample(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        X, _ = self._check_input(X)
        y, inputs = self._forward(X)
        return self._backward(y, inputs, np.atleast_2d(upstream), per_sample=True)[0]

    def param_jacobian(self, X: np.ndarray) -> np.ndarray:
        """Per-sample Jacobian of the outputs w.r.t. parameters, shape (N, out, P)."""
        X, single = self._check_input(X)
        y, inputs = self._forward(X)
        rows = []
        for k in range(self.output_dim):
            up = np.zeros((X.shape[0], self.output_dim))
            up[:, k] = 1.0
            rows.append(self._backward(y, inputs, up, per_sample=True)[0])
        J = np.stack(rows, axis=1)
        return J[0] if single else J

    def grad_input(self, X: np.ndarray) -> np.ndarray:
        """Input Jacobian, shape (N, out, in) (or (out, in) for one point)."""
        X, single = self._check_input(X)
        y, inputs = self._forward(X)
        J = np.broadcast_to(np.eye(self.input_dim), (X.shape[0], self.input_dim, self.input_dim))
        for i, (W, act) in enumerate(zip(self.weights, self.activations)):
            J = W @ J
            if act == "tanh":
                out = inputs[i + 1] if i + 1 < len(inputs) else y
                J = (1.0 - out**2)[:, :, None] * J
        return J[0] if single else J

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "layers": [
                {
                    "rows": int(W.shape[0]),
                    "cols": int(W.shape[1]),
                    "weights": W.ravel().tolist(),
                    "bias": b.tolist(),
                    "activation": a,
                }
                for W, b, a in zip(self.weights, self.biases, self.activations)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        layers = d["layers"]
        net = cls(
            tuple(np.array(L["weights"], dtype=float).reshape(L["rows"], L["cols"]) for L in layers),
            tuple(np.array(L["bias"], dtype=float) for L in layers),
            tuple(L["activation"] for L in layers),
        )
        if net.input_dim != d["input_dim"] or net.output_dim != d["output_dim"]:
            raise ValueError("declared input/output dims do not match layers")
        return net


def spectral_norm(W: np.ndarray, tol: float = 1e-8, max_iter: int = 1000) -> float:
    """Largest singular value by power iteration on W^T W."""
    W = np.asarray(W, dtype=float)
    if not np.any(W):
        return 0.0
    # deterministic start with mass on every coordinate
    v = np.ones(W.shape[1]) / np.sqrt(W.shape[1]) + 1e-3 * np.arange(W.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = W.T @ (W @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector was in the null space; fall back to the columns
            v = W[np.argmax(np.abs(W).sum(axis=1))]
            v = v / np.linalg.norm(v)
            continue
        v = w / nw
        new = np.sqrt(nw)
        if abs(new - sigma) <= tol * new:
            sigma = new
            break
        sigma = new
    return float(sigma)


def lipschitz_upper(net: Mlp) -> float:
    """Product of layer spectral norms; tanh is 1-Lipschitz."""
    return float(np.prod([spectral_norm(W) for W in net.weights]))
