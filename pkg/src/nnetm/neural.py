"""Small shared MLP producing eta in (0, 1), with manual backprop and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

LOGIT_CLIP = 30.0
WEIGHT_FORMAT = "nnetm-weights"
WEIGHT_VERSION = 1


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class WeightFileError(ValueError):
    pass


@dataclass
class MlpCache:
    inputs: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]
    clipped: np.ndarray
    eta: np.ndarray


@dataclass
class Mlp:
    """ReLU hidden layers, single logistic output unit.

    ``weights[l]`` has shape (dims[l], dims[l + 1]); inputs are rows.
    ``version`` is bumped on every parameter write so rollouts can record
    exactly which parameter set every agent evaluated.
    """

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    version: int = field(default=0, compare=False)

    @classmethod
    def initialize(cls, layer_dims: Sequence[int] = (2, 16, 16, 1), seed: int | None = 0,
                   init_range: float = 0.5) -> "Mlp":
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2 or dims[-1] != 1 or min(dims) < 1:
            raise ValueError(f"layer_dims must end in a single output unit, got {dims}")
        rng = np.random.default_rng(seed)
        weights = [rng.uniform(-init_range, init_range, size=(dims[l], dims[l + 1]))
                   for l in range(len(dims) - 1)]
        biases = [rng.uniform(-init_range, init_range, size=dims[l + 1])
                  for l in range(len(dims) - 1)]
        return cls(dims, weights, biases)

    @classmethod
    def zeros(cls, layer_dims: Sequence[int] = (2, 16, 16, 1)) -> "Mlp":
        net = cls.initialize(layer_dims, seed=0)
        net.set_flat(np.zeros(net.n_params))
        return net

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.size}")
        pos = 0
        for p in self.parameters():
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size
        self.version += 1

    def copy(self) -> "Mlp":
        return Mlp(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            None if self.feature_mean is None else self.feature_mean.copy(),
            None if self.feature_std is None else self.feature_std.copy(),
            self.version,
        )

    def _scale(self, x: np.ndarray) -> np.ndarray:
        if self.feature_mean is None:
            return x
        return (x - self.feature_mean) / self.feature_std

    def forward(self, features: np.ndarray, keep_cache: bool = False):
        """Map (M, n_inputs) features to eta of shape (M,)."""
        x = np.asarray(features, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} features, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite features")
        a = self._scale(x)
        pre, post = [], [a]
        n_layers = len(self.weights)
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            s = a @ w + b
            pre.append(s)
            if l < n_layers - 1:
                a = np.maximum(s, 0.0)
                post.append(a)
        logit = pre[-1][:, 0]
        clipped = np.abs(logit) > LOGIT_CLIP
        eta = sigmoid(np.clip(logit, -LOGIT_CLIP, LOGIT_CLIP))
        if keep_cache:
            return eta, MlpCache(x, pre, post, clipped, eta)
        return eta

    __call__ = forward

    def backward(self, grad_eta: np.ndarray, cache: MlpCache,
                 need_input_grad: bool = True):
        """Gradients of sum(grad_eta * eta) w.r.t. parameters (and inputs)."""
        g = np.asarray(grad_eta, dtype=float) * cache.eta * (1.0 - cache.eta)
        g = np.where(cache.clipped, 0.0, g)[:, None]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for l in range(len(self.weights) - 1, -1, -1):
            grads_w[l] = cache.post[l].T @ g
            grads_b[l] = g.sum(axis=0)
            if l == 0 and not need_input_grad:
                break
            g = g @ self.weights[l].T
            if l > 0:
                g = g * (cache.pre[l - 1] > 0.0)
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend([gw, gb])
        if not need_input_grad:
            return grads, None
        if self.feature_mean is not None:
            g = g / self.feature_std
        return grads, g


def flatten(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrays])


def global_norm(arrays: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in arrays)))


def clip_by_global_norm(arrays: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    norm = global_norm(arrays)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return arrays, norm
    scale = max_norm / norm
    return [a * scale for a in arrays], norm


class Adam:
    """Adam with bias correction; moments persist across calls to ``step``."""

    def __init__(self, lr: float = 5e-2, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None
        self.t = 0

    def step(self, net: Mlp, grads: Sequence[np.ndarray]) -> None:
        params = net.parameters()
        if len(grads) != len(params):
            raise ValueError("gradient list does not match parameter list")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        net.version += 1


def save_weights(net: Mlp, path: str | Path) -> Path:
    """Text weight file: format line, dims line, optional scaling, then rows.

    Each parameter line is ``<name>,<row-major values>``; shapes follow
    from the dims line.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{WEIGHT_FORMAT},{WEIGHT_VERSION}",
             "dims," + ",".join(str(d) for d in net.layer_dims)]
    if net.feature_mean is not None:
        lines.append("scale," + ",".join(repr(float(v)) for v in
                                         np.concatenate([net.feature_mean, net.feature_std])))
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"W{l}," + ",".join(repr(float(v)) for v in w.ravel()))
        lines.append(f"b{l}," + ",".join(repr(float(v)) for v in b.ravel()))
    path.write_text("\n".join(lines) + "\n")
    return path


def load_weights(path: str | Path, expected_dims: Sequence[int] | None = None) -> Mlp:
    rows = [ln.strip().split(",") for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or rows[0][0] != WEIGHT_FORMAT:
        raise WeightFileError(f"{path} is not a {WEIGHT_FORMAT} file")
    if int(rows[0][1]) != WEIGHT_VERSION:
        raise WeightFileError(f"unsupported weight file version {rows[0][1]}")
    if rows[1][0] != "dims":
        raise WeightFileError("missing dims header")
    dims = tuple(int(v) for v in rows[1][1:])
    if expected_dims is not None and tuple(expected_dims) != dims:
        raise WeightFileError(f"weight file dims {dims} do not match configured {tuple(expected_dims)}")
    table = {r[0]: np.array([float(v) for v in r[1:]]) for r in rows[2:]}
    net = Mlp.zeros(dims)
    try:
        for l in range(len(dims) - 1):
            net.weights[l][...] = table[f"W{l}"].reshape(dims[l], dims[l + 1])
            net.biases[l][...] = table[f"b{l}"].reshape(dims[l + 1])
    except (KeyError, ValueError) as exc:
        raise WeightFileError(f"malformed weight file {path}: {exc}") from exc
    if "scale" in table:
        k = dims[0]
        net.feature_mean = table["scale"][:k].copy()
        net.feature_std = table["scale"][k:].copy()
    return net
