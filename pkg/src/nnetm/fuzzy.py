"""Differentiable (fuzzy-trigger) rollouts of the linear protocol.

The forward pass records every per-step quantity the reverse sweep needs
(the tape); :func:`backward` replays it from t = T down to t = h and
returns gradients of a scalar objective with respect to the shared MLP
parameters.

During training the hard if/else trigger is replaced by a blend weight
nu = sigmoid(alpha * (|z_i - b_i| - delta)), applied to the held broadcast
b_i and to the last event time tau_i:

    b_i   <- nu * z_i + (1 - nu) * b_i
    tau_i <- nu * t   + (1 - nu) * tau_i

and sum(nu) stands in for the event count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .etm import TriggerPolicy
from .graph import NetworkGraph
from .neural import MlpCache, sigmoid
from .protocols import LINEAR, ProtocolConfig, initial_state
from .signals import SignalBatch


@dataclass
class GradientTape:
    """Time-major record of one batched fuzzy rollout."""

    z: np.ndarray           # (K+1, B, N)
    held_prev: np.ndarray   # (K, B, N) broadcast held before the trigger at step k
    tau_prev: np.ndarray    # (K, B, N)
    nu: np.ndarray          # (K, B, N)
    err_sign: np.ndarray    # (K, B, N)
    eta: np.ndarray         # (K, B, N)
    caches: list = field(default_factory=list, repr=False)  # numpy engine: MlpCache per step
    param_version: int | None = None
    graph: NetworkGraph | None = field(default=None, repr=False)
    kappa: float = 0.0
    step: float = 0.0
    sigma: float = 0.0
    alpha: float = 0.0
    learned: bool = False
    acts: np.ndarray | None = field(default=None, repr=False)    # compiled engine: layer inputs
    logits: np.ndarray | None = field(default=None, repr=False)


@dataclass
class FuzzySequence:
    """Single-sequence view exposing what the cost functions read."""

    states: np.ndarray          # (K+1, N)
    event_weights: np.ndarray   # (K, N), nu with nu = 1 at t = 0
    broadcasts: np.ndarray      # (K, N)
    eta_trace: np.ndarray       # (K, N)
    step: float


@dataclass
class FuzzyRollout:
    tape: GradientTape

    @property
    def states(self) -> np.ndarray:
        return np.moveaxis(self.tape.z, 0, 1)

    @property
    def nu(self) -> np.ndarray:
        return np.moveaxis(self.tape.nu, 0, 1)

    @property
    def broadcasts(self) -> np.ndarray:
        """Held broadcasts after the (blended) trigger, (B, K, N)."""
        t = self.tape
        after = t.nu * t.z[:-1] + (1.0 - t.nu) * t.held_prev
        return np.moveaxis(after, 0, 1)

    @property
    def eta(self) -> np.ndarray:
        return np.moveaxis(self.tape.eta, 0, 1)

    def __len__(self) -> int:
        return self.tape.z.shape[1]

    def sequence(self, b: int) -> FuzzySequence:
        return FuzzySequence(self.tape.z[:, b], self.tape.nu[:, b],
                             self.broadcasts[b], self.tape.eta[:, b], self.tape.step)


ENGINES = ("compiled", "numpy")


def tape_features(tape: GradientTape) -> np.ndarray:
    """(K, B, N, 2) network inputs seen at every trigger evaluation."""
    g = tape.graph
    z = tape.z[:-1]
    K = z.shape[0]
    dis = g.degrees * z - tape.held_prev @ g.adjacency
    t = (np.arange(K) * tape.step)[:, None, None]
    return np.stack([dis, t - tape.tau_prev], axis=-1)


def _scaling(net):
    if net is None or net.feature_mean is None:
        return np.zeros(2), np.ones(2)
    return np.asarray(net.feature_mean, float), np.asarray(net.feature_std, float)


def fuzzy_rollout(signals: SignalBatch, graph: NetworkGraph, protocol: ProtocolConfig,
                  policy: TriggerPolicy, engine: str = "compiled") -> FuzzyRollout:
    if protocol.kind != LINEAR:
        raise ValueError("differentiable rollouts are implemented for the linear protocol")
    if signals.n_agents != graph.n_agents:
        raise ValueError("signal batch and graph disagree on the number of agents")
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}")
    if engine == "compiled":
        return _compiled_rollout(signals, graph, protocol, policy)
    B, N, K = signals.batch_size, signals.n_agents, signals.n_steps
    h, kappa = signals.step, protocol.kappa
    net = policy.network
    deg, adj, lap = graph.degrees, graph.adjacency, graph.laplacian

    zs = np.empty((K + 1, B, N))
    held_prev = np.empty((K, B, N))
    tau_prev = np.empty((K, B, N))
    nus = np.empty((K, B, N))
    signs = np.empty((K, B, N))
    etas = np.empty((K, B, N))
    caches: list[MlpCache | None] = [None] * K
    dr = np.moveaxis(signals.derivatives, 2, 0)

    z = initial_state(signals, protocol)
    held = z.copy()
    tau = np.zeros((B, N))
    version = None if net is None else net.version
    zs[0] = z
    for k in range(K):
        t = k * h
        feats = np.stack([deg * z - held @ adj, t - tau], axis=-1).reshape(-1, 2)
        if net is None:
            eta = np.full(B * N, policy.eta_fixed)
        elif k == 0:
            eta = net.forward(feats)
        else:
            eta, caches[k] = net.forward(feats, keep_cache=True)
        eta = eta.reshape(B, N)
        etas[k] = eta
        held_prev[k] = held
        tau_prev[k] = tau
        e = z - held
        signs[k] = np.sign(e)
        if k == 0:
            nu = np.ones((B, N))
        else:
            nu = sigmoid(policy.alpha * (np.abs(e) - (policy.sigma * eta + policy.epsilon)))
        nus[k] = nu
        held = nu * z + (1.0 - nu) * held
        tau = nu * t + (1.0 - nu) * tau
        z = z + h * (dr[k] - kappa * held @ lap)
        zs[k + 1] = z

    if net is not None and net.version != version:
        raise RuntimeError("network parameters changed during a rollout")
    tape = GradientTape(zs, held_prev, tau_prev, nus, signs, etas, caches, version,
                        graph, kappa, h, policy.sigma, policy.alpha, net is not None)
    return FuzzyRollout(tape)


def _compiled_rollout(signals, graph, protocol, policy):
    net = policy.network
    learned = net is not None
    dims = (2, 1) if net is None else net.layer_dims
    dims, off_w, off_b, act_off = _kernels.layout(dims)
    theta = np.zeros(int(off_b[-1] + dims[-1])) if net is None else net.get_flat()
    fmean, fstd = _scaling(net)
    z0 = np.ascontiguousarray(initial_state(signals, protocol))
    dr = np.ascontiguousarray(np.moveaxis(signals.derivatives, 2, 0))
    version = None if net is None else net.version
    out = _kernels.fuzzy_forward(
        theta, dims, off_w, off_b, act_off, fmean, fstd, z0, dr,
        graph.degrees, graph.adjacency, graph.laplacian, signals.step, protocol.kappa,
        policy.sigma, policy.epsilon, policy.alpha, policy.eta_fixed, learned)
    zs, held_prev, tau_prev, nus, signs, etas, acts, logits = out
    if net is not None and net.version != version:
        raise RuntimeError("network parameters changed during a rollout")
    tape = GradientTape(zs, held_prev, tau_prev, nus, signs, etas, [], version, graph,
                        protocol.kappa, signals.step, policy.sigma, policy.alpha, learned,
                        acts=acts if learned else None, logits=logits if learned else None)
    return FuzzyRollout(tape)


def backward(rollout: FuzzyRollout, net, z_weight=None, nu_weight=None,
             eta_weight=None, eta_target: float = 0.5):
    """Reverse sweep for the objective

        sum_b z_weight[b]   * sum_{k,i} x_{k,b,i}^2
      + sum_b nu_weight[b]  * sum_{k>=1,i} nu_{k,b,i}
      + sum_b eta_weight[b] * sum_{k>=1,i} (eta_{k,b,i} - eta_target)^2

    with x the disagreement (z minus the instantaneous agent average).
    Returns the parameter gradient list in ``net.parameters()`` order.
    """
    tape = rollout.tape
    if not tape.learned:
        raise ValueError("rollout was recorded without a network")
    if net.version != tape.param_version:
        raise ValueError("tape was recorded with a different parameter version")
    K1, B, N = tape.z.shape
    K = K1 - 1
    zero = np.zeros(B)
    zw = zero if z_weight is None else np.broadcast_to(np.asarray(z_weight, float), (B,))
    nw = zero if nu_weight is None else np.broadcast_to(np.asarray(nu_weight, float), (B,))
    ew = zero if eta_weight is None else np.broadcast_to(np.asarray(eta_weight, float), (B,))
    if tape.acts is not None:
        dims, off_w, off_b, act_off = _kernels.layout(net.layer_dims)
        _, fstd = _scaling(net)
        flat = _kernels.fuzzy_backward(
            net.get_flat(), dims, off_w, off_b, act_off, fstd, tape.z, tape.held_prev,
            tape.tau_prev, tape.nu, tape.err_sign, tape.eta, tape.acts, tape.logits,
            tape.graph.degrees, tape.graph.adjacency, tape.graph.laplacian, tape.step,
            tape.kappa, tape.sigma, tape.alpha, np.ascontiguousarray(zw),
            np.ascontiguousarray(nw), np.ascontiguousarray(ew), float(eta_target))
        return _unflatten(flat, net)

    zw, nw, ew = zw[:, None], nw[:, None], ew[:, None]
    use_eta = bool(np.any(ew))

    g = tape
    h, kappa, sigma, alpha = g.step, g.kappa, g.sigma, g.alpha
    graph = g.graph
    deg, adj, lap = graph.degrees, graph.adjacency, graph.laplacian

    def dz_cost(k):
        zk = g.z[k]
        return 2.0 * zw * (zk - zk.mean(axis=1, keepdims=True))

    grads = [np.zeros_like(p) for p in net.parameters()]
    gz = dz_cost(K)
    gb = np.zeros((B, N))
    gtau = np.zeros((B, N))
    for k in range(K - 1, 0, -1):
        t = k * h
        zk = g.z[k]
        nu = g.nu[k]
        gheld = gb - (h * kappa) * (gz @ lap)
        gnu = gheld * (zk - g.held_prev[k]) + gtau * (t - g.tau_prev[k]) + nw
        gz_k = gz + gheld * nu
        gb_prev = gheld * (1.0 - nu)
        gtau_prev = gtau * (1.0 - nu)

        ga = gnu * nu * (1.0 - nu) * alpha
        sgn = g.err_sign[k]
        gz_k += ga * sgn
        gb_prev -= ga * sgn
        geta = -sigma * ga
        if use_eta:
            geta = geta + 2.0 * ew * (g.eta[k] - eta_target)
        step_grads, gx = net.backward(geta.reshape(-1), g.caches[k])
        for acc, sg in zip(grads, step_grads):
            acc += sg
        gx = gx.reshape(B, N, 2)
        gs = gx[..., 0]
        gz_k += gs * deg
        gb_prev -= gs @ adj
        gtau_prev -= gx[..., 1]

        gz = gz_k + dz_cost(k)
        gb = gb_prev
        gtau = gtau_prev
    return grads


def _unflatten(flat: np.ndarray, net) -> list[np.ndarray]:
    out, pos = [], 0
    for p in net.parameters():
        out.append(flat[pos:pos + p.size].reshape(p.shape).copy())
        pos += p.size
    return out
