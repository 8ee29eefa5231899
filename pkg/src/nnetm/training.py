"""Cost functions, pre-training and the epoch loop for the shared trigger network."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .etm import FUZZY, TriggerPolicy
from .fuzzy import backward, fuzzy_rollout, tape_features
from .graph import NetworkGraph
from .neural import Adam, Mlp, clip_by_global_norm
from .protocols import ProtocolConfig, full_communication_rollout
from .signals import SignalBatch

log = logging.getLogger(__name__)

MSE_FLOOR = 1e-12


class NumericalFailure(RuntimeError):
    """Non-finite cost or gradient; ``net`` holds the last finite parameters."""

    def __init__(self, message: str, net: Mlp | None = None, epoch: int | None = None):
        super().__init__(message)
        self.net = net
        self.epoch = epoch


@dataclass(frozen=True)
class CostBreakdown:
    mse: float
    comm_rate: float
    mse_fc: float
    rel_error: float
    total: float
    lam: float
    degenerate: bool = False


def _messages(states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    return states if states.ndim == 2 else states[..., 0]


def consensus_mse(states: np.ndarray) -> float:
    """(h / N T) sum_i sum_k |zbar(kh) - z_i(kh)|^2 on a (K+1, N) trajectory."""
    z = _messages(states)
    n_steps, n_agents = z.shape[0] - 1, z.shape[1]
    x = z - z.mean(axis=1, keepdims=True)
    return float(np.sum(x * x) / (n_agents * n_steps))


def communication_rate(event_weights: np.ndarray) -> float:
    """(h / N T) sum_i e_i; ``event_weights`` is (K, N), 0/1 or fuzzy nu."""
    w = np.asarray(event_weights, dtype=float)
    return float(w.sum() / (w.shape[0] * w.shape[1]))


def _event_weights(rollout) -> np.ndarray:
    if hasattr(rollout, "event_weights"):
        return rollout.event_weights
    return np.asarray(rollout.fired, dtype=float)


def compute_cost(rollout, baseline, lam: float) -> CostBreakdown:
    """Cost of one sequence against its full-communication baseline.

    ``baseline`` is a rollout or its precomputed mean square error.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    mse = consensus_mse(rollout.states)
    mse_fc = float(baseline) if np.isscalar(baseline) else consensus_mse(baseline.states)
    if not np.isscalar(baseline) and np.shape(baseline.states) != np.shape(rollout.states):
        raise ValueError("rollout and baseline do not share a grid")
    comm = communication_rate(_event_weights(rollout))
    degenerate = mse_fc < MSE_FLOOR
    denom = max(mse_fc, MSE_FLOOR)
    rel = (mse - mse_fc) / denom
    return CostBreakdown(mse, comm, mse_fc, rel, rel + lam * comm, float(lam), degenerate)


def baseline_errors(signals: SignalBatch, graph: NetworkGraph,
                    protocol: ProtocolConfig) -> np.ndarray:
    """Full-communication mean square error of every sequence."""
    ro = full_communication_rollout(signals, graph, protocol)
    return np.array([consensus_mse(ro.states[b]) for b in range(len(ro))])


def _batch_terms(rollout, mse_fc: np.ndarray):
    z = rollout.tape.z
    K, N = z.shape[0] - 1, z.shape[2]
    x = z - z.mean(axis=2, keepdims=True)
    mse = np.sum(x * x, axis=(0, 2)) / (N * K)
    comm = rollout.tape.nu.sum(axis=(0, 2)) / (N * K)
    return mse, comm


def _check_finite(net: Mlp, grads, cost: float) -> bool:
    return np.isfinite(cost) and all(np.all(np.isfinite(g)) for g in grads)


@dataclass
class PretrainResult:
    net: Mlp
    cost_trace: list[float]
    mean_deviation: float
    converged: bool


def pretrain(net: Mlp, signals: SignalBatch, graph: NetworkGraph, protocol: ProtocolConfig,
             policy: TriggerPolicy, target_eta: float = 0.5, epochs: int = 200,
             learning_rate: float = 5e-2, tolerance: float = 0.01,
             clip_norm: float | None = 10.0, through_dynamics: bool = False) -> PretrainResult:
    """Fit the network to output ``target_eta`` along its own fuzzy rollouts.

    Each epoch rolls the batch out with the current weights and penalizes
    mean (eta - target)^2 over steps k >= 1. By default the visited features
    are treated as data; ``through_dynamics`` also differentiates through the
    states, which is ill-conditioned for steep fuzzy triggers.
    Non-convergence is reported through ``converged``, not raised.
    """
    if signals.batch_size < 1:
        raise ValueError("pre-training needs a non-empty batch")
    policy = TriggerPolicy(policy.sigma, policy.epsilon, FUZZY, policy.alpha, network=net)
    opt = Adam(lr=learning_rate)
    B, N, K = signals.batch_size, signals.n_agents, signals.n_steps
    weight = 1.0 / (B * N * (K - 1))
    trace: list[float] = []
    for epoch in range(epochs):
        ro = fuzzy_rollout(signals, graph, protocol, policy)
        eta = ro.tape.eta[1:]
        cost = float(np.mean((eta - target_eta) ** 2))
        if through_dynamics:
            grads = backward(ro, net, eta_weight=weight, eta_target=target_eta)
        else:
            feats = tape_features(ro.tape)[1:].reshape(-1, net.n_inputs)
            out, cache = net.forward(feats, keep_cache=True)
            grads, _ = net.backward(2.0 * weight * (out - target_eta), cache,
                                    need_input_grad=False)
        if not _check_finite(net, grads, cost):
            raise NumericalFailure(f"non-finite pre-training cost at epoch {epoch}", net, epoch)
        trace.append(cost)
        if cost == 0.0:
            continue
        grads, _ = clip_by_global_norm(grads, clip_norm)
        opt.step(net, grads)
    ro = fuzzy_rollout(signals, graph, protocol, policy)
    deviation = float(np.mean(np.abs(ro.tape.eta[1:] - target_eta)))
    converged = deviation < tolerance
    if not converged:
        log.warning("pre-training stopped at mean |eta - %.3g| = %.4g", target_eta, deviation)
    return PretrainResult(net, trace, deviation, converged)


@dataclass
class TrainingRun:
    """State of one training job; ``train`` fills the traces."""

    signals: SignalBatch
    graph: NetworkGraph
    protocol: ProtocolConfig
    policy: TriggerPolicy
    lam: float = 0.1
    epochs: int = 150
    learning_rate: float = 5e-2
    clip_norm: float | None = 10.0
    seed: int | None = None
    cost_trace: list[float] = field(default_factory=list)
    error_trace: list[float] = field(default_factory=list)
    comm_trace: list[float] = field(default_factory=list)
    mse_fc: np.ndarray | None = None

    @property
    def net(self) -> Mlp:
        return self.policy.network


def train(run: TrainingRun,
          on_epoch: Callable[[int, Mlp, float], None] | None = None) -> tuple[Mlp, list[float]]:
    """Per epoch: fuzzy rollouts of the whole batch, summed cost, one update."""
    net = run.net
    if net is None:
        raise ValueError("training needs a policy with a network")
    if run.lam < 0:
        raise ValueError("lambda must be non-negative")
    policy = run.policy if run.policy.mode == FUZZY else run.policy.with_mode(FUZZY)
    if run.mse_fc is None:
        run.mse_fc = baseline_errors(run.signals, run.graph, run.protocol)
    mse_fc = np.maximum(run.mse_fc, MSE_FLOOR)
    B, N, K = run.signals.batch_size, run.signals.n_agents, run.signals.n_steps
    z_weight = 1.0 / (mse_fc * N * K)
    nu_weight = np.full(B, run.lam / (N * K))
    opt = Adam(lr=run.learning_rate)

    for epoch in range(run.epochs):
        last_good = net.get_flat()
        ro = fuzzy_rollout(run.signals, run.graph, run.protocol, policy)
        mse, comm = _batch_terms(ro, mse_fc)
        rel = (mse - mse_fc) / mse_fc
        cost = float(np.sum(rel + run.lam * comm))
        grads = backward(ro, net, z_weight=z_weight, nu_weight=nu_weight)
        if not _check_finite(net, grads, cost):
            net.set_flat(last_good)
            raise NumericalFailure(f"non-finite cost or gradient at epoch {epoch}", net, epoch)
        run.cost_trace.append(cost)
        run.error_trace.append(float(np.mean(rel)))
        run.comm_trace.append(float(np.mean(comm)))
        grads, norm = clip_by_global_norm(grads, run.clip_norm)
        opt.step(net, grads)
        if not np.all(np.isfinite(net.get_flat())):
            net.set_flat(last_good)
            raise NumericalFailure(f"non-finite parameters after epoch {epoch}", net, epoch)
        log.debug("epoch %d cost %.6g grad-norm %.3g", epoch, cost, norm)
        if on_epoch is not None:
            on_epoch(epoch, net, cost)
    return net, run.cost_trace
