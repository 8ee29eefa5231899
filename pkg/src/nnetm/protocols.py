"""Event-triggered dynamic consensus protocols integrated with explicit Euler.

Two protocols share one grid simulator:

* ``linear``: z_i' = r_i' - kappa * sum_j (b_i - b_j)
* ``sliding_mode`` (order m): level mu driven by signed powers of the held
  first-component disagreement, top level driven by r_i^(m+1).

``b`` are the held broadcasts. Triggers are evaluated once per grid step,
before the Euler update, and every agent broadcasts at t = 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .etm import TriggerPolicy, hard_fire
from .graph import NetworkGraph
from .signals import SignalBatch

LINEAR = "linear"
SLIDING = "sliding_mode"
INIT_MODES = ("reference", "zero_sum")


@dataclass(frozen=True)
class ProtocolConfig:
    kind: str = LINEAR
    kappa: float = 5.0
    gains: tuple[float, ...] = (2.0, 4.0)
    order: int = 1
    init: str = "reference"

    def __post_init__(self):
        if self.kind not in (LINEAR, SLIDING):
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if self.kind == LINEAR and not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.kind == SLIDING:
            if self.order < 1:
                raise ValueError("sliding-mode order must be >= 1")
            if len(self.gains) != self.order + 1 or min(self.gains) <= 0:
                raise ValueError(f"need {self.order + 1} strictly positive gains, got {self.gains}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")

    @property
    def state_dim(self) -> int:
        return 1 if self.kind == LINEAR else self.order + 1


def signed_power(x, exponent: float):
    """|x|^a sign(x), with exponent 0 meaning sign(x) and sign(0) = 0."""
    x = np.asarray(x, dtype=float)
    if exponent == 0:
        return np.sign(x)
    return np.abs(x) ** exponent * np.sign(x)


def step_linear(states, broadcasts, dr, graph: NetworkGraph, kappa: float, h: float):
    """One Euler step of the linear protocol; arrays have agents on the last axis."""
    states = np.asarray(states, dtype=float)
    broadcasts = np.asarray(broadcasts, dtype=float)
    if states.shape[-1] != graph.n_agents or broadcasts.shape != states.shape:
        raise ValueError("state/broadcast shapes do not match the graph")
    return states + h * (np.asarray(dr, dtype=float) - kappa * broadcasts @ graph.laplacian)


def sliding_coupling(broadcasts, graph: NetworkGraph, exponent: float):
    """sum_{j in N_i} |b_i - b_j|^exponent sign(b_i - b_j), agents on the last axis."""
    b = np.asarray(broadcasts, dtype=float)
    diff = b[..., :, None] - b[..., None, :]
    return np.sum(graph.adjacency * signed_power(diff, exponent), axis=-1)


def step_sliding(states, broadcasts, r_deriv_top, graph: NetworkGraph,
                 gains: Sequence[float], h: float, max_order: int | None = None):
    """One Euler step of the sliding-mode protocol.

    ``states`` has shape (..., N, m + 1); ``broadcasts`` holds z_{j,0}(tau_j).
    """
    z = np.asarray(states, dtype=float)
    m = z.shape[-1] - 1
    if m < 1:
        raise ValueError("sliding-mode states need at least two levels")
    if max_order is not None and m > max_order:
        raise ValueError(f"order {m} exceeds the supported maximum {max_order}")
    if len(gains) != m + 1:
        raise ValueError(f"order {m} needs {m + 1} gains")
    if z.shape[-2] != graph.n_agents:
        raise ValueError("state shape does not match the graph")
    dz = np.empty_like(z)
    for mu in range(m + 1):
        coupling = sliding_coupling(broadcasts, graph, (m - mu) / (m + 1))
        drive = z[..., mu + 1] if mu < m else np.asarray(r_deriv_top, dtype=float)
        dz[..., mu] = drive - gains[mu] * coupling
    return z + h * dz


@dataclass
class RolloutResult:
    """Trajectory of one sequence.

    ``states`` is (K+1, N) for the linear protocol, (K+1, N, m+1) otherwise.
    Per-trigger arrays (``broadcasts``, ``eta_trace``, ``fired``) are (K, N):
    the trigger acts at t = 0, h, ..., T - h.
    """

    times: np.ndarray
    states: np.ndarray
    broadcasts: np.ndarray
    fired: np.ndarray
    eta_trace: np.ndarray | None
    step: float
    kind: str = LINEAR
    param_versions: tuple[int, ...] = ()
    held_error: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_agents(self) -> int:
        return self.states.shape[1]

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def horizon(self) -> float:
        return self.n_steps * self.step

    @property
    def messages(self) -> np.ndarray:
        return self.states if self.states.ndim == 2 else self.states[..., 0]

    @property
    def consensus_avg(self) -> np.ndarray:
        return self.states.mean(axis=1)

    @property
    def disagreement(self) -> np.ndarray:
        return self.states - self.states.mean(axis=1, keepdims=True)

    @property
    def disagreement_norm(self) -> np.ndarray:
        x = self.disagreement
        return np.sqrt(np.sum(x.reshape(x.shape[0], -1) ** 2, axis=1))

    @property
    def events(self) -> list[np.ndarray]:
        t = self.times[:-1]
        return [t[self.fired[:, i]] for i in range(self.n_agents)]

    @property
    def event_counts(self) -> np.ndarray:
        return self.fired.sum(axis=0)

    @property
    def event_weights(self) -> np.ndarray:
        return self.fired.astype(float)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        n = self.n_agents
        if self.states.ndim == 2:
            zcols = [f"z_{i + 1}" for i in range(n)]
            zdata = self.states
        else:
            levels = self.states.shape[2]
            zcols = [f"z_{i + 1}_{mu}" for i in range(n) for mu in range(levels)]
            zdata = self.states.reshape(self.states.shape[0], -1)
        header = ["t"] + zcols + ["x_norm"] + [f"event_{i + 1}" for i in range(n)] \
            + [f"eta_{i + 1}" for i in range(n)]
        ev = np.vstack([self.fired.astype(int), np.zeros((1, n), dtype=int)])
        eta = np.full((self.n_steps + 1, n), np.nan)
        if self.eta_trace is not None:
            eta[:-1] = self.eta_trace
        xn = self.disagreement_norm
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.n_steps + 1):
                w.writerow([repr(float(self.times[k]))] + [repr(float(v)) for v in zdata[k]]
                           + [repr(float(xn[k]))] + [int(v) for v in ev[k]]
                           + [repr(float(v)) for v in eta[k]])
        return path


@dataclass
class BatchRollout:
    """Batched trajectories; leading axis indexes sequences."""

    times: np.ndarray
    states: np.ndarray
    broadcasts: np.ndarray
    fired: np.ndarray
    eta_trace: np.ndarray | None
    held_error: np.ndarray
    step: float
    kind: str
    param_versions: tuple[int, ...] = ()

    def __len__(self) -> int:
        return self.states.shape[0]

    def sequence(self, b: int) -> RolloutResult:
        return RolloutResult(
            times=self.times, states=self.states[b], broadcasts=self.broadcasts[b],
            fired=self.fired[b],
            eta_trace=None if self.eta_trace is None else self.eta_trace[b],
            step=self.step, kind=self.kind, param_versions=self.param_versions,
            held_error=self.held_error[b],
        )

    def __iter__(self):
        return (self.sequence(b) for b in range(len(self)))


def initial_state(signals: SignalBatch, protocol: ProtocolConfig) -> np.ndarray:
    r0 = signals.values[:, :, 0].copy()
    if protocol.init == "zero_sum":
        r0 -= r0.mean(axis=1, keepdims=True)
    if protocol.kind == LINEAR:
        return r0
    if signals.second_derivatives is None and protocol.order >= 1:
        raise ValueError("sliding-mode protocol needs analytic second derivatives")
    z = np.zeros(r0.shape + (protocol.order + 1,))
    z[..., 0] = r0
    dr0 = signals.derivatives[:, :, 0].copy()
    if protocol.init == "zero_sum":
        dr0 -= dr0.mean(axis=1, keepdims=True)
    z[..., 1] = dr0
    return z


def local_features(messages: np.ndarray, held: np.ndarray, last_event: np.ndarray,
                   t: float, graph: NetworkGraph) -> np.ndarray:
    """(disagreement with held neighbour values, time since own last event)."""
    dis = graph.degrees * messages - held @ graph.adjacency
    return np.stack([dis, t - last_event], axis=-1)


def simulate(signals: SignalBatch, graph: NetworkGraph, protocol: ProtocolConfig,
             policy: TriggerPolicy | None = None, full_communication: bool = False) -> BatchRollout:
    """Hard-mode event-triggered rollout of every sequence in ``signals``.

    ``full_communication`` refreshes every broadcast at every step.
    """
    if signals.n_agents != graph.n_agents:
        raise ValueError(f"signals have {signals.n_agents} agents, graph has {graph.n_agents}")
    if policy is None and not full_communication:
        raise ValueError("a trigger policy is required unless full_communication is set")
    if protocol.kind == SLIDING and protocol.order > 1:
        raise ValueError("only order-1 sliding mode is supported by the signal generator")
    B, N, K = signals.batch_size, signals.n_agents, signals.n_steps
    h = signals.step
    z = initial_state(signals, protocol)
    msg = z if z.ndim == 2 else z[..., 0]

    states = np.empty((B, K + 1) + z.shape[1:])
    broadcasts = np.empty((B, K, N))
    fired_log = np.zeros((B, K, N), dtype=bool)
    held_error = np.empty((B, K, N))
    eta_log = None if full_communication else np.empty((B, K, N))
    versions = set()

    states[:, 0] = z
    held = msg.copy()
    last_event = np.zeros((B, N))
    for k in range(K):
        t = k * h
        if not full_communication:
            feats = local_features(msg, held, last_event, t, graph)
            if policy.network is not None:
                versions.add(policy.network.version)
            eta = policy.eta(feats.reshape(-1, 2)).reshape(B, N)
            eta_log[:, k] = eta
        if full_communication or k == 0:
            fired = np.ones((B, N), dtype=bool)
        else:
            fired = hard_fire(np.abs(msg - held), policy.threshold(eta))
        held = np.where(fired, msg, held)
        last_event = np.where(fired, t, last_event)
        broadcasts[:, k] = held
        fired_log[:, k] = fired
        held_error[:, k] = np.abs(msg - held)

        if protocol.kind == LINEAR:
            z = step_linear(z, held, signals.derivatives[:, :, k], graph, protocol.kappa, h)
        else:
            z = step_sliding(z, held, signals.second_derivatives[:, :, k], graph,
                             protocol.gains, h)
        msg = z if z.ndim == 2 else z[..., 0]
        states[:, k + 1] = z

    return BatchRollout(signals.times, states, broadcasts, fired_log, eta_log, held_error,
                        h, protocol.kind, tuple(sorted(versions)))


def full_communication_rollout(signals: SignalBatch, graph: NetworkGraph,
                               protocol: ProtocolConfig) -> BatchRollout:
    return simulate(signals, graph, protocol, full_communication=True)


def sum_conservation_residual(rollout: RolloutResult, derivatives: np.ndarray) -> float:
    """Largest |sum z(t) - sum z(0) - integral of sum r'| per unit time.

    The integral is the left Riemann sum the Euler scheme consumes; the
    coupling term cancels exactly over undirected edges.
    ``derivatives`` is the (N, K+1) array of r_i' fed to the integrator.
    """
    if rollout.kind != LINEAR:
        raise ValueError("sum conservation holds for the linear protocol only")
    h = rollout.step
    s = rollout.states.sum(axis=1)
    fed = np.concatenate([[0.0], np.cumsum(h * np.asarray(derivatives).sum(axis=0)[:-1])])
    res = np.abs(s - s[0] - fed)[1:]
    return float(np.max(res / rollout.times[1:]))
