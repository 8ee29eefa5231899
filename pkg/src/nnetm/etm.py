"""Send-on-delta trigger with threshold delta = sigma * eta + epsilon."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .neural import Mlp, sigmoid

HARD = "hard"
FUZZY = "fuzzy"

# steepest sigmoid for which reverse-mode gradients through a 10k-step
# rollout still agree with finite differences
DEFAULT_ALPHA = 200.0


@dataclass(frozen=True)
class TriggerPolicy:
    """Threshold rule shared by every agent.

    With ``network`` unset the threshold uses the constant ``eta_fixed``.
    """

    sigma: float = 0.1
    epsilon: float = 1e-3
    mode: str = HARD
    alpha: float = DEFAULT_ALPHA
    eta_fixed: float = 0.5
    network: Mlp | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.sigma >= 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.mode not in (HARD, FUZZY):
            raise ValueError(f"mode must be 'hard' or 'fuzzy', got {self.mode!r}")
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.eta_fixed <= 1.0:
            raise ValueError("eta_fixed must lie in [0, 1]")

    @property
    def learned(self) -> bool:
        return self.network is not None

    def threshold(self, eta):
        return self.sigma * np.asarray(eta, dtype=float) + self.epsilon

    def eta(self, features: np.ndarray) -> np.ndarray:
        """eta for an (M, 2) feature array."""
        if self.network is None:
            return np.full(len(features), self.eta_fixed)
        return self.network.forward(features)

    def with_mode(self, mode: str, alpha: float | None = None) -> "TriggerPolicy":
        return TriggerPolicy(self.sigma, self.epsilon, mode,
                             self.alpha if alpha is None else alpha,
                             self.eta_fixed, self.network)


@dataclass
class AgentState:
    z: np.ndarray
    last_broadcast: np.ndarray
    last_event_time: float = 0.0
    events: list[float] = field(default_factory=list)

    @property
    def event_count(self) -> int:
        return len(self.events)

    def record_event(self, t: float, message) -> None:
        if self.events and t <= self.events[-1]:
            raise ValueError("event times must be strictly increasing")
        self.last_broadcast = np.array(message, dtype=float, copy=True)
        self.last_event_time = t
        self.events.append(t)


@dataclass(frozen=True)
class TriggerDecision:
    fired: bool | None
    nu: float
    delta: float
    eta: float
    error: float


def _error(agent: AgentState, current_message) -> float:
    diff = np.asarray(current_message, dtype=float) - np.asarray(agent.last_broadcast, dtype=float)
    return float(np.linalg.norm(np.atleast_1d(diff)))


def evaluate_hard(agent: AgentState, current_message, eta: float,
                  policy: TriggerPolicy) -> TriggerDecision:
    """Fire iff ||m(z) - m(z(tau_k))|| >= delta; bookkeeping is the caller's."""
    if policy.mode != HARD:
        raise ValueError("evaluate_hard needs a hard-mode policy")
    err = _error(agent, current_message)
    delta = float(policy.threshold(eta))
    fired = err >= delta
    return TriggerDecision(fired, 1.0 if fired else 0.0, delta, float(eta), err)


def evaluate_fuzzy(agent: AgentState, current_message, eta: float,
                   policy: TriggerPolicy) -> TriggerDecision:
    """Sigmoid-relaxed trigger; blends the held broadcast in place."""
    if policy.mode != FUZZY:
        raise ValueError("evaluate_fuzzy needs a fuzzy-mode policy")
    err = _error(agent, current_message)
    delta = float(policy.threshold(eta))
    nu = float(sigmoid(policy.alpha * (err - delta)))
    agent.last_broadcast = nu * np.asarray(current_message, dtype=float) \
        + (1.0 - nu) * np.asarray(agent.last_broadcast, dtype=float)
    return TriggerDecision(None, nu, delta, float(eta), err)


def hard_fire(error: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return error >= delta


def fuzzy_weight(error: np.ndarray, delta: np.ndarray, alpha: float) -> np.ndarray:
    return sigmoid(alpha * (error - delta))


@dataclass(frozen=True)
class InterEventStats:
    min_gap: float
    mean_gap: float
    counts: tuple[int, ...]
    n_gaps: int


def inter_event_statistics(events: Sequence[Iterable[float]],
                           horizon: float | None = None) -> InterEventStats:
    """Gap statistics over all agents; with no pairs min_gap is the horizon."""
    gaps = []
    counts = []
    for ev in events:
        ev = np.asarray(list(ev), dtype=float)
        counts.append(int(ev.size))
        if ev.size > 1:
            d = np.diff(ev)
            if np.any(d <= 0):
                raise ValueError("event lists must be strictly increasing")
            gaps.append(d)
    sentinel = float("inf") if horizon is None else float(horizon)
    if not gaps:
        return InterEventStats(sentinel, sentinel, tuple(counts), 0)
    allg = np.concatenate(gaps)
    return InterEventStats(float(allg.min()), float(allg.mean()), tuple(counts), int(allg.size))


EtaFunction = Callable[[np.ndarray], np.ndarray]
