"""Scikit-learn style wrapper around pre-training, training and evaluation."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_signals
from .etm import DEFAULT_ALPHA, FUZZY, HARD, TriggerPolicy
from .graph import NetworkGraph, complete_graph
from .neural import Mlp
from .protocols import LINEAR, ProtocolConfig, simulate
from .training import (TrainingRun, baseline_errors, compute_cost, pretrain, train)


class NeuralEventTrigger(TransformerMixin, BaseEstimator):
    """Shared-weight event trigger learned on a batch of reference signals.

    ``fit`` takes a SignalBatch; ``transform``/``predict`` map local features
    (neighbour disagreement, time since last event) to eta in (0, 1).
    """

    def __init__(self, layer_dims=(2, 16, 16, 1), sigma=0.1, epsilon=1e-3, alpha=DEFAULT_ALPHA,
                 kappa=5.0, lam=0.1, learning_rate=5e-2, epochs=150, pretrain_epochs=200,
                 target_eta=0.5, clip_norm=10.0, graph=None, random_state=0):
        self.layer_dims = layer_dims
        self.sigma = sigma
        self.epsilon = epsilon
        self.alpha = alpha
        self.kappa = kappa
        self.lam = lam
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.pretrain_epochs = pretrain_epochs
        self.target_eta = target_eta
        self.clip_norm = clip_norm
        self.graph = graph
        self.random_state = random_state

    def _protocol(self) -> ProtocolConfig:
        return ProtocolConfig(LINEAR, kappa=self.kappa)

    def _graph_for(self, n_agents: int, graph: NetworkGraph | None = None) -> NetworkGraph:
        g = graph if graph is not None else self.graph
        if g is None:
            g = complete_graph(n_agents)
        if g.n_agents != n_agents:
            raise ValueError(f"graph has {g.n_agents} agents, signals have {n_agents}")
        return g

    def fit(self, X, y=None, init_network: Mlp | None = None):
        signals = check_signals(X)
        graph = self._graph_for(signals.n_agents)
        protocol = self._protocol()
        net = init_network.copy() if init_network is not None else \
            Mlp.initialize(tuple(self.layer_dims), seed=self.random_state)
        policy = TriggerPolicy(self.sigma, self.epsilon, FUZZY, self.alpha, network=net)
        self.pretrain_ = None
        if self.pretrain_epochs > 0 and init_network is None:
            self.pretrain_ = pretrain(net, signals, graph, protocol, policy,
                                      target_eta=self.target_eta, epochs=self.pretrain_epochs,
                                      learning_rate=self.learning_rate,
                                      clip_norm=self.clip_norm)
        run = TrainingRun(signals, graph, protocol, policy, lam=self.lam, epochs=self.epochs,
                          learning_rate=self.learning_rate, clip_norm=self.clip_norm,
                          seed=self.random_state)
        train(run)
        self.network_ = net
        self.cost_trace_ = list(run.cost_trace)
        self.n_features_in_ = net.n_inputs
        return self

    def transform(self, X):
        check_is_fitted(self, "network_")
        X = check_features(X, self.n_features_in_)
        return self.network_.forward(X)[:, None]

    def predict(self, X):
        return self.transform(X)[:, 0]

    def policy(self, mode: str = HARD) -> TriggerPolicy:
        check_is_fitted(self, "network_")
        return TriggerPolicy(self.sigma, self.epsilon, mode, self.alpha, network=self.network_)

    def simulate(self, X, graph: NetworkGraph | None = None):
        """Hard-mode rollouts of every sequence in a SignalBatch."""
        signals = check_signals(X)
        return simulate(signals, self._graph_for(signals.n_agents, graph), self._protocol(),
                        self.policy(HARD))

    def evaluate(self, X, graph: NetworkGraph | None = None, lam: float | None = None):
        """Per-sequence cost breakdowns of hard-mode rollouts."""
        signals = check_signals(X)
        g = self._graph_for(signals.n_agents, graph)
        ro = simulate(signals, g, self._protocol(), self.policy(HARD))
        fc = baseline_errors(signals, g, self._protocol())
        lam = self.lam if lam is None else lam
        return [compute_cost(ro.sequence(b), fc[b], lam) for b in range(len(ro))]

    def score(self, X, y=None, graph: NetworkGraph | None = None) -> float:
        """Negative mean cost; higher is better."""
        return -float(np.mean([c.total for c in self.evaluate(X, graph)]))
