"""Trajectory-level checks of the disagreement bound and trigger guarantees,
plus per-lambda summaries of error and communication."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .etm import TriggerPolicy, inter_event_statistics
from .graph import NetworkGraph
from .protocols import LINEAR, RolloutResult


@dataclass(frozen=True)
class BoundReport:
    bound: np.ndarray
    actual: np.ndarray
    max_violation: float
    tolerance: float
    violated: bool
    asymptote: float


def linear_bound(times: np.ndarray, x0_norm: float, graph: NetworkGraph, kappa: float,
                 sigma: float, epsilon: float, rate_bound: float,
                 vector_threshold: bool = False) -> np.ndarray:
    """exp(-k l2 t)|x(0)| + (lmax / l2)(sigma + eps) + sqrt(N) R / (k l2).

    The threshold caps each agent's broadcast error, so the stacked error is
    only bounded by sqrt(N)(sigma + eps). ``vector_threshold`` applies that
    factor; without it the threshold term can be exceeded (two agents at
    +delta, two at -delta and no drift is an equilibrium with |x| = 2 delta).
    """
    l2, lmax = graph.lambda2, graph.lambda_max
    root_n = np.sqrt(graph.n_agents)
    spread = (sigma + epsilon) * (root_n if vector_threshold else 1.0)
    const = (lmax / l2) * spread + root_n * rate_bound / (kappa * l2)
    return np.exp(-kappa * l2 * np.asarray(times)) * x0_norm + const


def default_bound_tolerance(graph: NetworkGraph, kappa: float, sigma: float, epsilon: float,
                            h: float, vector_threshold: bool = False) -> float:
    """One Euler step of slack: kappa * lmax * (sigma + eps) * h + 1e-9."""
    scale = np.sqrt(graph.n_agents) if vector_threshold else 1.0
    return kappa * graph.lambda_max * (sigma + epsilon) * scale * h + 1e-9


def check_disagreement_bound(rollout: RolloutResult, graph: NetworkGraph, kappa: float,
                         sigma: float, epsilon: float, rate_bound: float,
                         tolerance: float | None = None,
                         vector_threshold: bool = False) -> BoundReport:
    if rollout.kind != LINEAR:
        raise ValueError("the explicit bound applies to the linear protocol only")
    if rollout.n_agents != graph.n_agents:
        raise ValueError("rollout and graph disagree on the number of agents")
    tol = default_bound_tolerance(graph, kappa, sigma, epsilon, rollout.step, vector_threshold) \
        if tolerance is None else tolerance
    actual = rollout.disagreement_norm
    bound = linear_bound(rollout.times, actual[0], graph, kappa, sigma, epsilon, rate_bound,
                         vector_threshold)
    if np.any(np.diff(bound) > 1e-12):
        raise AssertionError("bound is not non-increasing in t")
    excess = float(np.max(actual - bound))
    asymptote = float(linear_bound(np.inf, 0.0, graph, kappa, sigma, epsilon, rate_bound,
                                   vector_threshold))
    return BoundReport(bound, actual, excess, tol, excess > tol, asymptote)


@dataclass(frozen=True)
class TriggerGuaranteeReport:
    delta_in_range: bool
    min_delta: float
    max_delta: float
    min_gap: float
    gap_ok: bool
    held_error_ok: bool

    @property
    def ok(self) -> bool:
        return self.delta_in_range and self.gap_ok and self.held_error_ok


def check_trigger_guarantees(rollout: RolloutResult, policy: TriggerPolicy) -> TriggerGuaranteeReport:
    """epsilon <= delta(t) <= sigma + epsilon, inter-event gaps >= h, and the
    held error below delta right after every trigger evaluation."""
    if rollout.eta_trace is None:
        raise ValueError("rollout carries no eta trace (full-communication run?)")
    delta = policy.threshold(rollout.eta_trace)
    lo, hi = float(delta.min()), float(delta.max())
    in_range = lo >= policy.epsilon and hi <= policy.sigma + policy.epsilon
    stats = inter_event_statistics(rollout.events, horizon=rollout.horizon)
    h = rollout.step
    gap_ok = stats.min_gap >= h * (1.0 - 1e-9)
    held_ok = True
    if rollout.held_error is not None:
        held_ok = bool(np.all(rollout.held_error < delta))
    return TriggerGuaranteeReport(in_range, lo, hi, stats.min_gap, gap_ok, held_ok)


@dataclass
class SweepSummary:
    stats: dict[float, dict[str, dict[str, float]]]
    histograms: dict[str, tuple[np.ndarray, dict[float, np.ndarray]]]

    @property
    def lambdas(self) -> list[float]:
        return sorted(self.stats)

    def mean(self, metric: str, lam: float) -> float:
        return self.stats[lam][metric]["mean"]

    def histogram_rows(self) -> list[tuple]:
        rows = []
        for metric, (edges, counts) in self.histograms.items():
            for lam in self.lambdas:
                for left, right, c in zip(edges[:-1], edges[1:], counts[lam]):
                    rows.append((lam, float(left), float(right), int(c), metric))
        return rows

    def to_csv(self, histogram_path: str | Path, stats_path: str | Path | None = None) -> None:
        histogram_path = Path(histogram_path)
        histogram_path.parent.mkdir(parents=True, exist_ok=True)
        with histogram_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "bin_left", "bin_right", "count", "metric"])
            for lam, left, right, c, metric in self.histogram_rows():
                w.writerow([repr(lam), repr(left), repr(right), c, metric])
        if stats_path is not None:
            keys = ["n", "mean", "median", "q25", "q75", "min", "max"]
            with Path(stats_path).open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["lambda", "metric"] + keys)
                for lam in self.lambdas:
                    for metric, s in self.stats[lam].items():
                        w.writerow([repr(lam), metric] + [repr(s[k]) for k in keys])

    def text(self) -> str:
        lines = ["lambda        mean E_r    median E_r   mean C      median C"]
        for lam in self.lambdas:
            e, c = self.stats[lam]["E_r"], self.stats[lam]["C"]
            lines.append(f"{lam:<12g}  {e['mean']:<10.4g}  {e['median']:<11.4g}  "
                         f"{c['mean']:<10.4g}  {c['median']:.4g}")
        return "\n".join(lines)


def _describe(values: np.ndarray) -> dict[str, float]:
    q25, med, q75 = np.percentile(values, [25, 50, 75])
    return {"n": int(values.size), "mean": float(values.mean()), "median": float(med),
            "q25": float(q25), "q75": float(q75), "min": float(values.min()),
            "max": float(values.max())}


def lambda_sweep_summary(results: Mapping[float, Sequence], bins: int = 20) -> SweepSummary:
    """Distribution statistics and shared-edge histograms of E_r and C per lambda."""
    if not results or any(len(v) == 0 for v in results.values()):
        raise ValueError("lambda sweep needs a non-empty result list per lambda")
    metrics = {
        "E_r": {lam: np.array([c.rel_error for c in rs]) for lam, rs in results.items()},
        "C": {lam: np.array([c.comm_rate for c in rs]) for lam, rs in results.items()},
    }
    stats = {lam: {m: _describe(metrics[m][lam]) for m in metrics} for lam in results}
    histograms = {}
    for m, per in metrics.items():
        allv = np.concatenate(list(per.values()))
        lo, hi = float(allv.min()), float(allv.max())
        if hi <= lo:
            hi = lo + 1e-12
        edges = np.linspace(lo, hi, bins + 1)
        histograms[m] = (edges, {lam: np.histogram(v, bins=edges)[0] for lam, v in per.items()})
    return SweepSummary(stats, histograms)
