"""Undirected communication graphs and their spectral quantities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed or disconnected topologies."""


def jacobi_eigenvalues(matrix: np.ndarray, tol: float = 1e-12,
                       max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a symmetric matrix with cyclic Jacobi rotations.

    Returns ascending eigenvalues and the matching eigenvectors as columns.
    Sweeps stop once the off-diagonal Frobenius mass drops below ``tol``
    and no eigenvalue moved by more than 1e-10 during the last sweep.
    """
    a = np.array(matrix, dtype=float, copy=True)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12):
        raise ValueError("jacobi_eigenvalues needs a square symmetric matrix")
    v = np.eye(n)
    prev = np.diag(a).copy()
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        diag = np.diag(a).copy()
        moved = np.max(np.abs(diag - prev))
        prev = diag
        if moved < 1e-10 and np.sqrt(np.sum(np.tril(a, -1) ** 2)) < tol:
            break
    w = np.diag(a)
    order = np.argsort(w)
    return w[order], v[:, order]


def _components(n: int, edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


@dataclass(frozen=True)
class NetworkGraph:
    n_agents: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False)
    laplacian: np.ndarray = field(repr=False)
    incidence: np.ndarray = field(repr=False)
    lambda2: float
    lambda_max: float
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def degrees(self) -> np.ndarray:
        return np.diag(self.laplacian).copy()

    @property
    def projection(self) -> np.ndarray:
        return projection_matrix(self.n_agents)

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]


def projection_matrix(n_agents: int) -> np.ndarray:
    """H = I - (1/N) 1 1^T, the projector onto the disagreement subspace."""
    return np.eye(n_agents) - np.full((n_agents, n_agents), 1.0 / n_agents)


def build_graph(n_agents: int, edges: Sequence[Sequence[int]]) -> NetworkGraph:
    if n_agents < 2:
        raise GraphError("a network needs at least 2 agents")
    canon: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < n_agents and 0 <= j < n_agents):
            raise GraphError(f"edge {(i, j)} has an endpoint outside [0, {n_agents})")
        if i == j:
            raise GraphError(f"self-loop on agent {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphError(f"duplicate edge {key}")
        seen.add(key)
        canon.append(key)
    canon.sort()

    comps = _components(n_agents, canon)
    if len(comps) > 1:
        raise GraphError(f"graph is disconnected; components: {comps}")

    adjacency = np.zeros((n_agents, n_agents))
    incidence = np.zeros((n_agents, len(canon)))
    for k, (i, j) in enumerate(canon):
        adjacency[i, j] = adjacency[j, i] = 1.0
        incidence[i, k] = 1.0   # smaller index gets +1
        incidence[j, k] = -1.0
    laplacian = np.diag(adjacency.sum(axis=1)) - adjacency

    eigvals, eigvecs = jacobi_eigenvalues(laplacian)
    return NetworkGraph(
        n_agents=n_agents,
        edges=tuple(canon),
        adjacency=adjacency,
        laplacian=laplacian,
        incidence=incidence,
        lambda2=float(eigvals[1]),
        lambda_max=float(eigvals[-1]),
        eigenvectors=eigvecs,
    )


def complete_graph(n: int) -> NetworkGraph:
    return build_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def path_graph(n: int) -> NetworkGraph:
    return build_graph(n, [(i, i + 1) for i in range(n - 1)])


def ring_graph(n: int) -> NetworkGraph:
    if n < 3:
        return path_graph(n)
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)])


def random_connected_graph(n: int, edge_prob: float = 0.3,
                           seed: int | None = None) -> NetworkGraph:
    """Random spanning tree plus independent extra edges."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        child = order[k]
        edges.add((min(parent, child), max(parent, child)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < edge_prob:
                edges.add((i, j))
    return build_graph(n, sorted(edges))


GENERATORS = {
    "complete": complete_graph,
    "path": path_graph,
    "ring": ring_graph,
    "random-connected": random_connected_graph,
}


def make_graph(kind: str, n_agents: int, edges=None, seed: int | None = None,
               edge_prob: float = 0.3) -> NetworkGraph:
    if kind == "edges":
        if edges is None:
            raise GraphError("kind='edges' needs an explicit edge list")
        return build_graph(n_agents, edges)
    if kind not in GENERATORS:
        raise GraphError(f"unknown graph kind {kind!r}; expected one of "
                         f"{sorted(GENERATORS) + ['edges']}")
    if kind == "random-connected":
        return random_connected_graph(n_agents, edge_prob=edge_prob, seed=seed)
    return GENERATORS[kind](n_agents)


def disagreement(z: np.ndarray, graph: NetworkGraph | int) -> np.ndarray:
    """Return (H kron I_n) z for a stacked state vector of length N*n."""
    n_agents = graph if isinstance(graph, int) else graph.n_agents
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size % n_agents:
        raise ValueError(f"state of size {z.size} does not stack {n_agents} agents")
    blocks = z.reshape(n_agents, -1)
    return (blocks - blocks.mean(axis=0)).reshape(-1)
