import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnetm.graph import (GraphError, build_graph, complete_graph, disagreement,
                         jacobi_eigenvalues, make_graph, path_graph, projection_matrix,
                         random_connected_graph, ring_graph)


def char_poly_roots(matrix):
    """Eigenvalues as roots of det(sI - M), independent of any eigensolver."""
    return np.sort(np.roots(np.poly(matrix)).real)


def test_p3_spectrum_matches_characteristic_polynomial():
    g = path_graph(3)
    w, _ = jacobi_eigenvalues(g.laplacian)
    np.testing.assert_allclose(w, [0.0, 1.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(w, char_poly_roots(g.laplacian), atol=1e-9)
    assert g.lambda2 == pytest.approx(1.0, abs=1e-12)
    assert g.lambda_max == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_complete_graph_spectrum(n):
    g = complete_graph(n)
    assert g.lambda2 == pytest.approx(n, abs=1e-10)
    assert g.lambda_max == pytest.approx(n, abs=1e-10)


def test_k2_spectrum():
    g = path_graph(2)
    assert (g.lambda2, g.lambda_max) == pytest.approx((2.0, 2.0), abs=1e-12)


@pytest.mark.parametrize("n", [3, 4, 6, 7])
def test_ring_closed_form(n):
    g = ring_graph(n)
    expected = np.sort(2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(n) / n))
    w, _ = jacobi_eigenvalues(g.laplacian)
    np.testing.assert_allclose(w, expected, atol=1e-10)


@pytest.mark.parametrize("n", [2, 4, 9])
def test_path_closed_form(n):
    expected = np.sort(2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n))
    np.testing.assert_allclose(jacobi_eigenvalues(path_graph(n).laplacian)[0], expected,
                               atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10_000))
def test_jacobi_agrees_with_lapack(n, seed):
    a = np.random.default_rng(seed).normal(size=(n, n))
    a = a + a.T
    w, v = jacobi_eigenvalues(a)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-9)
    np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(a @ v, v * w, atol=1e-9)


def test_jacobi_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        jacobi_eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.floats(0.0, 1.0), st.integers(0, 1000))
def test_laplacian_identities(n, p, seed):
    g = random_connected_graph(n, edge_prob=p, seed=seed)
    L = g.laplacian
    np.testing.assert_array_equal(L, L.T)
    np.testing.assert_allclose(L @ np.ones(n), 0.0, atol=1e-12)
    np.testing.assert_allclose(g.incidence @ g.incidence.T, L, atol=1e-12)
    np.testing.assert_array_equal(np.diag(L), g.adjacency.sum(axis=1))
    assert g.lambda2 > 1e-9
    assert g.lambda2 <= g.lambda_max + 1e-12
    assert g.lambda_max <= 2 * g.degrees.max() + 1e-9
    np.testing.assert_allclose(L @ g.eigenvectors, g.eigenvectors * np.sort(
        np.linalg.eigvalsh(L)), atol=1e-8)


def test_incidence_orientation():
    g = build_graph(3, [(2, 0), (1, 2)])
    assert g.edges == ((0, 2), (1, 2))
    np.testing.assert_array_equal(g.incidence, [[1, 0], [0, 1], [-1, -1]])


def test_random_graph_reproducible():
    a = random_connected_graph(7, 0.2, seed=5)
    b = random_connected_graph(7, 0.2, seed=5)
    assert a.edges == b.edges


def test_disconnected_graph_reports_components():
    with pytest.raises(GraphError, match=r"\[\[0, 1\], \[2, 3\]\]"):
        build_graph(4, [(0, 1), (2, 3)])


@pytest.mark.parametrize("n, edges", [
    (1, []),
    (3, [(0, 3), (1, 2)]),
    (3, [(0, 0), (0, 1), (1, 2)]),
    (3, [(0, 1), (1, 0), (1, 2)]),
])
def test_malformed_graphs_rejected(n, edges):
    with pytest.raises(GraphError):
        build_graph(n, edges)


def test_make_graph_kinds():
    assert make_graph("complete", 4).n_agents == 4
    assert make_graph("edges", 3, edges=[(0, 1), (1, 2)]).edges == ((0, 1), (1, 2))
    assert make_graph("ring", 2).edges == ((0, 1),)
    with pytest.raises(GraphError):
        make_graph("star", 4)
    with pytest.raises(GraphError):
        make_graph("edges", 3)


def test_neighbors():
    g = path_graph(4)
    assert g.neighbors(0) == [1]
    assert g.neighbors(2) == [1, 3]


def test_projection_and_disagreement():
    H = projection_matrix(4)
    np.testing.assert_allclose(H @ H, H, atol=1e-15)
    z = np.arange(8.0)
    x = disagreement(z, 4)
    blocks = x.reshape(4, 2)
    np.testing.assert_allclose(blocks.sum(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(disagreement(np.arange(4.0), path_graph(4)),
                               H @ np.arange(4.0), atol=1e-14)
    with pytest.raises(ValueError):
        disagreement(np.arange(5.0), 4)
