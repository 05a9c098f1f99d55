import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ergoloop.spectral import (DimensionError, induced_2norm, is_primitive, is_schur, is_strongly_connected,
                               graph_period, power_contraction_order, qr_eigenvalues, spectral_radius)

from builders import random_schur


def test_spectral_radius_examples():
    assert spectral_radius(np.zeros((3, 3))) == 0.0
    assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9, rel=1e-12)
    # lambda^2 = 0.25
    assert spectral_radius([[0.0, 1.0], [0.25, 0.0]]) == pytest.approx(0.5, rel=1e-12)


def test_qr_oracle_agrees_on_characteristic_root_example():
    ev = qr_eigenvalues([[0.0, 1.0], [0.25, 0.0]])
    assert sorted(ev.real) == pytest.approx([-0.5, 0.5], abs=1e-12)


def test_non_square_rejected():
    for fn in (spectral_radius, is_schur, power_contraction_order):
        with pytest.raises(DimensionError):
            fn(np.zeros((2, 3)))


def test_nan_rejected():
    with pytest.raises(ValueError):
        spectral_radius([[np.nan]])


def test_is_schur_examples():
    assert is_schur(np.eye(2), 1e-9) == (False, 0.0)
    ok, margin = is_schur([[0.99]], 1e-9)
    assert ok and margin == pytest.approx(0.01, abs=1e-15)
    assert is_schur([[1.0]], 1e-9) == (False, 0.0)


def test_is_schur_tol_validated():
    with pytest.raises(ValueError):
        is_schur([[0.5]], 0.0)


def test_power_contraction_order_examples():
    assert power_contraction_order([[0.5]]) == 1
    assert power_contraction_order([[0.0, 2.0], [0.0, 0.0]]) == 2
    # 63: smallest k with ||m^k||_2 < 1, from explicit products and SVD-based norms
    assert power_contraction_order([[0.9, 10.0], [0.0, 0.9]]) == 63


def test_power_contraction_order_gives_up():
    assert power_contraction_order([[1.0]]) is None
    assert power_contraction_order([[0.9, 10.0], [0.0, 0.9]], m_max=10) is None


def test_induced_norm_matches_svd():
    rng = np.random.default_rng(1)
    for _ in range(20):
        m = rng.normal(size=(4, 3))
        assert induced_2norm(m) == pytest.approx(np.linalg.svd(m, compute_uv=False)[0], rel=1e-12)


def test_graph_examples():
    cycle = np.array([[0, 1], [1, 0]])
    assert is_strongly_connected(cycle)
    assert not is_strongly_connected(np.array([[0, 1], [0, 0]]))
    assert is_strongly_connected(np.array([[1]]))
    assert not is_primitive(cycle)
    # g^2..g^5 all positive by explicit enumeration
    assert is_primitive(np.array([[1, 1], [1, 0]]))
    assert is_primitive(np.array([[1]]))
    assert graph_period(cycle) == 2


def test_qr_eigenvalues_match_lapack():
    rng = np.random.default_rng(2)
    for n in range(1, 9):
        m = rng.normal(size=(n, n))
        ours = np.sort_complex(np.round(qr_eigenvalues(m), 9))
        ref = np.sort_complex(np.round(np.linalg.eigvals(m), 9))
        assert np.allclose(ours, ref, atol=1e-7)


square = st.integers(1, 8).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-10, 10, allow_nan=False, width=64)))


@settings(max_examples=60, deadline=None)
@given(square, st.floats(-5, 5, allow_nan=False))
def test_radius_scales_with_scalar(m, c):
    assert abs(spectral_radius(c * m) - abs(c) * spectral_radius(m)) <= 1e-8 * max(1.0, abs(c) * spectral_radius(m))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.floats(0.05, 0.995), st.integers(0, 2**32 - 1))
def test_schur_implies_finite_contraction_order(n, radius, seed):
    m = random_schur(np.random.default_rng(seed), n, radius)
    assert is_schur(m)[0]
    k = power_contraction_order(m, 10_000)
    assert k is not None
    assert np.linalg.norm(np.linalg.matrix_power(m, k), 2) < 1.0 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_block_triangular_spectrum_is_union_of_blocks(blocks, seed):
    rng = np.random.default_rng(seed)
    dims = rng.integers(1, 4, size=blocks)
    n = int(dims.sum())
    a = rng.normal(size=(n, n))
    off = np.concatenate([[0], np.cumsum(dims)])
    a[np.triu_indices(n, 1)] = 0.0
    expected = []
    for i in range(blocks):
        s = slice(off[i], off[i + 1])
        a[s, s] = rng.normal(size=(dims[i], dims[i]))
        expected.extend(np.linalg.eigvals(a[s, s]))
    got = list(np.linalg.eigvals(a))
    for lam in expected:
        j = int(np.argmin(np.abs(np.array(got) - lam)))
        assert abs(got.pop(j) - lam) < 1e-8
    assert not got


adjacency = st.integers(1, 7).flatmap(lambda n: arrays(np.bool_, (n, n)))


@settings(max_examples=200, deadline=None)
@given(adjacency)
def test_primitive_implies_strongly_connected(g):
    if is_primitive(g):
        assert is_strongly_connected(g)


@settings(max_examples=200, deadline=None)
@given(adjacency)
def test_graph_checks_against_networkx_and_wielandt(g):
    G = nx.DiGraph()
    n = g.shape[0]
    G.add_nodes_from(range(n))
    G.add_edges_from(zip(*np.nonzero(g)))
    sc = nx.is_strongly_connected(G)
    assert is_strongly_connected(g) == sc
    # boolean powers up to the Wielandt bound
    p = g.astype(np.int64)
    power = p.copy()
    positive = bool((power > 0).all())
    for _ in range((n - 1) ** 2):
        if positive:
            break
        power = np.minimum(power @ p, 1)
        positive = bool((power > 0).all())
    assert is_primitive(g) == positive
    if sc:
        assert (graph_period(g) == 1) == nx.is_aperiodic(G)
