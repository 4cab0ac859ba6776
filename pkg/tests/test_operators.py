"""
Boundary operators, magnetic Laplacians, normalization and the oracles
they are checked against.
"""
import numpy as np
import pytest
import scipy.sparse as sp
from pytest import approx

from graph_core import (
    Graph,
    Orientation,
    apply_flip,
    canonical_orientation,
    random_mixed_graph,
    random_orientation,
    random_orientation_flip,
)
from operators import (
    BoundaryKind,
    LaplacianKind,
    NotAdjacentError,
    OperatorError,
    Variant,
    boundary,
    chebyshev_apply,
    default_q,
    dense_oracle_laplacian,
    dumps_coordinates,
    finalize,
    gcn_shift,
    laplacian,
    laplacian_entry_oracle,
    normalized_laplacian,
    normalized_line_graph_laplacian,
    split_boundaries,
    to_coordinates,
)


# -- Helpers -----------------------------------------------------------------

def _make_undirected_path():
    g = Graph.from_edges(3, [(0, 1, "U"), (1, 2, "U")])
    return g, canonical_orientation(g)


def _make_directed_path():
    g = Graph.from_edges(3, [(0, 1, "D"), (1, 2, "D")])
    return g, canonical_orientation(g)


def _make_random(seed, max_edges=60):
    g = random_mixed_graph(seed, n_range=(6, 16), p_edge=0.35, max_edges=max_edges)
    return g, random_orientation(g, seed + 1000)


# == Boundaries =============================================================

class TestBoundary:
    def test_equ_signs(self):
        g, o = _make_undirected_path()
        b = boundary(g, o, BoundaryKind(Variant.EQU)).toarray()
        np.testing.assert_allclose(b, [[-1, 0], [1, -1], [0, 1]])

    def test_inv_all_ones(self):
        g, o = _make_undirected_path()
        b = boundary(g, o, BoundaryKind(Variant.INV)).toarray()
        np.testing.assert_allclose(b, [[1, 0], [1, 1], [0, 1]])

    def test_magnetic_phases(self):
        g = Graph.from_edges(2, [(0, 1, "D")])
        b = boundary(g, canonical_orientation(g), BoundaryKind(Variant.EQU, 0.5)).toarray()
        assert b[0, 0] == approx(-1j)
        assert b[1, 0] == approx(-1j)

    def test_q_out_of_range(self):
        with pytest.raises(OperatorError):
            BoundaryKind(Variant.EQU, 1.5)

    def test_orientation_against_direction(self):
        g = Graph.from_edges(2, [(0, 1, "D")])
        with pytest.raises(ValueError):
            boundary(g, Orientation(np.array([True])), BoundaryKind(Variant.EQU))

    def test_split_parts_sum_to_real_boundary(self):
        g, o = _make_random(3)
        parts = split_boundaries(g, o, Variant.EQU)
        total = parts["undirected"] + parts["source"] + parts["target"]
        np.testing.assert_allclose(total.toarray(), boundary(g, o, BoundaryKind(Variant.EQU, 0.0)).toarray())

    def test_sparse_output_invariants(self):
        g, o = _make_random(4)
        b = boundary(g, o, BoundaryKind(Variant.EQU, 0.1))
        assert b.dtype == np.complex128
        assert b.has_sorted_indices
        assert np.all(np.abs(b.data) >= 1e-15)


# == Laplacians =============================================================

class TestLaplacianHandCases:
    def test_undirected_equ(self):
        g, o = _make_undirected_path()
        np.testing.assert_allclose(laplacian(g, o, LaplacianKind.EQU).toarray(), [[2, -1], [-1, 2]])

    def test_undirected_inv(self):
        g, o = _make_undirected_path()
        np.testing.assert_allclose(laplacian(g, o, LaplacianKind.INV).toarray(), [[2, 1], [1, 2]])

    def test_cross_modality_has_zero_diagonal(self):
        g, o = _make_undirected_path()
        lap = laplacian(g, o, LaplacianKind.EQU_TO_INV).toarray()
        np.testing.assert_allclose(lap, [[0, -1], [1, 0]])

    def test_consecutive_directed_edges_carry_phase(self):
        g, o = _make_directed_path()
        lap = laplacian(g, o, LaplacianKind.EQU, q=0.25).toarray()
        assert lap[0, 0] == approx(2.0)
        assert lap[0, 1] == approx(-np.exp(2j * np.pi * 0.25))
        assert lap[1, 0] == approx(np.conj(lap[0, 1]))

    def test_q_zero_ignores_direction(self):
        g_dir, o = _make_directed_path()
        g_und, o_und = _make_undirected_path()
        np.testing.assert_allclose(
            laplacian(g_dir, o, LaplacianKind.EQU, q=0.0).toarray(),
            laplacian(g_und, o_und, LaplacianKind.EQU).toarray(),
        )

    def test_default_q(self):
        g, o = _make_directed_path()
        assert default_q(g) == approx(0.5)
        np.testing.assert_allclose(laplacian(g, o, LaplacianKind.EQU).toarray(),
                                   laplacian(g, o, LaplacianKind.EQU, q=0.5).toarray())
        assert default_q(Graph.empty(3)) == 0.0

    def test_empty_graph(self):
        g = Graph.empty(4)
        assert laplacian(g, canonical_orientation(g), LaplacianKind.EQU).shape == (0, 0)

    def test_parallel_undirected_and_directed_edge(self):
        g = Graph.from_edges(2, [(0, 1, "U"), (0, 1, "D")])
        o = canonical_orientation(g)
        np.testing.assert_allclose(laplacian(g, o, LaplacianKind.EQU, 0.2).toarray(),
                                   dense_oracle_laplacian(g, o, LaplacianKind.EQU, 0.2))

    @pytest.mark.parametrize("name,kind", [
        ("equ", LaplacianKind.EQU),
        ("INV", LaplacianKind.INV),
        ("equ->inv", LaplacianKind.EQU_TO_INV),
        ("inv_to_equ", LaplacianKind.INV_TO_EQU),
    ])
    def test_parse(self, name, kind):
        assert LaplacianKind.parse(name) is kind

    def test_parse_unknown(self):
        with pytest.raises(OperatorError):
            LaplacianKind.parse("hodge")


class TestLaplacianOracles:
    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("kind", list(LaplacianKind))
    def test_matches_dense_product(self, seed, kind):
        g, o = _make_random(seed)
        q = 0.5 / max(g.m, 1) + 0.05
        np.testing.assert_allclose(laplacian(g, o, kind, q).toarray(), dense_oracle_laplacian(g, o, kind, q),
                                   atol=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_entry_oracle(self, seed):
        g, o = _make_random(seed, max_edges=30)
        q = 0.17
        for kind in LaplacianKind:
            lap = laplacian(g, o, kind, q).toarray()
            coo = sp.coo_matrix(lap)
            for r, c in zip(coo.row, coo.col):
                assert lap[r, c] == approx(laplacian_entry_oracle(g, o, kind, q, int(r), int(c)), abs=1e-12)

    def test_entry_oracle_rejects_non_adjacent(self):
        g = Graph.from_edges(4, [(0, 1, "U"), (2, 3, "U")])
        with pytest.raises(NotAdjacentError):
            laplacian_entry_oracle(g, canonical_orientation(g), LaplacianKind.EQU, 0.0, 0, 1)

    @pytest.mark.parametrize("seed", range(5))
    def test_same_modality_hermitian_psd(self, seed):
        g, o = _make_random(seed)
        for kind in (LaplacianKind.EQU, LaplacianKind.INV):
            lap = laplacian(g, o, kind, 0.3).toarray()
            np.testing.assert_allclose(lap, lap.conj().T, atol=1e-12)
            assert np.linalg.eigvalsh(lap).min() >= -1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_cross_modalities_are_adjoint(self, seed):
        g, o = _make_random(seed)
        a = laplacian(g, o, LaplacianKind.EQU_TO_INV, 0.3).toarray()
        b = laplacian(g, o, LaplacianKind.INV_TO_EQU, 0.3).toarray()
        np.testing.assert_allclose(a, b.conj().T, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_flip_conjugates_equ_laplacian(self, seed):
        g, o = _make_random(seed)
        f = random_orientation_flip(g, seed + 7)
        s = np.diag(f.sign.astype(np.float64))
        before = laplacian(g, o, LaplacianKind.EQU, 0.2).toarray()
        after = laplacian(g, o.apply(f), LaplacianKind.EQU, 0.2).toarray()
        np.testing.assert_allclose(after, s @ before @ s, atol=1e-12)
        inv_before = laplacian(g, o, LaplacianKind.INV, 0.2).toarray()
        inv_after = laplacian(g, o.apply(f), LaplacianKind.INV, 0.2).toarray()
        np.testing.assert_allclose(inv_after, inv_before, atol=1e-12)

    def test_flip_on_signal_commutes_with_operator(self):
        g, o = _make_random(11)
        f = random_orientation_flip(g, 3)
        x = np.random.default_rng(0).normal(size=(g.m, 2))
        lhs = laplacian(g, o.apply(f), LaplacianKind.EQU, 0.2) @ apply_flip(x, f)
        rhs = apply_flip(laplacian(g, o, LaplacianKind.EQU, 0.2) @ x, f)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


# == Normalization and shifts ===============================================

class TestNormalization:
    def test_path_normalized(self):
        g, o = _make_undirected_path()
        lap = normalized_laplacian(g, o, LaplacianKind.EQU, 0.0).toarray()
        np.testing.assert_allclose(lap, [[2 / 3, -1 / 3], [-1 / 3, 2 / 3]])

    def test_normalized_spectrum_bounded(self):
        g, o = _make_random(2)
        lap = normalized_laplacian(g, o, LaplacianKind.EQU, 0.1).toarray()
        eig = np.linalg.eigvalsh(lap)
        assert eig.min() >= -1e-10
        assert eig.max() <= 2.0 + 1e-10

    def test_gcn_shift(self):
        g, o = _make_undirected_path()
        shift = gcn_shift(laplacian(g, o, LaplacianKind.EQU)).toarray()
        np.testing.assert_allclose(shift, [[0, 0.5], [0.5, 0]])

    def test_gcn_shift_needs_square(self):
        with pytest.raises(OperatorError):
            gcn_shift(sp.csr_matrix(np.ones((2, 3))))

    def test_line_graph_laplacian(self):
        g = Graph.from_edges(4, [(0, 1, "U"), (1, 2, "D"), (2, 3, "U")])
        lap = normalized_line_graph_laplacian(g).toarray()
        assert lap[0, 0] == approx(1.0)
        assert lap[0, 1] == approx(-1 / np.sqrt(2))
        assert lap[0, 2] == approx(0.0)


class TestChebyshev:
    def test_recursion(self):
        g, o = _make_undirected_path()
        lap = laplacian(g, o, LaplacianKind.EQU)
        x = np.array([[1.0], [2.0]])
        terms = chebyshev_apply(lap, x, 3)
        np.testing.assert_allclose(terms[0], x)
        np.testing.assert_allclose(terms[1], lap @ x)
        np.testing.assert_allclose(terms[2], 2 * (lap @ (lap @ x)) - x)

    def test_cross_kind_starts_at_zero(self):
        g, o = _make_undirected_path()
        lap = laplacian(g, o, LaplacianKind.INV)
        cross = laplacian(g, o, LaplacianKind.EQU_TO_INV)
        x = np.array([[1.0], [-1.0]])
        terms = chebyshev_apply(lap, x, 3, l_cross=cross)
        np.testing.assert_allclose(terms[0], 0.0)
        np.testing.assert_allclose(terms[1], cross @ x)
        np.testing.assert_allclose(terms[2], 2 * (lap @ (cross @ x)))

    def test_cross_kind_order_two_filter_by_hand(self):
        g, o = _make_undirected_path()
        lap = laplacian(g, o, LaplacianKind.INV)
        cross = laplacian(g, o, LaplacianKind.EQU_TO_INV)
        x = np.array([[1.0], [2.0]])
        terms = chebyshev_apply(lap, x, 3, l_cross=cross)
        # lap = [[2, 1], [1, 2]], cross = [[0, -1], [1, 0]]
        # C1 = 0, C2 = [-2, 1], C3 = 2 * lap @ C2 - 0 = [-6, 0]
        np.testing.assert_allclose(terms[0], [[0.0], [0.0]])
        np.testing.assert_allclose(terms[1], [[-2.0], [1.0]])
        np.testing.assert_allclose(terms[2], [[-6.0], [0.0]])
        theta = (5.0, 0.5, -1.0)
        out = sum(t * c for t, c in zip(theta, terms))
        # starting the recursion from x instead of zero would give [11, 12.5]
        np.testing.assert_allclose(out, [[5.0], [0.5]])

    def test_order_validated(self):
        with pytest.raises(OperatorError):
            chebyshev_apply(sp.identity(2, format="csr"), np.ones((2, 1)), 0)


# == Coordinate dump ========================================================

class TestCoordinates:
    def test_sorted_listing(self):
        g, o = _make_undirected_path()
        coords = to_coordinates(laplacian(g, o, LaplacianKind.EQU))
        assert coords == [(0, 0, 2.0, 0.0), (0, 1, -1.0, 0.0), (1, 0, -1.0, 0.0), (1, 1, 2.0, 0.0)]

    def test_text(self):
        g, o = _make_undirected_path()
        text = dumps_coordinates(laplacian(g, o, LaplacianKind.INV))
        assert text.splitlines()[0] == "0 0 2 0"

    def test_finalize_drops_tiny(self):
        mat = finalize(sp.csr_matrix(np.array([[1e-20, 1.0]])))
        assert mat.nnz == 1
