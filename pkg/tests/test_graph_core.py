"""
Graph topology, orientations, flips, edge permutations and the text format.
"""
import numpy as np
import pytest

from graph_core import (
    DimensionError,
    EdgePermutation,
    Graph,
    GraphError,
    GraphFormatError,
    Orientation,
    OrientationError,
    OrientationFlip,
    apply_edge_permutation,
    apply_flip,
    canonical_orientation,
    disjoint_union,
    dumps_graph,
    line_graph_adjacency,
    line_graph_pattern,
    load_graph,
    loads_graph,
    random_mixed_graph,
    random_orientation,
    random_orientation_flip,
    save_graph,
)


# -- Helpers -----------------------------------------------------------------

def _make_path():
    """0 - 1 -> 2 - 3"""
    return Graph.from_edges(4, [(0, 1, "U"), (1, 2, "D"), (2, 3, "U")])


def _make_triangle():
    """0 -> 1, 1 - 2, 2 -> 0"""
    return Graph.from_edges(3, [(0, 1, "D"), (1, 2, "U"), (2, 0, "D")])


# == Construction ===========================================================

class TestGraphConstruction:
    def test_counts(self):
        g = _make_path()
        assert g.n == 4
        assert g.m == 3
        assert g.num_directed == 1
        assert len(g) == 3

    def test_undirected_edges_are_canonical(self):
        g = Graph.from_edges(3, [(2, 0, "U")])
        assert (int(g.src[0]), int(g.dst[0])) == (0, 2)

    def test_directed_edges_keep_direction(self):
        g = Graph.from_edges(3, [(2, 0, "D")])
        assert (int(g.src[0]), int(g.dst[0])) == (2, 0)

    def test_from_edges_with_orientation_restores_written_order(self):
        g, o = Graph.from_edges_with_orientation(3, [(2, 0, "U"), (0, 1, "U")])
        tail, head = o.endpoints(g)
        assert list(tail) == [2, 0]
        assert list(head) == [0, 1]

    def test_self_loop_rejected(self):
        with pytest.raises(GraphError):
            Graph.from_edges(2, [(1, 1, "U")])

    def test_duplicate_undirected_rejected(self):
        with pytest.raises(GraphError):
            Graph.from_edges(2, [(0, 1, "U"), (1, 0, "U")])

    def test_duplicate_directed_rejected(self):
        with pytest.raises(GraphError):
            Graph.from_edges(2, [(0, 1, "D"), (0, 1, "D")])

    def test_antiparallel_directed_allowed(self):
        g = Graph.from_edges(2, [(0, 1, "D"), (1, 0, "D")])
        assert g.m == 2

    def test_out_of_range(self):
        with pytest.raises(GraphError):
            Graph.from_edges(2, [(0, 2, "U")])

    def test_arrays_are_read_only(self):
        g = _make_path()
        with pytest.raises(ValueError):
            g.src[0] = 3

    def test_empty(self):
        g = Graph.empty(5)
        assert g.m == 0
        assert line_graph_pattern(g).shape == (0, 0)

    def test_disjoint_union_offsets(self):
        g, node_off, edge_off = disjoint_union([_make_path(), _make_triangle()])
        assert g.n == 7
        assert g.m == 6
        assert list(node_off) == [0, 4, 7]
        assert list(edge_off) == [0, 3, 6]
        assert (int(g.src[3]), int(g.dst[3])) == (4, 5)


# == Orientations and flips =================================================

class TestOrientation:
    def test_canonical_is_consistent(self):
        g = _make_triangle()
        assert canonical_orientation(g).is_direction_consistent(g)

    def test_flipping_directed_edge_is_rejected(self):
        g = _make_triangle()
        o = Orientation(np.array([True, False, False]))
        assert not o.is_direction_consistent(g)
        with pytest.raises(OrientationError):
            o.check(g)

    def test_flip_touching_directed_edge_rejected(self):
        g = _make_triangle()
        with pytest.raises(OrientationError):
            OrientationFlip(np.array([-1, 1, 1])).check(g)

    def test_flip_signs_validated(self):
        with pytest.raises(OrientationError):
            OrientationFlip(np.array([1, 0, -1]))

    def test_random_flip_only_touches_undirected(self):
        g = random_mixed_graph(3, n_range=(20, 20), p_edge=0.4)
        for seed in range(10):
            f = random_orientation_flip(g, seed)
            f.check(g)
            assert np.all(f.sign[g.directed] == 1)

    def test_random_orientation_deterministic(self):
        g = random_mixed_graph(5)
        assert random_orientation(g, 11).equals(random_orientation(g, 11))

    def test_between_and_apply(self):
        g = random_mixed_graph(7, n_range=(15, 15), p_edge=0.5)
        a, b = random_orientation(g, 1), random_orientation(g, 2)
        f = OrientationFlip.between(a, b)
        assert a.apply(f).equals(b)

    def test_compose_is_group_product(self):
        f = OrientationFlip(np.array([1, -1, -1]))
        h = OrientationFlip(np.array([-1, -1, 1]))
        assert list(f.compose(h).sign) == [-1, 1, -1]
        assert list(f.compose(f).sign) == [1, 1, 1]

    def test_apply_flip_rows(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        out = apply_flip(x, OrientationFlip(np.array([1, -1, 1])))
        np.testing.assert_array_equal(out, [[1, 2], [-3, -4], [5, 6]])

    def test_apply_flip_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            apply_flip(np.zeros((2, 1)), OrientationFlip.identity(3))


# == Edge permutations ======================================================

class TestEdgePermutation:
    def test_rejects_non_bijection(self):
        with pytest.raises(GraphError):
            EdgePermutation(np.array([0, 0, 1]))

    def test_inverse(self):
        p = EdgePermutation.random(12, 4)
        x = np.arange(12.0)
        np.testing.assert_array_equal(p.inverse().permute_rows(p.permute_rows(x)), x)

    def test_apply_edge_permutation_reindexes_everything(self):
        g = _make_path()
        o = Orientation(np.array([True, False, False]))
        x = np.array([[10.0], [20.0], [30.0]])
        p = EdgePermutation(np.array([2, 0, 1]))
        g2, o2, (x2,) = apply_edge_permutation(g, o, [x], p)
        assert (int(g2.src[0]), int(g2.dst[0])) == (2, 3)
        assert list(o2.flip) == [False, True, False]
        assert list(x2[:, 0]) == [30.0, 10.0, 20.0]

    def test_permutation_size_mismatch(self):
        with pytest.raises(DimensionError):
            apply_edge_permutation(_make_path(), canonical_orientation(_make_path()), [], EdgePermutation.identity(2))


# == Line graph =============================================================

class TestLineGraph:
    def test_path_pattern(self):
        a = line_graph_pattern(_make_path()).toarray()
        np.testing.assert_array_equal(a, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])

    def test_laplacian_rows_sum_to_zero(self):
        g = random_mixed_graph(2, n_range=(12, 12), p_edge=0.5)
        lap = line_graph_adjacency(g)
        np.testing.assert_allclose(np.asarray(lap.sum(axis=1)).ravel(), 0.0)


# == Text format ============================================================

class TestTextFormat:
    def test_round_trip_keeps_orientation(self):
        g, o = loads_graph("3 2\n2 0 U\n0 1 D\n")
        text = dumps_graph(g, o)
        assert text == "3 2\n2 0 U\n0 1 D\n"

    def test_comments_and_blank_lines(self):
        g, _ = loads_graph("# mixed\n2 1\n\n0 1 U  # only edge\n")
        assert g.m == 1

    def test_edge_count_mismatch(self):
        with pytest.raises(GraphFormatError) as err:
            loads_graph("3 2\n0 1 U\n", "g.txt")
        assert err.value.line_no == 1
        assert "g.txt" in str(err.value)

    def test_bad_kind_reports_line(self):
        with pytest.raises(GraphFormatError) as err:
            loads_graph("3 2\n0 1 U\n1 2 X\n")
        assert err.value.line_no == 3

    def test_duplicate_becomes_format_error(self):
        with pytest.raises(GraphFormatError):
            loads_graph("2 2\n0 1 U\n1 0 U\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_graph(tmp_path / "missing.txt")

    def test_file_round_trip(self, tmp_path):
        g, o = loads_graph("4 3\n0 1 U\n2 1 D\n3 2 U\n")
        save_graph(tmp_path / "g.txt", g, o)
        g2, o2 = load_graph(tmp_path / "g.txt")
        assert g2.m == 3
        assert o2.equals(o)


# == Random graphs ==========================================================

class TestRandomMixedGraph:
    def test_seeded(self):
        a, b = random_mixed_graph(9), random_mixed_graph(9)
        assert a.n == b.n
        np.testing.assert_array_equal(a.src, b.src)
        np.testing.assert_array_equal(a.directed, b.directed)

    def test_max_edges(self):
        g = random_mixed_graph(1, n_range=(30, 30), p_edge=0.9, max_edges=40)
        assert g.m == 40

    def test_node_range(self):
        for seed in range(20):
            assert 5 <= random_mixed_graph(seed).n <= 30
