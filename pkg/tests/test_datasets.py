"""
Synthetic generators, the DC circuit solver, TNTP loading, task variants,
splits and dataset storage.
"""
import networkx as nx
import numpy as np
import pytest
from pytest import approx

from config import make_rng
from datasets import (
    Circuit,
    CircuitComponent,
    ComponentKind,
    DatasetError,
    GenerationError,
    SingularCircuitError,
    Task,
    TaskKind,
    TNTPFormatError,
    build_dataset,
    circuit_sample,
    directed_cycles,
    gen_circuits,
    gen_ld_cycles,
    gen_rw_comp,
    is_consistent,
    kcl_residual,
    ld_cycles_sample,
    load_dataset,
    load_tntp,
    make_task,
    random_circuit,
    random_walk_edges,
    read_tntp_flows,
    read_tntp_network,
    rw_comp_sample,
    save_dataset,
    solve_circuit,
    solve_circuit_enumerate,
    solve_dc,
    split_edges,
    split_indices,
    transition_probabilities,
    tri_flow_sample,
    write_synthetic_tntp,
)
from graph_core import Graph, canonical_orientation, random_orientation_flip


# -- Helpers -----------------------------------------------------------------

def _make_loop_circuit(diode_forward=True):
    """1 V source 0->1, 100 ohm on 1-2, diode between 2 and 0"""
    diode = (2, 0, "D") if diode_forward else (0, 2, "D")
    g = Graph.from_edges(3, [(0, 1, "U"), (1, 2, "U"), diode])
    components = [
        CircuitComponent(ComponentKind.SOURCE, source_voltage=1.0),
        CircuitComponent(ComponentKind.RESISTOR, resistance=100.0),
        CircuitComponent(ComponentKind.DIODE),
    ]
    return Circuit(g, canonical_orientation(g), components)


_NET = """<NUMBER OF ZONES> 1
<NUMBER OF NODES> 3
<FIRST THRU NODE> 2
<NUMBER OF LINKS> 3
<END OF METADATA>

~ Init node  Term node  Capacity  Length  FFT  B  Power  Speed  Toll  Type ;
1 2 100 10 1 0.15 4 0 0 1 ;
2 1 300 20 3 0.15 4 0 0 1 ;
2 3 200 30 2 0.15 4 0 0 1 ;
"""

_FLOW = """From To Volume Cost
1 2 50 1
2 1 20 1
2 3 10 1
"""


def _write_tntp(tmp_path, net=_NET, flow=_FLOW):
    net_path, flow_path = tmp_path / "tiny_net.tntp", tmp_path / "tiny_flow.tntp"
    net_path.write_text(net)
    flow_path.write_text(flow)
    return net_path, flow_path


# == RW Comp ================================================================

class TestRWComp:
    def test_transition_rows_sum_to_one(self):
        g = Graph.from_edges(3, [(0, 1, "D"), (0, 2, "D"), (1, 2, "D")])
        probs = transition_probabilities(g, np.array([1.0, 3.0, 2.0]))
        np.testing.assert_allclose(probs, [0.25, 0.75, 1.0])

    def test_walk_stops_at_sink(self):
        g = Graph.from_edges(3, [(0, 1, "D"), (1, 2, "D")])
        walk = random_walk_edges(g, np.ones(2), 0, 100, make_rng(0))
        assert walk == [0, 1]

    def test_sample_structure(self):
        s = rw_comp_sample(make_rng(3))
        assert s.task is Task.BINARY
        assert s.graph.num_directed == s.m
        assert s.x_equ.shape == (s.m, 0)
        revealed = s.x_inv[:, 0].astype(bool)
        np.testing.assert_array_equal(s.mask, ~revealed)
        assert np.all(s.y[revealed, 0] == 0)

    def test_reveal_count(self):
        s = rw_comp_sample(make_rng(4))
        assert int(s.x_inv[:, 0].sum()) <= s.meta["revealed_transitions"]

    def test_threads_do_not_change_output(self):
        a = gen_rw_comp(4, seed=2, threads=1)
        b = gen_rw_comp(4, seed=2, threads=3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.graph.src, y.graph.src)
            np.testing.assert_array_equal(x.y, y.y)


# == LD Cycles ==============================================================

class TestLDCycles:
    @pytest.mark.parametrize("seed", range(5))
    def test_planted_cycle_is_labeled(self, seed):
        s = ld_cycles_sample(make_rng(seed))
        c = s.meta["cycle_size"]
        assert c in (6, 7, 8)
        assert s.graph.n == 2 * c
        labeled = s.y[:, 0].astype(bool)
        assert labeled.sum() == c
        assert np.all(s.graph.directed[labeled])

    @pytest.mark.parametrize("seed", range(5))
    def test_longest_directed_cycle_is_unique(self, seed):
        s = ld_cycles_sample(make_rng(seed))
        lengths = [len(cyc) for cyc in directed_cycles(s.graph)]
        assert max(lengths) == s.meta["cycle_size"]
        assert lengths.count(s.meta["cycle_size"]) == 1

    def test_labels_form_the_cycle(self):
        s = ld_cycles_sample(make_rng(11))
        labeled = np.flatnonzero(s.y[:, 0])
        sub = nx.DiGraph(list(zip(s.graph.src[labeled].tolist(), s.graph.dst[labeled].tolist())))
        cycles = list(nx.simple_cycles(sub))
        assert len(cycles) == 1 and len(cycles[0]) == s.meta["cycle_size"]

    def test_seeded(self):
        a, b = gen_ld_cycles(2, seed=5), gen_ld_cycles(2, seed=5)
        np.testing.assert_array_equal(a[1].y, b[1].y)


# == Tri-Flow ===============================================================

class TestTriFlow:
    @pytest.fixture(scope="class")
    def sample(self):
        return tri_flow_sample(make_rng(0))

    def test_sizes(self, sample):
        assert sample.graph.n == 300
        assert sample.m == 400
        assert list(np.bincount(sample.meta["triangle_type"])[1:]) == [50, 25, 25]

    def test_no_triangles_beyond_planted(self, sample):
        ug = nx.Graph(list(zip(sample.graph.src.tolist(), sample.graph.dst.tolist())))
        assert sum(nx.triangles(ug).values()) // 3 == 100

    def test_circulating_flow_on_type_one(self, sample):
        tri = sample.meta["triangles"]
        sign = sample.meta["traversal_sign"]
        mag = sample.meta["flow_magnitude"]
        for t in np.flatnonzero(sample.meta["triangle_type"] == 1):
            along = sample.y[tri[t], 0] * sign[t]
            np.testing.assert_allclose(along, mag[t])

    def test_zero_flow_elsewhere(self, sample):
        tri = sample.meta["triangles"]
        on_type_one = np.zeros(sample.m, dtype=bool)
        on_type_one[tri[sample.meta["triangle_type"] == 1].ravel()] = True
        assert np.all(sample.y[~on_type_one, 0] == 0)

    def test_type_one_and_two_are_monochrome(self, sample):
        colors = sample.x_inv.argmax(axis=1)
        tri = sample.meta["triangles"]
        for t, kind in enumerate(sample.meta["triangle_type"]):
            distinct = len(set(colors[tri[t]].tolist()))
            assert distinct == 1 if kind in (1, 2) else distinct > 1

    def test_type_one_has_a_directed_edge(self, sample):
        tri = sample.meta["triangles"]
        for t in np.flatnonzero(sample.meta["triangle_type"] == 1):
            assert sample.graph.directed[tri[t]].any()

    def test_reoriented_flips_targets(self, sample):
        f = random_orientation_flip(sample.graph, 4)
        other = sample.reoriented(f)
        np.testing.assert_allclose(other.y[:, 0], sample.y[:, 0] * f.sign)
        np.testing.assert_allclose(other.x_inv, sample.x_inv)


# == Circuits ===============================================================

class TestCircuitSolver:
    def test_forward_diode_conducts(self):
        sol = solve_circuit(_make_loop_circuit(diode_forward=True))
        np.testing.assert_allclose(sol.currents, [0.01, 0.01, 0.01])
        assert sol.potentials[1] == approx(1.0)

    def test_reverse_diode_blocks(self):
        circuit = _make_loop_circuit(diode_forward=False)
        sol = solve_circuit(circuit)
        np.testing.assert_allclose(sol.currents, 0.0, atol=1e-15)
        assert not sol.diode_on[0]
        assert is_consistent(circuit, sol)

    def test_enumeration_agrees(self):
        for forward in (True, False):
            circuit = _make_loop_circuit(forward)
            np.testing.assert_allclose(solve_circuit(circuit).currents, solve_circuit_enumerate(circuit).currents)

    def test_singular_start_state_still_solved(self):
        # all diodes on shorts the source; only 2->1 off / 2->0 on is consistent
        g = Graph.from_edges(3, [(0, 1, "U"), (2, 1, "D"), (2, 0, "D")])
        components = [
            CircuitComponent(ComponentKind.SOURCE, source_voltage=1.0),
            CircuitComponent(ComponentKind.DIODE),
            CircuitComponent(ComponentKind.DIODE),
        ]
        circuit = Circuit(g, canonical_orientation(g), components)
        with pytest.raises(SingularCircuitError):
            solve_dc(circuit, np.ones(2, dtype=bool))
        sol = solve_circuit(circuit)
        assert is_consistent(circuit, sol)
        assert list(sol.diode_on) == [False, True]
        np.testing.assert_allclose(sol.currents, 0.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(100))
    def test_random_circuits_match_oracle(self, seed):
        circuit = random_circuit(make_rng(seed))
        try:
            oracle = solve_circuit_enumerate(circuit)
        except SingularCircuitError:
            try:
                sol = solve_circuit(circuit)
            except SingularCircuitError:
                return
            # only reachable when several consistent states disagree on currents
            assert is_consistent(circuit, sol)
            return
        sol = solve_circuit(circuit)
        assert is_consistent(circuit, sol)
        np.testing.assert_allclose(sol.currents, oracle.currents, rtol=1e-7, atol=1e-12)
        assert kcl_residual(circuit, sol.currents) < 1e-9

    def test_resistance_range_validated(self):
        with pytest.raises(GenerationError):
            CircuitComponent(ComponentKind.RESISTOR, resistance=50.0)

    def test_one_source_required(self):
        g = Graph.from_edges(2, [(0, 1, "U")])
        with pytest.raises(GenerationError):
            Circuit(g, canonical_orientation(g), [CircuitComponent(ComponentKind.RESISTOR, resistance=200.0)])

    def test_diodes_must_be_directed(self):
        g = Graph.from_edges(3, [(0, 1, "U"), (1, 2, "U"), (2, 0, "U")])
        components = [
            CircuitComponent(ComponentKind.SOURCE, source_voltage=1.0),
            CircuitComponent(ComponentKind.RESISTOR, resistance=200.0),
            CircuitComponent(ComponentKind.DIODE),
        ]
        with pytest.raises(GenerationError):
            Circuit(g, canonical_orientation(g), components)


class TestCircuitDataset:
    def test_sample_features(self):
        s = circuit_sample(make_rng(1))
        assert 8 <= s.graph.n <= 11
        assert s.x_inv.shape == (s.m, 4)
        assert s.x_equ[:, 0].tolist().count(0.0) == s.m - 1
        np.testing.assert_array_equal(s.graph.directed, s.meta["diode"])

    def test_targets_scale_with_voltage(self):
        s = circuit_sample(make_rng(2))
        np.testing.assert_allclose(s.y[:, 0] * abs(s.meta["source_voltage"]), s.meta["raw_currents"])

    def test_normalization_uses_training_graphs(self):
        samples = gen_circuits(12, seed=0, train_idx=list(range(6)))
        train_y = np.concatenate([s.y.ravel() for s in samples[:6]])
        assert train_y.std() == approx(1.0)
        resist = np.concatenate([s.x_inv[s.meta["resistor"], 3] for s in samples[:6]])
        assert resist.mean() == approx(0.0, abs=1e-9)
        assert resist.std() == approx(1.0)


# == TNTP ===================================================================

class TestTNTP:
    def test_tiny_network(self, tmp_path):
        s = load_tntp(*_write_tntp(tmp_path))
        assert s.m == 2
        assert s.graph.num_directed == 1
        np.testing.assert_allclose(s.y[:, 0], [1.0, 1 / 3])
        assert s.x_inv.shape == (2, 8)
        np.testing.assert_array_equal(s.x_inv[:, 7], [1.0, 0.0])
        assert s.meta["flow_scale"] == approx(30.0)
        assert s.meta["zones"] == 1

    def test_flow_header_skipped(self, tmp_path):
        _, flow_path = _write_tntp(tmp_path)
        assert read_tntp_flows(flow_path)[(2, 1)] == approx(20.0)

    def test_missing_end_of_metadata(self, tmp_path):
        net_path, _ = _write_tntp(tmp_path, net="<NUMBER OF NODES> 3\n1 2 1 1 1 1 1 1 1 1 ;\n")
        with pytest.raises(TNTPFormatError):
            read_tntp_network(net_path)

    def test_node_out_of_range_reports_line(self, tmp_path):
        net_path, _ = _write_tntp(tmp_path, net=_NET.replace("2 3 200", "2 9 200"))
        with pytest.raises(TNTPFormatError) as err:
            read_tntp_network(net_path)
        assert err.value.line_no == 10

    def test_missing_flow(self, tmp_path):
        with pytest.raises(TNTPFormatError):
            load_tntp(*_write_tntp(tmp_path, flow="From To Volume Cost\n1 2 50 1\n2 1 20 1\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_tntp(tmp_path / "nope_net.tntp", tmp_path / "nope_flow.tntp")

    def test_fixture_counts(self, tmp_path):
        s = load_tntp(*write_synthetic_tntp(tmp_path, seed=0))
        assert s.graph.n == 416
        assert s.m == 634
        assert s.graph.num_directed == 354
        assert np.abs(s.y).max() == approx(1.0)

    def test_flow_range(self, tmp_path):
        s = load_tntp(*write_synthetic_tntp(tmp_path, seed=0))
        y = s.y[:, 0]
        directed = s.graph.directed
        # one-way volumes land in [0, 1]; merged two-way flows are signed net flows
        assert y[directed].min() >= 0.0
        assert y.max() <= 1.0
        assert y.min() >= -1.0
        assert (y[~directed] < 0).any()
        flipped = s.reoriented(random_orientation_flip(s.graph, 3))
        np.testing.assert_allclose(np.abs(flipped.y), np.abs(s.y))

    def test_terminal_edges_forced_into_train(self, tmp_path):
        s = load_tntp(*write_synthetic_tntp(tmp_path, seed=1))
        split = split_edges(s, (0.8, 0.1, 0.1), seed=0)
        assert np.all(split.edge_split[s.meta["force_train"]] == 0)


# == Tasks, splits and storage ==============================================

class TestTasks:
    def test_simulate_keeps_features(self):
        s = circuit_sample(make_rng(0))
        out = make_task(s, TaskKind.SIMULATE, seed=0)
        assert out.x_equ.shape == s.x_equ.shape

    def test_denoise_column_within_noise(self):
        s = circuit_sample(make_rng(0))
        out = make_task(s, "denoise", seed=0)
        sigma = out.meta["noise_sigma"]
        assert out.x_equ.shape[1] == s.x_equ.shape[1] + 1
        assert np.all(np.abs(out.x_equ[:, -1] - s.y[:, 0]) <= sigma + 1e-12)

    def test_interpolate_hides_revealed_edges(self):
        s = tri_flow_sample(make_rng(1))
        out = make_task(s, "interpolate", seed=0)
        revealed = out.meta["revealed"]
        assert revealed.sum() == 40
        np.testing.assert_allclose(out.x_equ[revealed, -1], s.y[revealed, 0])
        assert not np.any(out.mask[revealed])

    def test_binary_rejected(self):
        with pytest.raises(DatasetError):
            make_task(rw_comp_sample(make_rng(0)), "denoise", seed=0)


class TestSplitsAndStorage:
    def test_split_partition(self):
        parts = split_indices(100, (0.7, 0.1, 0.2), seed=3)
        assert [len(parts[k]) for k in ("train", "val", "test")] == [70, 10, 20]
        assert sorted(parts["train"] + parts["val"] + parts["test"]) == list(range(100))
        assert split_indices(100, (0.7, 0.1, 0.2), seed=3) == parts

    def test_unknown_dataset(self):
        with pytest.raises(DatasetError):
            build_dataset("mnist")

    def test_traffic_needs_files(self):
        with pytest.raises(DatasetError):
            build_dataset("traffic")

    def test_fixture_dataset_is_transductive(self, tmp_path):
        ds = build_dataset("tntp_fixture", fixture_dir=tmp_path)
        assert ds.transductive
        assert ds.splits == {"train": [0], "val": [0], "test": [0]}
        assert set(np.unique(ds.samples[0].edge_split)) <= {0, 1, 2}

    def test_save_load_round_trip(self, tmp_path):
        ds = build_dataset("circuits", seed=1, num_graphs=6)
        save_dataset(ds, tmp_path / "circuits")
        loaded = load_dataset(tmp_path / "circuits")
        assert loaded.name == "circuits"
        assert loaded.splits == ds.splits
        for a, b in zip(ds.samples, loaded.samples):
            np.testing.assert_array_equal(a.graph.src, b.graph.src)
            np.testing.assert_array_equal(a.orientation.flip, b.orientation.flip)
            np.testing.assert_allclose(a.x_inv, b.x_inv)
            np.testing.assert_allclose(a.y, b.y)
            np.testing.assert_array_equal(a.meta["diode"], b.meta["diode"])
            assert b.task is Task.REGRESSION

    def test_load_missing(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path)
