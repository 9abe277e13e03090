import math

import numpy as np
import pytest

from conftest import random_tree_model
from trafficbp import (DataError, FileFormatError, HistoryMatrix, MomentSet,
                       PairwiseModel, ParameterError, RoadGraph,
                       assemble_model, bethe_coupling, bethe_field,
                       build_space_time, calibrate, calibrate_space_time,
                       estimate_moments, exact_moments, gen_graph,
                       invert_moments, read_history, sample_exact,
                       write_history)


class TestHistoryMatrix:
    def test_validation(self):
        with pytest.raises(DataError):
            HistoryMatrix(("a",), np.zeros((0, 1), dtype=np.int8))
        with pytest.raises(DataError):
            HistoryMatrix(("a", "a"), np.zeros((2, 2), dtype=np.int8))
        with pytest.raises(DataError):
            HistoryMatrix(("a",), np.array([[3]], dtype=np.int8))
        with pytest.raises(DataError):
            HistoryMatrix(("a", "b"), np.zeros((2, 3), dtype=np.int8))

    def test_window(self):
        h = HistoryMatrix(("a",), np.array([[0], [1], [0], [1]], dtype=np.int8))
        w = h.window(1, 2)
        assert np.array_equal(w.data[:, 0], [1, 0])
        with pytest.raises(ParameterError):
            h.window(3, 2)


def two_segment_graph():
    return RoadGraph(("a", "b"), (("a", "b"),))


class TestEstimateMoments:
    def test_hand_counted_pair(self):
        # samples (0,0), (0,1), (1,1) with pseudocount 1:
        # counts [1,1,0,1] + 1 -> [2,2,1,2]/7
        g = two_segment_graph()
        hist = HistoryMatrix(("a", "b"), np.array([[0, 0], [0, 1], [1, 1]],
                                                  dtype=np.int8))
        mom = estimate_moments(hist, build_space_time(g, 1), 1.0)
        table = mom.pair_joints[("spatial", "a", "b")]
        assert np.allclose(table, np.array([[2, 2], [1, 2]]) / 7.0, atol=1e-15)
        assert mom.counts[("spatial", "a", "b")] == 3.0

    def test_all_missing_pair_is_uniform(self):
        g = two_segment_graph()
        hist = HistoryMatrix(("a", "b"),
                             np.array([[0, -1], [-1, 1], [-1, -1]], dtype=np.int8))
        mom = estimate_moments(hist, build_space_time(g, 1), 2.0)
        table = mom.pair_joints[("spatial", "a", "b")]
        assert np.allclose(table, 0.25, atol=1e-15)
        assert mom.counts[("spatial", "a", "b")] == 0.0

    def test_pairwise_complete_rule(self):
        g = two_segment_graph()
        hist = HistoryMatrix(("a", "b"),
                             np.array([[1, 1], [1, -1], [-1, 0]], dtype=np.int8))
        mom = estimate_moments(hist, build_space_time(g, 1), 1.0)
        # only row 0 is pairwise complete; singletons use all present cells
        assert mom.counts[("spatial", "a", "b")] == 1.0
        assert mom.counts[("a", "boundary")] == 2.0
        assert mom.counts[("b", "boundary")] == 2.0

    def test_temporal_pooling(self):
        g = RoadGraph(("a",), ())
        hist = HistoryMatrix(("a",), np.array([[0], [1], [1], [-1], [0]],
                                              dtype=np.int8))
        mom = estimate_moments(hist, build_space_time(g, 2), 1.0)
        # lag-1 complete pairs: (0,1), (1,1); rows 3-4 incomplete
        table = mom.pair_joints[("temporal", "a")]
        assert np.allclose(table, np.array([[1, 2], [1, 2]]) / 6.0, atol=1e-15)
        assert mom.counts[("temporal", "a")] == 2.0

    def test_roles_share_singleton_table(self):
        g = RoadGraph(("a",), ())
        hist = HistoryMatrix(("a",), np.array([[0], [1], [1]], dtype=np.int8))
        mom = estimate_moments(hist, build_space_time(g, 4), 1.0)
        assert np.array_equal(mom.singletons[("a", "boundary")],
                              mom.singletons[("a", "interior")])

    def test_independent_sampling_factorizes(self, rng):
        g = two_segment_graph()
        n = 100_000
        data = (rng.random((n, 2)) < np.array([0.3, 0.7])).astype(np.int8)
        hist = HistoryMatrix(("a", "b"), data)
        mom = estimate_moments(hist, build_space_time(g, 1), 1.0)
        table = mom.pair_joints[("spatial", "a", "b")]
        outer = np.outer(mom.singletons[("a", "boundary")],
                         mom.singletons[("b", "boundary")])
        sigma = math.sqrt(0.25 / n)
        assert np.max(np.abs(table - outer)) <= 5 * sigma

    def test_errors(self):
        g = two_segment_graph()
        hist = HistoryMatrix(("a", "zz"), np.zeros((2, 2), dtype=np.int8))
        with pytest.raises(DataError):
            estimate_moments(hist, build_space_time(g, 1), 1.0)
        good = HistoryMatrix(("a", "b"), np.zeros((2, 2), dtype=np.int8))
        with pytest.raises(ParameterError):
            estimate_moments(good, build_space_time(g, 1), 0.0)


class TestBetheInversion:
    def test_independent_pair_gives_zero_coupling(self):
        s_a, s_b = np.array([0.3, 0.7]), np.array([0.8, 0.2])
        assert bethe_coupling(np.outer(s_a, s_b)) == pytest.approx(0.0, abs=1e-15)
        # with the edge term summed, h reduces to the singleton log-odds
        h = bethe_field(s_a, [np.outer(s_a, s_b)], 1)
        assert h == pytest.approx(0.5 * math.log(s_a[0] / s_a[1]), abs=1e-12)

    def test_symmetric_pair_atanh(self):
        for c in (-0.6, 0.2, 0.9):
            table = np.array([[(1 + c) / 4, (1 - c) / 4],
                              [(1 - c) / 4, (1 + c) / 4]])
            assert bethe_coupling(table) == pytest.approx(math.atanh(c), abs=1e-14)
        # cross-check: a two-variable h=0 model has <s s> = tanh J
        m = PairwiseModel.make(2, [(0, 1, 0.7)], [0.0, 0.0])
        table = exact_moments(m).pair_joints[(0, 1)]
        assert bethe_coupling(table) == pytest.approx(0.7, abs=1e-14)

    def test_zero_cell_rejected(self):
        with pytest.raises(DataError):
            bethe_coupling(np.array([[0.5, 0.5], [0.0, 0.0]]))
        with pytest.raises(DataError):
            bethe_field(np.array([1.0, 0.0]), [], 0)

    def test_degree_mismatch(self):
        with pytest.raises(ParameterError):
            bethe_field(np.array([0.5, 0.5]), [], 2)

    def test_tree_round_trip(self, rng):
        # exact moments of a tree reproduce every J and h
        for _ in range(30):
            m = random_tree_model(rng, int(rng.integers(2, 13)))
            mom = exact_moments(m)
            degrees = m.degrees()
            for e in range(m.n_edges):
                i, j = map(int, m.edges[e])
                rec = bethe_coupling(mom.pair_joints[(i, j)])
                assert abs(rec - m.couplings[e]) <= 1e-8
            for v in range(m.n_vars):
                incident = []
                for e in range(m.n_edges):
                    i, j = map(int, m.edges[e])
                    if i == v:
                        incident.append(mom.pair_joints[(i, j)])
                    elif j == v:
                        incident.append(mom.pair_joints[(i, j)].T)
                rec = bethe_field(mom.singletons[v], incident, int(degrees[v]))
                assert abs(rec - m.fields[v]) <= 1e-8


def exact_moments_as_classes(graph, model):
    """Repackage vid-keyed exact moments into calibration class keys (T=1)."""
    mom = exact_moments(model)
    pos = graph.positions()
    singletons = {}
    for seg in graph.segments:
        singletons[(seg, "boundary")] = mom.singletons[pos[seg]]
    pair_joints = {}
    for a, b in graph.adjacency:
        pair_joints[("spatial", a, b)] = mom.pair_joints[(pos[a], pos[b])]
    return MomentSet(singletons=singletons, pair_joints=pair_joints,
                     counts={}, pseudocount=0.0)


class TestInvertMoments:
    def test_graph_level_round_trip(self, rng):
        # a segment tree at T=1, exact class moments -> recovered parameters
        for trial in range(5):
            n = 7
            segs = tuple(f"s{i}" for i in range(n))
            pairs = []
            for child in range(1, n):
                parent = int(rng.integers(0, child))
                pairs.append((segs[parent], segs[child]))
            graph = RoadGraph(segs, tuple(pairs))
            index = build_space_time(graph, 1)
            spatial = {p: float(rng.uniform(-1.2, 1.2)) for p in graph.adjacency}
            fields = {(s, 0): float(rng.uniform(-1, 1)) for s in segs}
            model = assemble_model(index, spatial, {}, fields)
            st = invert_moments(exact_moments_as_classes(graph, model), index)
            for p in graph.adjacency:
                assert abs(st.spatial_couplings[p] - spatial[p]) <= 1e-8
            for s in segs:
                assert abs(st.fields[(s, 0)] - fields[(s, 0)]) <= 1e-8


class TestCalibrate:
    def test_fair_coin_history_near_zero(self, rng):
        g = gen_graph("ring", n=4)
        n = 100_000
        data = (rng.random((n, 4)) < 0.5).astype(np.int8)
        hist = HistoryMatrix(g.segments, data)
        index = build_space_time(g, 1)
        st = calibrate_space_time(hist, index, 1.0)
        bound = 5 * math.sqrt(1.0 / n)  # coarse 5-sigma scale for atanh-type stats
        assert all(abs(j) <= bound for j in st.spatial_couplings.values())
        assert all(abs(h) <= bound for h in st.fields.values())

    def test_recovers_tree_model_from_samples(self, rng):
        n_seg = 10
        segs = tuple(f"s{i}" for i in range(n_seg))
        pairs = tuple((segs[int(rng.integers(0, i))], segs[i])
                      for i in range(1, n_seg))
        graph = RoadGraph(segs, pairs)
        index = build_space_time(graph, 1)
        spatial = {p: float(rng.uniform(-1.0, 1.0)) for p in graph.adjacency}
        fields = {(s, 0): float(rng.uniform(-0.5, 0.5)) for s in segs}
        model = assemble_model(index, spatial, {}, fields)
        hist = sample_exact(model, 100_000, seed=17, segments=segs)
        st = calibrate_space_time(hist, index, 1.0)
        for p in graph.adjacency:
            assert abs(st.spatial_couplings[p] - spatial[p]) <= 0.05

    def test_large_pseudocount_flattens(self):
        g = two_segment_graph()
        hist = HistoryMatrix(("a", "b"), np.array([[1, 1], [1, 1], [0, 1]],
                                                  dtype=np.int8))
        st = calibrate_space_time(hist, build_space_time(g, 2), 1e6)
        assert all(abs(j) <= 1e-3 for j in st.spatial_couplings.values())
        assert all(abs(j) <= 1e-3 for j in st.temporal_couplings.values())
        assert all(abs(h) <= 1e-3 for h in st.fields.values())

    def test_relabeling_symmetry(self, rng):
        n = 60
        segs = ("a", "b", "c", "d")
        pairs = (("a", "b"), ("b", "c"), ("c", "d"))
        data = (rng.random((n, 4)) < 0.4).astype(np.int8)
        g1 = RoadGraph(segs, pairs)
        hist1 = HistoryMatrix(segs, data)
        # permuted segment order, same underlying records and adjacency
        perm = (2, 0, 3, 1)
        segs2 = tuple(segs[k] for k in perm)
        g2 = RoadGraph(segs2, pairs)
        hist2 = HistoryMatrix(segs2, data[:, list(perm)])
        st1 = calibrate_space_time(hist1, build_space_time(g1, 2), 1.0)
        st2 = calibrate_space_time(hist2, build_space_time(g2, 2), 1.0)
        for (a, b), j in st1.spatial_couplings.items():
            key = (a, b) if (a, b) in st2.spatial_couplings else (b, a)
            assert st2.spatial_couplings[key] == pytest.approx(j, abs=1e-12)
        for key, h in st1.fields.items():
            assert st2.fields[key] == pytest.approx(h, abs=1e-12)
        for s, j in st1.temporal_couplings.items():
            assert st2.temporal_couplings[s] == pytest.approx(j, abs=1e-12)

    def test_calibrate_returns_assembled_model(self):
        g = two_segment_graph()
        hist = HistoryMatrix(("a", "b"), np.array([[1, 0], [0, 1], [1, 1], [0, 0]],
                                                  dtype=np.int8))
        index = build_space_time(g, 2)
        model = calibrate(hist, index, 1.0)
        assert model.n_vars == 4
        assert model.n_edges == 1 * 2 + 2 * 1
        assert np.all(np.isfinite(model.couplings))
        assert np.all(np.isfinite(model.fields))


class TestHistoryFile:
    def test_round_trip_with_missing(self, tmp_path):
        hist = HistoryMatrix(("a", "b"),
                             np.array([[1, -1], [0, 1], [-1, -1]], dtype=np.int8))
        p1, p2 = tmp_path / "h1.csv", tmp_path / "h2.csv"
        write_history(p1, hist)
        loaded = read_history(p1)
        assert loaded.segments == hist.segments
        assert np.array_equal(loaded.data, hist.data)
        write_history(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()

    def test_malformed_cell_names_location(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("t,a,b\n0,1,0\n1,x,1\n")
        with pytest.raises(FileFormatError) as err:
            read_history(p)
        assert err.value.line == 3 and err.value.field == "a"

    def test_header_only_rejected(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("t,a,b\n")
        with pytest.raises(FileFormatError):
            read_history(p)
