import json

import numpy as np
import pytest

from trafficbp import (FileFormatError, ParameterError, RoadGraph,
                       build_space_time, gen_graph, load_graph, save_graph,
                       validate_graph)


def pair_set(graph):
    return {frozenset(p) for p in graph.adjacency}


class TestGenGraph:
    def test_ring4(self):
        g = gen_graph("ring", n=4)
        assert g.segments == ("s0", "s1", "s2", "s3")
        assert pair_set(g) == {frozenset(p) for p in
                               [("s0", "s1"), ("s1", "s2"), ("s2", "s3"), ("s3", "s0")]}
        assert len(g.adjacency) == 4

    def test_grid_2x3(self):
        g = gen_graph("grid", rows=2, cols=3)
        assert g.n_segments == 6
        assert len(g.adjacency) == 7  # r(c-1) + c(r-1)

    def test_grid_edge_count_formula(self):
        for rows, cols in [(2, 2), (3, 4), (5, 2), (4, 4)]:
            g = gen_graph("grid", rows=rows, cols=cols)
            assert len(g.adjacency) == rows * (cols - 1) + cols * (rows - 1)

    def test_random_regular_degree(self):
        g = gen_graph("random-regular", n=10, degree=3, seed=7)
        nbrs = g.neighbor_map()
        assert sorted(len(v) for v in nbrs.values()) == [3] * 10

    def test_random_regular_uniform_degree_sweep(self):
        # stub pairing with rejection is only practical for sparse degrees
        for n, degree, seed in [(8, 3, 0), (12, 4, 1), (20, 3, 5), (14, 4, 2)]:
            g = gen_graph("random-regular", n=n, degree=degree, seed=seed)
            assert all(len(v) == degree for v in g.neighbor_map().values())
            assert not [d for d in validate_graph(g) if d.severity == "error"]

    def test_deterministic_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_graph(a, gen_graph("random-regular", n=16, degree=3, seed=3))
        save_graph(b, gen_graph("random-regular", n=16, degree=3, seed=3))
        assert a.read_bytes() == b.read_bytes()

    def test_different_seed_differs(self):
        g1 = gen_graph("random-regular", n=16, degree=3, seed=3)
        g2 = gen_graph("random-regular", n=16, degree=3, seed=4)
        assert pair_set(g1) != pair_set(g2)

    def test_infeasible_parameters(self):
        with pytest.raises(ParameterError):
            gen_graph("random-regular", n=9, degree=3)  # odd n*degree
        with pytest.raises(ParameterError):
            gen_graph("random-regular", n=4, degree=4)  # degree >= n
        with pytest.raises(ParameterError):
            gen_graph("random-regular", n=6, degree=1)  # cannot be connected
        with pytest.raises(ParameterError):
            gen_graph("ring", n=2)
        with pytest.raises(ParameterError):
            gen_graph("grid", rows=1, cols=3)
        with pytest.raises(ParameterError):
            gen_graph("hexagon", n=5)


class TestSpaceTimeIndex:
    def test_ring4_three_layers(self):
        idx = build_space_time(gen_graph("ring", n=4), 3)
        assert idx.n_variables == 12
        assert len(idx.spatial_edges) == 12
        assert len(idx.temporal_edges) == 8
        assert idx.n_edges == 20

    def test_single_layer_degeneracy(self):
        g = gen_graph("random-regular", n=10, degree=3, seed=1)
        idx = build_space_time(g, 1)
        assert idx.n_variables == 10
        assert idx.n_edges == len(g.adjacency)
        assert idx.temporal_edges == []

    def test_grid_2x3_two_layers(self):
        idx = build_space_time(gen_graph("grid", rows=2, cols=3), 2)
        assert idx.n_variables == 12
        assert idx.n_edges == 7 * 2 + 6 * 1

    def test_counting_invariant_sweep(self, rng):
        for _ in range(25):
            n = int(rng.integers(3, 9))
            g = gen_graph("ring", n=n)
            layers = int(rng.integers(1, 6))
            idx = build_space_time(g, layers)
            assert idx.n_variables == n * layers
            assert idx.n_edges == len(g.adjacency) * layers + n * (layers - 1)
            edges = idx.all_edges()
            assert len(set(edges)) == len(edges)
            assert all(a != b for a, b in edges)

    def test_layer_major_ids(self):
        g = gen_graph("ring", n=5)
        idx = build_space_time(g, 3)
        for t in range(3):
            for k, seg in enumerate(g.segments):
                assert idx.variable(seg, t) == t * 5 + k
                assert idx.cell(t * 5 + k) == (seg, t)

    def test_zero_layers_rejected(self):
        with pytest.raises(ParameterError):
            build_space_time(gen_graph("ring", n=4), 0)

    def test_roles_and_degrees(self):
        g = gen_graph("ring", n=4)
        idx = build_space_time(g, 4)
        assert [idx.layer_role(t) for t in range(4)] == \
            ["boundary", "interior", "interior", "boundary"]
        assert idx.degree("s0", 0) == 3   # 2 spatial + 1 temporal
        assert idx.degree("s0", 1) == 4
        assert build_space_time(g, 1).degree("s0", 0) == 2


class TestValidateGraph:
    def test_valid_ring_empty(self):
        assert validate_graph(gen_graph("ring", n=5)) == []

    def test_self_pair(self):
        g = RoadGraph(("a", "b"), (("a", "a"),))
        codes = [d.code for d in validate_graph(g)]
        assert "self-pair" in codes

    def test_dangling_reference(self):
        g = RoadGraph(("a", "b"), (("a", "zz"),))
        codes = [d.code for d in validate_graph(g)]
        assert "dangling-reference" in codes

    def test_duplicate_id_and_pair(self):
        g = RoadGraph(("a", "a", "b"), (("a", "b"), ("b", "a")))
        codes = [d.code for d in validate_graph(g)]
        assert "duplicate-id" in codes and "duplicate-pair" in codes

    def test_disconnected_is_warning_only(self):
        g = RoadGraph(("a", "b", "c", "d"), (("a", "b"), ("c", "d")))
        diags = validate_graph(g)
        assert [d.code for d in diags] == ["disconnected"]
        assert diags[0].severity == "warning"

    def test_bad_charset(self):
        g = RoadGraph(("a,b",), ())
        assert any(d.code == "invalid-id" for d in validate_graph(g))


class TestGraphFile:
    def test_round_trip_identity(self, tmp_path):
        g = gen_graph("grid", rows=3, cols=3)
        p1, p2 = tmp_path / "g1.json", tmp_path / "g2.json"
        save_graph(p1, g)
        save_graph(p2, load_graph(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_unknown_keys_rejected(self, tmp_path):
        p = tmp_path / "g.json"
        p.write_text(json.dumps({"segments": ["a"], "adjacency": [], "extra": 1}))
        with pytest.raises(FileFormatError):
            load_graph(p)

    def test_malformed_json_names_line(self, tmp_path):
        p = tmp_path / "g.json"
        p.write_text('{"segments": ["a"],\n  "adjacency": }')
        with pytest.raises(FileFormatError) as err:
            load_graph(p)
        assert err.value.line == 2

    def test_invalid_content_rejected(self, tmp_path):
        p = tmp_path / "g.json"
        p.write_text(json.dumps({"segments": ["a", "b"], "adjacency": [["a", "a"]]}))
        with pytest.raises(FileFormatError):
            load_graph(p)
        p.write_text(json.dumps({"segments": ["a b"], "adjacency": []}))
        with pytest.raises(FileFormatError):
            load_graph(p)
