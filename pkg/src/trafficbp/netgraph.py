"""Road-network graphs and the space-time variable index.

A road segment is a variable-to-be; two segments are adjacent when they
share an intersection. ``SpaceTimeIndex`` replicates the segment graph
over T time layers and assigns each (segment, layer) cell a dense
variable id, layer-major: ``vid = layer * N + segment_position``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import Diagnostic, FileFormatError, ParameterError
from .rng import GRAPH, substream

# Segment ids must stay CSV-safe: no quoting is ever applied.
SEGMENT_ID_PATTERN = re.compile(r"^[A-Za-z0-9_-]+$")

_MAX_REGULAR_ATTEMPTS = 1000


@dataclass(frozen=True)
class RoadGraph:
    """Segments plus symmetric shared-intersection adjacency.

    The container itself is permissive; use :func:`validate_graph` for a
    diagnostic report. Graphs produced by :func:`gen_graph` and
    :func:`load_graph` always satisfy the invariants.
    """

    segments: tuple[str, ...]
    adjacency: tuple[tuple[str, str], ...]

    @property
    def n_segments(self):
        return len(self.segments)

    def positions(self):
        """Segment id -> position in the segment order."""
        return {s: k for k, s in enumerate(self.segments)}

    def neighbor_map(self):
        """Segment id -> sorted tuple of adjacent segment ids."""
        nbrs = {s: set() for s in self.segments}
        for a, b in self.adjacency:
            if a in nbrs and b in nbrs and a != b:
                nbrs[a].add(b)
                nbrs[b].add(a)
        pos = self.positions()
        return {s: tuple(sorted(v, key=pos.__getitem__)) for s, v in nbrs.items()}


def validate_graph(graph: RoadGraph) -> list[Diagnostic]:
    """Report structural problems; connectivity is a warning, not an error."""
    out = []
    seen = set()
    for s in graph.segments:
        if s in seen:
            out.append(Diagnostic("duplicate-id", "error", f"segment {s!r} declared twice"))
        seen.add(s)
        if not SEGMENT_ID_PATTERN.match(s):
            out.append(Diagnostic("invalid-id", "error",
                                  f"segment id {s!r} outside [A-Za-z0-9_-]"))
    pairs = set()
    for a, b in graph.adjacency:
        if a == b:
            out.append(Diagnostic("self-pair", "error", f"segment {a!r} paired with itself"))
            continue
        for s in (a, b):
            if s not in seen:
                out.append(Diagnostic("dangling-reference", "error",
                                      f"adjacency references unknown segment {s!r}"))
        key = (a, b) if a <= b else (b, a)
        if key in pairs:
            out.append(Diagnostic("duplicate-pair", "error",
                                  f"adjacency pair {key} declared twice"))
        pairs.add(key)
    if not any(d.severity == "error" for d in out) and graph.n_segments > 0:
        if not _connected(graph):
            out.append(Diagnostic("disconnected", "warning", "graph is not connected"))
    return out


def _connected(graph):
    nbrs = graph.neighbor_map()
    stack = [graph.segments[0]]
    seen = {graph.segments[0]}
    while stack:
        for nxt in nbrs[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == graph.n_segments


def _require_valid(graph):
    errors = [d for d in validate_graph(graph) if d.severity == "error"]
    if errors:
        raise ParameterError("invalid graph: " + "; ".join(d.message for d in errors))


def gen_graph(kind, n=None, rows=None, cols=None, degree=None, seed=0) -> RoadGraph:
    """Generate a test network: ring, grid (rows x cols) or random-regular.

    Deterministic given the arguments; random-regular uses stub pairing
    with rejection of self/multi-edges and of disconnected outcomes,
    retrying with derived sub-seeds.
    """
    if kind == "ring":
        if n is None or n < 3:
            raise ParameterError("ring needs n >= 3")
        segs = tuple(f"s{i}" for i in range(n))
        adj = tuple((segs[i], segs[(i + 1) % n]) for i in range(n))
        return RoadGraph(segs, _canonical_pairs(segs, adj))
    if kind == "grid":
        if rows is None or cols is None or rows < 2 or cols < 2:
            raise ParameterError("grid needs rows >= 2 and cols >= 2")
        segs = tuple(f"r{i}c{j}" for i in range(rows) for j in range(cols))
        adj = []
        for i in range(rows):
            for j in range(cols):
                if j + 1 < cols:
                    adj.append((f"r{i}c{j}", f"r{i}c{j + 1}"))
                if i + 1 < rows:
                    adj.append((f"r{i}c{j}", f"r{i + 1}c{j}"))
        return RoadGraph(segs, _canonical_pairs(segs, adj))
    if kind == "random-regular":
        return _gen_random_regular(n, degree, seed)
    raise ParameterError(f"unknown graph kind {kind!r}")


def _canonical_pairs(segments, pairs):
    pos = {s: k for k, s in enumerate(segments)}
    norm = {tuple(sorted(p, key=pos.__getitem__)) for p in pairs}
    return tuple(sorted(norm, key=lambda p: (pos[p[0]], pos[p[1]])))


def _gen_random_regular(n, degree, seed):
    if n is None or degree is None:
        raise ParameterError("random-regular needs n and degree")
    if n < 2 or degree < 1 or degree >= n:
        raise ParameterError(f"infeasible random-regular parameters n={n}, degree={degree}")
    if (n * degree) % 2 != 0:
        raise ParameterError(f"n*degree must be even, got n={n}, degree={degree}")
    if degree == 1 and n != 2:
        raise ParameterError("degree-1 graphs are disconnected for n > 2")
    segs = tuple(f"s{i}" for i in range(n))
    for attempt in range(_MAX_REGULAR_ATTEMPTS):
        rng = substream(seed, GRAPH, attempt)
        stubs = rng.permutation(np.repeat(np.arange(n), degree))
        pairs = set()
        ok = True
        for k in range(0, len(stubs), 2):
            a, b = int(stubs[k]), int(stubs[k + 1])
            if a == b:
                ok = False
                break
            key = (a, b) if a < b else (b, a)
            if key in pairs:
                ok = False
                break
            pairs.add(key)
        if not ok:
            continue
        adj = tuple((segs[a], segs[b]) for a, b in sorted(pairs))
        graph = RoadGraph(segs, adj)
        if _connected(graph):
            return graph
    raise ParameterError(
        f"could not generate a connected {degree}-regular simple graph on {n} segments")


class SpaceTimeIndex:
    """Variable indexing and MRF edge lists for a T-layer space-time graph.

    Edges come in two kinds: spatial (adjacent segments, same layer) and
    temporal (same segment, consecutive layers). The edge order is all
    spatial edges layer-major, then all temporal edges layer-major.
    """

    def __init__(self, graph: RoadGraph, layers: int):
        if layers < 1:
            raise ParameterError(f"layer count must be >= 1, got {layers}")
        _require_valid(graph)
        self.graph = graph
        self.layers = layers
        self.n_segments = graph.n_segments
        self._pos = graph.positions()
        n = self.n_segments
        self.spatial_edges = [
            (t * n + self._pos[a], t * n + self._pos[b])
            for t in range(layers)
            for a, b in graph.adjacency
        ]
        self.temporal_edges = [
            (t * n + k, (t + 1) * n + k)
            for t in range(layers - 1)
            for k in range(n)
        ]

    @property
    def n_variables(self):
        return self.n_segments * self.layers

    @property
    def n_edges(self):
        return len(self.spatial_edges) + len(self.temporal_edges)

    def all_edges(self):
        return self.spatial_edges + self.temporal_edges

    def variable(self, segment, layer):
        """Dense id of cell (segment, layer)."""
        if not 0 <= layer < self.layers:
            raise ParameterError(f"layer {layer} outside [0, {self.layers})")
        try:
            pos = self._pos[segment]
        except KeyError:
            raise ParameterError(f"unknown segment {segment!r}") from None
        return layer * self.n_segments + pos

    def cell(self, vid):
        """Inverse of :meth:`variable`."""
        if not 0 <= vid < self.n_variables:
            raise ParameterError(f"variable id {vid} outside [0, {self.n_variables})")
        layer, pos = divmod(vid, self.n_segments)
        return self.graph.segments[pos], layer

    def layer_role(self, layer):
        """'boundary' for the first/last layer, 'interior' otherwise.

        Boundary and interior variables of a segment differ in their
        space-time degree (one vs two temporal neighbors), which is what
        the field inversion cares about.
        """
        if not 0 <= layer < self.layers:
            raise ParameterError(f"layer {layer} outside [0, {self.layers})")
        if self.layers <= 2 or layer in (0, self.layers - 1):
            return "boundary"
        return "interior"

    def degree(self, segment, layer):
        """Space-time degree of the (segment, layer) variable."""
        spatial = len(self.graph.neighbor_map()[segment])
        if self.layers == 1:
            return spatial
        return spatial + (1 if layer in (0, self.layers - 1) else 2)


def build_space_time(graph: RoadGraph, layers: int) -> SpaceTimeIndex:
    """Build the layer-major variable index over the segment graph."""
    return SpaceTimeIndex(graph, layers)


def save_graph(path, graph: RoadGraph):
    """Write the graph JSON format; adjacency is written as stored."""
    obj = {"segments": list(graph.segments),
           "adjacency": [list(p) for p in graph.adjacency]}
    _dump_json(path, obj)


def load_graph(path) -> RoadGraph:
    """Read and strictly validate a graph JSON file."""
    obj = _parse_json(path)
    if not isinstance(obj, dict):
        raise FileFormatError(path, "top level must be a JSON object")
    unknown = set(obj) - {"segments", "adjacency"}
    if unknown:
        raise FileFormatError(path, f"unknown keys {sorted(unknown)}",
                              field=sorted(unknown)[0])
    for key in ("segments", "adjacency"):
        if key not in obj:
            raise FileFormatError(path, f"missing key {key!r}", field=key)
    segs = obj["segments"]
    if not isinstance(segs, list) or not all(isinstance(s, str) for s in segs):
        raise FileFormatError(path, "segments must be a list of strings", field="segments")
    adj = obj["adjacency"]
    if (not isinstance(adj, list)
            or not all(isinstance(p, list) and len(p) == 2
                       and all(isinstance(s, str) for s in p) for p in adj)):
        raise FileFormatError(path, "adjacency must be a list of [id, id] pairs",
                              field="adjacency")
    graph = RoadGraph(tuple(segs), tuple((a, b) for a, b in adj))
    errors = [d for d in validate_graph(graph) if d.severity == "error"]
    if errors:
        raise FileFormatError(path, errors[0].message, field=errors[0].code)
    return graph


def _dump_json(path, obj):
    import sys

    if str(path) == "-":
        json.dump(obj, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def _parse_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise FileFormatError(path, f"cannot read file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FileFormatError(path, exc.msg, line=exc.lineno) from exc
