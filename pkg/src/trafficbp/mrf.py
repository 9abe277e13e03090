"""Pairwise binary Markov random field over traffic states.

State convention: x = 0 means fluid, x = 1 means congested. Internally
the model works on spins s = 1 - 2x, so fluid is spin up (+1). The
distribution is p(s) proportional to exp(sum_edges J_ij s_i s_j +
sum_i h_i s_i); positive h biases a variable toward fluid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, Diagnostic, FileFormatError, ParameterError
from .netgraph import RoadGraph, SpaceTimeIndex, build_space_time

FLUID = 0
CONGESTED = 1


def spin_from_state(x):
    """Map x in {0,1} (arrays ok) to the spin s = 1 - 2x in {+1,-1}."""
    return 1 - 2 * np.asarray(x, dtype=np.int64) if np.ndim(x) else 1 - 2 * int(x)


def state_from_spin(s):
    """Inverse of :func:`spin_from_state`."""
    return (1 - np.asarray(s, dtype=np.int64)) // 2 if np.ndim(s) else (1 - int(s)) // 2


class PairwiseModel:
    """Couplings J per edge and fields h per variable, spins in {+1,-1}.

    Immutable after construction (parameter arrays are read-only). The
    raw constructor does not validate; :func:`validate_model` reports
    problems, and the structured constructors (:meth:`make`,
    :func:`assemble_model`, :func:`condition`) only produce valid models.

    Directed-edge layout used by message passing: undirected edge e with
    endpoints ``edges[e] = (a, b)`` owns directed slots ``2e`` (a -> b)
    and ``2e + 1`` (b -> a).
    """

    def __init__(self, n_vars, edges, couplings, fields):
        self.n_vars = int(n_vars)
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.couplings = np.array(couplings, dtype=np.float64).reshape(-1)
        self.fields = np.array(fields, dtype=np.float64).reshape(-1)
        if len(self.couplings) != len(self.edges):
            raise ParameterError("one coupling per edge required")
        if len(self.fields) != self.n_vars:
            raise ParameterError("one field per variable required")
        for a in (self.edges, self.couplings, self.fields):
            a.flags.writeable = False
        self._structure = None

    @classmethod
    def make(cls, n_vars, edge_list, fields):
        """Strict constructor: canonicalizes edge order, rejects bad input."""
        seen = set()
        canon = []
        for i, j, coupling in edge_list:
            i, j = int(i), int(j)
            if i == j:
                raise ParameterError(f"self-edge ({i},{j})")
            if not (0 <= i < n_vars and 0 <= j < n_vars):
                raise ParameterError(f"edge ({i},{j}) outside [0,{n_vars})")
            key = (i, j) if i < j else (j, i)
            if key in seen:
                raise ParameterError(f"duplicate edge {key}")
            seen.add(key)
            canon.append((key[0], key[1], float(coupling)))
        canon.sort()
        model = cls(n_vars,
                    [(i, j) for i, j, _ in canon] or np.empty((0, 2), dtype=np.int64),
                    [c for _, _, c in canon],
                    fields)
        bad = [d for d in validate_model(model) if d.severity == "error"]
        if bad:
            raise ParameterError("invalid model: " + "; ".join(d.message for d in bad))
        return model

    @property
    def n_edges(self):
        return len(self.edges)

    def degrees(self):
        """Per-variable degree d_i."""
        return np.bincount(self.edges.ravel(), minlength=self.n_vars)

    def structure(self):
        """Cached directed-edge arrays (tail, head, rev, Jdir, incoming)."""
        if self._structure is None:
            e = self.edges
            nd = 2 * len(e)
            tail = np.empty(nd, dtype=np.int64)
            head = np.empty(nd, dtype=np.int64)
            tail[0::2], head[0::2] = e[:, 0], e[:, 1]
            tail[1::2], head[1::2] = e[:, 1], e[:, 0]
            rev = np.arange(nd) ^ 1
            j_dir = np.repeat(self.couplings, 2)
            order = np.argsort(head, kind="stable")
            bounds = np.searchsorted(head[order], np.arange(self.n_vars + 1))
            incoming = [order[bounds[v]:bounds[v + 1]] for v in range(self.n_vars)]
            lookup = {}
            for k, (a, b) in enumerate(e):
                lookup[(int(a), int(b))] = k
                lookup[(int(b), int(a))] = k
            self._structure = (tail, head, rev, j_dir, incoming, lookup)
        return self._structure

    def directed_index(self, source, target):
        """Slot of the (source -> target) cavity field; ParameterError if absent."""
        *_, lookup = self.structure()
        try:
            e = lookup[(int(source), int(target))]
        except KeyError:
            raise ParameterError(f"no edge between {source} and {target}") from None
        return 2 * e if self.edges[e, 0] == source else 2 * e + 1


def validate_model(model: PairwiseModel) -> list[Diagnostic]:
    """Report non-finite parameters, bad ids, self and duplicate edges."""
    out = []
    if not np.all(np.isfinite(model.couplings)):
        out.append(Diagnostic("non-finite", "error", "non-finite coupling value"))
    if not np.all(np.isfinite(model.fields)):
        out.append(Diagnostic("non-finite", "error", "non-finite field value"))
    seen = set()
    for a, b in model.edges:
        a, b = int(a), int(b)
        if not (0 <= a < model.n_vars and 0 <= b < model.n_vars):
            out.append(Diagnostic("bad-id", "error",
                                  f"edge ({a},{b}) outside [0,{model.n_vars})"))
            continue
        if a == b:
            out.append(Diagnostic("self-edge", "error", f"self-edge ({a},{b})"))
            continue
        key = (a, b) if a < b else (b, a)
        if key in seen:
            out.append(Diagnostic("duplicate-edge", "error", f"duplicate edge {key}"))
        seen.add(key)
    return out


def energy(model: PairwiseModel, config) -> float:
    """Ising energy E(s) = -sum J_ij s_i s_j - sum h_i s_i of a full spin assignment."""
    s = np.asarray(config, dtype=np.float64).reshape(-1)
    if len(s) != model.n_vars:
        raise ParameterError(f"config length {len(s)} != {model.n_vars} variables")
    if not np.all(np.abs(s) == 1.0):
        raise ParameterError("config entries must be +1 or -1 spins")
    pair = float(np.dot(model.couplings, s[model.edges[:, 0]] * s[model.edges[:, 1]]))
    return -pair - float(np.dot(model.fields, s))


@dataclass(frozen=True)
class ClampRecord:
    """Which variables were removed by conditioning and what they carried.

    ``kept[r]`` is the original id of reduced variable r; ``observed``
    maps each removed original id to its observed state x.
    """

    observed: dict
    kept: np.ndarray


def condition(model: PairwiseModel, observations):
    """Exactly condition on hard evidence by folding fields.

    ``observations`` is a mapping {variable id: state x} or an iterable
    of (id, x) pairs. Each observed variable i with spin sigma_i is
    removed; every former neighbor j picks up h_j += J_ij * sigma_i.
    The reduced model's distribution is the conditional of the original.
    """
    obs = _normalize_observations(model.n_vars, observations)
    if not obs:
        return model, ClampRecord({}, np.arange(model.n_vars))
    removed = np.zeros(model.n_vars, dtype=bool)
    for vid in obs:
        removed[vid] = True
    sigma = np.zeros(model.n_vars)
    for vid, x in obs.items():
        sigma[vid] = 1 - 2 * x
    new_id = np.cumsum(~removed) - 1  # valid only where kept
    kept = np.flatnonzero(~removed)
    h = np.array(model.fields[kept])
    new_edges = []
    new_j = []
    for e, (a, b) in enumerate(model.edges):
        a, b = int(a), int(b)
        j = model.couplings[e]
        if removed[a] and removed[b]:
            continue  # constant shift of the log-partition only
        if removed[a]:
            h[new_id[b]] += j * sigma[a]
        elif removed[b]:
            h[new_id[a]] += j * sigma[b]
        else:
            new_edges.append((new_id[a], new_id[b]))
            new_j.append(j)
    reduced = PairwiseModel(len(kept),
                            new_edges or np.empty((0, 2), dtype=np.int64),
                            new_j, h)
    return reduced, ClampRecord(dict(obs), kept)


def _normalize_observations(n_vars, observations):
    if hasattr(observations, "items"):
        pairs = observations.items()
    else:
        pairs = observations
    out = {}
    for vid, x in pairs:
        vid, x = int(vid), int(x)
        if not 0 <= vid < n_vars:
            raise ParameterError(f"observed variable {vid} outside [0,{n_vars})")
        if x not in (0, 1):
            raise DataError(f"observed state must be 0 or 1, got {x}")
        if vid in out and out[vid] != x:
            raise DataError(f"conflicting observations for variable {vid}")
        out[vid] = x
    return out


def assemble_model(index: SpaceTimeIndex, spatial_couplings, temporal_couplings,
                   fields) -> PairwiseModel:
    """Replicate per-pair/per-segment couplings over the space-time graph.

    ``spatial_couplings`` maps unordered segment pairs to J (one value
    reused at every layer), ``temporal_couplings`` maps segments to the
    J of their consecutive-layer edges, ``fields`` maps (segment, layer)
    to h. Temporal couplings are only consulted when layers >= 2.
    """
    graph = index.graph
    pos = graph.positions()
    spatial = {}
    for (a, b), j in spatial_couplings.items():
        if a not in pos or b not in pos:
            raise ParameterError(f"spatial coupling references unknown pair ({a!r}, {b!r})")
        spatial[tuple(sorted((a, b), key=pos.__getitem__))] = float(j)
    j_list = []
    for a, b in graph.adjacency:
        key = tuple(sorted((a, b), key=pos.__getitem__))
        if key not in spatial:
            raise ParameterError(f"missing spatial coupling for pair {key}")
    for t in range(index.layers):
        for a, b in graph.adjacency:
            j_list.append(spatial[tuple(sorted((a, b), key=pos.__getitem__))])
    if index.layers > 1:
        for seg in graph.segments:
            if seg not in temporal_couplings:
                raise ParameterError(f"missing temporal coupling for segment {seg!r}")
        for _t in range(index.layers - 1):
            for seg in graph.segments:
                j_list.append(float(temporal_couplings[seg]))
    h = np.empty(index.n_variables)
    for t in range(index.layers):
        for seg in graph.segments:
            try:
                h[index.variable(seg, t)] = float(fields[(seg, t)])
            except KeyError:
                raise ParameterError(f"missing field for ({seg!r}, layer {t})") from None
    edges = index.all_edges()
    return PairwiseModel(index.n_variables,
                         edges or np.empty((0, 2), dtype=np.int64), j_list, h)


@dataclass(frozen=True)
class ObservationSet:
    """Sparse probe reports: (segment, layer, state) with no conflicts."""

    cells: tuple[tuple[str, int, int], ...]

    @classmethod
    def from_cells(cls, triples):
        seen = {}
        for seg, layer, x in triples:
            seg, layer, x = str(seg), int(layer), int(x)
            if x not in (0, 1):
                raise DataError(f"state must be 0 or 1, got {x}")
            key = (seg, layer)
            if key in seen and seen[key] != x:
                raise DataError(f"conflicting observations for segment {seg!r} layer {layer}")
            seen[key] = x
        cells = sorted(((s, t, x) for (s, t), x in seen.items()),
                       key=lambda c: (c[1], c[0]))
        return cls(tuple(cells))

    def __len__(self):
        return len(self.cells)

    def vid_map(self, index: SpaceTimeIndex) -> dict:
        """Bind cells to dense variable ids under the given index."""
        return {index.variable(seg, layer): x for seg, layer, x in self.cells}

    def cell_set(self):
        return {(seg, layer) for seg, layer, _ in self.cells}


def write_observations(path, observations: ObservationSet):
    """Observations CSV: header 'layer,segment,state', canonical row order."""
    _write_csv(path, ["layer,segment,state"] +
               [f"{t},{seg},{x}" for seg, t, x in observations.cells])


def read_observations(path) -> ObservationSet:
    rows = _read_csv(path, "layer,segment,state")
    triples = []
    for lineno, row in rows:
        layer = _int_field(path, lineno, "layer", row[0])
        state = _int_field(path, lineno, "state", row[2])
        if state not in (0, 1):
            raise FileFormatError(path, f"state must be 0 or 1, got {row[2]}",
                                  line=lineno, field="state")
        if layer < 0:
            raise FileFormatError(path, "layer must be >= 0", line=lineno, field="layer")
        triples.append((row[1], layer, state))
    try:
        return ObservationSet.from_cells(triples)
    except DataError as exc:
        raise FileFormatError(path, str(exc)) from exc


@dataclass(frozen=True)
class SpaceTimeModel:
    """A calibrated model in file-format shape: graph + per-class parameters.

    The adjacency of ``graph`` is exactly the set of spatial coupling
    pairs. ``fields`` is keyed by (segment, layer).
    """

    graph: RoadGraph
    layers: int
    spatial_couplings: dict
    temporal_couplings: dict
    fields: dict

    def index(self) -> SpaceTimeIndex:
        return build_space_time(self.graph, self.layers)

    def to_pairwise(self) -> PairwiseModel:
        return assemble_model(self.index(), self.spatial_couplings,
                              self.temporal_couplings, self.fields)


def save_model(path, model: SpaceTimeModel):
    """Model JSON; entries in canonical (graph order, layer-major) order."""
    pos = model.graph.positions()
    spatial = [
        {"a": a, "b": b, "J": model.spatial_couplings[
            tuple(sorted((a, b), key=pos.__getitem__))]}
        for a, b in model.graph.adjacency
    ]
    temporal = [
        {"segment": s, "J": model.temporal_couplings[s]}
        for s in model.graph.segments if s in model.temporal_couplings
    ]
    fields = [
        {"segment": s, "layer": t, "h": model.fields[(s, t)]}
        for t in range(model.layers) for s in model.graph.segments
    ]
    obj = {
        "layers": model.layers,
        "segments": list(model.graph.segments),
        "spatial_J": spatial,
        "temporal_J": temporal,
        "fields": fields,
    }
    from .netgraph import _dump_json

    _dump_json(path, obj)


def load_model(path) -> SpaceTimeModel:
    from .netgraph import _parse_json, validate_graph

    obj = _parse_json(path)
    if not isinstance(obj, dict):
        raise FileFormatError(path, "top level must be a JSON object")
    keys = {"layers", "segments", "spatial_J", "temporal_J", "fields"}
    unknown = set(obj) - keys
    if unknown:
        raise FileFormatError(path, f"unknown keys {sorted(unknown)}",
                              field=sorted(unknown)[0])
    missing = keys - set(obj)
    if missing:
        raise FileFormatError(path, f"missing keys {sorted(missing)}",
                              field=sorted(missing)[0])
    layers = obj["layers"]
    if not isinstance(layers, int) or layers < 1:
        raise FileFormatError(path, "layers must be an integer >= 1", field="layers")
    segs = obj["segments"]
    if not isinstance(segs, list) or not all(isinstance(s, str) for s in segs):
        raise FileFormatError(path, "segments must be a list of strings", field="segments")
    seg_set = set(segs)
    spatial = {}
    adjacency = []
    for entry in _entries(path, obj, "spatial_J", ("a", "b", "J")):
        a, b, j = entry["a"], entry["b"], entry["J"]
        if a not in seg_set or b not in seg_set:
            raise FileFormatError(path, f"spatial_J references unknown segment",
                                  field="spatial_J")
        adjacency.append((a, b))
        spatial[(a, b)] = _float_value(path, "spatial_J", j)
    temporal = {}
    for entry in _entries(path, obj, "temporal_J", ("segment", "J")):
        s = entry["segment"]
        if s not in seg_set:
            raise FileFormatError(path, "temporal_J references unknown segment",
                                  field="temporal_J")
        temporal[s] = _float_value(path, "temporal_J", entry["J"])
    fields = {}
    for entry in _entries(path, obj, "fields", ("segment", "layer", "h")):
        s, t = entry["segment"], entry["layer"]
        if s not in seg_set:
            raise FileFormatError(path, "fields references unknown segment", field="fields")
        if not isinstance(t, int) or not 0 <= t < layers:
            raise FileFormatError(path, f"field layer {t} outside [0,{layers})",
                                  field="fields")
        fields[(s, t)] = _float_value(path, "fields", entry["h"])
    graph = RoadGraph(tuple(segs), tuple(adjacency))
    errors = [d for d in validate_graph(graph) if d.severity == "error"]
    if errors:
        raise FileFormatError(path, errors[0].message, field=errors[0].code)
    model = SpaceTimeModel(graph, layers, _canonical_spatial(graph, spatial),
                           temporal, fields)
    missing_fields = [
        (s, t) for t in range(layers) for s in segs if (s, t) not in fields
    ]
    if missing_fields:
        raise FileFormatError(path, f"missing field for {missing_fields[0]}",
                              field="fields")
    if layers > 1:
        for s in segs:
            if s not in temporal:
                raise FileFormatError(path, f"missing temporal coupling for {s!r}",
                                      field="temporal_J")
    return model


def _canonical_spatial(graph, spatial):
    pos = graph.positions()
    return {tuple(sorted(k, key=pos.__getitem__)): v for k, v in spatial.items()}


def _entries(path, obj, key, fields):
    val = obj[key]
    if not isinstance(val, list):
        raise FileFormatError(path, f"{key} must be a list", field=key)
    for entry in val:
        if not isinstance(entry, dict) or set(entry) != set(fields):
            raise FileFormatError(path, f"each {key} entry needs exactly {fields}",
                                  field=key)
        yield entry


def _float_value(path, field, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FileFormatError(path, f"{field} value must be a number", field=field)
    v = float(value)
    if not np.isfinite(v):
        raise FileFormatError(path, f"{field} value must be finite", field=field)
    return v


def _int_field(path, lineno, field, raw):
    try:
        return int(raw)
    except ValueError:
        raise FileFormatError(path, f"expected integer, got {raw!r}",
                              line=lineno, field=field) from None


def _write_csv(path, lines):
    import sys

    text = "\n".join(lines) + "\n"
    if str(path) == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _read_csv(path, expected_header):
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            raw = f.read()
    except OSError as exc:
        raise FileFormatError(path, f"cannot read file: {exc}") from exc
    lines = raw.splitlines()
    if not lines:
        raise FileFormatError(path, "empty file", line=1)
    if lines[0] != expected_header:
        raise FileFormatError(path, f"expected header {expected_header!r}, got {lines[0]!r}",
                              line=1)
    n_fields = expected_header.count(",") + 1
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "":
            continue
        row = line.split(",")
        if len(row) != n_fields:
            raise FileFormatError(path, f"expected {n_fields} fields, got {len(row)}",
                                  line=lineno)
        rows.append((lineno, row))
    return rows
