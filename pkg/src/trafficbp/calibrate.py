"""Offline model estimation from historical congestion records.

Two stages: pool empirical singleton and pairwise tables out of the
history (with additive pseudocount smoothing), then invert them in
closed form at the Bethe level. With spin-ordered tables b_ij(+-,+-)
and b_i(+-) the inversion is

    J_ij = (1/4) ln[ b_ij(+,+) b_ij(-,-) / (b_ij(+,-) b_ij(-,+)) ]
    h_i  = (1 - d_i) (1/2) ln[ b_i(+)/b_i(-) ]
           + sum_{j in neighbors(i)} (1/4) ln[ b_ij(+,+) b_ij(+,-)
                                               / (b_ij(-,+) b_ij(-,-)) ]

which reproduces the generating parameters exactly when the moments
come from a tree model. Tables here are indexed by states x in {0,1}
with x = 0 meaning spin +1, so b(+,+) is table[0,0] and so on.

Stationarity is assumed: spatial pair tables are pooled over all rows,
temporal tables over all lag-1 row pairs, and couplings are shared by
every layer of the space-time model. Pairs count only when both cells
are present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FileFormatError, ParameterError
from .mrf import PairwiseModel, SpaceTimeModel, assemble_model, _read_csv, _write_csv
from .netgraph import SpaceTimeIndex

MISSING = -1


@dataclass(frozen=True, eq=False)
class HistoryMatrix:
    """Time-stamped binary congestion records; -1 marks a missing cell."""

    segments: tuple[str, ...]
    data: np.ndarray  # (rows, n_segments) int8 in {-1, 0, 1}

    def __post_init__(self):
        data = np.array(self.data, dtype=np.int8)
        if data.ndim != 2 or data.shape[1] != len(self.segments):
            raise DataError("history shape does not match the segment list")
        if data.shape[0] < 1:
            raise DataError("history must contain at least one row")
        if len(set(self.segments)) != len(self.segments):
            raise DataError("duplicate history columns")
        if not np.all(np.isin(data, (-1, 0, 1))):
            raise DataError("history cells must be 0, 1 or missing")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def n_rows(self):
        return self.data.shape[0]

    def window(self, start: int, rows: int) -> "HistoryMatrix":
        """Contiguous row slice [start, start + rows)."""
        if start < 0 or rows < 1 or start + rows > self.n_rows:
            raise ParameterError(
                f"window [{start}, {start + rows}) outside 0..{self.n_rows}")
        return HistoryMatrix(self.segments, self.data[start:start + rows])


@dataclass(frozen=True, eq=False)
class MomentSet:
    """Smoothed singleton and pairwise tables per estimation class.

    Calibration keys: ``(segment, role)`` for singletons with role in
    {'boundary', 'interior'}, ``('spatial', a, b)`` and
    ``('temporal', segment)`` for pairs. The exact oracle uses variable
    ids and edge tuples instead. ``counts`` holds the raw sample count
    behind each table, before the pseudocount was added.
    """

    singletons: dict
    pair_joints: dict
    counts: dict
    pseudocount: float


def _smooth(counts, pseudocount):
    table = counts.astype(np.float64) + pseudocount
    return table / table.sum()


def estimate_moments(history: HistoryMatrix, index: SpaceTimeIndex,
                     pseudocount: float = 1.0) -> MomentSet:
    """Pool empirical tables for every estimation class of the index.

    Spatial pair tables come from same-row segment pairs, temporal
    tables from lag-1 pairs of the same segment, singleton tables from
    all present cells; ``pseudocount`` is added to every cell of every
    count table before normalization, so all tables are strictly
    positive.
    """
    if pseudocount <= 0:
        raise ParameterError(f"pseudocount must be > 0, got {pseudocount}")
    graph = index.graph
    if set(history.segments) != set(graph.segments):
        extra = sorted(set(history.segments) - set(graph.segments))
        missing = sorted(set(graph.segments) - set(history.segments))
        raise DataError(f"history columns do not match the graph "
                        f"(unknown {extra}, absent {missing})")
    col = {s: k for k, s in enumerate(history.segments)}
    x = history.data
    present = x >= 0
    singletons = {}
    pair_joints = {}
    counts = {}
    roles = {index.layer_role(t) for t in range(index.layers)}
    for seg in graph.segments:
        c = col[seg]
        vals = x[present[:, c], c]
        table = _smooth(np.bincount(vals, minlength=2)[:2], pseudocount)
        for role in roles:
            singletons[(seg, role)] = table
            counts[(seg, role)] = float(len(vals))
    for a, b in graph.adjacency:
        ca, cb = col[a], col[b]
        both = present[:, ca] & present[:, cb]
        joint = np.bincount(2 * x[both, ca] + x[both, cb], minlength=4)[:4]
        key = ("spatial", a, b)
        pair_joints[key] = _smooth(joint, pseudocount).reshape(2, 2)
        counts[key] = float(both.sum())
    if index.layers > 1:
        for seg in graph.segments:
            c = col[seg]
            earlier = x[:-1, c]
            later = x[1:, c]
            both = (earlier >= 0) & (later >= 0)
            joint = np.bincount(2 * earlier[both] + later[both], minlength=4)[:4]
            key = ("temporal", seg)
            pair_joints[key] = _smooth(joint, pseudocount).reshape(2, 2)
            counts[key] = float(both.sum())
    return MomentSet(singletons=singletons, pair_joints=pair_joints,
                     counts=counts, pseudocount=float(pseudocount))


def bethe_coupling(joint) -> float:
    """Coupling J of one edge from its 2x2 joint table (x-indexed)."""
    t = np.asarray(joint, dtype=np.float64)
    if t.shape != (2, 2):
        raise ParameterError("joint table must be 2x2")
    if np.any(t <= 0):
        raise DataError("joint table has a zero cell; use a positive pseudocount")
    return 0.25 * math.log(t[0, 0] * t[1, 1] / (t[0, 1] * t[1, 0]))


def bethe_field(singleton, incident_joints, degree: int) -> float:
    """Field h of one variable from its singleton and incident joint tables.

    Every incident table must be oriented with this variable on axis 0;
    ``degree`` is the variable's degree in the target graph and must
    match the number of incident tables.
    """
    s = np.asarray(singleton, dtype=np.float64)
    if s.shape != (2,):
        raise ParameterError("singleton table must have two entries")
    if np.any(s <= 0):
        raise DataError("singleton table has a zero cell; use a positive pseudocount")
    tables = [np.asarray(t, dtype=np.float64) for t in incident_joints]
    if len(tables) != degree:
        raise ParameterError(f"expected {degree} incident tables, got {len(tables)}")
    h = (1.0 - degree) * 0.5 * math.log(s[0] / s[1])
    for t in tables:
        if np.any(t <= 0):
            raise DataError("joint table has a zero cell; use a positive pseudocount")
        h += 0.25 * math.log(t[0, 0] * t[0, 1] / (t[1, 0] * t[1, 1]))
    return h


def invert_moments(moments: MomentSet, index: SpaceTimeIndex) -> SpaceTimeModel:
    """Closed-form Bethe inversion of calibration-keyed moments."""
    graph = index.graph
    neighbors = graph.neighbor_map()
    pos = graph.positions()
    spatial = {}
    for a, b in graph.adjacency:
        spatial[(a, b)] = bethe_coupling(moments.pair_joints[("spatial", a, b)])
    temporal = {}
    if index.layers > 1:
        for seg in graph.segments:
            temporal[seg] = bethe_coupling(moments.pair_joints[("temporal", seg)])
    spatial_lookup = {}
    for (a, b), j in spatial.items():
        spatial_lookup[(a, b)] = ("as-is", ("spatial", a, b))
        spatial_lookup[(b, a)] = ("transposed", ("spatial", a, b))
    fields = {}
    for t in range(index.layers):
        role = index.layer_role(t)
        for seg in graph.segments:
            incident = []
            for nbr in neighbors[seg]:
                orient, key = spatial_lookup[(seg, nbr)]
                table = moments.pair_joints[key]
                incident.append(table if orient == "as-is" else table.T)
            if index.layers > 1:
                # temporal tables are P(x_earlier, x_later)
                if t < index.layers - 1:
                    incident.append(moments.pair_joints[("temporal", seg)])
                if t > 0:
                    incident.append(moments.pair_joints[("temporal", seg)].T)
            fields[(seg, t)] = bethe_field(moments.singletons[(seg, role)],
                                           incident, len(incident))
    return SpaceTimeModel(graph, index.layers, spatial, temporal, fields)


def calibrate_space_time(history: HistoryMatrix, index: SpaceTimeIndex,
                         pseudocount: float = 1.0) -> SpaceTimeModel:
    """Estimate moments, invert them, keep the file-format shape."""
    return invert_moments(estimate_moments(history, index, pseudocount), index)


def calibrate(history: HistoryMatrix, index: SpaceTimeIndex,
              pseudocount: float = 1.0) -> PairwiseModel:
    """Full offline calibration: history in, assembled pairwise model out."""
    return calibrate_space_time(history, index, pseudocount).to_pairwise()


def write_history(path, history: HistoryMatrix):
    """History CSV: header 't,<segments...>', missing cells empty."""
    header = "t," + ",".join(history.segments)
    lines = [header]
    for t in range(history.n_rows):
        cells = ["" if v == MISSING else str(int(v)) for v in history.data[t]]
        lines.append(f"{t}," + ",".join(cells))
    _write_csv(path, lines)


def read_history(path) -> HistoryMatrix:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            raw = f.read()
    except OSError as exc:
        raise FileFormatError(path, f"cannot read file: {exc}") from exc
    lines = raw.splitlines()
    if not lines:
        raise FileFormatError(path, "empty file", line=1)
    header = lines[0].split(",")
    if not header or header[0] != "t":
        raise FileFormatError(path, "header must start with 't'", line=1, field="t")
    segments = tuple(header[1:])
    if len(segments) == 0:
        raise FileFormatError(path, "no segment columns", line=1)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "":
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise FileFormatError(path, f"expected {len(header)} fields, got {len(parts)}",
                                  line=lineno)
        row = []
        for seg, cell in zip(segments, parts[1:]):
            if cell == "":
                row.append(MISSING)
            elif cell in ("0", "1"):
                row.append(int(cell))
            else:
                raise FileFormatError(path, f"cell must be 0, 1 or empty, got {cell!r}",
                                      line=lineno, field=seg)
        rows.append(row)
    if not rows:
        raise FileFormatError(path, "history has no rows", line=1)
    try:
        return HistoryMatrix(segments, np.array(rows, dtype=np.int8))
    except DataError as exc:
        raise FileFormatError(path, str(exc)) from exc
