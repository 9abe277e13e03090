"""Synthetic congestion dynamics and probe-observation sampling.

The ground-truth generator is a synchronous logistic neighbor-pressure
Markov chain: a segment's next state is congested with probability
logistic(base + persistence * x_i + neighbor_pressure * f_i) where f_i
is the fraction of its neighbors currently congested. The defaults give
strongly correlated congestion episodes. Probes emulate floating car
data: independent per-cell coverage with optional state flips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibrate import HistoryMatrix
from .errors import ParameterError
from .mrf import ObservationSet
from .netgraph import RoadGraph
from .rng import PROBE_COVER, PROBE_FLIP, SIMULATE, substream


@dataclass(frozen=True)
class DynamicsParams:
    # Defaults sit in a mixed regime: roughly half the network congested,
    # with strong spatial and temporal correlation but no saturation.
    base_log_odds: float = -2.0
    persistence: float = 2.0
    neighbor_pressure: float = 2.0
    burn_in: int = 100

    def __post_init__(self):
        for name in ("base_log_odds", "persistence", "neighbor_pressure"):
            if not np.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")
        if self.burn_in < 0:
            raise ParameterError("burn_in must be >= 0")


@dataclass(frozen=True)
class ProbeParams:
    coverage: float
    flip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ParameterError(f"coverage must be in [0,1], got {self.coverage}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ParameterError(f"flip_prob must be in [0,1], got {self.flip_prob}")


def simulate(graph: RoadGraph, params: DynamicsParams, steps: int,
             seed: int = 0) -> HistoryMatrix:
    """Run the chain from the all-fluid state and keep the last ``steps`` rows.

    The first burn_in generated states are discarded; the artificial
    all-fluid start is never emitted. Each step's draws come from their
    own random substream, so the output is reproducible cell by cell.
    """
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    n = graph.n_segments
    pos = graph.positions()
    edge_a = np.array([pos[a] for a, _ in graph.adjacency], dtype=np.int64)
    edge_b = np.array([pos[b] for _, b in graph.adjacency], dtype=np.int64)
    degree = np.zeros(n)
    np.add.at(degree, edge_a, 1)
    np.add.at(degree, edge_b, 1)
    denom = np.maximum(degree, 1.0)
    x = np.zeros(n, dtype=np.int8)
    out = np.empty((steps, n), dtype=np.int8)
    for step in range(1, params.burn_in + steps + 1):
        neighbor_sum = np.zeros(n)
        np.add.at(neighbor_sum, edge_a, x[edge_b])
        np.add.at(neighbor_sum, edge_b, x[edge_a])
        z = (params.base_log_odds + params.persistence * x
             + params.neighbor_pressure * neighbor_sum / denom)
        p = 1.0 / (1.0 + np.exp(-z))
        draws = substream(seed, SIMULATE, step).random(n)
        x = (draws < p).astype(np.int8)
        if step > params.burn_in:
            out[step - params.burn_in - 1] = x
    return HistoryMatrix(graph.segments, out)


def sample_probes(history: HistoryMatrix, probes: ProbeParams,
                  window: tuple[int, int]) -> ObservationSet:
    """Bernoulli per-cell coverage of a window, with optional flips.

    ``window`` is (first row, layer count); layer t of the result maps
    to history row first + t. Missing truth cells are never reported.
    """
    start, layers = window
    if start < 0 or layers < 1 or start + layers > history.n_rows:
        raise ParameterError(
            f"window [{start}, {start + layers}) outside 0..{history.n_rows}")
    n = len(history.segments)
    cover = substream(probes.seed, PROBE_COVER).random((layers, n))
    flip = substream(probes.seed, PROBE_FLIP).random((layers, n))
    triples = []
    for t in range(layers):
        row = history.data[start + t]
        for k, seg in enumerate(history.segments):
            if row[k] < 0 or cover[t, k] >= probes.coverage:
                continue
            state = int(row[k])
            if flip[t, k] < probes.flip_prob:
                state = 1 - state
            triples.append((seg, t, state))
    return ObservationSet.from_cells(triples)
