"""One reconstruction/prediction cycle and its scoring.

A cycle clamps the space-time model on the probe observations, runs BP
on the reduced model, and reports beliefs for every variable (clamped
ones as exact point masses). Scoring splits cells into observed and
hidden, and layers into reconstruction (< observed layer count) and
prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibrate import HistoryMatrix, MomentSet
from .errors import ParameterError
from .mrf import ObservationSet, PairwiseModel, condition
from .netgraph import SpaceTimeIndex
from .propagate import Beliefs, BpParams, BpReport, run_bp

LOG_LOSS_CLIP = 1e-12


@dataclass(frozen=True)
class WindowSpec:
    """T total layers, the first T_obs of which may carry observations."""

    layers: int
    observed_layers: int

    def __post_init__(self):
        if not 1 <= self.observed_layers <= self.layers:
            raise ParameterError(
                f"need 1 <= observed_layers <= layers, got "
                f"{self.observed_layers}/{self.layers}")

    def role(self, layer):
        return "reconstruction" if layer < self.observed_layers else "prediction"


@dataclass(frozen=True)
class CellScores:
    """Aggregates over one group of cells; rates are None when count is 0."""

    count: int
    error_rate: float | None
    brier: float | None
    log_loss: float | None

    def to_dict(self):
        return {"count": self.count, "error_rate": self.error_rate,
                "brier": self.brier, "log_loss": self.log_loss}


@dataclass(frozen=True)
class LayerMetrics:
    layer: int
    role: str
    hidden: CellScores
    observed: CellScores


@dataclass(frozen=True)
class Metrics:
    layers: list
    overall_hidden: CellScores
    overall_observed: CellScores
    overall: CellScores
    bp: BpReport | None = None

    def to_dict(self):
        bp = None
        if self.bp is not None:
            bp = {"converged": self.bp.converged, "iterations": self.bp.iterations,
                  "residual": self.bp.residual}
        return {
            "layers": [
                {"layer": lm.layer, "role": lm.role,
                 "hidden": lm.hidden.to_dict(), "observed": lm.observed.to_dict()}
                for lm in self.layers
            ],
            "overall": {"hidden": self.overall_hidden.to_dict(),
                        "observed": self.overall_observed.to_dict(),
                        "all": self.overall.to_dict()},
            "bp": bp,
        }


def reconstruct(model: PairwiseModel, observations, params: BpParams | None = None):
    """Condition on observations, run BP, report beliefs for all variables.

    ``observations`` is a {variable id: state} mapping (or (id, state)
    pairs). Clamped variables come back as exact point masses. Returns
    (Beliefs, BpReport); non-convergence is flagged, never raised.
    """
    reduced, record = condition(model, observations)
    beliefs, _, report = run_bp(reduced, params)
    p = np.empty(model.n_vars)
    p[record.kept] = beliefs.p_congested
    for vid, x in record.observed.items():
        p[vid] = float(x)
    return Beliefs(p_congested=p), report


def _scores(p, x):
    count = len(p)
    if count == 0:
        return CellScores(0, None, None, None)
    predicted = (p > 0.5).astype(np.int64)  # tie at 0.5 predicts fluid
    err = float(np.mean(predicted != x))
    brier = float(np.mean((p - x) ** 2))
    pc = np.clip(p, LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP)
    ll = float(-np.mean(x * np.log(pc) + (1 - x) * np.log(1.0 - pc)))
    return CellScores(count, err, brier, ll)


def evaluate(index: SpaceTimeIndex, beliefs: Beliefs, truth: HistoryMatrix,
             observations: ObservationSet, window: WindowSpec,
             bp_report: BpReport | None = None) -> Metrics:
    """Score beliefs against a truth window.

    ``truth`` row t is layer t; its columns must match the index
    segments. Cells missing in the truth are skipped. Observed cells
    are those named by ``observations``.
    """
    graph = index.graph
    if truth.n_rows != window.layers or index.layers != window.layers:
        raise ParameterError("truth rows, window layers and index layers must agree")
    if set(truth.segments) != set(graph.segments):
        raise ParameterError("truth columns do not match the graph segments")
    if len(beliefs.p_congested) != index.n_variables:
        raise ParameterError("beliefs length does not match the index")
    col = {s: k for k, s in enumerate(truth.segments)}
    observed_cells = observations.cell_set()
    layer_metrics = []
    groups = {"hidden": ([], []), "observed": ([], [])}
    for t in range(window.layers):
        layer_groups = {"hidden": ([], []), "observed": ([], [])}
        for seg in graph.segments:
            truth_val = int(truth.data[t, col[seg]])
            if truth_val < 0:
                continue
            p = beliefs.p_congested[index.variable(seg, t)]
            kind = "observed" if (seg, t) in observed_cells else "hidden"
            for target in (layer_groups[kind], groups[kind]):
                target[0].append(p)
                target[1].append(truth_val)
        layer_metrics.append(LayerMetrics(
            layer=t, role=window.role(t),
            hidden=_scores(np.array(layer_groups["hidden"][0]),
                           np.array(layer_groups["hidden"][1], dtype=np.int64)),
            observed=_scores(np.array(layer_groups["observed"][0]),
                             np.array(layer_groups["observed"][1], dtype=np.int64))))
    all_p = np.array(groups["hidden"][0] + groups["observed"][0])
    all_x = np.array(groups["hidden"][1] + groups["observed"][1], dtype=np.int64)
    return Metrics(
        layers=layer_metrics,
        overall_hidden=_scores(np.array(groups["hidden"][0]),
                               np.array(groups["hidden"][1], dtype=np.int64)),
        overall_observed=_scores(np.array(groups["observed"][0]),
                                 np.array(groups["observed"][1], dtype=np.int64)),
        overall=_scores(all_p, all_x),
        bp=bp_report,
    )


def baseline_marginal(moments: MomentSet, index: SpaceTimeIndex) -> Beliefs:
    """Climatology: every cell predicted by its class's historical rate."""
    p = np.empty(index.n_variables)
    for t in range(index.layers):
        role = index.layer_role(t)
        for seg in index.graph.segments:
            try:
                table = moments.singletons[(seg, role)]
            except KeyError:
                raise ParameterError(
                    f"moments missing singleton class ({seg!r}, {role!r})") from None
            p[index.variable(seg, t)] = float(table[1])
    return Beliefs(p_congested=p)


def write_metrics(path, metrics: Metrics):
    """Metrics JSON in the documented schema."""
    from .netgraph import _dump_json

    _dump_json(path, metrics.to_dict())
