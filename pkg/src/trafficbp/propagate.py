"""Loopy belief propagation on the binary pairwise model.

Messages are scalar cavity fields: the message from i to j is
m_{i->j}(s_j) proportional to exp(u_{i->j} * s_j). The sum-product
update is

    u_{i->j} = atanh( tanh(J_ij) * tanh(H_{i\\j}) ),
    H_{i\\j} = h_i + sum_{k in neighbors(i), k != j} u_{k->i},

clipped to [-U_MAX, U_MAX] so near-deterministic evidence cannot
overflow. Beliefs follow from the full local field H_i:
p_congested(i) = (1 - tanh H_i) / 2.

Convergence is a state property: the engine stops once synchronously
re-evaluating every directed edge would change no cavity field by more
than ``tol``, and it reports that state (the final proposal is not
applied). This makes the fixed-point residual of a converged run exact
by construction, for both schedules.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import xlogy

from .errors import ParameterError
from .mrf import PairwiseModel, assemble_model
from .netgraph import RoadGraph, SpaceTimeIndex, build_space_time
from .rng import BP_INIT, PHASE_SCAN, derive_seed, substream

U_MAX = 30.0

SCHEDULES = ("flooding", "sequential")
INITS = ("zero", "random")


@dataclass(frozen=True)
class BpParams:
    """Engine controls. Defaults are safe for calibrated traffic models."""

    damping: float = 0.5
    tol: float = 1e-8
    max_iters: int = 1000
    schedule: str = "flooding"
    init: str = "zero"
    init_seed: int = 0
    init_amplitude: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.damping < 1.0:
            raise ParameterError(f"damping must be in [0,1), got {self.damping}")
        if not self.tol > 0.0:
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.schedule not in SCHEDULES:
            raise ParameterError(f"schedule must be one of {SCHEDULES}")
        if self.init not in INITS:
            raise ParameterError(f"init must be one of {INITS}")
        if self.init_amplitude < 0.0:
            raise ParameterError("init amplitude must be >= 0")


@dataclass(frozen=True)
class MessageSet:
    """Cavity fields, one per directed edge in the model's slot layout."""

    u: np.ndarray


@dataclass(frozen=True)
class Beliefs:
    """Per-variable congestion probabilities b_i(x=1)."""

    p_congested: np.ndarray

    @property
    def magnetization(self):
        """Mean spin m_i = 1 - 2 p_congested(i)."""
        return 1.0 - 2.0 * self.p_congested


@dataclass(frozen=True)
class BpReport:
    converged: bool
    iterations: int
    residual: float
    wall_time: float


def update_message(model: PairwiseModel, messages: MessageSet, source, target) -> float:
    """One sum-product update of the (source -> target) cavity field. Pure."""
    tail, head, rev, j_dir, incoming, _ = model.structure()
    d = model.directed_index(source, target)
    u = messages.u
    h_full = model.fields[source] + float(np.sum(u[incoming[source]]))
    h_cav = h_full - u[rev[d]]
    with np.errstate(divide="ignore"):
        value = np.arctanh(np.tanh(j_dir[d]) * np.tanh(h_cav))
    return float(np.clip(value, -U_MAX, U_MAX))


def _propose_all(model, u):
    """Synchronous update of every directed edge; returns (proposal, local fields)."""
    tail, head, rev, j_dir, _, _ = model.structure()
    local = model.fields + np.bincount(head, weights=u, minlength=model.n_vars)
    h_cav = local[tail] - u[rev]
    with np.errstate(divide="ignore"):
        prop = np.arctanh(np.tanh(j_dir) * np.tanh(h_cav))
    return np.clip(prop, -U_MAX, U_MAX), local


def _sequential_sweep(model, u, damping):
    """In-place damped sweep in directed-slot order 0, 1, ..., 2E-1."""
    tail, head, rev, j_dir, _, _ = model.structure()
    local = model.fields + np.bincount(head, weights=u, minlength=model.n_vars)
    for d in range(len(u)):
        h_cav = local[tail[d]] - u[rev[d]]
        with np.errstate(divide="ignore"):
            prop = np.arctanh(np.tanh(j_dir[d]) * np.tanh(h_cav))
        prop = min(max(prop, -U_MAX), U_MAX)
        applied = damping * u[d] + (1.0 - damping) * prop
        local[head[d]] += applied - u[d]
        u[d] = applied


def _initial_messages(model, params):
    nd = 2 * model.n_edges
    if params.init == "zero":
        return np.zeros(nd)
    rng = substream(params.init_seed, BP_INIT)
    return rng.uniform(-params.init_amplitude, params.init_amplitude, nd)


def run_bp(model: PairwiseModel, params: BpParams | None = None):
    """Iterate message updates until convergence or ``max_iters``.

    Returns (Beliefs, MessageSet, BpReport). Non-convergence is not an
    error: the report flags it and the best-effort beliefs are returned.
    Deterministic given the parameters, including the init seed.
    """
    if params is None:
        params = BpParams()
    start = time.perf_counter()
    u = _initial_messages(model, params)
    converged = False
    residual = 0.0
    iterations = 0
    for iterations in range(1, params.max_iters + 1):
        proposal, _ = _propose_all(model, u)
        residual = float(np.max(np.abs(proposal - u))) if len(u) else 0.0
        if residual <= params.tol:
            converged = True
            break
        if params.schedule == "flooding":
            u = params.damping * u + (1.0 - params.damping) * proposal
        else:
            _sequential_sweep(model, u, params.damping)
    _, local = _propose_all(model, u) if model.n_edges else (None, model.fields.copy())
    beliefs = Beliefs(p_congested=0.5 - 0.5 * np.tanh(local))
    report = BpReport(converged=converged, iterations=iterations,
                      residual=residual, wall_time=time.perf_counter() - start)
    return beliefs, MessageSet(u=np.array(u)), report


def beliefs_from_messages(model: PairwiseModel, messages: MessageSet) -> Beliefs:
    """Beliefs implied by an arbitrary message state."""
    tail, head, *_ = model.structure()
    local = model.fields + np.bincount(head, weights=messages.u, minlength=model.n_vars)
    return Beliefs(p_congested=0.5 - 0.5 * np.tanh(local))


def pair_beliefs(model: PairwiseModel, messages: MessageSet) -> np.ndarray:
    """Normalized 2x2 edge belief tables, aligned with ``model.edges``.

    b_ij(s_i, s_j) propto exp(J_ij s_i s_j + H_{i\\j} s_i + H_{j\\i} s_j),
    indexed by states (x_i, x_j) with x = 0 meaning spin +1.
    """
    tail, head, rev, j_dir, _, _ = model.structure()
    u = messages.u
    local = model.fields + np.bincount(head, weights=u, minlength=model.n_vars)
    i = model.edges[:, 0]
    j = model.edges[:, 1]
    h_i = local[i] - u[1::2]  # H_{i\j}: everything at i except j's message
    h_j = local[j] - u[0::2]
    coup = model.couplings
    # log-weights for spin patterns (+,+), (+,-), (-,+), (-,-)
    logw = np.stack([coup + h_i + h_j, -coup + h_i - h_j,
                     -coup - h_i + h_j, coup - h_i - h_j], axis=1)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=1, keepdims=True)
    return w.reshape(-1, 2, 2)


def bethe_free_energy(model: PairwiseModel, messages: MessageSet) -> float:
    """Bethe free energy F = U - S of the beliefs implied by ``messages``.

    U is the belief-averaged energy; S the Bethe entropy
    -sum_edges b_ij ln b_ij + sum_i (d_i - 1) sum b_i ln b_i, with
    0 ln 0 = 0. At a converged fixed point on a tree, F = -ln Z.
    """
    beliefs = beliefs_from_messages(model, messages)
    p = beliefs.p_congested
    b_i = np.stack([1.0 - p, p], axis=1)
    mean_spin = 1.0 - 2.0 * p
    if model.n_edges:
        tables = pair_beliefs(model, messages)
        # E[s_i s_j] per edge from the x-indexed table
        corr = tables[:, 0, 0] + tables[:, 1, 1] - tables[:, 0, 1] - tables[:, 1, 0]
        energy_u = -float(np.dot(model.couplings, corr))
        entropy_edges = -float(np.sum(xlogy(tables, tables)))
    else:
        energy_u = 0.0
        entropy_edges = 0.0
    energy_u -= float(np.dot(model.fields, mean_spin))
    degrees = model.degrees()
    entropy_nodes = float(np.dot(degrees - 1, np.sum(xlogy(b_i, b_i), axis=1)))
    return energy_u - (entropy_edges + entropy_nodes)


@dataclass(frozen=True)
class PhasePoint:
    coupling: float
    abs_magnetization: float
    converged: bool


def phase_scan(graph: RoadGraph, coupling_values, params: BpParams | None = None,
               seed: int = 0) -> list[PhasePoint]:
    """Sweep a uniform zero-field model over a coupling grid.

    Each point gets its own random small-amplitude message init (derived
    from ``seed``) to break the up/down symmetry; zero init would sit on
    the paramagnetic fixed point forever. The default scan parameters
    are undamped: the symmetric ferromagnetic sweep needs no damping,
    and J = 0 then yields exactly zero messages.
    """
    if params is None:
        params = BpParams(damping=0.0, tol=1e-8, max_iters=2000,
                          init="random", init_amplitude=0.01)
    if params.init != "random":
        raise ParameterError("phase_scan requires random message init")
    index = build_space_time(graph, 1)
    fields = {(s, 0): 0.0 for s in graph.segments}
    points = []
    for k, value in enumerate(coupling_values):
        spatial = {pair: float(value) for pair in graph.adjacency}
        model = assemble_model(index, spatial, {}, fields)
        point_params = replace(params, init_seed=derive_seed(seed, PHASE_SCAN, k))
        beliefs, _, report = run_bp(model, point_params)
        points.append(PhasePoint(float(value),
                                 float(abs(np.mean(beliefs.magnetization))),
                                 report.converged))
    return points


def write_beliefs(path, index: SpaceTimeIndex, beliefs: Beliefs):
    """Beliefs CSV: 'layer,segment,p_congested', 17 significant digits."""
    from .mrf import _write_csv

    if len(beliefs.p_congested) != index.n_variables:
        raise ParameterError("beliefs length does not match index")
    lines = ["layer,segment,p_congested"]
    for vid in range(index.n_variables):
        seg, layer = index.cell(vid)
        lines.append(f"{layer},{seg},{beliefs.p_congested[vid]:.17g}")
    _write_csv(path, lines)


def read_beliefs(path) -> dict:
    """Parse a beliefs CSV into {(segment, layer): p_congested}."""
    from .errors import FileFormatError
    from .mrf import _read_csv

    out = {}
    for lineno, row in _read_csv(path, "layer,segment,p_congested"):
        try:
            layer = int(row[0])
        except ValueError:
            raise FileFormatError(path, f"expected integer layer, got {row[0]!r}",
                                  line=lineno, field="layer") from None
        try:
            p = float(row[2])
        except ValueError:
            raise FileFormatError(path, f"expected float, got {row[2]!r}",
                                  line=lineno, field="p_congested") from None
        if not 0.0 <= p <= 1.0:
            raise FileFormatError(path, f"probability outside [0,1]: {p}",
                                  line=lineno, field="p_congested")
        out[(row[1], layer)] = p
    return out


def write_phase_scan(path, points):
    """Phase-scan CSV: 'J,abs_magnetization,converged' (converged as 1/0)."""
    from .mrf import _write_csv

    lines = ["J,abs_magnetization,converged"]
    for pt in points:
        lines.append(f"{pt.coupling:.17g},{pt.abs_magnetization:.17g},"
                     f"{1 if pt.converged else 0}")
    _write_csv(path, lines)
