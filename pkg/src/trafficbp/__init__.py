"""Congestion reconstruction and prediction on road networks.

Binary traffic states on road segments are modeled as a pairwise Ising
Markov random field over a space-time graph. The model is calibrated
offline from historical records by Bethe moment matching and queried
online by loopy belief propagation conditioned on sparse probe
observations.
"""

from .calibrate import (HistoryMatrix, MomentSet, bethe_coupling, bethe_field,
                        calibrate, calibrate_space_time, estimate_moments,
                        invert_moments, read_history, write_history)
from .errors import (CapacityError, DataError, Diagnostic, FileFormatError,
                     ParameterError, TrafficBpError)
from .mrf import (CONGESTED, FLUID, ClampRecord, ObservationSet, PairwiseModel,
                  SpaceTimeModel, assemble_model, condition, energy, load_model,
                  read_observations, save_model, spin_from_state, state_from_spin,
                  validate_model, write_observations)
from .netgraph import (RoadGraph, SpaceTimeIndex, build_space_time, gen_graph,
                       load_graph, save_graph, validate_graph)
from .oracle import ExactResult, enumerate_model, exact_moments, sample_exact
from .pipeline import (CellScores, Metrics, WindowSpec, baseline_marginal,
                       evaluate, reconstruct, write_metrics)
from .propagate import (Beliefs, BpParams, BpReport, MessageSet, PhasePoint,
                        U_MAX, bethe_free_energy, pair_beliefs, phase_scan,
                        read_beliefs, run_bp, update_message, write_beliefs,
                        write_phase_scan)
from .simulate import DynamicsParams, ProbeParams, sample_probes, simulate

__version__ = "0.1.0"

__all__ = [
    "Beliefs", "BpParams", "BpReport", "CapacityError", "CellScores",
    "ClampRecord", "CONGESTED", "DataError", "Diagnostic", "DynamicsParams",
    "ExactResult", "FileFormatError", "FLUID", "HistoryMatrix", "MessageSet",
    "Metrics", "MomentSet", "ObservationSet", "PairwiseModel", "ParameterError",
    "PhasePoint", "ProbeParams", "RoadGraph", "SpaceTimeIndex", "SpaceTimeModel",
    "TrafficBpError", "U_MAX", "WindowSpec", "assemble_model",
    "baseline_marginal", "bethe_coupling", "bethe_field", "bethe_free_energy",
    "build_space_time", "calibrate", "calibrate_space_time", "condition",
    "energy", "enumerate_model", "estimate_moments", "evaluate", "exact_moments",
    "gen_graph", "invert_moments", "load_graph", "load_model", "pair_beliefs",
    "phase_scan", "read_beliefs", "read_history", "read_observations",
    "reconstruct", "run_bp", "sample_exact", "sample_probes", "save_graph",
    "save_model", "simulate", "spin_from_state", "state_from_spin",
    "update_message", "validate_graph", "validate_model", "write_beliefs",
    "write_history", "write_metrics", "write_observations", "write_phase_scan",
]
