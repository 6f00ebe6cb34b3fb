"""Weak-trace analysis of single-photon interferometers.

A photon crossing a channel nudges a two-level environment from ``|chi>``
by an amount ``eps``; the eps-order at which each channel's environment is
disturbed, after post-selection on a detector click, decides whether the
photon was there.
"""

from __future__ import annotations

from .circuitio import circuit_from_dict, circuit_to_dict, load_circuit, save_circuit
from .circuits import BUILTINS, builtin, ifm, modified_nested, nested_mzi, zeno_chain
from .epspoly import EpsPolynomial
from .optics import (
    BeamSplitter,
    Circuit,
    CircuitBuilder,
    CircuitError,
    CouplingError,
    DarkPortError,
    Detector,
    DoubleSidedMirror,
    JointState,
    Mirror,
    PathSegment,
    PhaseShift,
    Shutter,
    Source,
    couple,
    ideal_amplitudes,
    postselect,
    propagate,
    validate_circuit,
)
from .protocols import (
    CalibrationError,
    CalibrationReport,
    ConfigError,
    ProtocolConfig,
    ProtocolResult,
    calibrate,
    run_ifm,
    run_modified_nested,
    run_nested_mzi,
    run_protocol,
    run_zeno_chain,
    scan,
)
from .trace import ChannelTrace, TraceReport, Verdict, is_counterfactual, trace_report
from .tsvf import (
    TwoStateCut,
    backward_amplitudes,
    backward_state,
    forward_amplitudes,
    forward_state,
    overlap_map,
    presence_map,
    reverse_circuit,
    weak_values,
)

__version__ = "0.1.0"
