"""Forward/backward evolving states and path-projector weak values.

Everything here is computed with the environment decoupled (eps = 0). The
forward amplitude of a segment is ``<X|psi>``, the backward amplitude is
``<phi|X> = <D|U_after|X>`` where ``U_after`` is the evolution from that
segment to the detector. No complex conjugation is applied to the backward
amplitudes, so the weak value of the projector on ``X`` is simply
``backward * forward / <phi|psi>``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .epspoly import ZERO_TOL
from .optics import (
    LINEAR,
    BeamSplitter,
    Circuit,
    CircuitBuilder,
    Detector,
    DoubleSidedMirror,
    Mirror,
    PhaseShift,
    Shutter,
    Source,
    ideal_amplitudes,
    validate_circuit,
)

MAP_COLUMNS = ("cut", "segment", "forward_re", "forward_im", "backward_re",
               "backward_im", "weak_re", "weak_im", "defined", "present")


@dataclass(frozen=True)
class SegmentTwoState:
    forward: complex
    backward: complex
    weak_value: complex | None  # None when <phi|psi> = 0

    @property
    def overlap(self) -> complex:
        return self.backward * self.forward


@dataclass(frozen=True)
class TwoStateCut:
    cut: str
    index: int
    overlap: complex  # <phi|psi>
    segments: Mapping[str, SegmentTwoState]
    # outcomes already reached before the cut (detectors, shutters)
    terminals: Mapping[str, SegmentTwoState] = field(default_factory=dict)

    @property
    def defined(self) -> bool:
        return abs(self.overlap) >= ZERO_TOL

    def projector_sum(self) -> complex:
        parts = list(self.segments.values()) + list(self.terminals.values())
        return sum((s.overlap for s in parts), 0j)

    def to_dict(self) -> dict:
        def pair(z):
            return None if z is None else [z.real, z.imag]

        return {
            "cut": self.cut,
            "index": self.index,
            "overlap": pair(self.overlap),
            "defined": self.defined,
            "segments": {
                k: {"forward": pair(v.forward), "backward": pair(v.backward),
                    "weak_value": pair(v.weak_value)}
                for k, v in self.segments.items()
            },
            "terminals": {
                k: {"forward": pair(v.forward), "backward": pair(v.backward),
                    "weak_value": pair(v.weak_value)}
                for k, v in self.terminals.items()
            },
        }


def forward_amplitudes(circuit: Circuit) -> dict[str, complex]:
    """``<X|psi>`` for every produced segment, keyed by label."""
    seg, _ = ideal_amplitudes(circuit)
    return {circuit.label(s): a for s, a in seg.items()}


def backward_amplitudes(circuit: Circuit, detector: str) -> dict[str, complex]:
    """``<phi|X>`` for every segment, anchored on ``detector``.

    Shutters and other terminals act as projectors: nothing flows back
    through them.
    """
    if detector not in circuit.detectors:
        raise KeyError(f"unknown detector {detector!r}")
    phi: dict[str, complex] = {}
    for el in reversed(circuit.elements):
        if isinstance(el, Detector):
            phi[el.inputs[0]] = 1 + 0j if el.name == detector else 0j
        elif isinstance(el, Shutter):
            phi[el.inputs[0]] = 0j
        elif isinstance(el, LINEAR):
            u = el.matrix()
            outs = [phi.get(s, 0j) for s in el.outputs]
            for i, s in enumerate(el.inputs):
                if s is not None:
                    phi[s] = complex(sum(outs[j] * u[j, i] for j in range(len(outs))))
    for s in circuit.open_ports:
        phi.setdefault(s, 0j)
    return {circuit.label(s): phi.get(s, 0j) for s in circuit.segment_map}


def forward_state(circuit: Circuit, cut: Union[str, int]) -> dict[str, complex]:
    """Forward-evolving amplitudes of the segments in flight at ``cut``."""
    amps = forward_amplitudes(circuit)
    return {circuit.label(s): amps.get(circuit.label(s), 0j) for s in circuit.alive_at(cut)}


def backward_state(circuit: Circuit, detector: str, cut: Union[str, int]) -> dict[str, complex]:
    """Backward-evolving amplitudes from ``detector`` at ``cut``."""
    amps = backward_amplitudes(circuit, detector)
    return {circuit.label(s): amps[circuit.label(s)] for s in circuit.alive_at(cut)}


def weak_values(circuit: Circuit, detector: str) -> dict[str, complex | None]:
    """Weak value of each segment projector; ``None`` on a dark detector."""
    fwd = forward_amplitudes(circuit)
    bwd = backward_amplitudes(circuit, detector)
    total = ideal_amplitudes(circuit)[1][detector]
    if abs(total) < ZERO_TOL:
        return {k: None for k in bwd}
    return {k: bwd[k] * fwd.get(k, 0j) / total for k in bwd}


def overlap_map(
    circuit: Circuit, detector: str, cuts: Sequence[Union[str, int]] | None = None
) -> list[TwoStateCut]:
    """Two-state description at every time slice (or the requested ones).

    Slices are taken after each element; declared cut names are used where
    they exist, otherwise ``t<index>``.
    """
    validate_circuit(circuit).raise_for_violations()
    seg_fwd, out_amp = ideal_amplitudes(circuit)
    if detector not in out_amp:
        raise KeyError(f"unknown detector {detector!r}")
    total = out_amp[detector]
    bwd = backward_amplitudes(circuit, detector)
    names = {k: n for n, k in circuit.cuts.items()}
    wanted = None if cuts is None else {circuit.cut_index(c) for c in cuts}
    dark = abs(total) < ZERO_TOL

    result = []
    alive: dict[str, None] = {}
    reached: dict[str, SegmentTwoState] = {}
    for k, el in enumerate(circuit.elements, start=1):
        for s in el.inputs:
            if s is not None:
                alive.pop(s, None)
        if isinstance(el, (Detector, Shutter)):
            f = seg_fwd.get(el.inputs[0], 0j)
            hit = isinstance(el, Detector) and el.name == detector
            key = el.name if isinstance(el, Detector) else f"absorbed:{circuit.label(el.inputs[0])}"
            b = 1 + 0j if hit else 0j
            reached[key] = SegmentTwoState(f, b, None if dark else b * f / total)
        for s in el.outputs:
            alive[s] = None
        if wanted is not None and k not in wanted:
            continue
        if wanted is None and not el.outputs and k not in names:
            continue
        segs = {}
        for s in alive:
            lab = circuit.label(s)
            f, b = seg_fwd.get(s, 0j), bwd[lab]
            segs[lab] = SegmentTwoState(f, b, None if dark else b * f / total)
        result.append(TwoStateCut(names.get(k, f"t{k}"), k, total, segs, dict(reached)))
    return result


def presence_map(circuit: Circuit, detector: str, tol: float = 1e-12) -> dict[str, bool]:
    """Segments whose forward and backward waves overlap (first-order trace)."""
    wv = weak_values(circuit, detector)
    return {k: v is not None and abs(v) > tol for k, v in wv.items()}


def overlap_map_csv(cuts: Sequence[TwoStateCut], tol: float = 1e-12) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MAP_COLUMNS)
    for c in cuts:
        for lab, s in c.segments.items():
            wv = s.weak_value
            w.writerow([
                c.cut, lab, repr(s.forward.real), repr(s.forward.imag),
                repr(s.backward.real), repr(s.backward.imag),
                "" if wv is None else repr(wv.real), "" if wv is None else repr(wv.imag),
                int(wv is not None), int(wv is not None and abs(wv) > tol),
            ])
    return buf.getvalue()


def overlap_map_json(cuts: Sequence[TwoStateCut]) -> str:
    return json.dumps([c.to_dict() for c in cuts], sort_keys=True)


def reverse_circuit(circuit: Circuit, detector: str) -> Circuit:
    """Time-reversed circuit launched from ``detector``.

    Elements run in reverse order with transposed transfer matrices; the
    original source becomes a detector named ``"<source>"``. Forward
    amplitudes of the result equal the backward amplitudes of the original.
    """
    src_seg = circuit.source.outputs[0]
    det_el = next(e for e in circuit.elements if isinstance(e, Detector) and e.name == detector)
    dead = {
        e.inputs[0]
        for e in circuit.elements
        if isinstance(e, (Detector, Shutter)) and e is not det_el
    } | set(circuit.open_ports)

    b = CircuitBuilder(f"{circuit.name}-reversed")
    b.add(Source((det_el.inputs[0],)))
    for i, el in reversed(list(enumerate(circuit.elements))):
        if not isinstance(el, LINEAR):
            continue
        ins = tuple(None if s in dead else s for s in el.outputs)
        if all(s is None for s in ins):
            # nothing can arrive here from the detector
            dead.update(s for s in el.inputs if s is not None)
            continue
        outs = []
        for p, s in enumerate(el.inputs):
            if s is None:
                s = b.seg(f"vacuum[{i}.{p}]")
                b.open_port(s)
            outs.append(s)
        outs = tuple(outs)
        if isinstance(el, BeamSplitter):
            b.add(BeamSplitter(ins, outs, -el.theta, el.name))
        elif isinstance(el, DoubleSidedMirror):
            b.add(DoubleSidedMirror(ins, outs, el.name))
        elif isinstance(el, Mirror):
            b.add(Mirror(ins, outs, el.name))
        elif isinstance(el, PhaseShift):
            b.add(PhaseShift(ins, outs, el.phi, el.name))
    b.add(Detector((src_seg,), "<source>"))
    used = {s for e in b._elements for s in (*e.inputs, *e.outputs) if s is not None}
    for seg in circuit.segments:
        if seg.id in used:
            b._segments[seg.id] = seg
    # segments whose only route led into dead ends are never consumed
    consumed = {s for e in b._elements for s in e.inputs if s is not None}
    for s in list(b._segments):
        if s not in consumed and s not in b._open:
            b.open_port(s)
    return b.build()
