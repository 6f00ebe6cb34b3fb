"""Optical circuits and propagation of photon-plus-environment states.

A circuit is a time-ordered list of elements wired together by path
segments. Each segment is produced by exactly one element and consumed by
at most one, so the wiring is a DAG and a photon can cross any segment at
most once. Segments flagged as channels carry a two-state environment that
the photon nudges from ``|chi>`` toward ``|chi_perp>`` as it passes.

The joint state is stored sparsely as ``location -> {excited -> amplitude}``
where ``excited`` is the set of channels left in ``|chi_perp>`` and the
amplitude is an :class:`~weaktrace.epspoly.EpsPolynomial`.
"""

from __future__ import annotations

import cmath
import contextlib
import gc
import graphlib
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from .epspoly import ZERO_TOL, EpsPolynomial

UNITARITY_TOL = 1e-12


class CircuitError(ValueError):
    """Raised when a circuit fails validation."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid circuit: " + "; ".join(self.violations))


class CouplingError(RuntimeError):
    pass


class DarkPortError(RuntimeError):
    """Post-selection on an outcome that has zero amplitude at every order."""

    def __init__(self, outcome: str, message: str | None = None):
        self.outcome = outcome
        super().__init__(message or f"postselected on dark port {outcome!r}")


@contextlib.contextmanager
def paused_gc():
    """Suspend the cyclic collector during bulk allocation of acyclic data."""
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


# --------------------------------------------------------------------------
# segments and elements


class PathSegment(NamedTuple):
    id: str
    label: str
    channel: bool = False


Port = Optional[str]


class BeamSplitter(NamedTuple):
    """Real rotation ``[[cos t, -sin t], [sin t, cos t]]`` from inputs to outputs.

    ``None`` in ``inputs`` marks an unused (vacuum) port.
    """

    inputs: tuple[Port, Port]
    outputs: tuple[str, str]
    theta: float = math.pi / 4
    name: str = ""

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]], dtype=complex)

    @classmethod
    def from_ratio(cls, inputs, outputs, continuing: float, diverted: float, name=""):
        """Splitter sending power ``continuing:diverted`` to outputs 0 and 1."""
        theta = math.atan2(math.sqrt(diverted), math.sqrt(continuing))
        return cls(tuple(inputs), tuple(outputs), theta, name)


class Mirror(NamedTuple):
    inputs: tuple[str]
    outputs: tuple[str]
    name: str = ""

    def matrix(self) -> np.ndarray:
        return np.eye(1, dtype=complex)


class DoubleSidedMirror(NamedTuple):
    """Two independent reflections, one per face; the faces never mix."""

    inputs: tuple[Port, Port]
    outputs: tuple[str, str]
    name: str = ""

    def matrix(self) -> np.ndarray:
        return np.eye(2, dtype=complex)


class PhaseShift(NamedTuple):
    inputs: tuple[str]
    outputs: tuple[str]
    phi: float = 0.0
    name: str = ""

    def matrix(self) -> np.ndarray:
        return np.array([[cmath.exp(1j * self.phi)]])


class Shutter(NamedTuple):
    inputs: tuple[str]
    outputs: tuple[()] = ()
    name: str = ""


class Detector(NamedTuple):
    inputs: tuple[str]
    name: str
    outputs: tuple[()] = ()


class Source(NamedTuple):
    outputs: tuple[str]
    inputs: tuple[()] = ()
    name: str = "source"


OpticalElement = Union[
    BeamSplitter, Mirror, DoubleSidedMirror, PhaseShift, Shutter, Detector, Source
]
LINEAR = (BeamSplitter, Mirror, DoubleSidedMirror, PhaseShift)

# kind -> (inputs, outputs, inputs must be non-empty, linear)
_KIND_INFO = {
    BeamSplitter: (2, 2, False, True),
    DoubleSidedMirror: (2, 2, False, True),
    Mirror: (1, 1, True, True),
    PhaseShift: (1, 1, True, True),
    Shutter: (1, 0, True, False),
    Detector: (1, 0, True, False),
    Source: (0, 1, False, False),
}


def absorbed_name(label: str) -> str:
    return f"absorbed:{label}"


def open_port_name(label: str) -> str:
    return f"open:{label}"


# --------------------------------------------------------------------------
# circuits


@dataclass(frozen=True)
class Circuit:
    segments: tuple[PathSegment, ...]
    elements: tuple[OpticalElement, ...]
    name: str = ""
    cuts: Mapping[str, int] = field(default_factory=dict)
    open_ports: tuple[str, ...] = ()
    dark_ports: tuple[str, ...] = ()

    @cached_property
    def segment_map(self) -> dict[str, PathSegment]:
        return {s.id: s for s in self.segments}

    @cached_property
    def channels(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.segments if s.channel)

    def label(self, seg_id: str) -> str:
        return self.segment_map[seg_id].label

    def find(self, label: str) -> str:
        """Segment id for a label."""
        for s in self.segments:
            if s.label == label:
                return s.id
        raise KeyError(f"no segment labelled {label!r}")

    @property
    def source(self) -> Source:
        return next(e for e in self.elements if isinstance(e, Source))

    @property
    def detectors(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.elements if isinstance(e, Detector))

    @cached_property
    def producer(self) -> dict[str, int]:
        out = {}
        for i, el in enumerate(self.elements):
            for s in el.outputs:
                out.setdefault(s, i)
        return out

    @cached_property
    def consumer(self) -> dict[str, int]:
        out = {}
        for i, el in enumerate(self.elements):
            for s in el.inputs:
                if s is not None:
                    out.setdefault(s, i)
        return out

    @cached_property
    def terminals(self) -> tuple[str, ...]:
        names = []
        for el in self.elements:
            if isinstance(el, Detector):
                names.append(el.name)
            elif isinstance(el, Shutter):
                names.append(absorbed_name(self.label(el.inputs[0])))
        names += [open_port_name(self.label(s)) for s in self.open_ports]
        return tuple(names)

    def cut_index(self, cut: Union[str, int]) -> int:
        if isinstance(cut, int):
            return cut
        if cut in self.cuts:
            return self.cuts[cut]
        if cut.startswith("t") and cut[1:].isdigit():
            return int(cut[1:])
        raise KeyError(f"unknown cut {cut!r}")

    def alive_at(self, cut: Union[str, int]) -> list[str]:
        """Segments in flight after the first ``cut`` elements have acted."""
        k = self.cut_index(cut)
        return [
            s.id
            for s in self.segments
            if s.id in self.producer
            and self.producer[s.id] < k
            and self.consumer.get(s.id, len(self.elements)) >= k
        ]

    def ancestors(self, seg_id: str) -> set[str]:
        """All segments the photon may have crossed before reaching ``seg_id``."""
        seen: set[str] = set()
        stack = [seg_id]
        while stack:
            s = stack.pop()
            el = self.elements[self.producer[s]]
            for i in el.inputs:
                if i is not None and i not in seen:
                    seen.add(i)
                    stack.append(i)
        return seen


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def raise_for_violations(self) -> None:
        if self.violations:
            raise CircuitError(self.violations)


def _element_tag(i: int, el) -> str:
    return f"element {i} ({type(el).__name__}{' ' + el.name if el.name else ''})"


def validate_circuit(circuit: Circuit) -> ValidationResult:
    with paused_gc():
        return _validate(circuit)


def _validate(circuit: Circuit) -> ValidationResult:
    """Check wiring, arity, acyclicity and splitter unitarity.

    Every violation is reported; nothing is partially accepted.
    """
    v: list[str] = []
    ids = [s.id for s in circuit.segments]
    labels = [s.label for s in circuit.segments]
    for dup in sorted(x for x, n in Counter(ids).items() if n > 1):
        v.append(f"segment id {dup!r} declared twice")
    for dup in sorted(x for x, n in Counter(labels).items() if n > 1):
        v.append(f"segment label {dup!r} not unique")
    known = set(ids)

    produced: dict[str, int] = {}
    consumed: dict[str, int] = {}
    early: list[tuple[str, int]] = []  # consumed before any producer was seen
    sources = 0
    unitary_ok: dict = {}
    open_ports = set(circuit.open_ports)
    for i, el in enumerate(circuit.elements):
        kind = type(el)
        info = _KIND_INFO.get(kind)
        if info is None:
            v.append(f"{_element_tag(i, el)}: unknown element kind")
            continue
        n_in, n_out, no_empty, linear = info
        ins, outs = el.inputs, el.outputs
        if len(ins) != n_in or len(outs) != n_out:
            v.append(
                f"{_element_tag(i, el)}: expected {n_in} inputs/{n_out} outputs, "
                f"got {len(ins)}/{len(outs)}"
            )
        if kind is Source:
            sources += 1
        elif no_empty and None in ins:
            v.append(f"{_element_tag(i, el)}: input port may not be empty")
        if linear:
            key = (kind, el.theta) if kind is BeamSplitter else (
                (kind, el.phi) if kind is PhaseShift else kind)
            ok = unitary_ok.get(key)
            if ok is None:
                u = el.matrix()
                ok = unitary_ok[key] = bool(np.all(np.isfinite(u))) and np.allclose(
                    u @ u.conj().T, np.eye(u.shape[0]), atol=UNITARITY_TOL
                )
            if not ok:
                v.append(f"{_element_tag(i, el)}: transfer matrix is not unitary")
        for s in ins:
            if s is None:
                continue
            if s in consumed:
                v.append(f"segment {s!r} consumed twice (elements {consumed[s]} and {i})")
            else:
                consumed[s] = i
                if s not in produced:
                    early.append((s, i))
        for s in outs:
            if s in produced:
                v.append(f"segment {s!r} produced twice (elements {produced[s]} and {i})")
            else:
                produced[s] = i

    for s in sorted((consumed.keys() | produced.keys()) - known):
        v.append(f"unknown segment {s!r} referenced by element "
                 f"{consumed.get(s, produced.get(s))}")
    if sources != 1:
        v.append(f"circuit needs exactly one source, found {sources}")
    for s in ids:
        if s not in produced:
            v.append(f"segment {s!r} has no producing element")
        elif s not in consumed and s not in open_ports:
            v.append(f"segment {s!r} is never consumed and not a declared open port")
    for s in circuit.open_ports:
        if s in consumed:
            v.append(f"open port {s!r} is consumed by element {consumed[s]}")
    out_of_order = False
    for s, i in early:
        if s in produced:
            out_of_order = True
            v.append(f"segment {s!r} consumed by element {i} before it is produced")
    # time order already proves acyclicity; only search for a cycle otherwise
    if out_of_order:
        graph: dict[int, set[int]] = {i: set() for i in range(len(circuit.elements))}
        for s, i in consumed.items():
            if s in produced:
                graph[i].add(produced[s])
        try:
            tuple(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            v.append(f"element graph has a cycle through elements {exc.args[1]}")

    names = list(circuit.detectors)
    for dup in sorted(x for x, n in Counter(names).items() if n > 1):
        v.append(f"detector name {dup!r} not unique")
    for d in circuit.dark_ports:
        if d not in names:
            v.append(f"declared dark port {d!r} is not a detector")
    for cname, k in circuit.cuts.items():
        if not 0 <= k <= len(circuit.elements):
            v.append(f"cut {cname!r} index {k} out of range")
    return ValidationResult(tuple(v))


class CircuitBuilder:
    """Incremental construction helper; segment ids equal their labels."""

    def __init__(self, name: str = ""):
        self.name = name
        self._segments: dict[str, PathSegment] = {}
        self._elements: list[OpticalElement] = []
        self._cuts: dict[str, int] = {}
        self._open: list[str] = []
        self._dark: list[str] = []

    def seg(self, label: str, channel: bool = False) -> str:
        if label in self._segments:
            raise ValueError(f"segment {label!r} already exists")
        self._segments[label] = PathSegment(label, label, channel)
        return label

    def add(self, element: OpticalElement) -> OpticalElement:
        self._elements.append(element)
        return element

    def cut(self, name: str) -> None:
        self._cuts[name] = len(self._elements)

    def open_port(self, seg_id: str) -> None:
        self._open.append(seg_id)

    def dark(self, detector: str) -> None:
        self._dark.append(detector)

    def build(self, validate: bool = True) -> Circuit:
        c = Circuit(
            tuple(self._segments.values()),
            tuple(self._elements),
            self.name,
            dict(self._cuts),
            tuple(self._open),
            tuple(self._dark),
        )
        if validate:
            validate_circuit(c).raise_for_violations()
        return c


# --------------------------------------------------------------------------
# joint states


class Outcome(NamedTuple):
    """Location key for a terminal outcome (detector, absorber, open port)."""

    name: str


Location = Union[str, Outcome]
Bucket = dict  # frozenset[str] -> EpsPolynomial


@dataclass(frozen=True)
class JointState:
    """Sparse photon-plus-environment state.

    ``terms`` maps a location (segment id or :class:`Outcome`) to a map from
    excited-channel sets to amplitudes. Treat instances as immutable.
    """

    terms: Mapping[Location, Mapping[frozenset, EpsPolynomial]]
    max_order: int = 2
    eps: float = 0.0
    outcome_names: tuple[str, ...] = ()
    overflow: tuple[tuple[str, tuple[str, ...]], ...] = ()
    dropped: int = 0

    def outcome(self, name: str) -> Mapping[frozenset, EpsPolynomial]:
        return self.terms.get(Outcome(name), {})

    @property
    def outcomes(self) -> tuple[str, ...]:
        return self.outcome_names

    def probability(self, name: str) -> EpsPolynomial:
        total = EpsPolynomial.zero(self.max_order)
        for amp in self.outcome(name).values():
            total = total + amp.abs2()
        return total

    def probabilities(self) -> dict[str, EpsPolynomial]:
        return {n: self.probability(n) for n in self.outcome_names}

    def total_probability(self) -> EpsPolynomial:
        total = EpsPolynomial.zero(self.max_order)
        for bucket in self.terms.values():
            for amp in bucket.values():
                total = total + amp.abs2()
        return total

    def iter_terms(self):
        for loc, bucket in self.terms.items():
            for exc, amp in bucket.items():
                yield loc, exc, amp

    def evaluate(self, eps: float | None = None) -> dict[tuple[Location, frozenset], complex]:
        e = self.eps if eps is None else eps
        return {(loc, exc): amp(e) for loc, exc, amp in self.iter_terms()}


def _couple_bucket(
    bucket: Bucket,
    channel: str,
    eta: EpsPolynomial,
    max_order: int,
    overflow: list | None,
    where: str,
) -> tuple[Bucket, int]:
    out: Bucket = {}
    dropped = 0
    for exc, amp in bucket.items():
        if channel in exc:
            raise CouplingError(f"channel {channel!r} coupled twice on the same term")
        out[exc] = out[exc] + amp * eta if exc in out else amp * eta
        if len(exc) + 1 > max_order:
            dropped += 1
            if overflow is not None:
                overflow.append((where, tuple(sorted(exc | {channel}))))
            continue
        new = exc | {channel}
        kicked = amp.shift(1)
        out[new] = out[new] + kicked if new in out else kicked
    return out, dropped


def couple(state: JointState, channel: str, eps: float | None = None) -> JointState:
    """Apply ``|chi> -> eta|chi> + eps|chi_perp>`` on terms sitting on ``channel``."""
    e = state.eps if eps is None else eps
    if e == 0:
        return state
    terms = dict(state.terms)
    bucket = terms.get(channel)
    if not bucket:
        return state
    overflow: list = []
    new_bucket, dropped = _couple_bucket(
        bucket, channel, EpsPolynomial.eta(state.max_order), state.max_order, overflow, channel
    )
    terms[channel] = new_bucket
    return JointState(
        terms,
        state.max_order,
        e,
        state.outcome_names,
        state.overflow + tuple(overflow),
        state.dropped + dropped,
    )


def _apply_linear(terms: dict, el, matrix: np.ndarray) -> None:
    ins = [terms.pop(s, None) if s is not None else None for s in el.inputs]
    for j, out_seg in enumerate(el.outputs):
        acc: Bucket = {}
        for i, bucket in enumerate(ins):
            if not bucket:
                continue
            u = matrix[j, i]
            if u == 0:
                continue
            for exc, amp in bucket.items():
                contrib = amp * u
                acc[exc] = acc[exc] + contrib if exc in acc else contrib
        if acc:
            terms[out_seg] = acc


def propagate(
    circuit: Circuit,
    eps: float = 0.0,
    coupling_on: Iterable[str] | None = None,
    max_order: int = 2,
    strict: bool = False,
    validate: bool = True,
) -> JointState:
    """Run a single photon from the source to its terminal outcomes.

    Each time amplitude is placed on a coupled channel segment the
    environment map is applied once. With ``eps == 0`` no coupling happens
    and the result is the ideal interferometer. ``coupling_on`` defaults to
    every channel segment. In ``strict`` mode terms pushed past
    ``max_order`` excitations are recorded in ``JointState.overflow``.
    """
    if not 0 <= eps < 1:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    if validate:
        validate_circuit(circuit).raise_for_violations()
    coupled = set(circuit.channels if coupling_on is None else coupling_on)
    unknown = coupled - set(circuit.channels)
    if unknown:
        raise ValueError(f"not channel segments: {sorted(unknown)}")
    if eps == 0:
        coupled = set()
    eta = EpsPolynomial.eta(max_order)
    overflow: list | None = [] if strict else None
    dropped = 0
    terms: dict = {}
    for el in circuit.elements:
        if isinstance(el, Source):
            terms[el.outputs[0]] = {frozenset(): EpsPolynomial.constant(1.0, max_order)}
        elif isinstance(el, LINEAR):
            _apply_linear(terms, el, el.matrix())
        elif isinstance(el, Shutter):
            bucket = terms.pop(el.inputs[0], None)
            if bucket:
                terms[Outcome(absorbed_name(circuit.label(el.inputs[0])))] = bucket
            continue
        elif isinstance(el, Detector):
            bucket = terms.pop(el.inputs[0], None)
            if bucket:
                terms[Outcome(el.name)] = bucket
            continue
        for s in el.outputs:
            if s in coupled and s in terms:
                terms[s], d = _couple_bucket(terms[s], s, eta, max_order, overflow, s)
                dropped += d
    for s in circuit.open_ports:
        if s in terms:
            terms[Outcome(open_port_name(circuit.label(s)))] = terms.pop(s)
    return JointState(
        terms, max_order, eps, circuit.terminals, tuple(overflow or ()), dropped
    )


def postselect(state: JointState, outcome: str) -> tuple[JointState, EpsPolynomial]:
    """Restrict to one terminal outcome without renormalising.

    Returns the conditional environment state and the outcome probability as
    a polynomial in eps. Raises :class:`DarkPortError` when the outcome has
    zero amplitude at every tracked order.
    """
    if outcome not in state.outcome_names:
        raise KeyError(f"unknown outcome {outcome!r}; have {list(state.outcome_names)}")
    bucket = {e: a for e, a in state.outcome(outcome).items() if not a.is_zero()}
    if not bucket:
        raise DarkPortError(outcome)
    cond = JointState(
        {Outcome(outcome): bucket}, state.max_order, state.eps, (outcome,)
    )
    return cond, cond.probability(outcome)


# --------------------------------------------------------------------------
# eps = 0 amplitudes


def ideal_amplitudes(
    circuit: Circuit, record_segments: bool = True
) -> tuple[dict[str, complex], dict[str, complex]]:
    """Plain complex amplitudes with the environment switched off.

    Returns ``(segment_amplitudes, outcome_amplitudes)``; much faster than
    :func:`propagate` and used for long chains and calibration. Segment
    amplitudes are skipped (empty dict) when ``record_segments`` is false.
    """
    with paused_gc():
        return _ideal_amplitudes(circuit, record_segments)


def _ideal_amplitudes(circuit: Circuit, record: bool):
    live: dict[str, complex] = {}
    seg_amp: dict[str, complex] = {}
    out_amp: dict[str, complex] = {name: 0j for name in circuit.terminals}
    rotations: dict[float, tuple[float, float]] = {}
    pop = live.pop
    for el in circuit.elements:
        kind = type(el)
        if kind is BeamSplitter:
            cs = rotations.get(el.theta)
            if cs is None:
                cs = rotations[el.theta] = (math.cos(el.theta), math.sin(el.theta))
            c, s = cs
            i0, i1 = el.inputs
            x0 = pop(i0, 0j) if i0 is not None else 0j
            x1 = pop(i1, 0j) if i1 is not None else 0j
            o0, o1 = el.outputs
            live[o0] = y0 = c * x0 - s * x1
            live[o1] = y1 = s * x0 + c * x1
            if record:
                seg_amp[o0] = y0
                seg_amp[o1] = y1
        elif kind is Shutter:
            out_amp[absorbed_name(circuit.label(el.inputs[0]))] = pop(el.inputs[0], 0j)
        elif kind is Detector:
            out_amp[el.name] = pop(el.inputs[0], 0j)
        elif kind is Source:
            live[el.outputs[0]] = 1 + 0j
            if record:
                seg_amp[el.outputs[0]] = 1 + 0j
        else:
            m = el.matrix()
            ins = [pop(x, 0j) if x is not None else 0j for x in el.inputs]
            for j, o in enumerate(el.outputs):
                y = complex(sum(m[j, i] * x for i, x in enumerate(ins)))
                live[o] = y
                if record:
                    seg_amp[o] = y
    for s in circuit.open_ports:
        out_amp[open_port_name(circuit.label(s))] = pop(s, 0j)
    return seg_amp, out_amp


def is_dark(amplitude: complex, tol: float = ZERO_TOL) -> bool:
    return abs(amplitude) < tol
