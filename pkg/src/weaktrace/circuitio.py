"""JSON circuit description files.

Format (all keys except ``elements`` and ``segments`` optional)::

    {
      "name": "ifm",
      "segments": [{"id": "A", "label": "A", "channel": true}, ...],
      "elements": [
        {"type": "source", "outputs": ["in"]},
        {"type": "beam_splitter", "inputs": ["in", null], "outputs": ["A", "B"],
         "theta": 0.785398, "name": "BS1"},
        {"type": "beam_splitter", "inputs": [...], "outputs": [...], "ratio": [1, 2]},
        {"type": "mirror", "inputs": ["A"], "outputs": ["a"]},
        {"type": "double_sided_mirror", "inputs": [...], "outputs": [...]},
        {"type": "phase", "inputs": ["a"], "outputs": ["a2"], "phi": 3.14159},
        {"type": "shutter", "inputs": ["B"]},
        {"type": "detector", "inputs": ["d"], "name": "D"}
      ],
      "cuts": {"mid": 2},
      "open_ports": [],
      "dark_ports": ["D"]
    }

A segment given as a bare string is a non-channel segment whose id and
label coincide.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Mapping

from .circuits import BUILTINS
from .optics import (
    BeamSplitter,
    Circuit,
    CircuitError,
    Detector,
    DoubleSidedMirror,
    Mirror,
    PathSegment,
    PhaseShift,
    Shutter,
    Source,
    validate_circuit,
)

FORMAT_VERSION = 1

_TYPES = {
    BeamSplitter: "beam_splitter",
    Mirror: "mirror",
    DoubleSidedMirror: "double_sided_mirror",
    PhaseShift: "phase",
    Shutter: "shutter",
    Detector: "detector",
    Source: "source",
}


def _tuple(x) -> tuple:
    return tuple(x) if x is not None else ()


def element_from_dict(d: Mapping[str, Any]):
    kind = d.get("type")
    ins, outs, name = _tuple(d.get("inputs")), _tuple(d.get("outputs")), d.get("name", "")
    if kind == "beam_splitter":
        if "ratio" in d:
            cont, div = d["ratio"]
            return BeamSplitter.from_ratio(ins, outs, cont, div, name)
        return BeamSplitter(ins, outs, float(d.get("theta", math.pi / 4)), name)
    if kind == "mirror":
        return Mirror(ins, outs, name)
    if kind == "double_sided_mirror":
        return DoubleSidedMirror(ins, outs, name)
    if kind == "phase":
        return PhaseShift(ins, outs, float(d.get("phi", 0.0)), name)
    if kind == "shutter":
        return Shutter(ins, (), name)
    if kind == "detector":
        if not name:
            raise CircuitError(["detector without a name"])
        return Detector(ins, name)
    if kind == "source":
        return Source(outs, (), name or "source")
    raise CircuitError([f"unknown element type {kind!r}"])


def element_to_dict(el) -> dict:
    d: dict[str, Any] = {"type": _TYPES[type(el)]}
    if el.inputs:
        d["inputs"] = list(el.inputs)
    if el.outputs:
        d["outputs"] = list(el.outputs)
    if isinstance(el, BeamSplitter):
        d["theta"] = el.theta
    elif isinstance(el, PhaseShift):
        d["phi"] = el.phi
    if el.name:
        d["name"] = el.name
    return d


def circuit_from_dict(data: Mapping[str, Any], validate: bool = True) -> Circuit:
    segs = []
    for s in data.get("segments", ()):
        if isinstance(s, str):
            segs.append(PathSegment(s, s, False))
        else:
            sid = s["id"]
            segs.append(PathSegment(sid, s.get("label", sid), bool(s.get("channel", False))))
    circuit = Circuit(
        tuple(segs),
        tuple(element_from_dict(e) for e in data["elements"]),
        data.get("name", ""),
        dict(data.get("cuts", {})),
        _tuple(data.get("open_ports")),
        _tuple(data.get("dark_ports")),
    )
    if validate:
        validate_circuit(circuit).raise_for_violations()
    return circuit


def circuit_to_dict(circuit: Circuit) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "name": circuit.name,
        "segments": [
            {"id": s.id, "label": s.label, "channel": s.channel} for s in circuit.segments
        ],
        "elements": [element_to_dict(e) for e in circuit.elements],
        "cuts": dict(circuit.cuts),
        "open_ports": list(circuit.open_ports),
        "dark_ports": list(circuit.dark_ports),
    }


def load_circuit(path_or_name: str | Path) -> Circuit:
    """Built-in circuit by name, or a JSON circuit file."""
    if str(path_or_name) in BUILTINS:
        return BUILTINS[str(path_or_name)]()
    path = Path(path_or_name)
    if not path.exists():
        raise FileNotFoundError(
            f"no circuit file {str(path)!r} and no built-in of that name; "
            f"built-ins: {', '.join(sorted(BUILTINS))}"
        )
    return circuit_from_dict(json.loads(path.read_text()))


def save_circuit(circuit: Circuit, path: str | Path) -> None:
    Path(path).write_text(json.dumps(circuit_to_dict(circuit), indent=2, sort_keys=True) + "\n")
