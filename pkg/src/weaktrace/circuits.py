"""The four reference interferometers.

Splitter convention: ``BeamSplitter`` maps ``(in0, in1)`` through
``[[cos t, -sin t], [sin t, cos t]]`` onto ``(out0, out1)``. A splitter
called "1:k" sends power ``1/(1+k)`` into out0 and ``k/(1+k)`` into out1.

Nested interferometer layout (``nested_mzi``)::

    source -BS(1:2)-+- C ------------------------------+
                    +- E -BS(1:1)-+- A -mirror-+        BS(1:2) - D, D'
                                  +- B -mirror-+-BS- F -+
                                                 +- L (inner dark-port exit)

The inner interferometer is dark toward ``F`` and the outer one is dark at
``D`` when ``B`` is blocked. ``modified_nested`` inserts a second inner
interferometer (``E'``, ``A'``, ``B'``, ``F'``) after ``F``, joined by a
double-sided mirror whose other face folds arm ``C``.

Zeno chains follow the nested-Zeno construction: each of ``N`` outer
splitters rotates Alice's mode into the probe mode by ``pi/(2N)``; the
probe then runs through ``M`` inner splitters rotating by ``pi/(2M)`` into
Bob's arms ``C[k,j]``, each of which either ends at a shutter or is
reflected back. Without shutters the inner chain carries the probe mode
completely into Bob's arms and out to the loss detector ``L[k]``, which
projects the outer mode back onto Alice's side. The modified element
doubles every inner chain (Bob's arms ``C'[k,j]``, loss ``L'[k]``) behind a
double-sided mirror.
"""

from __future__ import annotations

import math
from typing import Callable

from .optics import (
    BeamSplitter,
    Circuit,
    CircuitBuilder,
    Detector,
    DoubleSidedMirror,
    Mirror,
    PathSegment,
    Shutter,
    Source,
    paused_gc,
)

DEFECT_SCOPES = ("outer", "inner", "all")


def ratio_angle(continuing: float, diverted: float) -> float:
    return math.atan2(math.sqrt(diverted), math.sqrt(continuing))


def _defect(scope: str, role: str, delta: float) -> float:
    if scope not in DEFECT_SCOPES:
        raise ValueError(f"defect scope must be one of {DEFECT_SCOPES}, got {scope!r}")
    return delta if scope in ("all", role) else 0.0


def ifm(shutter: bool = True) -> Circuit:
    """Mach-Zehnder interaction-free measurement; optional shutter in arm B."""
    b = CircuitBuilder("ifm" if shutter else "ifm-open")
    s = b.seg("in")
    b.add(Source((s,)))
    A, B = b.seg("A", True), b.seg("B", True)
    b.add(BeamSplitter((s, None), (A, B), math.pi / 4, "BS1"))
    b.cut("mid")
    a = b.seg("a")
    b.add(Mirror((A,), (a,), "MA"))
    d, d2 = b.seg("d"), b.seg("d'")
    if shutter:
        b.add(Shutter((B,), name="SB"))
        b.add(BeamSplitter((a, None), (d, d2), math.pi / 4, "BS2"))
    else:
        bb = b.seg("b")
        b.add(Mirror((B,), (bb,), "MB"))
        b.add(BeamSplitter((a, bb), (d, d2), math.pi / 4, "BS2"))
        b.dark("D")
    b.add(Detector((d,), "D"))
    b.add(Detector((d2,), "D'"))
    return b.build()


def _inner_mzi(b: CircuitBuilder, entry: str, tag: str, blocked: bool, delta: float,
               loss: str, mid_cut: bool = False) -> str:
    """Balanced interferometer dark toward its continuation; returns that segment."""
    A, B = b.seg(f"A{tag}", True), b.seg(f"B{tag}", True)
    b.add(BeamSplitter((entry, None), (A, B), math.pi / 4 + delta, f"BSi1{tag}"))
    if mid_cut:
        b.cut("mid")
    a = b.seg(f"a{tag}")
    b.add(Mirror((A,), (a,), f"MA{tag}"))
    F, l = b.seg(f"F{tag}", True), b.seg(f"l{tag}")
    if blocked:
        b.add(Shutter((B,), name=f"SB{tag}"))
        b.add(BeamSplitter((a, None), (F, l), math.pi / 4 + delta, f"BSi2{tag}"))
    else:
        bb = b.seg(f"b{tag}")
        b.add(Mirror((B,), (bb,), f"MB{tag}"))
        b.add(BeamSplitter((a, bb), (F, l), math.pi / 4 + delta, f"BSi2{tag}"))
    b.add(Detector((l,), loss))
    return F


def nested_mzi(blocked: bool = False, defect: float = 0.0, defect_scope: str = "outer") -> Circuit:
    """Interferometer with an inner MZI in its lower arm; 1:2 outer splitters."""
    b = CircuitBuilder("nested_mzi-blocked" if blocked else "nested_mzi")
    theta = ratio_angle(1, 2) + _defect(defect_scope, "outer", defect)
    inner = _defect(defect_scope, "inner", defect)
    s = b.seg("in")
    b.add(Source((s,)))
    C, E = b.seg("C", True), b.seg("E", True)
    b.add(BeamSplitter((s, None), (C, E), theta, "BSo1"))
    F = _inner_mzi(b, E, "", blocked, inner, "L", mid_cut=True)
    d, d2 = b.seg("d"), b.seg("d'")
    b.add(BeamSplitter((C, F), (d, d2), theta, "BSo2"))
    b.add(Detector((d,), "D"))
    b.add(Detector((d2,), "D'"))
    if blocked:
        b.dark("D")
    return b.build()


def modified_nested(
    blocked: bool | tuple[bool, bool] = False,
    defect: float = 0.0,
    defect_scope: str = "outer",
) -> Circuit:
    """Two nested interferometers in series joined by a double-sided mirror.

    ``blocked`` may be a pair ``(B blocked, B' blocked)`` to express
    configurations outside the both-or-neither promise.
    """
    bl, bl2 = (blocked, blocked) if isinstance(blocked, bool) else blocked
    tag = "blocked" if bl and bl2 else ("open" if not (bl or bl2) else "partial")
    b = CircuitBuilder(f"modified_nested-{tag}" if tag != "open" else "modified_nested")
    theta = ratio_angle(1, 4) + _defect(defect_scope, "outer", defect)
    inner = _defect(defect_scope, "inner", defect)
    s = b.seg("in")
    b.add(Source((s,)))
    C, E = b.seg("C", True), b.seg("E", True)
    b.add(BeamSplitter((s, None), (C, E), theta, "BSo1"))
    F = _inner_mzi(b, E, "", bl, inner, "L", mid_cut=True)
    E2, C2 = b.seg("E'", True), b.seg("c")
    b.add(DoubleSidedMirror((F, C), (E2, C2), "DSM"))
    F2 = _inner_mzi(b, E2, "'", bl2, inner, "L'")
    d, d2 = b.seg("d"), b.seg("d'")
    b.add(BeamSplitter((C2, F2), (d, d2), theta, "BSo2"))
    b.add(Detector((d,), "D"))
    b.add(Detector((d2,), "D'"))
    if bl and bl2:
        b.dark("D")
    return b.build()


def _inner_chain(b: CircuitBuilder, entry: str, k: int, M: int, shutters: bool,
                 delta: float, prime: str) -> str:
    theta = math.pi / (2 * M) + delta
    probe, back = entry, None
    # hot loop for long chains: labels are unique by construction, so
    # segments go straight into the builder
    segs, add = b._segments, b._elements.append
    for j in range(1, M + 1):
        tag = f"{prime}[{k},{j}]"
        nxt, bob = "b" + tag, "C" + tag
        segs[nxt] = PathSegment(nxt, nxt, False)
        segs[bob] = PathSegment(bob, bob, True)
        add(BeamSplitter((probe, back), (nxt, bob), theta, "BSi" + tag))
        probe = nxt
        if shutters:
            add(Shutter((bob,), (), "S" + tag))
            back = None
        else:
            back = "r" + tag
            segs[back] = PathSegment(back, back, False)
            add(Mirror((bob,), (back,), "MB" + tag))
    if back is not None:
        b.add(Detector((back,), f"L{prime}[{k}]"))
    return probe


def zeno_chain(
    N: int,
    M: int,
    shutters: bool,
    variant: str = "original",
    defect: float = 0.0,
    defect_scope: str = "inner",
    validate: bool = True,
) -> Circuit:
    """Chained Zeno interferometer; ``variant`` is ``original`` or ``modified``."""
    if variant not in ("original", "modified"):
        raise ValueError(f"variant must be 'original' or 'modified', got {variant!r}")
    if N < 1 or M < 1:
        raise ValueError("N and M must be positive")
    with paused_gc():
        return _zeno_chain(N, M, shutters, variant, defect, defect_scope, validate)


def _zeno_chain(N, M, shutters, variant, defect, defect_scope, validate) -> Circuit:
    b = CircuitBuilder(f"zeno_chain-{variant}-{'in' if shutters else 'out'}-N{N}-M{M}")
    outer = math.pi / (2 * N) + _defect(defect_scope, "outer", defect)
    inner = _defect(defect_scope, "inner", defect)
    s = b.seg("in")
    b.add(Source((s,)))
    alice, probe = s, None
    for k in range(1, N + 1):
        a, p = b.seg(f"a[{k}]"), b.seg(f"p[{k}]")
        b.add(BeamSplitter((alice, probe), (a, p), outer, f"BSo[{k}]"))
        b.cut(f"outer[{k}]")
        probe = _inner_chain(b, p, k, M, shutters, inner, "")
        if variant == "modified":
            a2, p2 = b.seg(f"a'[{k}]"), b.seg(f"p'[{k}]")
            b.add(DoubleSidedMirror((probe, a), (p2, a2), f"DSM[{k}]"))
            a = a2
            probe = _inner_chain(b, p2, k, M, shutters, inner, "'")
        alice = a
    b.add(Detector((alice,), "D1"))
    b.add(Detector((probe,), "D2"))
    if not shutters:
        b.dark("D2")
    return b.build(validate)


def zeno_transmission_channel(circuit: Circuit) -> list[str]:
    """Labels of Bob's arms in a Zeno chain."""
    return [circuit.label(c) for c in circuit.channels if circuit.label(c).startswith("C")]


BUILTINS: dict[str, Callable[[], Circuit]] = {
    "ifm": lambda: ifm(shutter=True),
    "ifm-open": lambda: ifm(shutter=False),
    "nested_mzi": lambda: nested_mzi(blocked=False),
    "nested_mzi-blocked": lambda: nested_mzi(blocked=True),
    "modified_nested": lambda: modified_nested(blocked=False),
    "modified_nested-blocked": lambda: modified_nested(blocked=True),
    "zeno-original": lambda: zeno_chain(3, 3, shutters=False, variant="original"),
    "zeno-modified": lambda: zeno_chain(3, 3, shutters=False, variant="modified"),
    "zeno-original-shutters": lambda: zeno_chain(3, 3, shutters=True, variant="original"),
    "zeno-modified-shutters": lambda: zeno_chain(3, 3, shutters=True, variant="modified"),
}


def builtin(name: str) -> Circuit:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown circuit {name!r}; choose from {sorted(BUILTINS)}") from None
