from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weaktrace import circuits
from weaktrace.optics import ideal_amplitudes, postselect, propagate
from weaktrace.trace import trace_report
from weaktrace.tsvf import (
    backward_amplitudes,
    backward_state,
    forward_amplitudes,
    forward_state,
    overlap_map,
    overlap_map_csv,
    overlap_map_json,
    presence_map,
    reverse_circuit,
    weak_values,
)

R3 = 1 / math.sqrt(3)


def close(a: dict, b: dict, tol=1e-12):
    return set(a) == set(b) and all(abs(a[k] - b[k]) < tol for k in a)


def test_forward_mid_cuts():
    r2 = 1 / math.sqrt(2)
    assert close(forward_state(circuits.ifm(False), "mid"), {"A": r2, "B": r2})
    assert close(forward_state(circuits.nested_mzi(False), "mid"), {"C": R3, "A": R3, "B": R3})
    # 1:4 outer splitter then 50:50: C = 1/sqrt5, A = B = sqrt(2/5)
    c = math.atan2(2, 1)
    E = np.array([math.cos(c), math.sin(c)])
    want = {"C": E[0], "A": E[1] / math.sqrt(2), "B": E[1] / math.sqrt(2)}
    assert close(forward_state(circuits.modified_nested(False), "mid"), want)


def test_backward_mid_cuts():
    got = backward_state(circuits.nested_mzi(False), "D", "mid")
    assert close(got, {"C": R3, "A": -R3, "B": R3})
    got = backward_state(circuits.ifm(True), "D", "mid")
    assert abs(got["B"]) < 1e-15 and abs(got["A"]) > 0.5


def test_dark_detector_flagged():
    wv = weak_values(circuits.ifm(False), "D")
    assert all(v is None for v in wv.values())
    cuts = overlap_map(circuits.ifm(False), "D")
    assert not any(c.defined for c in cuts)
    assert '"weak_value": null' in overlap_map_json(cuts)


def test_weak_values_examples():
    wv = weak_values(circuits.ifm(True), "D")
    assert abs(wv["A"] - 1) < 1e-12 and abs(wv["B"]) < 1e-12
    wv = weak_values(circuits.nested_mzi(False), "D")
    for x in "ABC":
        assert abs(wv[x]) > 0.5
    for x in "EF":
        assert abs(wv[x]) < 1e-12
    wv = weak_values(circuits.modified_nested(False), "D")
    assert abs(wv["B"]) < 1e-12 and abs(wv["B'"]) < 1e-12 and abs(wv["C"] - 1) < 1e-12
    pm = presence_map(circuits.modified_nested(False), "D")
    assert pm["C"] and not pm["B"] and not pm["B'"]


@pytest.mark.parametrize("name", sorted(circuits.BUILTINS))
def test_projector_completeness(name):
    c = circuits.builtin(name)
    for det in c.detectors:
        for cut in overlap_map(c, det):
            assert abs(cut.projector_sum() - cut.overlap) < 1e-12


@pytest.mark.parametrize("name", sorted(circuits.BUILTINS))
def test_time_reversal(name):
    c = circuits.builtin(name)
    for det in c.detectors:
        rev = reverse_circuit(c, det)
        fwd_rev = forward_amplitudes(rev)
        bwd = backward_amplitudes(c, det)
        for lab, v in fwd_rev.items():
            if lab in bwd:
                assert abs(v - bwd[lab]) < 1e-12
        # launched back from the detector, the amplitude reaching the
        # source equals the forward amplitude at the detector
        _, out_rev = ideal_amplitudes(rev)
        _, out = ideal_amplitudes(c)
        assert abs(out_rev["<source>"] - out[det]) < 1e-12


@pytest.mark.parametrize("name", sorted(circuits.BUILTINS))
def test_first_order_trace_matches_two_state_overlap(name):
    c = circuits.builtin(name)
    eps = 1e-3
    st_ = propagate(c, eps)
    _, out = ideal_amplitudes(c)
    fwd = forward_amplitudes(c)
    for det in c.detectors:
        if abs(out[det]) < 1e-12:
            continue
        bwd = backward_amplitudes(c, det)
        cond, _ = postselect(st_, det)
        (bucket,) = cond.terms.values()
        for ch in c.channels:
            lab = c.label(ch)
            first = bucket.get(frozenset({ch}))
            got = first[1] if first is not None else 0j
            assert abs(got - bwd[lab] * fwd.get(lab, 0j)) < 1e-10
        rep = trace_report(cond, c)
        wv = weak_values(c, det)
        for ch in rep.channels.values():
            if ch.leading_order == 1:
                assert abs(ch.terms[(ch.channel,)] - wv[ch.channel]) < 1e-10


@given(st.sampled_from(sorted(circuits.BUILTINS)))
@settings(max_examples=10, deadline=None)
def test_weak_values_sum_to_one_on_each_cut(name):
    c = circuits.builtin(name)
    for det in c.detectors:
        for cut in overlap_map(c, det):
            if cut.defined:
                parts = [*cut.segments.values(), *cut.terminals.values()]
                s = sum(v.weak_value for v in parts)
                assert abs(s - 1) < 1e-10


def test_map_csv_rows():
    text = overlap_map_csv(overlap_map(circuits.modified_nested(False), "D"))
    lines = text.splitlines()
    assert lines[0].startswith("cut,segment,forward_re")
    rows_B = [l for l in lines[1:] if l.split(",")[1] in ("B", "B'")]
    assert rows_B and all(l.endswith(",1,0") for l in rows_B)
    text2 = overlap_map_csv(overlap_map(circuits.nested_mzi(False), "D"))
    nonzero = {l.split(",")[1] for l in text2.splitlines()[1:] if l.endswith(",1,1")}
    assert {"A", "B", "C"} <= nonzero
    assert json.loads(overlap_map_json(overlap_map(circuits.ifm(True), "D", ["mid"])))[0]["cut"] == "mid"
