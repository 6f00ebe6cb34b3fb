from __future__ import annotations

import csv
import io
import json

import pytest

from weaktrace import circuits
from weaktrace.circuitio import circuit_from_dict, circuit_to_dict, load_circuit, save_circuit
from weaktrace.cli import EXIT_CALIBRATION, EXIT_DARK, EXIT_OK, EXIT_USAGE, main
from weaktrace.optics import CircuitError, ideal_amplitudes


@pytest.mark.parametrize("name", sorted(circuits.BUILTINS))
def test_circuit_json_roundtrip(name, tmp_path):
    c = circuits.builtin(name)
    path = tmp_path / "c.json"
    save_circuit(c, path)
    back = load_circuit(path)
    assert back == c
    assert ideal_amplitudes(back)[1] == ideal_amplitudes(c)[1]


def test_circuit_from_handwritten_dict():
    data = {
        "name": "mzi",
        "segments": ["in", {"id": "A", "channel": True}, {"id": "B", "channel": True},
                     "a", "b", "d", "e"],
        "elements": [
            {"type": "source", "outputs": ["in"]},
            {"type": "beam_splitter", "inputs": ["in", None], "outputs": ["A", "B"], "ratio": [1, 1]},
            {"type": "mirror", "inputs": ["A"], "outputs": ["a"]},
            {"type": "phase", "inputs": ["B"], "outputs": ["b"], "phi": 0.0},
            {"type": "beam_splitter", "inputs": ["a", "b"], "outputs": ["d", "e"]},
            {"type": "detector", "inputs": ["d"], "name": "D"},
            {"type": "detector", "inputs": ["e"], "name": "E"},
        ],
        "dark_ports": ["D"],
    }
    c = circuit_from_dict(data)
    assert abs(ideal_amplitudes(c)[1]["D"]) < 1e-12
    assert circuit_to_dict(c)["format_version"] == 1
    data["elements"].append({"type": "laser"})
    with pytest.raises(CircuitError):
        circuit_from_dict(data)


def test_load_unknown_circuit():
    with pytest.raises(FileNotFoundError, match="built-ins"):
        load_circuit("no-such-thing")


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_ifm_files(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "run", "--protocol", "ifm", "--bit", "1", "--eps", "1e-3",
                         "--format", "csv", "-o", str(tmp_path))
    assert code == EXIT_OK
    probs = {r["outcome"]: r for r in csv.DictReader(open(tmp_path / "probabilities.csv"))}
    assert abs(float(probs["D"]["p0"]) - 0.25) < 1e-12
    trace = {r["channel"]: r for r in csv.DictReader(open(tmp_path / "trace.csv"))}
    assert trace["B"]["verdict"] == "NoTrace" and trace["B"]["leading_order"] == "none"
    assert (tmp_path / "summary.csv").exists()


def test_run_modified_nested_json(capsys):
    code, out, _ = run_cli(capsys, "run", "--protocol", "modified_nested", "--bit", "0")
    assert code == EXIT_OK
    data = json.loads(out)
    chans = {c["channel"]: c for c in data["conditional_trace"]["channels"]}
    assert chans["B"]["leading_order"] == 2 and chans["B'"]["leading_order"] == 2
    assert data["counterfactual"] is True


def test_run_zeno_row(capsys):
    from oracles import rotation_chain

    code, out, _ = run_cli(capsys, "run", "--protocol", "zeno_chain", "--N", "25", "--M", "25",
                           "--variant", "modified", "--bit", "1", "--format", "csv")
    assert code == EXIT_OK
    row = next(csv.DictReader(io.StringIO(out.split("\n\n")[0])))
    want = rotation_chain(25, 25, True, 2)["D2"]
    assert abs(float(row["success_probability"]) - want) < 1e-10


def test_run_is_deterministic(capsys):
    argv = ("run", "--protocol", "nested_mzi", "--bit", "0", "--format", "json")
    assert run_cli(capsys, *argv)[1] == run_cli(capsys, *argv)[1]


def test_run_dark_port_exit(capsys):
    code, _, err = run_cli(capsys, "run", "--protocol", "ifm", "--bit", "0")
    assert code == EXIT_DARK and "dark port" in err


def test_usage_errors(capsys, tmp_path):
    assert run_cli(capsys, "run", "--protocol", "zeno_chain", "--N", "1")[0] == EXIT_USAGE
    assert run_cli(capsys, "frobnicate")[0] == EXIT_USAGE
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"protocol": "ifm", "bits": 1}))
    code, _, err = run_cli(capsys, "run", "--config", str(cfg))
    assert code == EXIT_USAGE and "bits" in err


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"protocol": "ifm", "bit": 1, "eps": 0.01}))
    code, out, _ = run_cli(capsys, "run", "--config", str(cfg))
    assert code == EXIT_OK and json.loads(out)["config"]["eps"] == 0.01


def test_tsvf_examples(capsys):
    code, out, _ = run_cli(capsys, "tsvf", "--circuit", "modified_nested", "--detector", "D")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert all(r["present"] == "0" for r in rows if r["segment"] in ("B", "B'"))
    code, out, _ = run_cli(capsys, "tsvf", "--circuit", "nested_mzi", "--detector", "D")
    present = {r["segment"] for r in csv.DictReader(io.StringIO(out)) if r["present"] == "1"}
    assert {"A", "B", "C"} <= present
    code, _, err = run_cli(capsys, "tsvf", "--circuit", "ifm-open", "--detector", "D")
    assert code == EXIT_DARK and "dark port" in err


def test_tsvf_calibration_failure(capsys, tmp_path):
    c = circuit_to_dict(circuits.ifm(shutter=True))
    c["dark_ports"] = ["D"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(c))
    assert run_cli(capsys, "tsvf", "--circuit", str(path), "--detector", "D")[0] == EXIT_CALIBRATION


def test_scan_cli(capsys):
    code, out, _ = run_cli(capsys, "scan", "--protocol", "zeno_chain", "--bit", "1",
                           "--N", "3", "4", "--M", "N^2", "--variant", "original", "modified")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 4 and {r["M"] for r in rows} == {"9", "16"}


def test_calibrate_and_list(capsys):
    code, out, _ = run_cli(capsys, "calibrate")
    assert code == EXIT_OK
    assert all(v["passed"] for v in json.loads(out).values())
    code, out, _ = run_cli(capsys, "list-circuits")
    assert code == EXIT_OK and "modified_nested" in out
