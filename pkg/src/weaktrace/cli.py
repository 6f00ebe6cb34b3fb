"""Command-line front end (``weaktrace``).

Exit codes: 0 ok, 2 usage or configuration error, 3 calibration failure,
4 post-selection on a dark port.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import circuits
from .circuitio import load_circuit
from .epspoly import ZERO_TOL
from .optics import CircuitError, ideal_amplitudes
from .protocols import (
    PROTOCOLS,
    CalibrationError,
    ConfigError,
    ProtocolConfig,
    calibrate,
    resolve_M,
    rows_to_csv,
    run_protocol,
    scan,
)
from .tsvf import overlap_map, overlap_map_csv, overlap_map_json

EXIT_OK, EXIT_USAGE, EXIT_CALIBRATION, EXIT_DARK = 0, 2, 3, 4

_CONFIG_FLAGS = ("protocol", "bit", "eps", "N", "M", "variant", "defect",
                 "defect_scope", "boundary", "shutters", "max_order")


class UsageError(Exception):
    pass


def _add_config_flags(p: argparse.ArgumentParser, multi: bool = False) -> None:
    many = "+" if multi else None
    p.add_argument("--config", help="JSON file with ProtocolConfig fields")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--bit", type=int, nargs=many)
    p.add_argument("--eps", type=float, nargs=many)
    p.add_argument("--N", type=int, nargs=many)
    p.add_argument("--M", nargs=many, help="int or rule: N, N^2, 20N")
    p.add_argument("--variant", choices=("original", "modified"), nargs=many)
    p.add_argument("--defect", type=float, nargs=many)
    p.add_argument("--defect-scope", dest="defect_scope", choices=circuits.DEFECT_SCOPES)
    p.add_argument("--boundary", nargs="+", help="transmission-channel segment labels")
    p.add_argument("--shutters", nargs="*", help="blocked arms (modified_nested only)")
    p.add_argument("--max-order", dest="max_order", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--trace", dest="trace", action="store_true", default=None,
                   help="force the symbolic trace")
    g.add_argument("--no-trace", dest="trace", action="store_false")


def _config_dict(args) -> dict:
    data: dict = {}
    if args.config:
        try:
            data.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: {exc}") from None
    for k in _CONFIG_FLAGS + ("trace",):
        v = getattr(args, k, None)
        if v is not None:
            data[k] = v
    return data


def _parse_M(v):
    if v is None:
        return None
    try:
        return int(v)
    except (TypeError, ValueError):
        return v


def _config(args) -> ProtocolConfig:
    data = _config_dict(args)
    if "M" in data:
        data["M"] = _parse_M(data["M"])
        if isinstance(data["M"], str):
            data["M"] = resolve_M(data["M"], data.get("N"))
    return ProtocolConfig.from_dict(data).validate()


def _emit(text: str, path: str | None, name: str | None = None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    out = Path(path)
    if name is not None:
        out.mkdir(parents=True, exist_ok=True)
        out = out / name
    out.write_text(text)


def cmd_run(args) -> int:
    cfg = _config(args)
    result = run_protocol(cfg)
    if args.format == "json":
        _emit(result.to_json() + "\n", args.output, "result.json" if args.output else None)
    else:
        if args.output:
            _emit(result.summary_csv(), args.output, "summary.csv")
            _emit(result.probabilities_csv(), args.output, "probabilities.csv")
            if result.conditional_trace is not None:
                _emit(result.conditional_trace.to_csv(), args.output, "trace.csv")
        else:
            _emit(result.summary_csv(), None)
            _emit("\n" + result.probabilities_csv(), None)
            if result.conditional_trace is not None:
                _emit("\n" + result.conditional_trace.to_csv(), None)
    for f in result.flags:
        print(f"note: {f}", file=sys.stderr)
    if result.dark_port:
        print(f"dark port: post-selection on {result.postselect!r} has zero amplitude",
              file=sys.stderr)
        return EXIT_DARK
    return EXIT_OK


def _check_circuit_dark_ports(circuit) -> list[str]:
    _, out = ideal_amplitudes(circuit, False)
    return [d for d in circuit.dark_ports if abs(out[d]) >= ZERO_TOL]


def cmd_tsvf(args) -> int:
    circuit = load_circuit(args.circuit)
    bad = _check_circuit_dark_ports(circuit)
    if bad:
        print(f"calibration failed: declared dark ports {bad} are lit", file=sys.stderr)
        return EXIT_CALIBRATION
    if args.detector not in circuit.detectors:
        raise UsageError(f"--detector: {args.detector!r} not in {list(circuit.detectors)}")
    cuts = overlap_map(circuit, args.detector, args.cut or None)
    text = overlap_map_json(cuts) + "\n" if args.format == "json" else overlap_map_csv(cuts)
    _emit(text, args.output)
    if cuts and not cuts[0].defined:
        print(f"dark port: detector {args.detector!r} never clicks; weak values undefined",
              file=sys.stderr)
        return EXIT_DARK
    return EXIT_OK


def cmd_scan(args) -> int:
    data = _config_dict(args)
    grid = {}
    base = {}
    for k, v in data.items():
        if isinstance(v, list) and k not in ("boundary", "shutters"):
            if k == "M":
                v = [_parse_M(x) for x in v]
            if len(v) == 1:
                base[k] = v[0]
            else:
                grid[k] = v
        else:
            base[k] = _parse_M(v) if k == "M" else v
    if args.grid:
        try:
            grid.update(json.loads(Path(args.grid).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--grid: {exc}") from None
    base.setdefault("trace", False)
    m_rule = base.pop("M", None)
    if m_rule is not None and "M" not in grid:
        grid["M"] = [m_rule]
    cfg = ProtocolConfig.from_dict(base)
    if not grid:
        cfg.validate()
    rows = scan(cfg, grid, workers=args.workers)
    if args.format == "json":
        text = json.dumps(rows, sort_keys=True, indent=2) + "\n"
    else:
        text = rows_to_csv(rows)
    _emit(text, args.output)
    for r in rows:
        if r["error"]:
            print(f"cell failed: N={r['N']} M={r['M']} bit={r['bit']}: {r['error']}",
                  file=sys.stderr)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    protocols = [args.protocol] if args.protocol else list(PROTOCOLS)
    out = {}
    ok = True
    for p in protocols:
        base = {"protocol": p}
        if p == "zeno_chain":
            base.update(N=args.N or 5, M=_parse_M(args.M) or None)
            if isinstance(base["M"], str):
                base["M"] = resolve_M(base["M"], base["N"])
            base["variant"] = args.variant or "original"
        rep = calibrate(ProtocolConfig.from_dict(base).validate())
        out[p] = rep.to_dict()
        ok &= rep.passed
    _emit(json.dumps(out, sort_keys=True, indent=2) + "\n", args.output)
    return EXIT_OK if ok else EXIT_CALIBRATION


def cmd_list(args) -> int:
    for name in sorted(circuits.BUILTINS):
        c = circuits.builtin(name)
        print(f"{name}\tdetectors={','.join(c.detectors)}\tchannels="
              f"{','.join(c.label(s) for s in c.channels)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="weaktrace", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one protocol configuration")
    _add_config_flags(p)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", "-o", help="output directory (default: stdout)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("tsvf", help="two-state presence map of a circuit")
    p.add_argument("--circuit", required=True, help="built-in name or JSON file")
    p.add_argument("--detector", required=True)
    p.add_argument("--cut", nargs="*", help="restrict to these cuts")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--output", "-o", help="output file (default: stdout)")
    p.set_defaults(func=cmd_tsvf)

    p = sub.add_parser("scan", help="grid scan; list-valued flags span the grid")
    _add_config_flags(p, multi=True)
    p.add_argument("--grid", help="JSON file mapping field -> list of values")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--output", "-o", help="output file (default: stdout)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("calibrate", help="dark-port checks of the ideal devices")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--N", type=int)
    p.add_argument("--M")
    p.add_argument("--variant", choices=("original", "modified"))
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("list-circuits", help="list built-in circuits")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, UsageError, CircuitError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION


if __name__ == "__main__":
    sys.exit(main())
