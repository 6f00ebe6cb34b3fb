"""End-to-end runs of the four counterfactual-communication protocols.

Each run builds the circuit for the requested bit, checks the dark-port
tuning of the ideal device, propagates the photon with the environment
coupling on, post-selects on the protocol's witness detector and turns
the result into a trace report and a counterfactuality verdict.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from . import circuits
from .epspoly import ZERO_TOL, EpsPolynomial
from .optics import (
    Circuit,
    DarkPortError,
    Shutter,
    ideal_amplitudes,
    paused_gc,
    postselect,
    propagate,
)
from .trace import TraceReport, is_counterfactual, trace_report

TRACE_BUDGET = 20_000
PROTOCOLS = ("ifm", "nested_mzi", "modified_nested", "zeno_chain")
VARIANTS = ("original", "modified")


class ConfigError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class CalibrationError(RuntimeError):
    def __init__(self, report: "CalibrationReport"):
        self.report = report
        bad = [c for c in report.checks if not c.passed]
        super().__init__(
            "calibration failed: "
            + ", ".join(f"{c.circuit}/{c.detector} |amp|={c.amplitude:.3e}" for c in bad)
        )


@dataclass(frozen=True)
class ProtocolConfig:
    """What to run.

    ``bit`` selects the shutter configuration: for ``ifm`` 1 means the
    shutter is in; for the nested protocols 1 means the arms are blocked;
    for ``zeno_chain`` 1 means all shutters are in. ``shutters`` overrides
    the per-arm blocking of ``modified_nested`` (labels of blocked arms),
    which is how configurations outside the both-or-neither promise are
    expressed. ``boundary`` lists the transmission-channel segments.
    ``trace`` forces (True) or skips (False) the symbolic propagation; the
    default runs it when :func:`trace_cost` is within ``TRACE_BUDGET``.
    """

    protocol: str
    bit: int = 0
    eps: float = 1e-3
    N: int | None = None
    M: int | None = None
    variant: str = "original"
    defect: float = 0.0
    defect_scope: str | None = None
    boundary: tuple[str, ...] | None = None
    shutters: tuple[str, ...] | None = None
    max_order: int = 2
    trace: bool | None = None

    def problems(self) -> list[str]:
        p = []
        if self.protocol not in PROTOCOLS:
            p.append(f"protocol: must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.bit not in (0, 1):
            p.append(f"bit: must be 0 or 1, got {self.bit!r}")
        if not (isinstance(self.eps, (int, float)) and 0 <= self.eps < 1):
            p.append(f"eps: must lie in [0, 1), got {self.eps!r}")
        if not 1 <= self.max_order <= 4:
            p.append(f"max_order: must be in 1..4, got {self.max_order}")
        if self.protocol == "zeno_chain":
            if self.N is None or self.N < 2:
                p.append(f"N: zeno_chain needs N >= 2, got {self.N}")
            if self.M is not None and self.M < 2:
                p.append(f"M: zeno_chain needs M >= 2, got {self.M}")
            if self.variant not in VARIANTS:
                p.append(f"variant: must be one of {VARIANTS}, got {self.variant!r}")
        if self.defect_scope is not None and self.defect_scope not in circuits.DEFECT_SCOPES:
            p.append(f"defect_scope: must be one of {circuits.DEFECT_SCOPES}")
        if self.shutters is not None:
            if self.protocol != "modified_nested":
                p.append("shutters: per-arm override only applies to modified_nested")
            elif not set(self.shutters) <= {"B", "B'"}:
                p.append(f"shutters: may only name B and B', got {list(self.shutters)}")
        return p

    def validate(self) -> "ProtocolConfig":
        p = self.problems()
        if p:
            raise ConfigError(p)
        return self

    @property
    def inner_length(self) -> int:
        return self.M if self.M is not None else self.N

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProtocolConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError([f"{k}: unknown field" for k in sorted(unknown)])
        if "protocol" not in data:
            raise ConfigError(["protocol: required"])
        kw = dict(data)
        for k in ("boundary", "shutters"):
            if kw.get(k) is not None:
                kw[k] = tuple(kw[k])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("boundary", "shutters"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


@dataclass(frozen=True)
class DarkPortCheck:
    circuit: str
    detector: str
    amplitude: float
    tol: float = ZERO_TOL

    @property
    def passed(self) -> bool:
        return self.amplitude < self.tol


@dataclass(frozen=True)
class CalibrationReport:
    checks: tuple[DarkPortCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"circuit": c.circuit, "detector": c.detector,
                 "amplitude": c.amplitude, "passed": c.passed}
                for c in self.checks
            ],
        }


@dataclass
class ProtocolResult:
    config: ProtocolConfig
    circuit: str
    postselect: str
    boundary: tuple[str, ...]
    outcome_probabilities: dict[str, EpsPolynomial]
    success_probability: float
    loss_probability: float
    calibration: CalibrationReport
    conditional_trace: TraceReport | None = None
    dark_port: bool = False
    counterfactual: bool | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def failure_probability(self) -> float:
        return 1.0 - self.success_probability

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "circuit": self.circuit,
            "postselect": self.postselect,
            "boundary": list(self.boundary),
            "outcome_probabilities": {
                k: v.to_list() for k, v in sorted(self.outcome_probabilities.items())
            },
            "success_probability": self.success_probability,
            "failure_probability": self.failure_probability,
            "loss_probability": self.loss_probability,
            "calibration": self.calibration.to_dict(),
            "dark_port": self.dark_port,
            "counterfactual": self.counterfactual,
            "conditional_trace": (
                None if self.conditional_trace is None else self.conditional_trace.to_dict()
            ),
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def probabilities_csv(self) -> str:
        """``outcome, p0 .. p<max_order>, value`` with ``value`` taken at eps."""
        k = self.config.max_order
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["outcome", *(f"p{i}" for i in range(k + 1)), "value"])
        for name, poly in sorted(self.outcome_probabilities.items()):
            w.writerow([name, *(repr(poly[i].real) for i in range(k + 1)),
                        repr(poly(self.config.eps).real)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        return rows_to_csv([summarize(self)])


# --------------------------------------------------------------------------
# circuit selection


def _defect_scope(config: ProtocolConfig) -> str:
    if config.defect_scope is not None:
        return config.defect_scope
    return "inner" if config.protocol == "zeno_chain" else "outer"


def build_circuit(
    config: ProtocolConfig, bit: int | None = None, ideal: bool = False, validate: bool = True
) -> Circuit:
    """Circuit for ``config`` (optionally overriding the bit or dropping the defect).

    ``validate=False`` only affects the long generated chains; the small
    circuits are always checked.
    """
    bit = config.bit if bit is None else bit
    defect = 0.0 if ideal else config.defect
    scope = _defect_scope(config)
    p = config.protocol
    if p == "ifm":
        return circuits.ifm(shutter=bool(bit))
    if p == "nested_mzi":
        return circuits.nested_mzi(bool(bit), defect, scope)
    if p == "modified_nested":
        if config.shutters is not None and bit == config.bit:
            blocked = ("B" in config.shutters, "B'" in config.shutters)
        else:
            blocked = bool(bit)
        return circuits.modified_nested(blocked, defect, scope)
    return circuits.zeno_chain(
        config.N, config.inner_length, bool(bit), config.variant, defect, scope, validate
    )


def witness_detector(config: ProtocolConfig, bit: int | None = None) -> str:
    """Detector whose click is post-selected for the given bit."""
    bit = config.bit if bit is None else bit
    if config.protocol == "zeno_chain":
        return "D2" if bit else "D1"
    return "D"


def default_boundary(config: ProtocolConfig, circuit: Circuit) -> tuple[str, ...]:
    p = config.protocol
    if p == "ifm" or p == "nested_mzi":
        return ("B",)
    if p == "modified_nested":
        return ("B", "B'")
    return tuple(circuits.zeno_transmission_channel(circuit))


def trace_cost(circuit: Circuit, max_order: int) -> int:
    """Rough count of excited sets a symbolic propagation has to carry.

    Channels that end on a shutter never feed excitations forward, so only
    the remaining ones count.
    """
    shut = {e.inputs[0] for e in circuit.elements if isinstance(e, Shutter)}
    t = sum(1 for c in circuit.channels if c not in shut)
    return sum(math.comb(t, k) for k in range(max_order + 1))


def _dark_configuration(config: ProtocolConfig) -> tuple[int, str]:
    """(bit, detector) for which the ideal device must be dark."""
    if config.protocol == "ifm":
        return 0, "D"
    if config.protocol == "zeno_chain":
        return 0, "D2"
    return 1, "D"


def calibrate(
    config: ProtocolConfig, circuit: Circuit | None = None, validate: bool = True
) -> CalibrationReport:
    """Dark-port check of the ideal device (no defect, eps = 0).

    ``circuit`` may supply the already built ideal dark configuration.
    """
    config.validate()
    bit, det = _dark_configuration(config)
    if circuit is None:
        ideal = dataclasses.replace(config, shutters=None)
        circuit = build_circuit(ideal, bit=bit, ideal=True, validate=validate)
    _, out = ideal_amplitudes(circuit, False)
    dets = [det] + [d for d in circuit.dark_ports if d != det]
    return CalibrationReport(tuple(DarkPortCheck(circuit.name, d, abs(out[d])) for d in dets))


# --------------------------------------------------------------------------
# runs


def run_protocol(config: ProtocolConfig) -> ProtocolResult:
    """Run any protocol; dark-port post-selection is reported, not raised."""
    with paused_gc():
        return _run_protocol(config)


def _run_protocol(config: ProtocolConfig) -> ProtocolResult:
    config.validate()
    circ = build_circuit(config)
    dark_bit, _ = _dark_configuration(config)
    if config.bit == dark_bit and config.defect == 0 and config.shutters is None:
        cal = calibrate(config, circ)
    else:
        # same generator as the validated run circuit; skip re-checking wiring
        cal = calibrate(config, validate=False)
    if not cal.passed:
        raise CalibrationError(cal)
    boundary = config.boundary or default_boundary(config, circ)
    labels = {s.label for s in circ.segments}
    missing = [b for b in boundary if b not in labels]
    if missing:
        raise ConfigError([f"boundary: no segment labelled {m!r}" for m in missing])
    flags = []
    if config.protocol == "modified_nested" and config.shutters is not None:
        if len(set(config.shutters)) == 1:
            flags.append("outside protocol promise")

    det = witness_detector(config)
    _, amps = ideal_amplitudes(circ, False)
    success = abs(amps[det]) ** 2
    lost = sum(
        abs(a) ** 2 for k, a in amps.items() if k.startswith("absorbed:") or k.startswith("L")
    )

    report = None
    dark = abs(amps[det]) < ZERO_TOL
    do_trace = config.trace
    if do_trace is None:
        cost = trace_cost(circ, config.max_order)
        do_trace = cost <= TRACE_BUDGET
        if not do_trace:
            flags.append(f"trace skipped: about {cost} excited sets (set trace to force)")
    if do_trace:
        state = propagate(circ, config.eps, max_order=config.max_order, validate=False)
        probs = state.probabilities()
        try:
            cond, _ = postselect(state, det)
            report = trace_report(cond, circ)
        except DarkPortError:
            dark = True
    else:
        probs = {k: EpsPolynomial.constant(abs(a) ** 2, config.max_order) for k, a in amps.items()}
    counterfactual = None if report is None else is_counterfactual(report, boundary)
    return ProtocolResult(
        config, circ.name, det, tuple(boundary), probs, success, lost, cal,
        report, dark, counterfactual, flags,
    )


def _require(config: ProtocolConfig, protocol: str) -> ProtocolResult:
    if config.protocol != protocol:
        raise ConfigError([f"protocol: expected {protocol!r}, got {config.protocol!r}"])
    return run_protocol(config)


def run_ifm(config: ProtocolConfig) -> ProtocolResult:
    return _require(config, "ifm")


def run_nested_mzi(config: ProtocolConfig) -> ProtocolResult:
    return _require(config, "nested_mzi")


def run_modified_nested(config: ProtocolConfig) -> ProtocolResult:
    return _require(config, "modified_nested")


def run_zeno_chain(config: ProtocolConfig) -> ProtocolResult:
    return _require(config, "zeno_chain")


# --------------------------------------------------------------------------
# scans

SCAN_COLUMNS = (
    "protocol", "variant", "bit", "N", "M", "eps", "defect", "success_probability",
    "failure_probability", "loss_probability", "dark_port", "counterfactual",
    "boundary_min_order", "boundary_amplitude", "error",
)


def resolve_M(rule, N: int | None) -> int | None:
    """Inner-chain length from an int or a rule such as ``"N"``, ``"N^2"``, ``"20N"``."""
    if rule is None or isinstance(rule, int):
        return rule
    r = str(rule).replace(" ", "").replace("**", "^")
    if N is None:
        raise ConfigError([f"M: rule {rule!r} needs N"])
    if r == "N":
        return N
    if r == "N^2":
        return N * N
    if r.endswith("N") and r[:-1].isdigit():
        return int(r[:-1]) * N
    if r.isdigit():
        return int(r)
    raise ConfigError([f"M: cannot interpret rule {rule!r}"])


def summarize(result: ProtocolResult) -> dict:
    c = result.config
    row = {
        "protocol": c.protocol, "variant": c.variant if c.protocol == "zeno_chain" else "",
        "bit": c.bit, "N": c.N, "M": c.inner_length if c.protocol == "zeno_chain" else None,
        "eps": c.eps, "defect": c.defect,
        "success_probability": result.success_probability,
        "failure_probability": result.failure_probability,
        "loss_probability": result.loss_probability,
        "dark_port": result.dark_port, "counterfactual": result.counterfactual,
        "boundary_min_order": None, "boundary_amplitude": None, "error": "",
    }
    rep = result.conditional_trace
    if rep is not None:
        orders = [rep[b].leading_order for b in result.boundary if rep[b].leading_order]
        row["boundary_min_order"] = min(orders) if orders else None
        row["boundary_amplitude"] = max(rep[b].amplitude for b in result.boundary)
    return row


def rows_to_csv(rows: Sequence[Mapping[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_COLUMNS)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                    for c in SCAN_COLUMNS])
    return buf.getvalue()


def _scan_cell(config: ProtocolConfig) -> dict:
    try:
        return summarize(run_protocol(config))
    except Exception as exc:  # recorded per cell
        row = dict.fromkeys(SCAN_COLUMNS)
        row.update(protocol=config.protocol, variant=config.variant, bit=config.bit,
                   N=config.N, M=config.M, eps=config.eps, defect=config.defect,
                   error=f"{type(exc).__name__}: {exc}")
        return row


def scan_configs(base: ProtocolConfig, grid: Mapping[str, Iterable]) -> list[ProtocolConfig]:
    keys = list(grid)
    out = []
    for values in itertools.product(*(list(grid[k]) for k in keys)):
        cell = dict(zip(keys, values))
        if "M" in cell:
            cell["M"] = resolve_M(cell["M"], cell.get("N", base.N))
        elif isinstance(base.M, str):
            cell["M"] = resolve_M(base.M, cell.get("N", base.N))
        out.append(dataclasses.replace(base, **cell))
    return out


def scan(
    base: ProtocolConfig, grid: Mapping[str, Iterable], workers: int = 1
) -> list[dict]:
    """Run every cell of the Cartesian grid; failures are recorded per row."""
    configs = scan_configs(base, grid)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_scan_cell, configs))
    return [_scan_cell(c) for c in configs]


def zeno_rotation_oracle(N: int, M: int, shutters: bool, chains: int = 1) -> dict[str, float]:
    """Scalar two-mode model of the Zeno chain at eps = 0.

    Each outer step rotates (alice, probe) by pi/(2N). Without shutters the
    inner chains remove the probe amplitude entirely; with shutters each
    inner chain multiplies it by cos(pi/(2M))**M.
    """
    a, b = 1.0, 0.0
    th = math.pi / (2 * N)
    t = 0.0 if not shutters else math.cos(math.pi / (2 * M)) ** M
    lost = 0.0
    for _ in range(N):
        a, b = math.cos(th) * a - math.sin(th) * b, math.sin(th) * a + math.cos(th) * b
        for _ in range(chains):
            lost += b * b * (1 - t * t)
            b *= t
    return {"D1": a * a, "D2": b * b, "lost": lost}
