"""Weak-trace extraction from a post-selected environment state.

A channel carries a trace of order ``d`` when the smallest power of eps in
any term that leaves it in ``|chi_perp>`` is ``d``. First order means the
photon was there; anything weaker means it was not.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .epspoly import ZERO_TOL
from .optics import Circuit, DarkPortError, JointState, couple  # noqa: F401  (re-export)

CSV_COLUMNS = ("channel", "leading_order", "re", "im", "verdict")
CSV_SCHEMA_VERSION = 1


class Verdict(str, enum.Enum):
    PRESENT = "Present"
    ABSENT = "Absent"
    NO_TRACE = "NoTrace"


@dataclass(frozen=True)
class ChannelTrace:
    channel: str
    leading_order: int | None
    leading_coefficient: complex
    verdict: Verdict
    # leading-order coefficients of every contributing term, keyed by the
    # sorted labels of its excited set, relative to the all-|chi> amplitude
    terms: Mapping[tuple[str, ...], complex] = field(default_factory=dict)
    amplitude: float = 0.0

    @property
    def present(self) -> bool:
        return self.verdict is Verdict.PRESENT

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "leading_order": self.leading_order,
            "leading_coefficient": [self.leading_coefficient.real, self.leading_coefficient.imag],
            "verdict": self.verdict.value,
            "amplitude": self.amplitude,
            "terms": [
                {"excited": list(k), "coefficient": [v.real, v.imag]}
                for k, v in sorted(self.terms.items())
            ],
        }


@dataclass(frozen=True)
class TraceReport:
    outcome: str
    eps: float
    max_order: int
    reference: complex
    channels: Mapping[str, ChannelTrace]

    def __getitem__(self, label: str) -> ChannelTrace:
        return self.channels[label]

    def verdicts(self) -> dict[str, Verdict]:
        return {k: c.verdict for k, c in self.channels.items()}

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "eps": self.eps,
            "max_order": self.max_order,
            "reference": [self.reference.real, self.reference.imag],
            "channels": [self.channels[k].to_dict() for k in self.channels],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for label, ct in self.channels.items():
            order = "none" if ct.leading_order is None else ct.leading_order
            w.writerow(
                [label, order, repr(ct.leading_coefficient.real),
                 repr(ct.leading_coefficient.imag), ct.verdict.value]
            )
        return buf.getvalue()


def trace_report(
    conditional: JointState,
    circuit: Circuit | None = None,
    channels: Iterable[str] | None = None,
    tol: float = ZERO_TOL,
) -> TraceReport:
    """Leading eps-order of the orthogonal component for every channel.

    ``conditional`` is the output of :func:`~weaktrace.optics.postselect`.
    Channels default to every channel of ``circuit`` (or to the channels that
    appear excited, when no circuit is given). Coefficients are divided by
    the zeroth-order amplitude of the unexcited term.
    """
    if len(conditional.terms) != 1:
        raise ValueError("trace_report expects a state post-selected on one outcome")
    (loc, bucket), = conditional.terms.items()
    outcome = loc.name if hasattr(loc, "name") else str(loc)
    base = bucket.get(frozenset())
    if base is None or abs(base[0]) < tol:
        raise DarkPortError(outcome, f"postselected on dark port {outcome!r}")
    z0 = base[0]
    eps = conditional.eps
    base_now = abs(base(eps)) if eps else abs(z0)

    def name(seg_id: str) -> str:
        return circuit.label(seg_id) if circuit is not None else seg_id

    if channels is None:
        if circuit is not None:
            channels = circuit.channels
        else:
            channels = sorted({c for exc in bucket for c in exc})
    out: dict[str, ChannelTrace] = {}
    for ch in channels:
        hits = [(exc, amp) for exc, amp in bucket.items() if ch in exc]
        orders = [amp.leading_order(tol) for _, amp in hits]
        orders = [o for o in orders if o is not None]
        if not orders:
            out[name(ch)] = ChannelTrace(name(ch), None, 0j, Verdict.NO_TRACE)
            continue
        d = min(orders)
        terms = {
            tuple(sorted(name(c) for c in exc)): amp[d] / z0
            for exc, amp in hits
            if abs(amp[d]) > tol
        }
        lead = max(terms.items(), key=lambda kv: (round(abs(kv[1]), 12), kv[0]))[1]
        weight = math.sqrt(sum(abs(amp(eps)) ** 2 for _, amp in hits)) / base_now if eps else 0.0
        verdict = Verdict.PRESENT if d == 1 else Verdict.ABSENT
        out[name(ch)] = ChannelTrace(name(ch), d, complex(lead), verdict, terms, weight)
    return TraceReport(outcome, eps, conditional.max_order, complex(z0), out)


def presence_verdict(report: TraceReport) -> dict[str, bool]:
    """True where the photon left a first-order trace."""
    return {k: c.present for k, c in report.channels.items()}


def is_counterfactual(report: TraceReport, boundary: Iterable[str]) -> bool:
    """No segment of the transmission channel carries a first-order trace."""
    present = presence_verdict(report)
    return not any(present[b] for b in boundary)
