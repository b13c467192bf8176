"""Latency tables: measured good-case and bad-case rounds next to the claimed ones."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .adversaries import badcase_scenario, goodcase_scenario
from .core import SYNC_PROTOCOLS, Timing, time_to_json
from .network_sim import run, start_offsets
from .verifier import verify

# (good-case, bad-case) rounds; sync protocols claim a good case in multiples of delta
CLAIMED = {
    "bracha": (3, 4),
    "imbs_raynal": (2, 3),
    "f1brb": (2, 2),
    "f2brb": (2, 3),
    "brb24": (2, 4),
    "brb23": (2, 3),
    "bb2": (2, None),
    "bb3": (3, None),
}

DEFAULT_SUITE = [
    {"protocol": "bracha", "n": 4, "f": 1},
    {"protocol": "imbs_raynal", "n": 6, "f": 1},
    {"protocol": "f1brb", "n": 4, "f": 1},
    {"protocol": "f2brb", "n": 8, "f": 2},
    {"protocol": "brb24", "n": 8, "f": 2},
    {"protocol": "brb23", "n": 9, "f": 2},
]

COLUMNS = ("protocol", "n", "f", "good", "good_claimed", "bad", "bad_claimed", "status")


@dataclass
class Row:
    protocol: str
    n: int
    f: int
    good: Optional[Fraction] = None
    bad: Optional[Fraction] = None
    good_claimed: Optional[int] = None
    bad_claimed: Optional[int] = None
    inconclusive: bool = False
    #: sync rows: start skew in multiples of delta, tolerated on top of the claim
    slack: Fraction = Fraction(0)

    @property
    def matches(self) -> bool:
        if self.inconclusive:
            return False
        if self.protocol in SYNC_PROTOCOLS:
            return self.good is not None and self.good <= self.good_claimed + self.slack
        return self.good == self.good_claimed and self.bad == self.bad_claimed

    @property
    def status(self) -> str:
        if self.inconclusive:
            return "inconclusive"
        return "ok" if self.matches else "mismatch"

    def cells(self) -> list:
        def fmt(x):
            if x is None:
                return ""
            x = Fraction(x)
            return str(x.numerator) if x.denominator == 1 else time_to_json(x)
        return [self.protocol, self.n, self.f, fmt(self.good), fmt(self.good_claimed),
                fmt(self.bad), fmt(self.bad_claimed), self.status]


def measure_row(spec: dict) -> Row:
    """Measure one suite row.

    Asynchronous rows report good-case rounds and bad-case total rounds;
    synchronous rows report the good-case commit time in multiples of delta.
    """
    protocol, n, f = spec["protocol"], int(spec["n"]), int(spec["f"])
    good_claim, bad_claim = CLAIMED.get(protocol, (None, None))
    row = Row(protocol, n, f, good_claimed=good_claim, bad_claimed=bad_claim)
    if protocol in SYNC_PROTOCOLS:
        timing = Timing.from_json(spec.get("timing") or {"mode": "sync", "delta": 1, "big_delta": 10})
        scenario = goodcase_scenario(protocol, n, f, timing=timing, seed=int(spec.get("seed", 0)))
        trace = run(scenario)
        verdict = verify(trace)
        row.inconclusive = trace.truncated or verdict.latency.last_commit is None
        if not row.inconclusive:
            row.good = verdict.latency.commit_span_deltas
            # the claim holds up to the actual start skew
            row.slack = max(start_offsets(scenario).values()) / timing.delta
        return row
    good = run(goodcase_scenario(protocol, n, f))
    bad = run(badcase_scenario(protocol, n, f))
    gv, bv = verify(good), verify(bad)
    row.good = gv.latency.good_case_rounds
    row.bad = bv.latency.bad_case_rounds
    row.inconclusive = good.truncated or bad.truncated or row.good is None or row.bad is None
    return row


def build_table(suite: list) -> list[Row]:
    return [measure_row(spec) for spec in suite]


def to_csv(rows: list[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def render(rows: list[Row]) -> str:
    cells = [list(COLUMNS)] + [[str(c) for c in r.cells()] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COLUMNS))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells)
