"""Property checkers, latency metrics and a bounded explorer.

Checkers take a finished :class:`~brblab.core.Trace` and return a
:class:`CheckResult`; every failure carries a small witness. Rounds are
measured as time divided by the largest honest-to-honest delay delivered up
to the last honest commit.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .adversaries import EquivocateSplit, MirrorHonest, Silent
from .core import (
    BROADCASTER, SYNC_PROTOCOLS, DelayPolicy, DelayRule, Kind, Scenario, Trace,
    time_to_json, value_to_json,
)
from .network_sim import run
from .protocols import message_kinds

log = logging.getLogger(__name__)

PASS, FAIL, NA, INCONCLUSIVE = "pass", "fail", "not-applicable", "inconclusive"


@dataclass(frozen=True)
class CheckResult:
    status: str
    witness: tuple = ()
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    def to_json(self) -> dict:
        d = {"status": self.status}
        if self.witness:
            d["witness"] = [list(w) if isinstance(w, tuple) else w for w in self.witness]
        if self.detail:
            d["detail"] = self.detail
        return d


def _commit_witness(e):
    return (e.party, value_to_json(e.value), time_to_json(e.t))


def check_agreement(trace: Trace) -> CheckResult:
    commits = trace.commits()
    for i, a in enumerate(commits):
        for b in commits[i + 1:]:
            if a.value != b.value:
                return CheckResult(FAIL, (_commit_witness(a), _commit_witness(b)),
                                   f"party {a.party} and party {b.party} commit different values")
    return CheckResult(PASS)


def check_validity(trace: Trace) -> CheckResult:
    cfg = trace.config
    if not cfg.broadcaster_honest:
        return CheckResult(NA)
    for p in trace.honest:
        e = trace.commit_of(p)
        if e is not None and e.value != cfg.broadcaster_input:
            return CheckResult(FAIL, (_commit_witness(e),), f"party {p} commits a value the broadcaster never sent")
    if trace.truncated:
        return CheckResult(INCONCLUSIVE, detail="trace truncated")
    for p in trace.honest:
        if trace.commit_of(p) is None:
            return CheckResult(FAIL, (p,), f"party {p} never commits")
        if not trace.terminated(p):
            return CheckResult(FAIL, (p,), f"party {p} never terminates")
    return CheckResult(PASS)


def check_brb_termination(trace: Trace) -> CheckResult:
    if trace.truncated:
        return CheckResult(INCONCLUSIVE, detail="trace truncated")
    commits = trace.commits()
    if not commits:
        return CheckResult(PASS, detail="no honest commit")
    for p in trace.honest:
        if trace.commit_of(p) is None:
            return CheckResult(FAIL, (_commit_witness(commits[0]), p),
                               f"party {commits[0].party} commits but party {p} never does")
    return CheckResult(PASS)


def check_bb_termination(trace: Trace) -> CheckResult:
    if trace.truncated:
        return CheckResult(INCONCLUSIVE, detail="trace truncated")
    for p in trace.honest:
        if trace.commit_of(p) is None or not trace.terminated(p):
            return CheckResult(FAIL, (p,), f"party {p} does not commit and terminate")
    return CheckResult(PASS)


# --- latency -----------------------------------------------------------------


@dataclass(frozen=True)
class Latency:
    d_max: Optional[Fraction] = None
    first_commit: Optional[Fraction] = None
    last_commit: Optional[Fraction] = None
    good_case_rounds: Optional[Fraction] = None
    bad_case_rounds: Optional[Fraction] = None
    bad_case_extra_rounds: Optional[Fraction] = None
    #: sync only: last commit time over the actual delay bound
    commit_span_deltas: Optional[Fraction] = None

    def to_json(self) -> dict:
        return {k: (time_to_json(v) if v is not None else None) for k, v in self.__dict__.items()}


def max_honest_delay(trace: Trace, until: Optional[Fraction] = None) -> Optional[Fraction]:
    cfg = trace.config
    delays = [e.env.delay for e in trace.of("Delivered")
              if cfg.is_honest(e.env.sender) and cfg.is_honest(e.env.recipient)
              and (until is None or e.t <= until)]
    return max(delays) if delays else None


def measure_latency(trace: Trace) -> Latency:
    commits = trace.commits()
    if not commits:
        return Latency()
    first = min(e.t for e in commits)
    last = max(e.t for e in commits)
    d_max = max_honest_delay(trace, last) or Fraction(1)
    all_committed = {e.party for e in commits} == set(trace.honest)
    good = bad = extra = span = None
    if trace.config.broadcaster_honest:
        good = last / d_max
    else:
        bad = last / d_max
        if all_committed:
            extra = (last - first) / d_max
    if trace.config.timing.is_sync:
        span = last / trace.config.timing.delta
    return Latency(d_max, first, last, good, bad, extra, span)


# --- lemmas --------------------------------------------------------------------


def check_lemma1(trace: Trace) -> CheckResult:
    """After an honest 2-round commit of v, no honest party sends Vote1 or Vote2 for another value."""
    fast = [e for e in trace.commits() if e.path == "fast"]
    if not fast:
        return CheckResult(NA)
    v = fast[0].value
    for e in trace.of("Sent"):
        if (trace.config.is_honest(e.party) and e.env.msg.kind in (Kind.VOTE1, Kind.VOTE2)
                and e.env.msg.value != v):
            return CheckResult(FAIL, (_commit_witness(fast[0]), (e.party, e.env.msg.kind.value,
                               value_to_json(e.env.msg.value), time_to_json(e.t))),
                               f"party {e.party} votes for another value")
    return CheckResult(PASS)


def check_lemma2(trace: Trace) -> CheckResult:
    """All honest locks for the same subject carry the same value."""
    seen: dict = {}
    for e in trace.of("Locked"):
        if not trace.config.is_honest(e.party) or e.subject is None:
            continue
        if e.subject in seen and seen[e.subject][1] != e.value:
            other = seen[e.subject]
            return CheckResult(FAIL, ((other[0], e.subject, value_to_json(other[1])),
                                      (e.party, e.subject, value_to_json(e.value))),
                               f"two values locked for subject {e.subject}")
        seen.setdefault(e.subject, (e.party, e.value))
    return CheckResult(PASS if seen else NA)


# --- verdicts ----------------------------------------------------------------------


@dataclass
class Verdict:
    agreement: CheckResult
    validity: CheckResult
    termination: CheckResult
    latency: Latency
    warnings: list = field(default_factory=list)
    lemmas: dict = field(default_factory=dict)

    @property
    def good_case_rounds(self):
        return self.latency.good_case_rounds

    @property
    def bad_case_extra_rounds(self):
        return self.latency.bad_case_extra_rounds

    @property
    def violation(self) -> bool:
        """A safety or liveness property failed."""
        return any(c.failed for c in (self.agreement, self.validity, self.termination))

    @property
    def ok(self) -> bool:
        return not self.violation and not any(c.failed for c in self.lemmas.values())

    def to_json(self) -> dict:
        return {
            "agreement": self.agreement.to_json(),
            "validity": self.validity.to_json(),
            "termination": self.termination.to_json(),
            "latency": self.latency.to_json(),
            "warnings": list(self.warnings),
            "lemmas": {k: v.to_json() for k, v in sorted(self.lemmas.items())},
        }


def verify(trace: Trace) -> Verdict:
    protocol = trace.protocol
    termination = check_bb_termination(trace) if protocol in SYNC_PROTOCOLS else check_brb_termination(trace)
    lemmas = {}
    if protocol == "brb24":
        lemmas["lemma1"] = check_lemma1(trace)
    if protocol == "f2brb":
        lemmas["lemma2"] = check_lemma2(trace)
    return Verdict(check_agreement(trace), check_validity(trace), termination,
                   measure_latency(trace), list(trace.warnings), lemmas)


# --- exploration ---------------------------------------------------------------------

V0, V1 = b"0", b"1"


@dataclass(frozen=True)
class Bounds:
    max_executions: int = 10 ** 6
    seed: int = 0
    #: seeded tie-break shuffles per scenario, on top of fifo and lifo
    shuffles: int = 4


@dataclass
class ExplorationReport:
    protocol: str
    n: int
    f: int
    family_size: int = 0
    executions: int = 0
    partial: bool = False
    violations: list = field(default_factory=list)
    violation_count: int = 0
    agreement_violations: int = 0
    termination_violations: int = 0
    truncated_runs: int = 0
    max_good_rounds: Optional[Fraction] = None
    max_bad_rounds: Optional[Fraction] = None
    max_bad_extra_rounds: Optional[Fraction] = None
    lemma1: dict = field(default_factory=lambda: {"checked": 0, "counterexamples": 0})
    lemma2: dict = field(default_factory=lambda: {"checked": 0, "counterexamples": 0})

    #: how many violating scenarios the report keeps in full
    KEEP = 20

    def to_json(self) -> dict:
        def t(x):
            return time_to_json(x) if x is not None else None
        return {
            "protocol": self.protocol, "n": self.n, "f": self.f,
            "family_size": self.family_size, "executions": self.executions,
            "partial": self.partial, "violations": self.violations,
            "violation_count": self.violation_count,
            "agreement_violations": self.agreement_violations,
            "termination_violations": self.termination_violations,
            "truncated_runs": self.truncated_runs,
            "max_good_rounds": t(self.max_good_rounds),
            "max_bad_rounds": t(self.max_bad_rounds),
            "max_bad_extra_rounds": t(self.max_bad_extra_rounds),
            "lemma1": dict(self.lemma1), "lemma2": dict(self.lemma2),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


class Family:
    """The declared adversary family, indexable so it can be sampled without listing it."""

    def __init__(self, protocol: str, n: int, f: int, shuffles: int = 4):
        if f < 1:
            raise ValueError("exploration needs f >= 1")
        self.protocol, self.n, self.f = protocol, n, f
        self.cases = [
            (BROADCASTER,) + tuple(range(n - f + 1, n)),   # Byzantine broadcaster
            tuple(range(n - f, n)),                        # honest broadcaster
        ]
        self.others = [Silent().to_dict(), MirrorHonest(V0).to_dict(), MirrorHonest(V1).to_dict()]
        self.equivocations = []
        for k, _ in message_kinds(protocol):
            subjects = range(1, n) if k is Kind.SUBJECT_VOTE else (None,)
            self.equivocations += [(k, s, bits) for s in subjects for bits in range(2 ** n)]
        self.schedules = ["fifo", "lifo"] + [f"shuffle:{i}" for i in range(shuffles)]
        self.schedules += [f"lag_to:{p}" for p in range(1, n)] + [f"lag_from:{p}" for p in range(1, n)]
        self.broadcaster_choices = 2 * 3 ** (n - 1)

    @property
    def other_choices(self) -> int:
        return len(self.others) + len(self.equivocations)

    def case_size(self, case: tuple) -> int:
        size = len(self.schedules)
        for p in case:
            size *= self.broadcaster_choices if p == BROADCASTER else self.other_choices
        return size

    def __len__(self) -> int:
        return sum(self.case_size(c) for c in self.cases)

    def _assignment(self, code: int, options) -> dict:
        out = {}
        for r in range(1, self.n):
            code, digit = divmod(code, len(options))
            out[r] = options[digit]
        return out

    def _strategy(self, p: int, code: int) -> dict:
        if p == BROADCASTER:
            follow, code = divmod(code, 3 ** (self.n - 1))
            assignment = self._assignment(code, (V0, V1, None))
            return EquivocateSplit(assignment, follow=bool(follow)).to_dict()
        if code < len(self.others):
            return self.others[code]
        kind, subject, bits = self.equivocations[code - len(self.others)]
        assignment = {r: (V1 if bits >> r & 1 else V0) for r in range(self.n)}
        return EquivocateSplit(assignment, kind=kind.value, subject=subject).to_dict()

    def _schedule(self, name: str) -> DelayPolicy:
        what, _, arg = name.partition(":")
        if what in ("fifo", "lifo"):
            return DelayPolicy("unit", order=what)
        if what == "shuffle":
            return DelayPolicy("unit", order="shuffle", order_seed=int(arg))
        rule = (DelayRule(recipients=(int(arg),), delay=Fraction(2)) if what == "lag_to"
                else DelayRule(senders=(int(arg),), delay=Fraction(2)))
        return DelayPolicy("script", rules=(rule,))

    def scenario(self, index: int) -> Scenario:
        name = f"explore-{self.protocol}-n{self.n}-f{self.f}-{index}"
        for case in self.cases:
            size = self.case_size(case)
            if index < size:
                break
            index -= size
        else:
            raise IndexError(index)
        index, sched = divmod(index, len(self.schedules))
        adversary = {}
        for p in case:
            radix = self.broadcaster_choices if p == BROADCASTER else self.other_choices
            index, code = divmod(index, radix)
            adversary[p] = self._strategy(p, code)
        return Scenario(self.protocol, self.n, self.f, case, V0, adversary=adversary,
                        delays=self._schedule(self.schedules[sched]),
                        name=name)


def explore(protocol: str, n: int, f: int, bounds: Bounds = Bounds()) -> ExplorationReport:
    """Run the declared adversary family through the simulator and all checkers.

    The family is enumerated exhaustively when it fits in
    ``bounds.max_executions``; otherwise a seeded sample of that many
    members is run in index order and the report is flagged partial.
    """
    if protocol in SYNC_PROTOCOLS:
        raise ValueError("exploration covers the asynchronous protocols")
    family = Family(protocol, n, f, bounds.shuffles)
    total = len(family)
    report = ExplorationReport(protocol, n, f, family_size=total)
    if total <= bounds.max_executions:
        indices = range(total)
    else:
        report.partial = True
        indices = sorted(random.Random(bounds.seed).sample(range(total), bounds.max_executions))
    for i in indices:
        scenario = family.scenario(i)
        trace = run(scenario)
        verdict = verify(trace)
        report.executions += 1
        if trace.truncated:
            report.truncated_runs += 1
        _fold(report, scenario, verdict)
    return report


def _max(a, b):
    if b is None:
        return a
    return b if a is None else max(a, b)


def _fold(report: ExplorationReport, scenario: Scenario, verdict: Verdict):
    lat = verdict.latency
    report.max_good_rounds = _max(report.max_good_rounds, lat.good_case_rounds)
    report.max_bad_rounds = _max(report.max_bad_rounds, lat.bad_case_rounds)
    report.max_bad_extra_rounds = _max(report.max_bad_extra_rounds, lat.bad_case_extra_rounds)
    for name in ("lemma1", "lemma2"):
        res = verdict.lemmas.get(name)
        if res is not None and res.status != NA:
            counter = getattr(report, name)
            counter["checked"] += 1
            counter["counterexamples"] += res.failed
    if verdict.agreement.failed:
        report.agreement_violations += 1
    if verdict.termination.failed:
        report.termination_violations += 1
    if not verdict.ok:
        report.violation_count += 1
        if len(report.violations) < report.KEEP:
            report.violations.append({"scenario": scenario.to_json(), "verdict": verdict.to_json()})
