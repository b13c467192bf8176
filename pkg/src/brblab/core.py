"""Shared vocabulary: values, messages, envelopes, configs, actions, tallies and traces.

Times are exact :class:`fractions.Fraction` values everywhere; the JSON form
is always a ``"p/q"`` string so traces replay bit-exactly.
"""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Optional, Union

BROADCASTER = 0


class _Bottom:
    """The distinguished lock placeholder. Never a broadcaster input."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BOTTOM"

    def __reduce__(self):
        return (_Bottom, ())

    def __lt__(self, other):
        return not isinstance(other, _Bottom)


BOTTOM = _Bottom()

Value = Union[bytes, _Bottom]


def as_value(raw) -> Value:
    if raw is None or raw is BOTTOM:
        return BOTTOM
    if isinstance(raw, bytes):
        return raw
    if isinstance(raw, str):
        return raw.encode("latin-1")
    raise TypeError(f"cannot interpret {raw!r} as a value")


def value_to_json(value: Value):
    if value is BOTTOM:
        return None
    return value.decode("latin-1")


def as_time(raw) -> Fraction:
    if isinstance(raw, Fraction):
        return raw
    if isinstance(raw, (int, str)):
        return Fraction(raw)
    raise TypeError(f"times must be exact (int, str or Fraction), got {raw!r}")


def time_to_json(t: Fraction) -> str:
    t = Fraction(t)
    return f"{t.numerator}/{t.denominator}"


class Kind(enum.Enum):
    PROPOSE = "Propose"
    ACK = "Ack"
    VOTE1 = "Vote1"
    VOTE2 = "Vote2"
    SUBJECT_VOTE = "SubjectVote"
    ECHO = "Echo"
    VOTE = "Vote"

    def __lt__(self, other):
        return self.value < other.value


@dataclass(frozen=True, order=True)
class Message:
    kind: Kind
    value: Value
    subject: Optional[int] = None

    def __post_init__(self):
        if (self.kind is Kind.SUBJECT_VOTE) != (self.subject is not None):
            raise ValueError("subject is present exactly for SubjectVote messages")

    def to_json(self) -> dict:
        d = {"kind": self.kind.value, "value": value_to_json(self.value)}
        if self.subject is not None:
            d["subject"] = self.subject
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Message":
        return cls(Kind(d["kind"]), as_value(d.get("value")), d.get("subject"))


@dataclass(frozen=True)
class Envelope:
    msg: Message
    sender: int
    recipient: int
    send_time: Fraction
    deliver_time: Fraction
    id: int = -1

    def __post_init__(self):
        if self.deliver_time < self.send_time:
            raise ValueError("an envelope cannot be delivered before it is sent")

    @property
    def delay(self) -> Fraction:
        return self.deliver_time - self.send_time


# --- timing and configuration -------------------------------------------


@dataclass(frozen=True)
class Timing:
    """``mode`` is ``"async"`` or ``"sync"``.

    For sync timing ``delta`` is the actual delay bound, ``big_delta`` the
    known conservative bound and ``sigma`` the actual start skew bound.
    """

    mode: str = "async"
    delta: Fraction = Fraction(1)
    big_delta: Fraction = Fraction(1)
    sigma: Fraction = Fraction(0)

    def __post_init__(self):
        if self.mode not in ("async", "sync"):
            raise ValueError(f"unknown timing mode {self.mode!r}")
        for name in ("delta", "big_delta", "sigma"):
            object.__setattr__(self, name, as_time(getattr(self, name)))
        if self.mode == "sync":
            if not (0 < self.delta <= self.big_delta):
                raise ValueError("sync timing needs 0 < delta <= big_delta")
            if not (0 <= self.sigma <= self.delta):
                raise ValueError("sync timing needs 0 <= sigma <= delta")

    @property
    def is_sync(self) -> bool:
        return self.mode == "sync"

    def to_json(self) -> dict:
        if not self.is_sync:
            return {"mode": "async"}
        return {
            "mode": "sync",
            "delta": time_to_json(self.delta),
            "big_delta": time_to_json(self.big_delta),
            "sigma": time_to_json(self.sigma),
        }

    @classmethod
    def from_json(cls, d: Optional[dict]) -> "Timing":
        if not d:
            return cls()
        return cls(
            d.get("mode", "async"),
            as_time(d.get("delta", 1)),
            as_time(d.get("big_delta", d.get("delta", 1))),
            as_time(d.get("sigma", 0)),
        )


ASYNC = Timing()


@dataclass(frozen=True)
class Config:
    n: int
    f: int
    byzantine: frozenset = frozenset()
    broadcaster_input: Value = b"v"
    timing: Timing = ASYNC

    def __post_init__(self):
        object.__setattr__(self, "byzantine", frozenset(self.byzantine))
        if self.n <= 0:
            raise ValueError("n must be positive")
        if self.f < 0:
            raise ValueError("f must be non-negative")
        if len(self.byzantine) > self.f:
            raise ValueError(f"{len(self.byzantine)} Byzantine parties exceed f={self.f}")
        for p in self.byzantine:
            if not 0 <= p < self.n:
                raise ValueError(f"Byzantine party {p} is not a party id")
        if self.broadcaster_input is BOTTOM:
            raise ValueError("BOTTOM is never a broadcaster input")

    @property
    def honest(self) -> list[int]:
        return [p for p in range(self.n) if p not in self.byzantine]

    @property
    def broadcaster_honest(self) -> bool:
        return BROADCASTER not in self.byzantine

    def is_honest(self, p: int) -> bool:
        return p not in self.byzantine

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "f": self.f,
            "byzantine": sorted(self.byzantine),
            "input": value_to_json(self.broadcaster_input),
            "timing": self.timing.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Config":
        return cls(
            d["n"], d["f"], frozenset(d.get("byzantine", ())),
            as_value(d.get("input", "v")), Timing.from_json(d.get("timing")),
        )


# Resilience envelopes, as (predicate, warning text) per protocol.
_RESILIENCE = {
    "brb24": [(lambda n, f: n >= 4 * f, "n < 4f")],
    "f1brb": [(lambda n, f: n >= 4 * f, "n < 4f"), (lambda n, f: f == 1, "f != 1")],
    "f2brb": [(lambda n, f: n >= 4 * f, "n < 4f"), (lambda n, f: f == 2, "f != 2")],
    "brb23": [(lambda n, f: n >= 5 * f - 1, "n < 5f-1")],
    "bracha": [(lambda n, f: n >= 3 * f + 1, "n < 3f+1")],
    "imbs_raynal": [(lambda n, f: n >= 5 * f + 1, "n < 5f+1")],
    "bb2": [(lambda n, f: n >= 4 * f, "n < 4f")],
    "bb3": [(lambda n, f: n >= 3 * f + 1, "n < 3f+1")],
}

PROTOCOLS = tuple(_RESILIENCE)
ASYNC_PROTOCOLS = ("brb24", "f1brb", "f2brb", "brb23", "bracha", "imbs_raynal")
SYNC_PROTOCOLS = ("bb2", "bb3")


def validate_config(cfg: Config, protocol_id: str, broadcaster: int = BROADCASTER) -> list[str]:
    """Return a warning per violated resilience precondition of ``protocol_id``.

    Violations are warnings, not errors: lower-bound scenarios run protocols
    outside their envelope on purpose. Malformed configurations raise.
    """
    if cfg.n <= 0 or cfg.f < 0:
        raise ValueError("n must be positive and f non-negative")
    if not 0 <= broadcaster < cfg.n:
        raise ValueError(f"broadcaster {broadcaster} is not a party id")
    if protocol_id not in _RESILIENCE:
        raise ValueError(f"unknown protocol {protocol_id!r}")
    warnings = [msg for ok, msg in _RESILIENCE[protocol_id] if not ok(cfg.n, cfg.f)]
    if protocol_id in SYNC_PROTOCOLS and not cfg.timing.is_sync:
        warnings.append("synchronous protocol run without sync timing")
    return warnings


# --- actions and machine events ------------------------------------------


@dataclass(frozen=True)
class SendAll:
    msg: Message


@dataclass(frozen=True)
class SendTo:
    to: int
    msg: Message


@dataclass(frozen=True)
class Commit:
    value: Value
    path: str = ""


@dataclass(frozen=True)
class SetTimer:
    local_time: Fraction
    tag: str


@dataclass(frozen=True)
class Terminate:
    pass


@dataclass(frozen=True)
class Lock:
    """Instrumentation: the machine locked ``value`` (for ``subject`` in F2-BRB)."""

    value: Value
    subject: Optional[int] = None


@dataclass(frozen=True)
class InvokeBA:
    value: Value


Action = Union[SendAll, SendTo, Commit, SetTimer, Terminate, Lock, InvokeBA]


@dataclass(frozen=True)
class Start:
    time: Fraction = Fraction(0)


@dataclass(frozen=True)
class Delivered:
    env: Envelope

    @property
    def time(self) -> Fraction:
        return self.env.deliver_time


@dataclass(frozen=True)
class TimerFired:
    tag: str
    time: Fraction


@dataclass(frozen=True)
class BADecided:
    value: Value
    time: Fraction


Event = Union[Start, Delivered, TimerFired, BADecided]


# --- tallies ---------------------------------------------------------------


class Tally:
    """Per-party record of which senders sent which messages.

    In the default mode the first message of a kind (and subject) from a
    sender wins and later ones are ignored. With ``per_value=True`` a sender
    counts once per (kind, value, subject) instead, which is what protocols
    whose honest parties may ack several values need.
    """

    def __init__(self, broadcaster: int = BROADCASTER, per_value: bool = False):
        self.broadcaster = broadcaster
        self.per_value = per_value
        self._first: dict[tuple, Value] = {}
        self._senders: dict[tuple, set] = defaultdict(set)
        self._order: dict[tuple, list] = defaultdict(list)

    def insert(self, env: Envelope) -> bool:
        """Record ``env``; return whether it changed any count."""
        msg = env.msg
        key = (msg.kind, msg.subject, env.sender)
        if self.per_value:
            key = key + (msg.value,)
        if key in self._first:
            return False
        self._first[key] = msg.value
        bucket = (msg.kind, msg.value, msg.subject)
        self._senders[bucket].add(env.sender)
        order = self._order[(msg.kind, msg.subject)]
        if msg.value not in order:
            order.append(msg.value)
        return True

    def count(self, kind: Kind, value: Value, subject: Optional[int] = None,
              exclude_broadcaster: bool = True, exclude: Iterable[int] = ()) -> int:
        senders = self._senders.get((kind, value, subject), ())
        skip = set(exclude)
        if exclude_broadcaster:
            skip.add(self.broadcaster)
        return sum(1 for s in senders if s not in skip)

    def senders(self, kind: Kind, value: Value, subject: Optional[int] = None) -> frozenset:
        return frozenset(self._senders.get((kind, value, subject), ()))

    def values(self, kind: Kind, subject: Optional[int] = None) -> list:
        """Values seen for ``kind``, in first-seen order."""
        return list(self._order.get((kind, subject), ()))

    def subjects(self, kind: Kind) -> list:
        return sorted({s for (k, s) in self._order if k is kind and s is not None})

    def first_value(self, kind: Kind, sender: int, subject: Optional[int] = None):
        return self._first.get((kind, subject, sender))

    def contributions(self, kind: Kind, sender: int, subject: Optional[int] = None) -> int:
        """How many counted entries ``sender`` has for (kind, subject)."""
        return sum(1 for (k, v, s), senders in self._senders.items()
                   if k is kind and s == subject and sender in senders)


def tally_insert(tally: Tally, env: Envelope) -> Tally:
    tally.insert(env)
    return tally


# --- scenarios -------------------------------------------------------------


@dataclass(frozen=True)
class DelayRule:
    """Override the delay of matching envelopes.

    Any ``None`` field matches everything. Exactly one of ``delay`` and
    ``deliver_at`` should be set; ``deliver_at`` is clamped so the delay is
    never below the minimum quantum.
    """

    senders: Optional[tuple] = None
    recipients: Optional[tuple] = None
    kinds: Optional[tuple] = None
    sent_from: Optional[Fraction] = None
    sent_before: Optional[Fraction] = None
    delay: Optional[Fraction] = None
    deliver_at: Optional[Fraction] = None

    def matches(self, env_sender: int, env_recipient: int, kind: Kind, send_time: Fraction) -> bool:
        if self.senders is not None and env_sender not in self.senders:
            return False
        if self.recipients is not None and env_recipient not in self.recipients:
            return False
        if self.kinds is not None and kind.value not in self.kinds:
            return False
        if self.sent_from is not None and send_time < self.sent_from:
            return False
        if self.sent_before is not None and send_time >= self.sent_before:
            return False
        return True

    def to_json(self) -> dict:
        d = {}
        for name in ("senders", "recipients", "kinds"):
            v = getattr(self, name)
            if v is not None:
                d[name] = list(v)
        for name in ("sent_from", "sent_before", "delay", "deliver_at"):
            v = getattr(self, name)
            if v is not None:
                d[name] = time_to_json(v)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "DelayRule":
        kw = {}
        for name in ("senders", "recipients", "kinds"):
            if d.get(name) is not None:
                kw[name] = tuple(d[name])
        for name in ("sent_from", "sent_before", "delay", "deliver_at"):
            if d.get(name) is not None:
                kw[name] = as_time(d[name])
        return cls(**kw)


@dataclass(frozen=True)
class DelayPolicy:
    """How the network assigns delays and orders simultaneous deliveries.

    ``mode`` is ``"unit"`` (every delay 1), ``"sync"`` (every delay
    ``delta``; rules may shorten honest deliveries but never exceed it) or
    ``"script"`` (unit by default, rules may assign any finite delay).
    ``order`` breaks ties between deliveries due at the same instant:
    ``"fifo"``, ``"lifo"`` or ``"shuffle"`` (seeded by ``order_seed``).
    """

    mode: str = "unit"
    delta: Fraction = Fraction(1)
    rules: tuple = ()
    order: str = "fifo"
    order_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("unit", "sync", "script"):
            raise ValueError(f"unknown delay mode {self.mode!r}")
        if self.order not in ("fifo", "lifo", "shuffle"):
            raise ValueError(f"unknown ordering {self.order!r}")
        object.__setattr__(self, "delta", as_time(self.delta))
        object.__setattr__(self, "rules", tuple(self.rules))

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "delta": time_to_json(self.delta),
            "rules": [r.to_json() for r in self.rules],
            "order": self.order,
            "order_seed": self.order_seed,
        }

    @classmethod
    def from_json(cls, d: Optional[dict]) -> "DelayPolicy":
        if not d:
            return cls()
        return cls(
            d.get("mode", "unit"), as_time(d.get("delta", 1)),
            tuple(DelayRule.from_json(r) for r in d.get("rules", ())),
            d.get("order", "fifo"), d.get("order_seed", 0),
        )


@dataclass(frozen=True)
class Scenario:
    """A complete, self-describing experiment.

    ``adversary`` maps each Byzantine party to a strategy description
    ``{"strategy": name, "params": {...}}``; parties without an entry are
    silent.
    """

    protocol: str
    n: int
    f: int
    byzantine: tuple = ()
    input: Value = b"v"
    timing: Timing = ASYNC
    adversary: dict = field(default_factory=dict)
    delays: DelayPolicy = DelayPolicy()
    seed: int = 0
    event_budget: Optional[int] = None
    start_offsets: Optional[tuple] = None
    ba_adversary: str = "equivocate"
    name: str = ""
    expect_violation: bool = False

    def __post_init__(self):
        object.__setattr__(self, "byzantine", tuple(sorted(self.byzantine)))
        object.__setattr__(self, "adversary", {int(k): v for k, v in self.adversary.items()})
        if self.start_offsets is not None:
            object.__setattr__(self, "start_offsets", tuple(as_time(t) for t in self.start_offsets))

    @property
    def config(self) -> Config:
        return Config(self.n, self.f, frozenset(self.byzantine), self.input, self.timing)

    def to_json(self) -> dict:
        d = {
            "name": self.name,
            "protocol": self.protocol,
            "n": self.n,
            "f": self.f,
            "byzantine": list(self.byzantine),
            "input": value_to_json(self.input),
            "timing": self.timing.to_json(),
            "adversary": {"parties": {str(k): self.adversary[k] for k in sorted(self.adversary)}},
            "delays": self.delays.to_json(),
            "seed": self.seed,
            "event_budget": self.event_budget,
            "ba_adversary": self.ba_adversary,
            "expect_violation": self.expect_violation,
        }
        if self.start_offsets is not None:
            d["timing"]["start_offsets"] = [time_to_json(t) for t in self.start_offsets]
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, d: dict) -> "Scenario":
        """Parse a scenario document.

        ``adversary`` is either ``{"parties": {id: strategy}}`` or a single
        ``{"strategy": name, "params": {...}}`` applied to every Byzantine
        party.
        """
        byz = tuple(d.get("byzantine", ()))
        adv = d.get("adversary") or {}
        if "parties" in adv:
            per_party = {int(k): v for k, v in adv["parties"].items()}
        elif "strategy" in adv:
            per_party = {p: {"strategy": adv["strategy"], "params": adv.get("params", {})} for p in byz}
        else:
            per_party = {}
        timing = d.get("timing") or {}
        offsets = timing.get("start_offsets")
        return cls(
            protocol=d["protocol"],
            n=int(d["n"]),
            f=int(d["f"]),
            byzantine=byz,
            input=as_value(d.get("input", "v")),
            timing=Timing.from_json(timing),
            adversary=per_party,
            delays=DelayPolicy.from_json(d.get("delays")),
            seed=int(d.get("seed", 0)),
            event_budget=d.get("event_budget"),
            start_offsets=tuple(offsets) if offsets is not None else None,
            ba_adversary=d.get("ba_adversary", "equivocate"),
            name=d.get("name", ""),
            expect_violation=bool(d.get("expect_violation", False)),
        )

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        return cls.from_json(json.loads(text))


# --- traces ----------------------------------------------------------------

ENTRIES = ("Sent", "Delivered", "Committed", "Terminated", "TimerFired",
           "Locked", "BAInvoked", "BADecided")


@dataclass(frozen=True)
class TraceEvent:
    t: Fraction
    party: int
    entry: str
    env: Optional[Envelope] = None
    value: Any = None
    path: str = ""
    tag: str = ""
    subject: Optional[int] = None

    def to_json(self) -> dict:
        d: dict = {"t": time_to_json(self.t), "party": self.party, "entry": self.entry}
        if self.env is not None:
            d.update(self.env.msg.to_json())
            d["sender"] = self.env.sender
            d["recipient"] = self.env.recipient
            d["id"] = self.env.id
            d["send_t"] = time_to_json(self.env.send_time)
            d["deliver_t"] = time_to_json(self.env.deliver_time)
        elif self.entry in ("Committed", "Locked", "BAInvoked", "BADecided"):
            d["value"] = value_to_json(self.value)
        if self.subject is not None and self.env is None:
            d["subject"] = self.subject
        if self.path:
            d["path"] = self.path
        if self.tag:
            d["tag"] = self.tag
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TraceEvent":
        env = None
        if "sender" in d:
            env = Envelope(Message.from_json(d), d["sender"], d["recipient"],
                           as_time(d["send_t"]), as_time(d["deliver_t"]), d.get("id", -1))
        value = as_value(d["value"]) if "value" in d and env is None else None
        return cls(as_time(d["t"]), d["party"], d["entry"], env, value,
                   d.get("path", ""), d.get("tag", ""),
                   d.get("subject") if env is None else None)


@dataclass
class Trace:
    config: Config
    protocol: str
    events: list = field(default_factory=list)
    truncated: bool = False
    warnings: list = field(default_factory=list)
    scenario: Optional[dict] = None

    def append(self, ev: TraceEvent) -> None:
        self.events.append(ev)

    @property
    def honest(self) -> list[int]:
        return self.config.honest

    def of(self, entry: str, party: Optional[int] = None) -> list[TraceEvent]:
        return [e for e in self.events
                if e.entry == entry and (party is None or e.party == party)]

    def commits(self, honest_only: bool = True) -> list[TraceEvent]:
        return [e for e in self.of("Committed")
                if not honest_only or self.config.is_honest(e.party)]

    def commit_of(self, party: int) -> Optional[TraceEvent]:
        for e in self.events:
            if e.entry == "Committed" and e.party == party:
                return e
        return None

    def terminated(self, party: int) -> bool:
        return any(e.entry == "Terminated" and e.party == party for e in self.events)

    def header(self) -> dict:
        return {
            "entry": "header",
            "protocol": self.protocol,
            "config": self.config.to_json(),
            "truncated": self.truncated,
            "warnings": list(self.warnings),
            "scenario": self.scenario,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True, separators=(",", ":"))]
        lines += [json.dumps(e.to_json(), sort_keys=True, separators=(",", ":")) for e in self.events]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        head, body = rows[0], rows[1:]
        if head.get("entry") != "header":
            raise ValueError("trace is missing its header line")
        return cls(Config.from_json(head["config"]), head["protocol"],
                   [TraceEvent.from_json(r) for r in body], head["truncated"],
                   list(head["warnings"]), head.get("scenario"))


def check_wellformed(trace: Trace) -> list[str]:
    """Return a list of well-formedness problems (empty when the trace is sound)."""
    problems = []
    last = None
    sent_ids = set()
    commits: dict[int, int] = defaultdict(int)
    terms: dict[int, int] = defaultdict(int)
    for i, e in enumerate(trace.events):
        if last is not None and e.t < last:
            problems.append(f"event {i} goes back in time")
        last = e.t
        if e.entry not in ENTRIES:
            problems.append(f"event {i} has unknown entry {e.entry!r}")
        if e.entry == "Sent":
            sent_ids.add(e.env.id)
        elif e.entry == "Delivered":
            if e.env.id not in sent_ids:
                problems.append(f"event {i} delivers envelope {e.env.id} that was never sent")
            if e.env.deliver_time < e.env.send_time:
                problems.append(f"event {i} is delivered before it was sent")
        elif e.entry == "Committed":
            commits[e.party] += 1
        elif e.entry == "Terminated":
            terms[e.party] += 1
    problems += [f"party {p} commits {c} times" for p, c in commits.items() if c > 1]
    problems += [f"party {p} terminates {c} times" for p, c in terms.items() if c > 1]
    return problems
