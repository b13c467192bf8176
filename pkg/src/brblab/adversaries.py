"""Byzantine strategies and the scripted split-world scenarios of the lower bounds.

A strategy is plain data (``{"strategy": name, "params": {...}}``) so every
scenario serializes completely; :func:`build_behavior` turns it into the
runtime object the simulator drives.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

from .core import (
    BROADCASTER, Config, DelayPolicy, DelayRule, Delivered, Envelope, Kind, Message,
    Scenario, SendAll, SendTo, SetTimer, Start, TimerFired, Timing, Trace, as_time,
    as_value, time_to_json, validate_config, value_to_json,
)
from .protocols import make_machine, message_kinds

V0 = b"0"
V1 = b"1"


# --- strategy descriptions -------------------------------------------------


@dataclass(frozen=True)
class Silent:
    name = "silent"

    def to_dict(self):
        return {"strategy": self.name, "params": {}}


@dataclass(frozen=True)
class EquivocateSplit:
    """Send ``kind`` with a per-recipient value; ``None`` recipients get nothing.

    For the broadcaster the default kind is Propose. ``follow`` makes it also
    send the protocol's first-round message with the same split one round
    later.
    """

    assignment: dict
    kind: str = "Propose"
    send_time: Optional[Fraction] = None
    subject: Optional[int] = None
    follow: bool = False
    name = "equivocate_split"

    def to_dict(self):
        params = {
            "assignment": {str(r): value_to_json(v) if v is not None else None
                           for r, v in sorted(self.assignment.items())},
            "kind": self.kind,
        }
        if self.send_time is not None:
            params["send_time"] = time_to_json(self.send_time)
        if self.subject is not None:
            params["subject"] = self.subject
        if self.follow:
            params["follow"] = True
        return {"strategy": self.name, "params": params}


@dataclass(frozen=True)
class MirrorHonest:
    """Run the honest protocol, but pretend the broadcaster proposed ``pretend_input``.

    ``to`` restricts recipients, ``send_before`` cuts sending off at a time,
    ``ignore_from``/``ignore_until`` hide real deliveries from some senders
    and ``inject`` feeds forged deliveries ``(t, sender, Message)`` instead.
    A ``pretend_input`` of ``None`` keeps the real proposal.
    """

    pretend_input: Any = None
    to: Optional[tuple] = None
    send_before: Optional[Fraction] = None
    ignore_from: tuple = ()
    ignore_until: Optional[Fraction] = None
    inject: tuple = ()
    name = "mirror_honest"

    def to_dict(self):
        params: dict = {"pretend_input": value_to_json(self.pretend_input)
                        if self.pretend_input is not None else None}
        if self.to is not None:
            params["to"] = sorted(self.to)
        if self.send_before is not None:
            params["send_before"] = time_to_json(self.send_before)
        if self.ignore_from:
            params["ignore_from"] = sorted(self.ignore_from)
            params["ignore_until"] = time_to_json(self.ignore_until)
        if self.inject:
            params["inject"] = [_send_json(t, s, m) for t, s, m in self.inject]
        return {"strategy": self.name, "params": params}


@dataclass(frozen=True)
class Scripted:
    """An explicit send plan: ``(send_time, recipient, Message)`` triples."""

    sends: tuple
    name = "scripted"

    def to_dict(self):
        return {"strategy": self.name,
                "params": {"sends": [_send_json(t, r, m, key="to") for t, r, m in self.sends]}}


@dataclass(frozen=True)
class RandomByz:
    """Honest behaviour with seeded random drops and value flips per message."""

    seed: int = 0
    p_drop: float = 0.2
    p_flip: float = 0.3
    values: tuple = (V0, V1)
    name = "random_byz"

    def to_dict(self):
        return {"strategy": self.name, "params": {
            "seed": self.seed, "p_drop": self.p_drop, "p_flip": self.p_flip,
            "values": [value_to_json(v) for v in self.values]}}


@dataclass(frozen=True)
class PerRecipient:
    """Different strategies towards different recipients: ``((recipients, strategy), ...)``.

    Sends to the party itself always pass, so an inner honest machine still
    hears its own messages.
    """

    routes: tuple
    name = "per_recipient"

    def to_dict(self):
        return {"strategy": self.name, "params": {"routes": [
            {"to": sorted(to), "strategy": s.to_dict() if hasattr(s, "to_dict") else s}
            for to, s in self.routes]}}


def _send_json(t, party, msg: Message, key="sender") -> dict:
    d = {"t": time_to_json(t), key: party}
    d.update(msg.to_json())
    return d


def _send_from_json(d: dict, key="sender"):
    return as_time(d["t"]), d[key], Message.from_json(d)


# --- runtime ---------------------------------------------------------------


@dataclass(frozen=True)
class Out:
    """A send from a Byzantine party; ``at`` schedules it for later."""

    to: int
    msg: Message
    at: Optional[Fraction] = None


@dataclass(frozen=True)
class Wake:
    at: Fraction
    token: Any


@dataclass
class SimContext:
    """What a behaviour may know about the run it is part of."""

    protocol: str
    cfg: Config
    unit: Fraction = Fraction(1)
    offsets: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.cfg.n


class Behavior:
    def __init__(self, me: int, ctx: SimContext):
        self.me = me
        self.ctx = ctx

    def start(self, now: Fraction) -> list:
        return []

    def deliver(self, env: Envelope) -> list:
        return []

    def wake(self, now: Fraction, token) -> list:
        return []


class SilentBehavior(Behavior):
    pass


class ScriptedBehavior(Behavior):
    def __init__(self, me, ctx, sends):
        super().__init__(me, ctx)
        self.sends = sorted(sends, key=lambda s: s[0])

    def start(self, now):
        return [Out(to, msg, max(t, now)) for t, to, msg in self.sends]


class EquivocateBehavior(Behavior):
    def __init__(self, me, ctx, assignment, kind, send_time=None, subject=None, follow=False):
        super().__init__(me, ctx)
        self.assignment = assignment
        self.kind = Kind(kind)
        rounds = dict(message_kinds(ctx.protocol))
        natural = 0 if self.kind is Kind.PROPOSE else rounds.get(self.kind, 1)
        self.send_time = send_time if send_time is not None else natural * ctx.unit
        self.subject = subject
        if self.kind is Kind.SUBJECT_VOTE and self.subject is None:
            self.subject = me
        self.follow = follow

    def start(self, now):
        outs = []
        for r in range(self.ctx.n):
            v = self.assignment.get(r)
            if v is None:
                continue
            outs.append(Out(r, Message(self.kind, v, self.subject), self.send_time))
            if self.follow and self.kind is Kind.PROPOSE:
                first_kind, first_round = message_kinds(self.ctx.protocol)[0]
                outs.append(Out(r, Message(first_kind, v), first_round * self.ctx.unit))
        return outs


class MachineBehavior(Behavior):
    """Drives an internal honest machine and converts its actions into sends."""

    def __init__(self, me, ctx, input=None):
        super().__init__(me, ctx)
        offset = ctx.offsets.get(me, Fraction(0))
        self.machine = make_machine(ctx.protocol, me, ctx.cfg, input, offset)
        self.offset = offset

    def _feed(self, event) -> list:
        outs = []
        for action in self.machine.step(event):
            if isinstance(action, SendAll):
                outs += [Out(r, action.msg) for r in range(self.ctx.n)]
            elif isinstance(action, SendTo):
                outs.append(Out(action.to, action.msg))
            elif isinstance(action, SetTimer):
                outs.append(Wake(action.local_time + self.offset, ("timer", action.tag)))
        return self.filter(outs, event.time)

    def filter(self, outs, now):
        return outs

    def start(self, now):
        return self._feed(Start(now))

    def deliver(self, env):
        return self._feed(Delivered(env))

    def wake(self, now, token):
        if token[0] == "timer":
            return self._feed(TimerFired(token[1], now))
        return []


class MirrorBehavior(MachineBehavior):
    def __init__(self, me, ctx, pretend_input=None, to=None, send_before=None,
                 ignore_from=(), ignore_until=None, inject=()):
        forging = pretend_input is not None
        super().__init__(me, ctx, pretend_input if me == BROADCASTER else None)
        self.forge = forging and me != BROADCASTER
        self.pretend_input = pretend_input
        self.to = None if to is None else frozenset(to) | {me}
        self.send_before = send_before
        self.ignore_from = frozenset(ignore_from)
        self.ignore_until = ignore_until
        self.inject = tuple(inject)

    def start(self, now):
        outs = super().start(now)
        if self.forge:
            outs.append(Wake(now + self.ctx.unit, ("forge", Message(Kind.PROPOSE, self.pretend_input), BROADCASTER)))
        for t, sender, msg in self.inject:
            outs.append(Wake(t, ("forge", msg, sender)))
        return outs

    def deliver(self, env):
        if self.forge and env.msg.kind is Kind.PROPOSE:
            return []
        if env.sender in self.ignore_from and (self.ignore_until is None or env.deliver_time <= self.ignore_until):
            return []
        return super().deliver(env)

    def wake(self, now, token):
        if token[0] == "forge":
            _, msg, sender = token
            env = Envelope(msg, sender, self.me, now, now)
            return self._feed(Delivered(env))
        return super().wake(now, token)

    def filter(self, outs, now):
        kept = []
        for o in outs:
            if isinstance(o, Out):
                if self.to is not None and o.to not in self.to:
                    continue
                if self.send_before is not None and now >= self.send_before:
                    continue
            kept.append(o)
        return kept


class RandomBehavior(MachineBehavior):
    def __init__(self, me, ctx, seed=0, p_drop=0.2, p_flip=0.3, values=(V0, V1)):
        super().__init__(me, ctx, values[0] if me == BROADCASTER else None)
        self.rng = random.Random(f"{seed}:{me}")
        self.p_drop = p_drop
        self.p_flip = p_flip
        self.values = tuple(values)

    def filter(self, outs, now):
        kept = []
        for o in outs:
            if not isinstance(o, Out):
                kept.append(o)
                continue
            u = self.rng.random()
            if u < self.p_drop:
                continue
            if u < self.p_drop + self.p_flip:
                others = [v for v in self.values if v != o.msg.value] or list(self.values)
                o = Out(o.to, Message(o.msg.kind, self.rng.choice(others), o.msg.subject), o.at)
            kept.append(o)
        return kept


class PerRecipientBehavior(Behavior):
    def __init__(self, me, ctx, routes):
        super().__init__(me, ctx)
        self.routes = [(frozenset(to), build_behavior(spec, me, ctx)) for to, spec in routes]

    def _route(self, i, outs):
        to, _ = self.routes[i]
        kept = []
        for o in outs:
            if isinstance(o, Wake):
                kept.append(Wake(o.at, (i, o.token)))
            elif o.to in to or o.to == self.me:
                kept.append(o)
        return kept

    def start(self, now):
        return [o for i, (_, b) in enumerate(self.routes) for o in self._route(i, b.start(now))]

    def deliver(self, env):
        return [o for i, (_, b) in enumerate(self.routes) for o in self._route(i, b.deliver(env))]

    def wake(self, now, token):
        i, inner = token
        return self._route(i, self.routes[i][1].wake(now, inner))


def _opt_time(params, key):
    return as_time(params[key]) if params.get(key) is not None else None


def build_behavior(spec, me: int, ctx: SimContext) -> Behavior:
    """Instantiate the runtime behaviour for a strategy description (dict or dataclass)."""
    if hasattr(spec, "to_dict"):
        spec = spec.to_dict()
    name = spec.get("strategy", "silent")
    params = spec.get("params", {}) or {}
    if name == "silent":
        return SilentBehavior(me, ctx)
    if name == "equivocate_split":
        assignment = {int(r): (as_value(v) if v is not None else None)
                      for r, v in params["assignment"].items()}
        return EquivocateBehavior(me, ctx, assignment, params.get("kind", "Propose"),
                                  _opt_time(params, "send_time"), params.get("subject"),
                                  params.get("follow", False))
    if name == "mirror_honest":
        pretend = params.get("pretend_input")
        return MirrorBehavior(
            me, ctx,
            as_value(pretend) if pretend is not None else None,
            params.get("to"), _opt_time(params, "send_before"),
            tuple(params.get("ignore_from", ())), _opt_time(params, "ignore_until"),
            tuple(_send_from_json(d) for d in params.get("inject", ())),
        )
    if name == "scripted":
        return ScriptedBehavior(me, ctx, [_send_from_json(d, key="to") for d in params.get("sends", ())])
    if name == "random_byz":
        return RandomBehavior(me, ctx, params.get("seed", 0), params.get("p_drop", 0.2),
                              params.get("p_flip", 0.3),
                              tuple(as_value(v) for v in params.get("values", ("0", "1"))))
    if name == "per_recipient":
        return PerRecipientBehavior(me, ctx, [(r["to"], r["strategy"]) for r in params["routes"]])
    raise ValueError(f"unknown strategy {name!r}")


def transcript(trace: Trace, party: int, recipients=None, before=None) -> tuple:
    """Sends of ``party`` in ``trace`` as a :class:`Scripted` plan, for replay."""
    rec = None if recipients is None else set(recipients)
    out = []
    for e in trace.of("Sent", party):
        if rec is not None and e.env.recipient not in rec:
            continue
        if before is not None and e.t >= before:
            continue
        out.append((e.t, e.env.recipient, e.env.msg))
    return tuple(out)


def received(trace: Trace, party: int, senders=None, until=None) -> tuple:
    """Deliveries to ``party`` as ``(t, sender, Message)`` triples."""
    snd = None if senders is None else set(senders)
    return tuple((e.t, e.env.sender, e.env.msg) for e in trace.of("Delivered", party)
                 if (snd is None or e.env.sender in snd) and (until is None or e.t <= until))


# --- scenario generators ---------------------------------------------------


def goodcase_scenario(protocol: str, n: int, f: int, input=b"v", timing: Timing = Timing(),
                      silent_byzantine: bool = True, **kw) -> Scenario:
    """Honest broadcaster; the last ``f`` parties are Byzantine and silent."""
    byz = tuple(range(n - f, n)) if silent_byzantine and f else ()
    return Scenario(protocol, n, f, byz, input, timing,
                    {p: Silent().to_dict() for p in byz}, name=f"{protocol}-good-n{n}-f{f}", **kw)


def badcase_scenario(protocol: str, n: int, f: int, value=b"v") -> Scenario:
    """Byzantine broadcaster making exactly one honest party commit on the fast path.

    The broadcaster proposes only to the smallest set of honest parties that
    still lets the other honest parties move towards the second path;
    Byzantine helpers top up the quorum of the first honest party alone.
    """
    if f < 1:
        raise ValueError("a Byzantine broadcaster needs f >= 1")
    helpers = tuple(range(1, f))
    byz = (BROADCASTER,) + helpers
    honest = [p for p in range(n) if p not in byz]
    target = honest[0]
    plans = {p: [] for p in byz}

    def send(p, t, to, kind, v=value):
        plans[p].append((Fraction(t), to, Message(kind, v)))

    if protocol in ("brb24", "f2brb", "brb23", "bb2"):
        for r in honest[: n - 2 * f]:
            send(BROADCASTER, 0, r, Kind.PROPOSE)
        for h in helpers:
            send(h, 1, target, Kind.ACK)
    elif protocol == "f1brb":
        for r in honest[: n - 2]:
            send(BROADCASTER, 0, r, Kind.PROPOSE)
    elif protocol == "imbs_raynal":
        for r in honest[: n - 2 * f]:
            send(BROADCASTER, 0, r, Kind.PROPOSE)
        for b in byz:
            send(b, 1, target, Kind.ACK)
    elif protocol in ("bracha", "bb3"):
        quorum = honest[: n - 2 * f]
        for r in quorum:
            send(BROADCASTER, 0, r, Kind.PROPOSE)
        for b in byz:
            for r in quorum:
                send(b, 1, r, Kind.ECHO)
            send(b, 2, target, Kind.VOTE)
    else:
        raise ValueError(f"no bad-case construction for {protocol!r}")
    timing = Timing("sync", 1, 10, 0) if protocol in ("bb2", "bb3") else Timing()
    return Scenario(protocol, n, f, byz, value, timing,
                    {p: Scripted(tuple(plans[p])).to_dict() for p in byz},
                    name=f"{protocol}-bad-n{n}-f{f}")


def _run(scenario: Scenario) -> Trace:
    from .network_sim import run
    return run(scenario)


def thm2_groups(f: int) -> dict:
    """Split parties 1..4f-2 into A, B, C, D with |A|=|D|=f and |B|=|C|=f-1."""
    a = tuple(range(1, f + 1))
    b = tuple(range(f + 1, 2 * f))
    c = tuple(range(2 * f, 3 * f - 1))
    d = tuple(range(3 * f - 1, 4 * f - 1))
    return {"A": a, "B": b, "C": c, "D": d}


def thm2_scenario(f: int, protocol: str = "brb24") -> list[Scenario]:
    """The four executions against a 2-round commit rule at n = 4f-1.

    Executions 1 and 2 are honest-broadcaster runs with a mirroring group;
    executions 3 and 4 replay their transcripts as a split world and are
    expected to break agreement or termination.
    """
    if f < 1:
        raise ValueError("f must be at least 1")
    n = 4 * f - 1
    g = thm2_groups(f)
    A, B, C, D = g["A"], g["B"], g["C"], g["D"]
    cutoff = Fraction(2)

    def mirror(value):
        return MirrorHonest(value).to_dict()

    ex1 = Scenario(protocol, n, f, D, V0, adversary={p: mirror(V1) for p in D}, name="thm2-exec1")
    ex2 = Scenario(protocol, n, f, A, V1, adversary={p: mirror(V0) for p in A}, name="thm2-exec2")
    t1, t2 = _run(ex1), _run(ex2)

    def split_broadcaster(world0_to, world1_to):
        sends = transcript(t1, BROADCASTER, world0_to) + transcript(t2, BROADCASTER, world1_to)
        return Scripted(tuple(sorted(sends, key=lambda s: (s[0], s[1])))).to_dict()

    def two_faced(p, own, near, near_trace, far_value, other_trace):
        # towards `near`: replay this party's honest sends from `near_trace` for two rounds;
        # towards A, D and its own group: honest with input `far_value`, seeing `near`
        # as in `other_trace` for two rounds
        near_plan = Scripted(transcript(near_trace, p, near, before=cutoff))
        far_to = tuple(sorted(A + D + own))
        far = MirrorHonest(
            far_value, to=far_to, ignore_from=near, ignore_until=cutoff,
            inject=received(other_trace, p, near, until=cutoff),
        )
        return PerRecipient(((tuple(near), near_plan), (far_to, far))).to_dict()

    # Executions 3 and 4 share one schedule: A and D hear each other half a round late.
    # The order inside a round is the adversary's choice; fixing it the same way in
    # both executions keeps A and D's views identical.
    skew = Fraction(3, 2)
    shared = DelayPolicy("script", rules=(DelayRule(senders=A, recipients=D, delay=skew),
                                          DelayRule(senders=D, recipients=A, delay=skew)))
    adv3 = {BROADCASTER: split_broadcaster(A + B, C + D)}
    adv3.update({p: two_faced(p, C, B, t1, V1, t2) for p in C})
    ex3 = Scenario(protocol, n, f, (BROADCASTER,) + C, V0, adversary=adv3, delays=shared,
                   name="thm2-exec3", expect_violation=True)
    adv4 = {BROADCASTER: split_broadcaster(A, B + C + D)}
    adv4.update({p: two_faced(p, B, C, t2, V0, t1) for p in B})
    ex4 = Scenario(protocol, n, f, (BROADCASTER,) + B, V1, adversary=adv4, delays=shared,
                   name="thm2-exec4", expect_violation=True)
    return [ex1, ex2, ex3, ex4]


def thm3_chain(n: int, target: str = "f1brb", f: int = 2) -> list[Scenario]:
    """The execution chain against (2,2)-round commits at f = 2.

    Returns executions 1..n-2 with input 0, the mirrored chain with input 1,
    and finally the merged execution in which party 1 sees the input-0 world
    and party n-1 the input-1 world.
    """
    if n < 8:
        raise ValueError("the chain needs n >= 8")
    late = Fraction(2)

    def delay_from(*senders, recipients=None):
        return DelayRule(senders=tuple(senders), recipients=recipients, delay=late)

    def chain(value, mirror):
        m = (lambda p: n - p) if mirror else (lambda p: p)
        first = Scenario(target, n, f, (m(n - 1),), value,
                         adversary={m(n - 1): Silent().to_dict()},
                         name=f"thm3-{value.decode()}-exec1")
        scenarios, traces = [first], [_run(first)]
        for x in range(2, n - 1):
            liar, listener, slow = m(n - x), m(n - x - 1), m(n - x + 1)
            served = tuple(sorted(m(p) for p in range(1, n - x)))
            adv = {
                BROADCASTER: MirrorHonest(value, to=served).to_dict(),
                liar: Scripted(transcript(traces[-1], liar, (listener,))).to_dict(),
            }
            sc = Scenario(target, n, f, (BROADCASTER, liar), value, adversary=adv,
                          delays=DelayPolicy("script", rules=(delay_from(slow),)),
                          name=f"thm3-{value.decode()}-exec{x}")
            scenarios.append(sc)
            traces.append(_run(sc))
        return scenarios, traces

    zero, zero_traces = chain(V0, mirror=False)
    one, one_traces = chain(V1, mirror=True)
    # party 2 replays towards 1 what it sent in the last input-0 execution, and towards n-1
    # what party n-2 sent to n-1 in the last input-1 execution
    to_one = transcript(zero_traces[-1], 2, (1,))
    to_last = tuple((t, r, msg) for t, r, msg in transcript(one_traces[-1], n - 2, (n - 1,)))
    adv = {
        BROADCASTER: Scripted(((Fraction(0), 1, Message(Kind.PROPOSE, V0)),
                               (Fraction(0), n - 1, Message(Kind.PROPOSE, V1)))).to_dict(),
        2: Scripted(tuple(sorted(to_one + to_last, key=lambda s: (s[0], s[1])))).to_dict(),
    }
    rules = (DelayRule(senders=(1,), recipients=(n - 1,), delay=late),
             DelayRule(senders=(n - 1,), recipients=(1,), delay=late))
    misconfigured = bool(validate_config(Config(n, f), target))
    merged = Scenario(target, n, f, (BROADCASTER, 2), V0, adversary=adv,
                      delays=DelayPolicy("script", rules=rules),
                      name="thm3-merged", expect_violation=misconfigured)
    return zero + one + [merged]


GENERATORS = ("badcase", "thm2", "thm3_chain")


def scenario_from_json(doc: dict) -> Scenario:
    """Parse a scenario document, expanding generator strategies.

    ``{"adversary": {"strategy": "badcase"}}`` builds the bad-case scenario
    for the document's protocol, ``n`` and ``f``; ``thm2`` takes
    ``params.execution`` (1-4) and uses ``f``; ``thm3_chain`` takes
    ``params.execution`` (an index into the chain or ``"merged"``) and uses
    ``n``. Anything else is a plain :class:`Scenario`.
    """
    adv = doc.get("adversary") or {}
    name = adv.get("strategy")
    if name not in GENERATORS:
        return Scenario.from_json(doc)
    params = adv.get("params") or {}
    protocol, n, f = doc["protocol"], int(doc["n"]), int(doc["f"])
    if name == "badcase":
        return badcase_scenario(protocol, n, f)
    if name == "thm2":
        execution = int(params.get("execution", 3))
        if not 1 <= execution <= 4:
            raise ValueError("thm2 execution must be 1..4")
        return thm2_scenario(f, protocol)[execution - 1]
    chain = thm3_chain(n, protocol)
    execution = params.get("execution", "merged")
    return chain[-1] if execution == "merged" else chain[int(execution)]


STRATEGY_NAMES = ("silent", "equivocate_split", "mirror_honest", "scripted", "random_byz",
                  "per_recipient", "thm2", "thm3_chain", "badcase")
