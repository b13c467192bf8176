"""Deterministic discrete-event simulator.

One :class:`Simulation` owns the global clock, the event queue, a machine per
honest party and a behaviour per Byzantine party. Queue entries are ordered
by ``(time, class, priority, seq)``: starts before deliveries before timers
at the same instant, and the delivery policy's ``order`` decides among
simultaneous deliveries. ``seq`` is the global insertion counter, so a
scenario always replays to the same trace.
"""

from __future__ import annotations

import heapq
import logging
import os
import random
from fractions import Fraction
from typing import Optional

from .adversaries import Out, SimContext, Wake, build_behavior
from .core import (
    BADecided, Commit, DelayPolicy, Delivered, Envelope, InvokeBA, Kind, Lock, Message,
    Scenario, SendAll, SendTo, SetTimer, Start, Terminate, TimerFired, Trace, TraceEvent,
    validate_config,
)
from .protocols import make_machine
from .protocols_sync import ba_adversary, ba_rounds, run_phase_king, values_in_play

log = logging.getLogger(__name__)

#: smallest delay the network ever assigns
MIN_DELAY = Fraction(1, 1000)
DEFAULT_EVENT_BUDGET = 1_000_000

# event classes, in processing order at equal times
_START, _SEND, _DELIVER, _TIMER, _BA = range(5)


def event_budget(scenario: Optional[Scenario] = None) -> int:
    env = os.environ.get("BRBLAB_EVENT_BUDGET")
    if env:
        return int(env)
    if scenario is not None and scenario.event_budget is not None:
        return int(scenario.event_budget)
    return DEFAULT_EVENT_BUDGET


def assign_delay(policy: DelayPolicy, sender: int, recipient: int, kind: Kind,
                 send_time: Fraction, honest_link: bool) -> Fraction:
    """Delay for a fresh envelope under ``policy``.

    The first matching rule wins. In sync mode an honest-to-honest delay
    above ``delta`` is rejected; Byzantine senders are unconstrained.
    """
    base = policy.delta if policy.mode == "sync" else Fraction(1)
    delay = base
    for rule in policy.rules:
        if rule.matches(sender, recipient, kind, send_time):
            if rule.deliver_at is not None:
                delay = rule.deliver_at - send_time
            elif rule.delay is not None:
                delay = rule.delay
            break
    delay = max(Fraction(delay), MIN_DELAY)
    if policy.mode == "sync" and honest_link and delay > policy.delta:
        raise ValueError(f"honest delay {delay} from {sender} to {recipient} exceeds delta={policy.delta}")
    return delay


def effective_policy(scenario: Scenario) -> DelayPolicy:
    """Sync scenarios with a unit policy run with every delay equal to delta."""
    p = scenario.delays
    if scenario.timing.is_sync and p.mode == "unit":
        return DelayPolicy("sync", scenario.timing.delta, p.rules, p.order, p.order_seed)
    return p


def start_offsets(scenario: Scenario) -> dict:
    """Per-party start times: explicit ones, or seeded draws in [0, sigma] (broadcaster at 0)."""
    n = scenario.n
    if scenario.start_offsets is not None:
        if len(scenario.start_offsets) != n:
            raise ValueError("start_offsets needs one entry per party")
        return {p: scenario.start_offsets[p] for p in range(n)}
    sigma = scenario.timing.sigma if scenario.timing.is_sync else Fraction(0)
    if sigma == 0:
        return {p: Fraction(0) for p in range(n)}
    rng = random.Random(scenario.seed)
    steps = int(sigma * 1000)
    return {p: Fraction(0) if p == 0 else Fraction(rng.randint(0, steps), 1000) for p in range(n)}


class Simulation:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.cfg = scenario.config
        self.warnings = validate_config(self.cfg, scenario.protocol)
        self.policy = effective_policy(scenario)
        self.offsets = start_offsets(scenario)
        self.budget = event_budget(scenario)
        self.trace = Trace(self.cfg, scenario.protocol, warnings=list(self.warnings),
                           scenario=scenario.to_json())
        self.queue: list = []
        self.seq = 0
        self.next_id = 0
        self.now = Fraction(0)
        self.order_rng = random.Random(self.policy.order_seed)
        self.machines = {
            p: make_machine(scenario.protocol, p, self.cfg, scenario.input, self.offsets[p])
            for p in self.cfg.honest
        }
        ctx = SimContext(scenario.protocol, self.cfg, offsets=self.offsets)
        self.behaviors = {
            p: build_behavior(scenario.adversary.get(p, {"strategy": "silent"}), p, ctx)
            for p in sorted(self.cfg.byzantine)
        }
        self.ba_invocations: dict = {}
        self.ba_done = False

    # -- queue ---------------------------------------------------------------

    def push(self, time, cls, item, priority=0):
        heapq.heappush(self.queue, (Fraction(time), cls, priority, self.seq, item))
        self.seq += 1

    def _delivery_priority(self):
        order = self.policy.order
        if order == "fifo":
            return self.seq
        if order == "lifo":
            return -self.seq
        return self.order_rng.random()

    def send(self, sender: int, recipient: int, msg: Message):
        honest_link = self.cfg.is_honest(sender) and self.cfg.is_honest(recipient)
        delay = assign_delay(self.policy, sender, recipient, msg.kind, self.now, honest_link)
        env = Envelope(msg, sender, recipient, self.now, self.now + delay, self.next_id)
        self.next_id += 1
        self.record(sender, "Sent", env=env)
        self.push(env.deliver_time, _DELIVER, env, self._delivery_priority())

    def record(self, party, entry, **kw):
        self.trace.append(TraceEvent(self.now, party, entry, **kw))

    # -- honest parties -----------------------------------------------------

    def apply(self, p: int, actions: list):
        for a in actions:
            if isinstance(a, SendAll):
                for r in range(self.cfg.n):
                    self.send(p, r, a.msg)
            elif isinstance(a, SendTo):
                self.send(p, a.to, a.msg)
            elif isinstance(a, Commit):
                self.record(p, "Committed", value=a.value, path=a.path)
            elif isinstance(a, Terminate):
                self.record(p, "Terminated")
            elif isinstance(a, SetTimer):
                self.push(self.offsets[p] + a.local_time, _TIMER, (p, a.tag))
            elif isinstance(a, Lock):
                self.record(p, "Locked", value=a.value, subject=a.subject)
            elif isinstance(a, InvokeBA):
                self.record(p, "BAInvoked", value=a.value)
                self.invoke_ba(p, a.value)
            else:
                raise TypeError(f"unknown action {a!r}")

    def invoke_ba(self, p, value):
        self.ba_invocations[p] = (value, self.now)
        if set(self.ba_invocations) == set(self.machines) and not self.ba_done:
            self.ba_done = True
            inputs = {q: v for q, (v, _) in self.ba_invocations.items()}
            start = max(t for _, t in self.ba_invocations.values())
            decide = start + ba_rounds(self.cfg.f) * 2 * self.cfg.timing.big_delta
            try:
                outputs = run_phase_king(inputs, self.cfg.n, self.cfg.f, self.cfg.byzantine,
                                         ba_adversary(self.scenario.ba_adversary, values_in_play(inputs)))
            except ValueError as e:
                # no BA instance exists here; parties stay undecided
                self.trace.warnings.append(f"BA not instantiated: {e}")
                log.warning("BA not instantiated: %s", e)
                return
            for q in sorted(outputs):
                self.push(decide, _BA, (q, outputs[q]))

    # -- Byzantine parties --------------------------------------------------

    def byz_outputs(self, p: int, outs: list):
        for o in outs:
            if isinstance(o, Out):
                if o.at is None or o.at <= self.now:
                    self.send(p, o.to, o.msg)
                else:
                    self.push(o.at, _SEND, (p, o.to, o.msg))
            elif isinstance(o, Wake):
                self.push(max(o.at, self.now), _TIMER, (p, o.token))

    # -- main loop ------------------------------------------------------------

    def run(self) -> Trace:
        for p in range(self.cfg.n):
            self.push(self.offsets[p], _START, p)
        popped = 0
        while self.queue:
            if popped >= self.budget:
                self.trace.truncated = True
                log.warning("event budget of %d exhausted at t=%s", self.budget, self.now)
                break
            time, cls, _, _, item = heapq.heappop(self.queue)
            popped += 1
            self.now = time
            self.dispatch(cls, item)
        return self.trace

    def dispatch(self, cls, item):
        if cls == _START:
            p = item
            if p in self.machines:
                self.apply(p, self.machines[p].step(Start(self.now)))
            else:
                self.byz_outputs(p, self.behaviors[p].start(self.now))
        elif cls == _SEND:
            self.send(*item)
        elif cls == _DELIVER:
            env = item
            self.record(env.recipient, "Delivered", env=env)
            p = env.recipient
            if p in self.machines:
                self.apply(p, self.machines[p].step(Delivered(env)))
            else:
                self.byz_outputs(p, self.behaviors[p].deliver(env))
        elif cls == _TIMER:
            p, tag = item
            if p in self.machines:
                if not self.machines[p].terminated:
                    self.record(p, "TimerFired", tag=tag)
                self.apply(p, self.machines[p].step(TimerFired(tag, self.now)))
            else:
                self.byz_outputs(p, self.behaviors[p].wake(self.now, tag))
        elif cls == _BA:
            p, value = item
            self.record(p, "BADecided", value=value)
            self.apply(p, self.machines[p].step(BADecided(value, self.now)))


def run(scenario: Scenario) -> Trace:
    """Run ``scenario`` to quiescence (or the event budget) and return its trace."""
    return Simulation(scenario).run()
