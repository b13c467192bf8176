"""Synchronous Byzantine broadcast with a Byzantine-agreement fallback.

Both machines use the known bound ``big_delta`` as their skew parameter in
every guard; the actual start skew of a run only shows up as the per-party
clock ``offset``. Committing before the BA timer does not terminate a party:
it still has to take part in the agreement.
"""

from __future__ import annotations

import copy
from collections import Counter
from fractions import Fraction
from typing import Callable, Optional

from .core import BOTTOM, Config, Event, InvokeBA, Kind, Lock, SetTimer, TimerFired, Value
from .protocols_async import Machine

BA_TIMER = "ba"


class SyncMachine(Machine):
    """Common lock/timer/BA handling for the synchronous protocols."""

    #: guard multipliers: commit while local t <= commit_deltas*Delta + sigma,
    #: invoke BA at local ba_deltas*Delta + 2*sigma
    commit_deltas = 2
    ba_deltas = 3

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        if not self.cfg.timing.is_sync:
            raise ValueError(f"{self.protocol} needs sync timing")
        self.big_delta = self.cfg.timing.big_delta
        self.sigma_param = self.big_delta
        self.lock: Value = BOTTOM
        self.ba_invoked = False

    @property
    def commit_deadline(self) -> Fraction:
        return self.commit_deltas * self.big_delta + self.sigma_param

    @property
    def ba_time(self) -> Fraction:
        return self.ba_deltas * self.big_delta + 2 * self.sigma_param

    def on_start(self):
        super().on_start()
        self._out.append(SetTimer(self.ba_time, BA_TIMER))

    def set_lock(self, value: Value) -> bool:
        if self.lock == value:
            return False
        self.lock = value
        self._out.append(Lock(value))
        return True

    def on_timer(self, tag):
        if tag == BA_TIMER and not self.ba_invoked:
            self.ba_invoked = True
            self._out.append(InvokeBA(self.lock))

    def on_ba_output(self, value):
        if self.committed is None:
            self.commit(value, "ba")
        self.terminate()

    def step(self, event: Event):
        if not self.started and isinstance(event, TimerFired):
            raise ValueError("timer fired before the machine was configured")
        return super().step(event)


class BB2(SyncMachine):
    """2-delta BB for n >= 4f, built on the (2,4)-BRB ack/vote structure."""

    protocol = "bb2"
    kinds = ((Kind.ACK, 1), (Kind.VOTE, 2))

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.ack_quorum_seen = False

    def on_proposal(self, value):
        self.send_once(Kind.ACK, value)

    def rules(self):
        n, f = self.n, self.f
        fired = False
        if not self.ack_quorum_seen:
            for v in self.candidates(Kind.ACK):
                if self.count(Kind.ACK, v) >= n - f - 1:
                    self.ack_quorum_seen = True
                    self.set_lock(v)
                    if self.local_time <= self.commit_deadline:
                        self.commit(v, "fast")
                    fired = True
                    break
        for v in self.candidates(Kind.ACK):
            if self.count(Kind.ACK, v) >= n - 2 * f:
                fired |= self.send_once(Kind.VOTE, v)
        for v in self.candidates(Kind.VOTE):
            if self.count(Kind.VOTE, v) >= n - f - 1 and (Kind.VOTE, v) not in self.sent_flags:
                self.sent_flags.add((Kind.VOTE, v))
                self.set_lock(v)
                fired = True
        return fired


class BB3(SyncMachine):
    """3-delta BB for n >= 3f+1, built on Bracha's echo/vote structure."""

    protocol = "bb3"
    kinds = ((Kind.ECHO, 1), (Kind.VOTE, 2))
    commit_deltas = 3
    ba_deltas = 4

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.vote_quorum_seen = False

    def on_proposal(self, value):
        self.send_once(Kind.ECHO, value)

    def vote(self, value) -> bool:
        if self.send_once(Kind.VOTE, value):
            self.set_lock(value)
            return True
        return False

    def rules(self):
        n, f = self.n, self.f
        fired = False
        for v in self.candidates(Kind.ECHO):
            if self.count(Kind.ECHO, v, exclude_broadcaster=False) >= n - f:
                fired |= self.vote(v)
        for v in self.candidates(Kind.VOTE):
            if self.count(Kind.VOTE, v, exclude_broadcaster=False) >= f + 1:
                fired |= self.vote(v)
        if not self.vote_quorum_seen:
            for v in self.candidates(Kind.VOTE):
                if self.count(Kind.VOTE, v, exclude_broadcaster=False) >= n - f:
                    self.vote_quorum_seen = True
                    self.set_lock(v)
                    if self.local_time <= self.commit_deadline:
                        self.commit(v, "fast")
                    fired = True
                    break
        return fired


SYNC_MACHINES = {BB2.protocol: BB2, BB3.protocol: BB3}


def bb2_step(state: BB2, event: Event):
    state = copy.deepcopy(state)
    return state, state.step(event)


def bb3_step(state: BB3, event: Event):
    state = copy.deepcopy(state)
    return state, state.step(event)


# --- Byzantine agreement -----------------------------------------------------

NO_VALUE = object()  # "no strong majority" marker exchanged in the second round

#: rounds of one phase-king phase
ROUNDS_PER_PHASE = 3

# byz(phase, round, sender, recipient) -> value sent, or None for silence
ByzSend = Callable[[int, str, int, int], Optional[object]]


def ba_rounds(f: int) -> int:
    return ROUNDS_PER_PHASE * (f + 1)


def run_phase_king(inputs: dict, n: int, f: int, byzantine=frozenset(),
                   byz_send: Optional[ByzSend] = None) -> dict:
    """Lock-step phase-king agreement for n >= 3f+1; returns each honest party's output.

    Each of the f+1 phases has a value round, a grade round and a king round;
    the king of phase k is party k, so some phase has an honest king.
    """
    if n <= 3 * f:
        raise ValueError(f"phase king needs n >= 3f+1 (n={n}, f={f})")
    byzantine = frozenset(byzantine)
    honest = sorted(inputs)
    if set(honest) & byzantine:
        raise ValueError("a party cannot be both honest and Byzantine")
    byz_send = byz_send or (lambda *a: None)
    v = dict(inputs)

    def received(phase, rnd, sent):
        out = {}
        for p in honest:
            msgs = [sent[q] for q in honest]
            for b in sorted(byzantine):
                m = byz_send(phase, rnd, b, p)
                if m is not None:
                    msgs.append(m)
            out[p] = msgs
        return out

    for phase in range(f + 1):
        king = phase
        inbox = received(phase, "value", v)
        w = {}
        for p in honest:
            top = Counter(inbox[p]).most_common(1)
            w[p] = top[0][0] if top and top[0][1] >= n - f else NO_VALUE
        inbox = received(phase, "grade", w)
        strong = {}
        for p in honest:
            counts = Counter(m for m in inbox[p] if m is not NO_VALUE)
            top = counts.most_common(1)
            strong[p] = False
            if top and top[0][1] >= f + 1:
                v[p] = top[0][0]
                strong[p] = top[0][1] >= n - f
        if king in byzantine:
            king_values = {p: byz_send(phase, "king", king, p) for p in honest}
        else:
            king_values = {p: v[king] for p in honest}
        for p in honest:
            kv = king_values[p]
            if not strong[p] and kv is not None and kv is not NO_VALUE:
                v[p] = kv
    return v


def phase_king_ba(inputs: dict, cfg: Config, byz_send: Optional[ByzSend] = None) -> Value:
    """Agree on one value from the honest ``inputs``; raises if agreement breaks."""
    outputs = run_phase_king(inputs, cfg.n, cfg.f, cfg.byzantine, byz_send)
    decided = set(outputs.values())
    if len(decided) != 1:
        raise AssertionError(f"phase king disagreement: {outputs}")
    return decided.pop()


def ba_adversary(name: str, values=(b"0", b"1")) -> ByzSend:
    """Byzantine behaviour inside the BA box: ``silent``, ``equivocate`` or ``honest:<value>``.

    ``equivocate`` tells recipients different values from ``values`` in
    every round; the simulator passes the honest inputs in play.
    """
    values = tuple(values) or (b"0", b"1")
    if name == "silent":
        return lambda phase, rnd, sender, recipient: None
    if name == "equivocate":
        return lambda phase, rnd, sender, recipient: values[(recipient + phase) % len(values)]
    if name.startswith("honest:"):
        fixed = name.split(":", 1)[1].encode("latin-1")
        return lambda phase, rnd, sender, recipient: fixed
    raise ValueError(f"unknown BA adversary {name!r}")


def values_in_play(inputs: dict) -> tuple:
    """Distinct inputs in party order."""
    seen = []
    for p in sorted(inputs):
        if inputs[p] not in seen:
            seen.append(inputs[p])
    return tuple(seen)
