"""Asynchronous Byzantine reliable broadcast state machines.

Every machine is deterministic and externally driven: :meth:`Machine.step`
consumes one event and returns the actions it triggers. Threshold rules are
re-evaluated after each tally update, in the order the protocol lists them,
until nothing more fires.
"""

from __future__ import annotations

import copy
from fractions import Fraction
from typing import Optional

from .core import (
    BROADCASTER, Action, BADecided, Commit, Config, Delivered, Envelope, Event,
    Kind, Lock, Message, SendAll, Start, Tally, Terminate, TimerFired, Value,
)


class Machine:
    """Base class shared by all protocol machines.

    Subclasses implement :meth:`on_proposal` and :meth:`rules`; the latter
    returns ``True`` when some rule fired so the fixpoint loop runs again.
    """

    protocol = ""
    #: message kinds the protocol sends besides Propose, with their natural send round
    kinds: tuple = ()
    #: count a sender once per (kind, value) instead of once per kind
    per_value = False

    def __init__(self, me: int, cfg: Config, input: Optional[Value] = None,
                 offset: Fraction = Fraction(0)):
        self.me = me
        self.cfg = cfg
        self.n = cfg.n
        self.f = cfg.f
        self.input = input if me == BROADCASTER else None
        self.offset = Fraction(offset)
        self.tally = Tally(BROADCASTER, self.per_value)
        self.sent_flags: set = set()
        self.committed: Optional[Value] = None
        self.commit_path = ""
        self.terminated = False
        self.proposal: Optional[Value] = None
        self.started = False
        self.now = Fraction(0)
        self._pending: list = []
        self._out: list = []

    # -- driver ------------------------------------------------------------

    def step(self, event: Event) -> list[Action]:
        if self.terminated:
            return []
        self._out = []
        self.now = Fraction(event.time)
        if isinstance(event, Start):
            self.started = True
            self.on_start()
            pending, self._pending = self._pending, []
            for env in pending:
                if self.terminated:
                    break
                self._deliver(env)
        elif not self.started:
            if isinstance(event, Delivered):
                self._pending.append(event.env)
        elif isinstance(event, Delivered):
            self._deliver(event.env)
        elif isinstance(event, TimerFired):
            self.on_timer(event.tag)
        elif isinstance(event, BADecided):
            self.on_ba_output(event.value)
        return self._out

    @property
    def local_time(self) -> Fraction:
        return self.now - self.offset

    def _deliver(self, env: Envelope) -> None:
        msg = env.msg
        if msg.kind is Kind.PROPOSE:
            if env.sender == BROADCASTER and self.proposal is None:
                self.proposal = msg.value
                self.on_proposal(msg.value)
        elif self.tally.insert(env):
            self.on_counted(env)
        while not self.terminated and self.rules():
            pass

    # -- hooks ---------------------------------------------------------------

    def on_start(self) -> None:
        if self.input is not None:
            self.send_all(Kind.PROPOSE, self.input)

    def on_proposal(self, value: Value) -> None:
        raise NotImplementedError

    def on_counted(self, env: Envelope) -> None:
        pass

    def rules(self) -> bool:
        return False

    def on_timer(self, tag: str) -> None:
        pass

    def on_ba_output(self, value: Value) -> None:
        pass

    # -- emitters ------------------------------------------------------------

    def send_all(self, kind: Kind, value: Value, subject: Optional[int] = None) -> None:
        self._out.append(SendAll(Message(kind, value, subject)))

    def send_once(self, kind: Kind, value: Value) -> bool:
        """Send ``kind`` unless one was already sent; return whether it was."""
        if kind in self.sent_flags:
            return False
        self.sent_flags.add(kind)
        self.send_all(kind, value)
        return True

    def commit(self, value: Value, path: str) -> None:
        if self.committed is None:
            self.committed = value
            self.commit_path = path
            self._out.append(Commit(value, path))

    def terminate(self) -> None:
        self.terminated = True
        self._out.append(Terminate())

    def count(self, kind: Kind, value: Value, subject=None, **kw) -> int:
        return self.tally.count(kind, value, subject, **kw)

    def candidates(self, kind: Kind, subject=None) -> list:
        return self.tally.values(kind, subject)


class Brb24(Machine):
    """(2,4)-round BRB for n >= 4f: a 2-round ack path plus a Bracha-style fallback."""

    protocol = "brb24"
    kinds = ((Kind.ACK, 1), (Kind.VOTE1, 2), (Kind.VOTE2, 3))

    def on_proposal(self, value):
        self.send_once(Kind.ACK, value)

    def rules(self):
        n, f = self.n, self.f
        for v in self.candidates(Kind.ACK):
            if self.count(Kind.ACK, v) >= n - f - 1:
                self.commit(v, "fast")
                self.send_once(Kind.VOTE1, v)
                self.send_once(Kind.VOTE2, v)
                self.terminate()
                return True
        fired = False
        for v in self.candidates(Kind.ACK):
            if self.count(Kind.ACK, v) >= n - 2 * f:
                fired |= self.send_once(Kind.VOTE1, v)
        for v in self.candidates(Kind.VOTE1):
            if self.count(Kind.VOTE1, v) >= n - f - 1:
                fired |= self.send_once(Kind.VOTE2, v)
        for v in self.candidates(Kind.VOTE2):
            if self.count(Kind.VOTE2, v) >= f + 1:
                fired |= self.send_once(Kind.VOTE2, v)
        for v in self.candidates(Kind.VOTE2):
            if self.count(Kind.VOTE2, v) >= n - f - 1:
                self.commit(v, "slow")
                self.terminate()
                return True
        return fired


class F1Brb(Machine):
    """(2,2)-round BRB for f = 1: commit on n-2 non-broadcaster acks."""

    protocol = "f1brb"
    kinds = ((Kind.ACK, 1),)

    def on_proposal(self, value):
        self.send_once(Kind.ACK, value)

    def rules(self):
        for v in self.candidates(Kind.ACK):
            if self.count(Kind.ACK, v) >= self.n - 2:
                self.commit(v, "fast")
                self.terminate()
                return True
        return False


class F2Brb(Machine):
    """(2,3)-round BRB for f = 2 with per-party votes and locks.

    ``locks`` maps a non-broadcaster subject to the value locked for it.
    The vote for a subject is sent as soon as its ack is counted, before the
    threshold rules run, so a party committing on that very ack still votes.
    """

    protocol = "f2brb"
    kinds = ((Kind.ACK, 1), (Kind.SUBJECT_VOTE, 2))

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.locks: dict[int, Value] = {}
        self.voted_for: set[int] = set()

    def on_proposal(self, value):
        self.send_once(Kind.ACK, value)

    def on_counted(self, env):
        j = env.sender
        if env.msg.kind is Kind.ACK and j != BROADCASTER and j not in self.voted_for:
            self.voted_for.add(j)
            self.send_all(Kind.SUBJECT_VOTE, env.msg.value, subject=j)

    def rules(self):
        n, f = self.n, self.f
        for v in self.candidates(Kind.ACK):
            if self.count(Kind.ACK, v) >= n - f - 1:
                self.commit(v, "fast")
                self.terminate()
                return True
        fired = False
        for j in self.tally.subjects(Kind.SUBJECT_VOTE):
            if j in self.locks or j == BROADCASTER:
                continue
            for v in self.candidates(Kind.SUBJECT_VOTE, j):
                if self.count(Kind.SUBJECT_VOTE, v, j, exclude=(j,)) >= n - f - 2:
                    self.locks[j] = v
                    self._out.append(Lock(v, j))
                    fired = True
                    break
        locked_values = []
        for v in self.locks.values():
            if v not in locked_values:
                locked_values.append(v)
        for v in locked_values:
            if sum(1 for w in self.locks.values() if w == v) >= n - 2 * f:
                self.commit(v, "lock")
                self.terminate()
                return True
        return fired


class Brb23(Machine):
    """(2,3)-round BRB for n >= 5f-1: ack amplification counted over non-broadcasters."""

    protocol = "brb23"
    kinds = ((Kind.ACK, 1),)
    per_value = True
    amplify_excludes_broadcaster = True

    def ack(self, value) -> bool:
        key = (Kind.ACK, value)
        if key in self.sent_flags:
            return False
        self.sent_flags.add(key)
        self.send_all(Kind.ACK, value)
        return True

    def on_proposal(self, value):
        self.ack(value)

    def thresholds(self):
        return self.n - 2 * self.f, self.n - self.f - 1

    def rules(self):
        amplify, commit = self.thresholds()
        excl = self.amplify_excludes_broadcaster
        fired = False
        for v in self.candidates(Kind.ACK):
            if self.count(Kind.ACK, v, exclude_broadcaster=excl) >= amplify:
                fired |= self.ack(v)
        for v in self.candidates(Kind.ACK):
            if self.count(Kind.ACK, v, exclude_broadcaster=excl) >= commit:
                self.commit(v, "fast")
                self.terminate()
                return True
        return fired


class ImbsRaynal(Brb23):
    """Imbs-Raynal 2-round BRB (n >= 5f+1): counts range over all parties."""

    protocol = "imbs_raynal"
    amplify_excludes_broadcaster = False

    def thresholds(self):
        return self.n - 2 * self.f, self.n - self.f


class Bracha(Machine):
    """Bracha's (3,4)-round BRB with whole-party quorums."""

    protocol = "bracha"
    kinds = ((Kind.ECHO, 1), (Kind.VOTE, 2))

    def on_proposal(self, value):
        self.send_once(Kind.ECHO, value)

    def rules(self):
        n, f = self.n, self.f
        fired = False
        for v in self.candidates(Kind.ECHO):
            if self.count(Kind.ECHO, v, exclude_broadcaster=False) >= n - f:
                fired |= self.send_once(Kind.VOTE, v)
        for v in self.candidates(Kind.VOTE):
            if self.count(Kind.VOTE, v, exclude_broadcaster=False) >= f + 1:
                fired |= self.send_once(Kind.VOTE, v)
        for v in self.candidates(Kind.VOTE):
            if self.count(Kind.VOTE, v, exclude_broadcaster=False) >= n - f:
                self.commit(v, "commit")
                self.terminate()
                return True
        return fired


ASYNC_MACHINES = {
    cls.protocol: cls for cls in (Brb24, F1Brb, F2Brb, Brb23, ImbsRaynal, Bracha)
}


def _step(state: Machine, event: Event):
    state = copy.deepcopy(state)
    actions = state.step(event)
    return state, actions


def brb24_step(state: Brb24, event: Event):
    """Functional form of :meth:`Machine.step`: returns ``(new_state, actions)``.

    The input state is left untouched.
    """
    return _step(state, event)


def f1brb_step(state: F1Brb, event: Event):
    return _step(state, event)


def f2brb_step(state: F2Brb, event: Event):
    return _step(state, event)


def brb23_step(state: Brb23, event: Event):
    return _step(state, event)


def bracha_step(state: Bracha, event: Event):
    return _step(state, event)


def imbs_raynal_step(state: ImbsRaynal, event: Event):
    return _step(state, event)
