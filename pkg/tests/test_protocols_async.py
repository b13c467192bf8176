from fractions import Fraction

import pytest

from brblab.adversaries import EquivocateSplit, Scripted, badcase_scenario, goodcase_scenario
from brblab.core import (
    Commit, Config, Delivered, Envelope, Kind, Lock, Message, Scenario, SendAll, Start, Terminate,
)
from brblab.network_sim import run
from brblab.protocols import make_machine
from brblab.protocols_async import Brb24, F2Brb, brb24_step


def deliver(machine, sender, kind, value=b"v", subject=None, t=1):
    env = Envelope(Message(kind, value, subject), sender, machine.me, Fraction(0), Fraction(t))
    return machine.step(Delivered(env))


def started(protocol, me, n, f, **kw):
    m = make_machine(protocol, me, Config(n, f, **kw))
    m.step(Start())
    return m


def sends(actions):
    return [(a.msg.kind, a.msg.value) for a in actions if isinstance(a, SendAll)]


def commit_times(trace):
    return sorted((e.party, e.t) for e in trace.commits())


# --- brb24 ---------------------------------------------------------------------------------


def test_brb24_good_case_commits_at_2():
    trace = run(goodcase_scenario("brb24", 8, 0))
    assert {t for _, t in commit_times(trace)} == {2}
    assert len(trace.commits()) == 8


def test_brb24_good_case_message_counts():
    n = 8
    trace = run(goodcase_scenario("brb24", n, 0))
    delivered = [e.env.msg.kind for e in trace.of("Delivered")]
    assert delivered.count(Kind.PROPOSE) == n
    assert delivered.count(Kind.ACK) == n * n
    # every party sends Vote1 and Vote2 on its way out
    assert delivered.count(Kind.VOTE1) == n * n
    assert delivered.count(Kind.VOTE2) == n * n


def test_brb24_thresholds_at_n4():
    m = started("brb24", 1, 4, 1)
    assert sends(deliver(m, 0, Kind.PROPOSE)) == [(Kind.ACK, b"v")]
    assert deliver(m, 1, Kind.ACK) == []
    actions = deliver(m, 2, Kind.ACK)
    assert Commit(b"v", "fast") in actions
    assert sends(actions) == [(Kind.VOTE1, b"v"), (Kind.VOTE2, b"v")]
    assert actions[-1] == Terminate()
    assert deliver(m, 3, Kind.ACK) == []


def test_brb24_vote_path_thresholds():
    m = started("brb24", 1, 8, 2)
    deliver(m, 0, Kind.PROPOSE)
    for s in (2, 3, 4):
        assert sends(deliver(m, s, Kind.ACK)) == []
    assert sends(deliver(m, 5, Kind.ACK)) == [(Kind.VOTE1, b"v")]       # n-2f = 4
    for s in (2, 3):
        assert sends(deliver(m, s, Kind.VOTE2, b"w")) == []
    assert sends(deliver(m, 4, Kind.VOTE2, b"w")) == [(Kind.VOTE2, b"w")]   # f+1 = 3
    deliver(m, 5, Kind.VOTE2, b"w")
    actions = deliver(m, 6, Kind.VOTE2, b"w")                              # n-f-1 = 5
    assert Commit(b"w", "slow") in actions and Terminate() in actions


def test_broadcaster_acks_do_not_count():
    m = started("brb24", 1, 4, 1)
    deliver(m, 0, Kind.ACK)
    deliver(m, 1, Kind.ACK)
    assert m.committed is None


def test_brb24_bad_case_example():
    sc = badcase_scenario("brb24", 8, 2)
    # the construction: proposals to {2,3,4,5}, helper 1 acks party 2 only
    props = [t for t, _, m in _plan(sc, 0)]
    assert sorted(r for _, r, _ in _plan(sc, 0)) == [2, 3, 4, 5] and set(props) == {0}
    assert [(r, m.kind) for _, r, m in _plan(sc, 1)] == [(2, Kind.ACK)]
    trace = run(sc)
    assert commit_times(trace) == [(2, 2), (3, 4), (4, 4), (5, 4), (6, 4), (7, 4)]
    assert trace.commit_of(2).path == "fast"
    assert {trace.commit_of(p).path for p in range(3, 8)} == {"slow"}


def _plan(sc, party):
    from brblab.adversaries import build_behavior, SimContext
    b = build_behavior(sc.adversary[party], party, SimContext(sc.protocol, sc.config))
    return b.sends


def test_terminated_machine_is_inert():
    m = started("brb24", 1, 4, 1)
    deliver(m, 0, Kind.PROPOSE)
    deliver(m, 1, Kind.ACK)
    deliver(m, 2, Kind.ACK)
    assert m.terminated
    assert deliver(m, 3, Kind.VOTE2, b"w") == []
    assert m.step(Start()) == []


def test_unknown_kinds_are_ignored():
    m = started("brb24", 1, 4, 1)
    assert deliver(m, 2, Kind.ECHO) == []
    assert deliver(m, 2, Kind.VOTE) == []


def test_functional_step_leaves_input_untouched():
    m = make_machine("brb24", 1, Config(4, 1))
    m2, actions = brb24_step(m, Start())
    assert not m.started and m2.started and actions == []


def test_deliveries_before_start_are_buffered():
    m = make_machine("brb24", 1, Config(4, 1))
    assert deliver(m, 0, Kind.PROPOSE) == []
    assert sends(m.step(Start())) == [(Kind.ACK, b"v")]


def test_replay_is_deterministic():
    events = [Start(), *(Delivered(Envelope(Message(k, v), s, 1, Fraction(0), Fraction(1)))
                         for k, v, s in [(Kind.PROPOSE, b"v", 0), (Kind.ACK, b"w", 2),
                                         (Kind.ACK, b"v", 3), (Kind.VOTE1, b"w", 2)])]

    def replay():
        m = Brb24(1, Config(8, 2))
        return [a for e in events for a in m.step(e)]
    assert replay() == replay()


# --- f1brb --------------------------------------------------------------------------------


def test_f1brb_good_case():
    assert {t for _, t in commit_times(run(goodcase_scenario("f1brb", 4, 1)))} == {2}


def test_f1brb_partial_proposal_commits_everyone_in_the_same_round():
    sc = Scenario("f1brb", 4, 1, (0,), adversary={0: EquivocateSplit({1: b"v", 2: b"v"}).to_dict()})
    assert commit_times(run(sc)) == [(1, 2), (2, 2), (3, 2)]


def test_f1brb_threshold_is_n_minus_2():
    m = started("f1brb", 1, 5, 1)
    deliver(m, 2, Kind.ACK)
    deliver(m, 3, Kind.ACK)
    assert m.committed is None
    assert Commit(b"v", "fast") in deliver(m, 4, Kind.ACK)


# --- f2brb --------------------------------------------------------------------------------


def test_f2brb_votes_for_each_acking_party_once():
    m = started("f2brb", 1, 8, 2)
    actions = deliver(m, 3, Kind.ACK)
    assert [(a.msg.kind, a.msg.subject) for a in actions if isinstance(a, SendAll)] == [(Kind.SUBJECT_VOTE, 3)]
    assert deliver(m, 3, Kind.ACK, b"w") == []
    assert deliver(m, 0, Kind.ACK) == []      # no vote about the broadcaster


def test_f2brb_thresholds():
    m = started("f2brb", 1, 8, 2)
    # lock on v for subject 7 at n-f-2 = 4 votes from parties other than 7 and the broadcaster
    for s in (0, 7, 2, 3, 4):
        assert not any(isinstance(a, Lock) for a in deliver(m, s, Kind.SUBJECT_VOTE, subject=7))
    assert Lock(b"v", 7) in deliver(m, 5, Kind.SUBJECT_VOTE, subject=7)
    # commit once four subjects hold the same locked value
    for j in (4, 5, 6):
        for s in (1, 2, 3, 7):
            deliver(m, s, Kind.SUBJECT_VOTE, subject=j)
    assert m.committed == b"v" and m.commit_path == "lock"
    assert set(m.locks) == {4, 5, 6, 7}


def test_f2brb_fast_commit_at_5_acks():
    m = started("f2brb", 1, 8, 2)
    for s in (1, 2, 3, 4):
        deliver(m, s, Kind.ACK)
    actions = deliver(m, 5, Kind.ACK)
    assert Commit(b"v", "fast") in actions
    # the vote for party 5 still goes out before terminating
    assert any(isinstance(a, SendAll) and a.msg.subject == 5 for a in actions)


def test_f2brb_good_and_bad_case():
    assert {t for _, t in commit_times(run(goodcase_scenario("f2brb", 8, 2)))} == {2}
    trace = run(badcase_scenario("f2brb", 8, 2))
    assert commit_times(trace) == [(2, 2), (3, 3), (4, 3), (5, 3), (6, 3), (7, 3)]


def test_f2brb_locks_are_unique_per_subject():
    assert isinstance(make_machine("f2brb", 1, Config(8, 2)), F2Brb)
    trace = run(badcase_scenario("f2brb", 8, 2))
    by_subject = {}
    for e in trace.of("Locked"):
        by_subject.setdefault(e.subject, set()).add(e.value)
    assert by_subject and all(len(v) == 1 for v in by_subject.values())


# --- brb23 --------------------------------------------------------------------------------


def test_brb23_thresholds():
    m = started("brb23", 1, 9, 2)
    for s in (2, 3, 4, 5):
        assert sends(deliver(m, s, Kind.ACK, b"w")) == []
    assert sends(deliver(m, 6, Kind.ACK, b"w")) == [(Kind.ACK, b"w")]    # amplify at 5
    actions = deliver(m, 7, Kind.ACK, b"w")                               # commit at 6
    assert Commit(b"w", "fast") in actions


def test_brb23_may_ack_two_values():
    m = started("brb23", 1, 9, 2)
    deliver(m, 0, Kind.PROPOSE, b"v")
    out = []
    for s in (2, 3, 4, 5, 6):
        out += sends(deliver(m, s, Kind.ACK, b"w"))
    assert out == [(Kind.ACK, b"w")]
    assert m.sent_flags == {(Kind.ACK, b"v"), (Kind.ACK, b"w")}


def test_brb23_good_and_bad_case():
    assert {t for _, t in commit_times(run(goodcase_scenario("brb23", 9, 2)))} == {2}
    trace = run(badcase_scenario("brb23", 9, 2))
    times = commit_times(trace)
    assert times[0] == (2, 2) and {t for _, t in times[1:]} == {3} and len(times) == 7


# --- bracha and imbs_raynal --------------------------------------------------------------------


def test_bracha_thresholds():
    m = started("bracha", 1, 4, 1)
    deliver(m, 0, Kind.ECHO)
    deliver(m, 1, Kind.ECHO)
    assert sends(deliver(m, 2, Kind.ECHO)) == [(Kind.VOTE, b"v")]         # n-f = 3, broadcaster counts
    m = started("bracha", 1, 4, 1)
    deliver(m, 2, Kind.VOTE)
    assert sends(deliver(m, 3, Kind.VOTE)) == [(Kind.VOTE, b"v")]         # f+1 = 2
    assert Commit(b"v", "commit") in deliver(m, 0, Kind.VOTE)            # n-f = 3


def test_bracha_good_case_commits_at_3():
    assert {t for _, t in commit_times(run(goodcase_scenario("bracha", 4, 1)))} == {3}


def test_imbs_raynal_thresholds():
    m = started("imbs_raynal", 1, 6, 1)
    for s in (0, 2, 3):
        assert sends(deliver(m, s, Kind.ACK, b"w")) == []
    assert sends(deliver(m, 4, Kind.ACK, b"w")) == [(Kind.ACK, b"w")]    # amplify at n-2f = 4
    assert Commit(b"w", "fast") in deliver(m, 5, Kind.ACK, b"w")         # commit at n-f = 5


def test_imbs_raynal_good_and_bad_case():
    assert {t for _, t in commit_times(run(goodcase_scenario("imbs_raynal", 6, 1)))} == {2}
    times = commit_times(run(badcase_scenario("imbs_raynal", 6, 1)))
    assert times[0][1] == 2 and max(t for _, t in times) == 3 and len(times) == 5


@pytest.mark.parametrize("protocol", ["brb24", "f1brb", "f2brb", "brb23", "bracha", "imbs_raynal"])
def test_silent_broadcaster_means_no_commit(protocol):
    n, f = {"brb23": (9, 2), "imbs_raynal": (6, 1), "f1brb": (4, 1), "bracha": (4, 1)}.get(protocol, (8, 2))
    trace = run(Scenario(protocol, n, f, (0,), adversary={0: {"strategy": "silent"}}))
    assert trace.commits() == []


def test_scripted_split_propose_is_harmless_in_envelope():
    plan = tuple((Fraction(0), r, Message(Kind.PROPOSE, b"v" if r < 3 else b"w")) for r in range(1, 4))
    trace = run(Scenario("brb24", 4, 1, (0,), adversary={0: Scripted(plan).to_dict()}))
    assert len({e.value for e in trace.commits()}) <= 1
