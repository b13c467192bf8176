import itertools
import random
from fractions import Fraction

import pytest

from brblab.adversaries import EquivocateSplit, Silent, badcase_scenario, goodcase_scenario
from brblab.core import (
    BOTTOM, BADecided, Config, Delivered, Envelope, InvokeBA, Kind, Message, Scenario, SetTimer, Start,
    Timing, TimerFired,
)
from brblab.network_sim import run
from brblab.protocols import make_machine
from brblab.protocols_sync import (
    ROUNDS_PER_PHASE, ba_adversary, ba_rounds, bb2_step, phase_king_ba, run_phase_king,
    values_in_play,
)

SYNC = Timing("sync", 1, 10, 0)


def commits(trace):
    return sorted((e.party, e.t, e.value, e.path) for e in trace.commits())


def deliver(m, sender, kind, value=b"v", t=1):
    return m.step(Delivered(Envelope(Message(kind, value), sender, m.me, Fraction(0), Fraction(t))))


def test_bb2_needs_sync_timing():
    with pytest.raises(ValueError):
        make_machine("bb2", 1, Config(8, 2))


def test_bb2_sets_ba_timer_from_big_delta():
    m = make_machine("bb2", 1, Config(8, 2, timing=SYNC))
    assert m.step(Start()) == [SetTimer(Fraction(50), "ba")]          # 3*Delta + 2*Delta
    assert m.commit_deadline == 30                                     # 2*Delta + Delta


def test_timer_before_start_is_rejected():
    m = make_machine("bb2", 1, Config(8, 2, timing=SYNC))
    with pytest.raises(ValueError):
        m.step(TimerFired("ba", Fraction(50)))


def test_bb2_commit_does_not_terminate_and_ba_carries_lock():
    m = make_machine("bb2", 1, Config(8, 2, timing=SYNC))
    m.step(Start())
    for s in range(1, 6):
        deliver(m, s, Kind.ACK)
    assert m.committed == b"v" and not m.terminated and m.lock == b"v"
    assert m.step(TimerFired("ba", Fraction(50))) == [InvokeBA(b"v")]
    m.step(BADecided(b"v", Fraction(230)))
    assert m.terminated and m.committed == b"v"


def test_bb2_late_quorum_locks_without_committing():
    m = make_machine("bb2", 1, Config(8, 2, timing=SYNC))
    m.step(Start())
    for s in range(1, 6):
        deliver(m, s, Kind.ACK, t=31)
    assert m.committed is None and m.lock == b"v"


def test_bb2_step_is_functional():
    m = make_machine("bb2", 1, Config(8, 2, timing=SYNC))
    m2, actions = bb2_step(m, Start())
    assert not m.started and m2.started and len(actions) == 1


@pytest.mark.parametrize("big_delta", [2, 10, 100])
def test_bb2_good_case_is_independent_of_big_delta(big_delta):
    timing = Timing("sync", 1, big_delta, Fraction(1, 2))
    trace = run(goodcase_scenario("bb2", 8, 2, timing=timing, seed=1))
    assert {(p, t) for p, t, _, _ in commits(trace)} == {(p, 2) for p in range(6)}


def test_bb2_good_case_with_skew_is_within_two_delta_plus_skew():
    timing = Timing("sync", 1, 10, 1)
    offsets = (0, 1, 1, 1, 1, 1, 1, 1)
    trace = run(goodcase_scenario("bb2", 8, 2, timing=timing, start_offsets=offsets))
    assert max(e.t for e in trace.commits()) <= 2 + 1


def test_bb2_silent_broadcaster_commits_ba_bottom():
    trace = run(Scenario("bb2", 8, 2, (0,), b"v", SYNC, {0: Silent().to_dict()}))
    assert {(v, path) for _, _, v, path in commits(trace)} == {(BOTTOM, "ba")}
    assert all(trace.terminated(p) for p in range(1, 8))
    assert {e.value for e in trace.of("BAInvoked")} == {BOTTOM}


def test_bb2_bad_case_ba_inputs_match_early_commit():
    trace = run(badcase_scenario("bb2", 8, 2))
    early = [e for e in trace.commits() if e.path == "fast"]
    assert len(early) == 1 and early[0].t <= 30
    assert {e.value for e in trace.of("BAInvoked")} == {early[0].value}
    assert {v for _, _, v, _ in commits(trace)} == {early[0].value}


def test_bb3_good_case_commits_by_three_delta():
    trace = run(goodcase_scenario("bb3", 4, 1, timing=SYNC))
    assert {t for _, t, _, _ in commits(trace)} == {3}
    assert len(trace.commits()) == 3


def test_bb3_silent_broadcaster():
    trace = run(Scenario("bb3", 4, 1, (0,), b"v", SYNC, {0: Silent().to_dict()}))
    assert {(v, path) for _, _, v, path in commits(trace)} == {(BOTTOM, "ba")}


def test_bb3_equivocating_split_keeps_agreement():
    adv = {0: EquivocateSplit({1: b"v", 2: b"v", 3: b"w"}).to_dict()}
    trace = run(Scenario("bb3", 4, 1, (0,), b"v", SYNC, adv))
    assert [e for e in trace.commits() if e.path == "fast"] == []
    assert len({e.value for e in trace.commits()}) == 1
    assert len(trace.commits()) == 3


# --- phase king ---------------------------------------------------------------------------


def test_ba_round_count():
    assert ROUNDS_PER_PHASE == 3 and ba_rounds(1) == 6


def test_ba_validity_all_equal():
    assert phase_king_ba({1: b"v", 2: b"v", 3: b"v"}, Config(4, 1, frozenset({0})),
                         ba_adversary("equivocate", (b"v", b"w"))) == b"v"


def test_ba_no_faults():
    assert phase_king_ba({p: b"v" for p in range(4)}, Config(4, 0)) == b"v"


def test_ba_refuses_without_enough_parties():
    with pytest.raises(ValueError):
        run_phase_king({1: b"v", 2: b"v"}, 3, 1, {0})


def test_ba_values_in_play_order():
    assert values_in_play({3: BOTTOM, 1: b"v", 2: b"v"}) == (b"v", BOTTOM)


def _random_adversary(seed, values):
    rng = random.Random(seed)
    table = {}

    def send(phase, rnd, sender, recipient):
        key = (phase, rnd, sender, recipient)
        if key not in table:
            table[key] = rng.choice(values + (None,))
        return table[key]
    return send


@pytest.mark.parametrize("byz", [0, 1, 2, 3])
def test_ba_mixed_inputs_agree_on_an_input(byz):
    honest = [p for p in range(4) if p != byz]
    for combo in itertools.product([b"v", BOTTOM], repeat=3):
        inputs = dict(zip(honest, combo))
        values = values_in_play(inputs)
        adversaries = [ba_adversary("silent"), ba_adversary("equivocate", values)]
        adversaries += [_random_adversary(s, values) for s in range(20)]
        for adv in adversaries:
            out = run_phase_king(inputs, 4, 1, {byz}, adv)
            assert len(set(out.values())) == 1
            assert set(out.values()) <= {b"v", BOTTOM}
            if len(set(combo)) == 1:
                assert set(out.values()) == {combo[0]}
