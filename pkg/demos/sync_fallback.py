"""bb2 commits at 2 delta whatever the conservative bound; a silent broadcaster ends in BA."""

from fractions import Fraction

from brblab import Scenario, Timing, run
from brblab.adversaries import Silent, badcase_scenario, goodcase_scenario

for big_delta in (2, 10, 100):
    trace = run(goodcase_scenario("bb2", 8, 2, timing=Timing("sync", 1, big_delta, Fraction(1, 2)), seed=1))
    print(f"big delta {big_delta}: last commit at {max(e.t for e in trace.commits())}")

trace = run(badcase_scenario("bb2", 8, 2))
print("bad case:", sorted((e.party, e.path, str(e.t)) for e in trace.commits()))

silent = Scenario("bb2", 8, 2, (0,), b"v", Timing("sync", 1, 10, 0), {0: Silent().to_dict()})
trace = run(silent)
print("silent broadcaster:", {(e.value, e.path) for e in trace.commits()})
