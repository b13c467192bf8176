"""brb24 is safe at n = 4f and breaks at n = 4f-1: let the explorer find it."""

from brblab import Bounds, explore, run, verify
from brblab.core import Scenario

for n in (8, 7):
    rep = explore("brb24", n, 2, Bounds(max_executions=1500, seed=0))
    print(f"n={n}: {rep.executions} runs, {rep.agreement_violations} agreement and "
          f"{rep.termination_violations} termination violations")

rep = explore("brb24", 7, 2, Bounds(max_executions=3000, seed=0))
for item in rep.violations:
    if item["verdict"]["agreement"]["status"] == "fail":
        sc = Scenario.from_json(item["scenario"])
        trace = run(sc)
        print("replayed:", verify(trace).agreement.witness)
        print("adversary:", sc.to_json()["adversary"])
        break
