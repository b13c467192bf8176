"""Why two rounds are impossible at n = 4f-1.

Executions 1 and 2 are honest runs with inputs 0 and 1. Executions 3 and 4
stitch their transcripts together so that group B (resp. C) cannot tell
execution 3 (resp. 4) from the honest run, while A and D see the same thing
in both. Someone has to commit the wrong value or wait forever.
"""

import sys

from brblab import run, verify
from brblab.adversaries import thm2_groups, thm2_scenario

f = int(sys.argv[1]) if len(sys.argv) > 1 else 2
print(f"groups at f={f}: {thm2_groups(f)}")
for sc in thm2_scenario(f):
    trace = run(sc)
    v = verify(trace)
    commits = sorted((e.party, e.value.decode(), str(e.t)) for e in trace.commits())
    print(f"{sc.name}: commits {commits}")
    print(f"  agreement={v.agreement.status} termination={v.termination.status}"
          f" witness={v.agreement.witness or v.termination.witness}")
