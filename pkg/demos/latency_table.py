"""Good-case and bad-case rounds for every asynchronous protocol, then the sync ones."""

from brblab.tables import DEFAULT_SUITE, build_table, render

rows = build_table(DEFAULT_SUITE + [{"protocol": "bb2", "n": 8, "f": 2},
                                   {"protocol": "bb3", "n": 4, "f": 1}])
print(render(rows))
