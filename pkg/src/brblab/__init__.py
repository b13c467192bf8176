"""A lab for Byzantine reliable broadcast and Byzantine broadcast protocols.

Deterministic protocol state machines, a discrete-event network simulator,
Byzantine strategies, property checkers and latency measurement.
"""

from .adversaries import badcase_scenario, goodcase_scenario, thm2_scenario, thm3_chain
from .core import BOTTOM, Config, Scenario, Timing, Trace, validate_config
from .network_sim import run
from .verifier import Bounds, explore, verify

__version__ = "0.1.0"

__all__ = [
    "BOTTOM", "Bounds", "Config", "Scenario", "Timing", "Trace", "badcase_scenario",
    "explore", "goodcase_scenario", "run", "thm2_scenario", "thm3_chain", "validate_config",
    "verify",
]
