"""Protocol registry."""

from fractions import Fraction

from .core import BROADCASTER, Config
from .protocols_async import ASYNC_MACHINES, Machine
from .protocols_sync import SYNC_MACHINES

MACHINES = {**ASYNC_MACHINES, **SYNC_MACHINES}


def machine_class(protocol: str) -> type:
    try:
        return MACHINES[protocol]
    except KeyError:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {sorted(MACHINES)}") from None


def make_machine(protocol: str, me: int, cfg: Config, input=None, offset=Fraction(0)) -> Machine:
    """Build the honest machine for party ``me``; only the broadcaster gets an input."""
    cls = machine_class(protocol)
    return cls(me, cfg, input if me == BROADCASTER else None, offset)


def message_kinds(protocol: str) -> tuple:
    """(kind, natural send round) pairs the protocol uses besides Propose."""
    return machine_class(protocol).kinds
