"""Types shared by all steering governors."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Recovery(str, Enum):
    NONE = "None"
    LAST_COMMAND = "LastCommand"
    CONTRACTION = "Contraction"
    ROW_REMOVAL = "RowRemoval"
    RELAXATION = "Relaxation"


@dataclass(frozen=True)
class GovernorDecision:
    """Outcome of one governor update.

    ``level`` follows the feasibility classification: 1 feasible, 0 no
    command can help, -1/-2 only gains above one / below zero would help,
    -3 rows disagree on the sign, and -4..-6 are -1..-3 combined with 0.
    """

    v: float
    active: bool
    level: int = 1
    recovery: Recovery = Recovery.NONE
    rows_removed: int = 0
    relax_epsilon: float = 0.0
    solve_time: float = 0.0
    gain: float = 1.0
    qp_solved: bool = False

    @classmethod
    def passthrough(cls, ref: float, solve_time: float = 0.0) -> GovernorDecision:
        return cls(v=ref, active=False, solve_time=solve_time)


@dataclass(frozen=True)
class Measurement:
    """What a governor sees at a control step.

    ``lateral`` is (v, r, p, phi) as estimated; ``full`` is the 10-entry plant
    state with the estimated lateral entries substituted, ``side`` the
    liftoff mode flag.
    """

    lateral: np.ndarray
    ltr: float
    full: np.ndarray
    side: int = 0


class Governor:
    name = "off"

    def reset(self) -> None:
        pass

    def step(self, ref: float, meas: Measurement) -> GovernorDecision:
        return GovernorDecision.passthrough(ref)


class NoGovernor(Governor):
    """Passes the driver reference through unchanged."""
