"""Steering governors: linear (LRG), extended command (ECG) and nonlinear (NRG)."""

from rollgov.governors.base import (
    Governor,
    GovernorDecision,
    Measurement,
    NoGovernor,
    Recovery,
)
from rollgov.governors.ecg import EcgConfig, EcgWeights, ExtendedCommandGovernor, LaguerreBasis
from rollgov.governors.lrg import LinearReferenceGovernor, LrgConfig, classify_feasibility
from rollgov.governors.nrg import NonlinearReferenceGovernor, NrgConfig
from rollgov.governors.qp import QPResult, solve_qp

__all__ = [
    "Governor", "GovernorDecision", "Measurement", "NoGovernor", "Recovery",
    "EcgConfig", "EcgWeights", "ExtendedCommandGovernor", "LaguerreBasis",
    "LinearReferenceGovernor", "LrgConfig", "classify_feasibility",
    "NonlinearReferenceGovernor", "NrgConfig", "QPResult", "solve_qp",
]
