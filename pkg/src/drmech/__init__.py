"""Demand-response baseline mechanisms: baseline-only reporting, SRBM in the
partial- and complete-information settings, and the tools to audit and
simulate them."""

from .domain import (EXAMPLE_1, Agent, DegeneratePopulation, InvariantViolation, MarketParams,
                     MechanismError, RecruitmentShortfall, Report, StructuralError, net_utility,
                     truthful_report)

__version__ = "0.1.0"

__all__ = [
    "EXAMPLE_1", "Agent", "DegeneratePopulation", "InvariantViolation", "MarketParams",
    "MechanismError", "RecruitmentShortfall", "Report", "StructuralError", "net_utility",
    "truthful_report",
]
