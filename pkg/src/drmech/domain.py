"""Value types shared by the mechanisms, the agent model and the harness.

Units: energies in kWh, prices in $/kWh, money in $.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

# Absolute tolerance for every money/energy comparison. Keeps kink tests of the
# piece-wise linear utility deterministic.
TOL = 1e-9


class MechanismError(Exception):
    """Base class for failures raised while running a mechanism."""


class RecruitmentShortfall(MechanismError):
    """Not enough reported capacity to build the structure the mechanism needs."""

    def __init__(self, message: str, missing_kwh: float = float("nan"), seed=None):
        super().__init__(message)
        self.missing_kwh = missing_kwh
        self.seed = seed


class StructuralError(MechanismError):
    """A pod structure postcondition was violated."""


class DegeneratePopulation(MechanismError):
    """Reports are tied in a way that makes a price or probability undefined."""


class InvariantViolation(MechanismError):
    """A computed quantity broke an invariant the mechanism relies on."""


@dataclass(frozen=True)
class Agent:
    """Private truth of one consumer: baseline ``b`` and marginal utility ``pi``."""

    id: int
    b: float
    pi: float

    def __post_init__(self):
        if self.b < 0:
            raise ValueError(f"agent {self.id}: baseline must be >= 0, got {self.b}")


@dataclass(frozen=True)
class Report:
    agent_id: int
    f: float
    mu: Optional[float] = None

    def __post_init__(self):
        if self.f < 0:
            raise ValueError(f"report {self.agent_id}: f must be >= 0, got {self.f}")
        if self.mu is not None and self.mu < 0:
            raise ValueError(f"report {self.agent_id}: mu must be >= 0, got {self.mu}")


@dataclass(frozen=True)
class MarketParams:
    """Aggregator-side constants.

    ``pi_p`` defaults to ``pi_e``, the smallest penalty that keeps baseline
    reports truthful.
    """

    pi_e: float
    pi_o: float
    pi_max: float
    D: float
    m: int
    pi_p: Optional[float] = None

    def __post_init__(self):
        if self.pi_p is None:
            object.__setattr__(self, "pi_p", self.pi_e)
        if not self.pi_e > 0:
            raise ValueError("pi_e must be > 0")
        if self.pi_o < 0:
            raise ValueError("pi_o must be >= 0")
        if not self.pi_max > self.pi_e:
            raise ValueError("pi_max must exceed pi_e")
        if not self.D > 0:
            raise ValueError("D must be > 0")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.pi_p < self.pi_e - TOL:
            raise ValueError("pi_p must be >= pi_e")

    def check_agent(self, agent: Agent) -> None:
        if not agent.pi > self.pi_e:
            raise ValueError(f"agent {agent.id}: pi={agent.pi} must exceed pi_e={self.pi_e}")
        if agent.pi > self.pi_max + TOL:
            raise ValueError(f"agent {agent.id}: pi={agent.pi} above pi_max={self.pi_max}")


# Example 1 constants (PG&E residential DR numbers).
EXAMPLE_1 = MarketParams(pi_e=0.15, pi_o=2.0, pi_max=1.3, D=100.0, m=10)


@dataclass(frozen=True)
class PricedSelection:
    agent_id: int
    selected: bool
    selection_prob: float
    reward_price: Optional[float] = None
    penalty_price: Optional[float] = None

    def __post_init__(self):
        if not -TOL <= self.selection_prob <= 1 + TOL:
            raise ValueError("selection_prob outside [0, 1]")
        if self.reward_price is not None and self.reward_price < -TOL:
            raise ValueError("reward_price must be >= 0")


@dataclass(frozen=True)
class Pod:
    core_ids: tuple
    header_ids: tuple
    nu: float
    beta: float


@dataclass(frozen=True)
class PodStructure:
    """Sorted pod decomposition produced by a pod sort.

    ``order`` is the full sorted id list; ``pods[i]`` is pod i+1. The header of
    the last pod is ``extra_header_ids``, a core that is never called.
    ``reward_prices`` and ``agent_betas`` are keyed by agent id and cover the
    cores of ``pods`` only.
    """

    order: tuple
    pods: tuple
    extra_header_ids: tuple
    reward_prices: dict = field(default_factory=dict)
    agent_betas: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return len(self.pods)

    def cumulative_betas(self) -> list:
        out, acc = [0.0], 0.0
        for pod in self.pods:
            acc += pod.beta
            out.append(acc)
        return out

    def core_index(self, agent_id: int) -> Optional[int]:
        """0-based index of the pod whose core holds ``agent_id``, or None."""
        for i, pod in enumerate(self.pods):
            if agent_id in pod.core_ids:
                return i
        return None


@dataclass(frozen=True)
class EventResult:
    event_index: int
    called_ids: frozenset
    delivered: float
    payout: float
    penalty_revenue: float


@dataclass(frozen=True)
class SimulationSummary:
    mean_phi: float
    mean_N: float
    mean_M: float
    mean_psi: float
    competitive_ratio: float
    replication_count: int
    ci_halfwidth_phi: float


def net_utility(agent: Agent, q: float, pi_e: float) -> float:
    """pi*min(q, b) - pi_e*q."""
    if q < 0:
        raise ValueError("consumption must be >= 0")
    return agent.pi * min(q, agent.b) - pi_e * q


def truthful_report(agent: Agent, with_mu: bool = True) -> Report:
    return Report(agent.id, agent.b, agent.pi if with_mu else None)
