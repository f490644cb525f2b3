"""CAISO 10/10 comparator.

The 10/10 method averages 10 similar non-event days into a raw baseline
b_c and scales it by the same-day ratio q_p / b_p, capped to [0.8, 1.2]. An
agent that pushes up its consumption q_p in the hours before an event gains
pi^r per unit of adjusted baseline and loses pi^e per unit consumed, so it
inflates to the cap whenever pi^r > pi^e. Under SRBM the same agent has no
profitable misreport.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import srbm
from .agent import best_response, default_grids, optimal_consumption_selected
from .domain import TOL, Agent, MarketParams, Report, truthful_report


class InvalidHistory(ValueError):
    """Non-event history cannot produce a 10/10 baseline."""


@dataclass(frozen=True)
class TenTenBaseline:
    raw_baseline: float  # b_c, kWh
    prior_avg: float  # b_p, kWh
    adjustment_cap: float = 0.20

    def __post_init__(self):
        if self.prior_avg <= 0:
            raise InvalidHistory(f"prior-hour average must be positive, got {self.prior_avg}")
        if self.raw_baseline <= 0:
            raise InvalidHistory(f"raw baseline must be positive, got {self.raw_baseline}")
        if not 0 <= self.adjustment_cap < 1:
            raise ValueError("adjustment_cap must be in [0, 1)")

    @classmethod
    def from_history(cls, event_hour: Sequence[float], prior_hour: Sequence[float],
                     adjustment_cap: float = 0.20) -> "TenTenBaseline":
        """Average the event-hour and prior-hour consumption of the selected days."""
        ev = np.asarray(event_hour, dtype=float)
        pr = np.asarray(prior_hour, dtype=float)
        if ev.size == 0 or ev.shape != pr.shape:
            raise InvalidHistory("need matching, non-empty event-hour and prior-hour histories")
        return cls(float(ev.mean()), float(pr.mean()), adjustment_cap)

    def clamp(self, ratio: float) -> float:
        c = self.adjustment_cap
        return min(max(ratio, 1.0 - c), 1.0 + c)

    def adjustment(self, q_p: float) -> float:
        return self.clamp(q_p / self.prior_avg)

    def adjusted(self, q_p: float) -> float:
        return self.adjustment(q_p) * self.raw_baseline


def caiso_payment(baseline: TenTenBaseline, q_p: float, q: float, reward_price: float) -> float:
    """pi^r * (clamp(q_p/b_p) * b_c - q)^+."""
    if q_p < 0 or q < 0 or reward_price < 0:
        raise ValueError("inputs must be non-negative")
    return max(0.0, reward_price * (baseline.adjusted(q_p) - q))


def inflation_gain(baseline: TenTenBaseline, multiplier: float, reward_price: float,
                   pi_e: float) -> float:
    """Event-day net gain of consuming multiplier * b_p in the prior hour."""
    extra = (baseline.clamp(multiplier) - 1.0) * baseline.raw_baseline
    return reward_price * extra - pi_e * (multiplier - 1.0) * baseline.prior_avg


def inflation_best_response(baseline: TenTenBaseline, reward_price: float, pi_e: float,
                            grid: Optional[Sequence[float]] = None) -> float:
    """Prior-hour multiplier maximising inflation_gain over ``grid``
    (default 1.0..1.5 in steps of 0.001 plus the cap). Ties go to the smallest
    multiplier."""
    if grid is None:
        grid = np.append(np.linspace(1.0, 1.5, 501), 1.0 + baseline.adjustment_cap)
    g = np.unique(np.asarray(grid, dtype=float))
    best, best_gain = float(g[0]), inflation_gain(baseline, float(g[0]), reward_price, pi_e)
    for x in g[1:]:
        v = inflation_gain(baseline, float(x), reward_price, pi_e)
        if v > best_gain + TOL:
            best, best_gain = float(x), v
    return best


def caiso_inflation_factor(baseline: TenTenBaseline, reward_price: float, pi_e: float,
                           grid: Optional[Sequence[float]] = None) -> float:
    """Payment of a fully curtailing agent at its best multiplier over the
    truthful payment; with q = 0 the ratio is the clamped multiplier."""
    if reward_price <= 0:
        return 1.0
    return baseline.clamp(inflation_best_response(baseline, reward_price, pi_e, grid))


def _expected_payment(agent: Agent, report: Report, price_fn, pi_e: float) -> float:
    prob, reward, _ = price_fn(report)
    if prob <= 0 or reward is None:
        return 0.0
    q = optimal_consumption_selected(agent, report.f, reward, pi_e).q_star
    return prob * reward * max(report.f - q, 0.0)


def srbm_inflation_factor(agent: Agent, reports: Sequence[Report], params: MarketParams,
                          grid_steps: int = 20) -> float:
    """Expected SRBM payment at the agent's best report over the truthful one.

    The agent only leaves the truthful report for a strictly cheaper one.
    """
    fn = srbm.unilateral_price_fn(reports, agent.id, params)
    b_max = max(r.f for r in reports)
    f_grid, mu_grid = default_grids(b_max, params.pi_e, params.pi_max, grid_steps)
    br = best_response(agent, fn, f_grid, mu_grid, params.pi_e)
    if br.truthful_cost - br.expected_cost <= TOL * max(1.0, abs(br.truthful_cost)):
        return 1.0
    truth = _expected_payment(agent, Report(agent.id, agent.b, agent.pi), fn, params.pi_e)
    dev = _expected_payment(agent, Report(agent.id, br.f_star, br.mu_star), fn, params.pi_e)
    return dev / truth if truth > 0 else float("inf")


@dataclass(frozen=True)
class ComparisonRow:
    agent_id: int
    b: float
    pi: float
    reward_price: float
    incentive: float  # pi^r_k - pi^e; inflation pays iff positive
    caiso_multiplier: float
    caiso_factor: float
    srbm_factor: float


def compare(agents: Sequence[Agent], params: MarketParams, adjustment_cap: float = 0.20,
            grid_steps: int = 20, srbm_side: bool = True) -> list:
    """Side-by-side inflation factors for every core member of the pod sort.

    Each agent's CAISO history is its true baseline (b_c = b_p = b_k, q_p = b_k
    uninflated) and its CAISO reward price is its SRBM reward price.
    """
    reports = [truthful_report(a) for a in agents]
    sp = srbm.pod_sort_arrays(reports, params.D, params.pi_e)
    by_id = {a.id: a for a in agents}
    rows = []
    for j in range(sp.n_core):
        a = by_id[int(sp.ids[j])]
        r = float(sp.reward[j])
        base = TenTenBaseline(a.b, a.b, adjustment_cap)
        mult = inflation_best_response(base, r, params.pi_e)
        rows.append(ComparisonRow(
            a.id, a.b, a.pi, r, r - params.pi_e, mult,
            caiso_inflation_factor(base, r, params.pi_e),
            srbm_inflation_factor(a, reports, params, grid_steps) if srbm_side else float("nan")))
    return rows
