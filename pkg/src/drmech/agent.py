"""Rational agent: second-stage consumption and first-stage best response.

Stage costs (u(q) = pi*min(q, b)):

    selected:      J_s(q, f)  = pi_e*q - u(q) - reward*(f - q)^+
    not selected:  J_ns(q, f) = pi_e*q - u(q) + penalty*(f - q)^+

Both are piece-wise linear in q, so the minimiser sits on {0, min(f,b), b, f}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .domain import TOL, Agent, MechanismError, Report


@dataclass(frozen=True)
class SecondStageDecision:
    q_star: float
    cost: float


@dataclass
class BestResponse:
    f_star: float
    mu_star: Optional[float]
    expected_cost: float
    grid_resolution: tuple
    truthful_cost: float = float("nan")
    diagnostics: list = field(default_factory=list)

    @property
    def gain(self) -> float:
        """How much the best grid report beats truth (<= 0 means no gain)."""
        return self.truthful_cost - self.expected_cost


def _utility(b, pi, q):
    return pi * np.minimum(q, b)


def selected_cost(agent: Agent, q: float, f: float, reward_price: float, pi_e: float) -> float:
    return pi_e * q - agent.pi * min(q, agent.b) - reward_price * max(f - q, 0.0)


def not_selected_cost(agent: Agent, q: float, f: float, penalty_price: float, pi_e: float) -> float:
    return pi_e * q - agent.pi * min(q, agent.b) + penalty_price * max(f - q, 0.0)


def _kinks(f: float, b: float) -> list:
    return sorted({0.0, min(f, b), b, f})


def optimal_consumption_selected(agent: Agent, f: float, reward_price: float,
                                 pi_e: float) -> SecondStageDecision:
    """Ties go to the smaller q, i.e. toward reduction."""
    if f < 0 or reward_price < 0:
        raise ValueError("f and reward_price must be >= 0")
    best_q, best_c = None, np.inf
    for q in _kinks(f, agent.b):
        c = selected_cost(agent, q, f, reward_price, pi_e)
        if c < best_c - TOL:
            best_q, best_c = q, c
    return SecondStageDecision(best_q, best_c)


def optimal_consumption_not_selected(agent: Agent, f: float, penalty_price: float,
                                     pi_e: float) -> SecondStageDecision:
    """Ties go to the true baseline b, then to the smaller q."""
    if f < 0 or penalty_price < 0:
        raise ValueError("f and penalty_price must be >= 0")
    cands = [(q, not_selected_cost(agent, q, f, penalty_price, pi_e)) for q in _kinks(f, agent.b)]
    best_c = min(c for _, c in cands)
    tied = [q for q, c in cands if c <= best_c + TOL]
    q = agent.b if agent.b in tied else tied[0]
    return SecondStageDecision(q, not_selected_cost(agent, q, f, penalty_price, pi_e))


def optimal_consumption_arrays(b, pi, f, price, pi_e, selected):
    """Vectorised second-stage decisions, same tie rules as the scalar versions.

    ``price`` is the reward price where ``selected`` is true and the penalty
    price elsewhere. Returns (q, cost).
    """
    b, pi, f, price, selected = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (b, pi, f, price)), np.asarray(selected, dtype=bool))
    sign = np.where(selected, -1.0, 1.0)
    cands = np.stack([np.zeros_like(b), np.minimum(f, b), b, f])
    costs = pi_e * cands - _utility(b, pi, cands) + sign * price * np.maximum(f - cands, 0.0)
    best = costs.min(axis=0)
    tied = costs <= best + TOL
    # selected: smallest tied q; not selected: b if tied, else smallest tied q
    qs = np.where(tied, cands, np.inf)
    q_small = qs.min(axis=0)
    q = np.where(selected, q_small, np.where(tied[2], b, q_small))
    cost = pi_e * q - _utility(b, pi, q) + sign * price * np.maximum(f - q, 0.0)
    return q, cost


def expected_report_cost(agent: Agent, report: Report, selection_prob: float,
                         reward_price: Optional[float], penalty_price: float, pi_e: float) -> float:
    """alpha*J_s(q*_s, f) + (1 - alpha)*J_ns(q*_ns, f)."""
    if not -TOL <= selection_prob <= 1 + TOL:
        raise ValueError("selection_prob must be in [0, 1]")
    cost = 0.0
    if selection_prob > 0:
        cost += selection_prob * optimal_consumption_selected(agent, report.f, reward_price, pi_e).cost
    if selection_prob < 1:
        cost += (1 - selection_prob) * optimal_consumption_not_selected(
            agent, report.f, penalty_price, pi_e).cost
    return cost


PriceFn = Callable[[Report], tuple]


def default_grids(b_max: float, pi_e: float, pi_max: float, steps: int = 50):
    """f over [0, 2*b_max] in b_max/steps steps; mu over [pi_e, pi_max] in (pi_max-pi_e)/steps."""
    f_grid = np.linspace(0.0, 2 * b_max, 2 * steps + 1)
    mu_grid = np.linspace(pi_e, pi_max, steps + 1)
    return f_grid, mu_grid


def best_response(agent: Agent, price_fn: PriceFn, f_grid: Iterable[float],
                  mu_grid: Sequence[Optional[float]], pi_e: float,
                  truthful: Optional[Report] = None) -> BestResponse:
    """Exhaustive search of expected_report_cost over f_grid x mu_grid.

    ``price_fn(report)`` returns (selection_prob, reward_price, penalty_price)
    for a unilateral deviation. Grid points the mechanism cannot price are
    skipped and listed in ``diagnostics``. Ties resolve to the smallest f, then
    the smallest mu. ``mu_grid=[None]`` searches baselines only.
    """
    f_grid = sorted(float(x) for x in f_grid)
    mu_grid = list(mu_grid)
    if not f_grid or not mu_grid:
        raise ValueError("grids must be non-empty")
    if mu_grid != [None]:
        mu_grid = sorted(float(x) for x in mu_grid)

    def evaluate(report):
        prob, reward, penalty = price_fn(report)
        return expected_report_cost(agent, report, prob, reward, penalty, pi_e)

    diagnostics = []
    best = None
    for f in f_grid:
        for mu in mu_grid:
            rep = Report(agent.id, f, mu)
            try:
                c = evaluate(rep)
            except MechanismError as exc:
                diagnostics.append((f, mu, str(exc)))
                continue
            if best is None or c < best[2] - TOL:
                best = (f, mu, c)
    if best is None:
        raise MechanismError(f"agent {agent.id}: no grid point could be priced")

    if truthful is None:
        truthful = Report(agent.id, agent.b, None if mu_grid == [None] else agent.pi)
    truth_cost = evaluate(truthful)
    df = f_grid[1] - f_grid[0] if len(f_grid) > 1 else 0.0
    dmu = mu_grid[1] - mu_grid[0] if len(mu_grid) > 1 and mu_grid[0] is not None else 0.0
    return BestResponse(best[0], best[1], best[2], (df, dmu), truth_cost, diagnostics)
