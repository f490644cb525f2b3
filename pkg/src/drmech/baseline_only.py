"""Baseline-only reporting: agents report f only, face uniform prices and are
called independently with a common probability alpha."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .agent import optimal_consumption_arrays
from .domain import TOL, Agent, EventResult, MarketParams, RecruitmentShortfall, Report


@dataclass(frozen=True)
class BaselineOnlyPrices:
    reward_price: float
    penalty_price: float
    alpha: float


def configure(params: MarketParams) -> BaselineOnlyPrices:
    """Profit-maximising prices: reward pi_max - pi_e, penalty pi_e, alpha pi_e/pi_max."""
    return BaselineOnlyPrices(params.pi_max - params.pi_e, params.pi_e, params.pi_e / params.pi_max)


def truthful_alpha_limit(prices: BaselineOnlyPrices) -> float:
    """Largest alpha that keeps truthful baseline reporting optimal."""
    return prices.penalty_price / (prices.reward_price + prices.penalty_price)


def recruit(agent_stream: Iterable[Agent], alpha: float, D: float) -> list:
    """Take agents from the stream until alpha * sum(f) >= D (truthful f = b)."""
    out, covered = [], 0.0
    for agent in agent_stream:
        out.append(agent)
        covered += alpha * agent.b
        if covered >= D - TOL:
            return out
    raise RecruitmentShortfall(
        f"stream exhausted after {len(out)} agents; expected coverage {covered:.6g} < D={D}",
        missing_kwh=(D - covered) / alpha if alpha > 0 else float("inf"))


def run_event(recruited: Sequence[Agent], reports: Sequence[Report], prices: BaselineOnlyPrices,
              pi_e: float, rng: np.random.Generator, event_index: int = 0,
              alpha: Optional[float] = None) -> EventResult:
    """Call each agent independently with probability alpha and settle.

    ``alpha`` overrides ``prices.alpha`` (used to force all-selected draws).
    """
    a = prices.alpha if alpha is None else alpha
    n = len(recruited)
    b = np.fromiter((ag.b for ag in recruited), float, n)
    pi = np.fromiter((ag.pi for ag in recruited), float, n)
    f = np.fromiter((r.f for r in reports), float, n)
    sel = rng.random(n) < a
    price = np.where(sel, prices.reward_price, prices.penalty_price)
    q, _ = optimal_consumption_arrays(b, pi, f, price, pi_e, sel)
    short = np.maximum(f - q, 0.0)
    ids = frozenset(ag.id for ag, s in zip(recruited, sel) if s)
    return EventResult(
        event_index=event_index,
        called_ids=ids,
        delivered=max(float(np.sum(b - q)), 0.0),
        payout=float(prices.reward_price * short[sel].sum()),
        penalty_revenue=float(prices.penalty_price * short[~sel].sum()),
    )


def price_fn(prices: BaselineOnlyPrices, alpha: Optional[float] = None):
    """Unilateral-deviation pricing for best_response: prices ignore the report."""
    a = prices.alpha if alpha is None else alpha
    return lambda report: (a, prices.reward_price, prices.penalty_price)
