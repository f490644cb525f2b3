"""Dominant-strategy audits: every agent of random populations searches a
report grid against the mechanism's unilateral-deviation prices.

An agent passes when its truthful report costs no more than the best grid
report (up to a relative 1e-9). The arg-min itself is recorded but not used
for the verdict: reports that leave the agent's prices unchanged tie exactly
with truth, and the search breaks ties toward the smallest report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import baseline_only, srbm, srbm_ci
from .agent import best_response, default_grids
from .domain import Agent, MarketParams, MechanismError, Report, truthful_report

MECHANISMS = ("baseline_only", "srbm_pi", "srbm_pi_complete", "srbm_ci")


@dataclass(frozen=True)
class PopulationSampler:
    """Random audit populations.

    ``D_range`` is drawn per population; SRBM populations are redrawn until the
    pod sort succeeds (at most ``max_tries`` times).
    """

    size_range: tuple = (10, 60)
    b_range: tuple = (4.0, 6.0)
    pi_range: tuple = (0.3, 1.3)
    D_range: tuple = (8.0, 20.0)
    max_tries: int = 200

    def draw(self, rng: np.random.Generator, start_id: int = 0) -> list:
        n = int(rng.integers(self.size_range[0], self.size_range[1] + 1))
        b = rng.uniform(*self.b_range, n)
        pi = rng.uniform(*self.pi_range, n)
        return [Agent(start_id + j, float(b[j]), float(pi[j])) for j in range(n)]


# Sampler defaults per mechanism. CI pods need a dense low end of the mu range
# to reach total probability 1, so CI populations use smaller D relative to b.
SAMPLERS = {
    "baseline_only": PopulationSampler(),
    "srbm_pi": PopulationSampler(),
    "srbm_pi_complete": PopulationSampler(),
    "srbm_ci": PopulationSampler(size_range=(10, 30), pi_range=(0.2, 1.3), D_range=(3.0, 6.0)),
}


@dataclass(frozen=True)
class AgentAudit:
    population: int
    agent_id: int
    b: float
    pi: float
    truthful_cost: float
    best_cost: float
    f_star: float
    mu_star: Optional[float]
    within_one_step: bool
    infeasible_points: int

    @property
    def gain(self) -> float:
        return self.truthful_cost - self.best_cost

    @property
    def passed(self) -> bool:
        return self.gain <= 1e-9 * max(1.0, abs(self.truthful_cost))


@dataclass
class AuditReport:
    mechanism: str
    seed: int
    populations: int = 0
    agents: list = field(default_factory=list)
    skipped_populations: int = 0
    seconds: float = 0.0

    @property
    def failures(self) -> list:
        return [a for a in self.agents if not a.passed]

    @property
    def passed(self) -> bool:
        return self.populations > 0 and not self.failures

    def summary(self) -> str:
        fails = self.failures
        worst = max((a.gain for a in self.agents), default=0.0)
        line = (f"{self.mechanism}: {self.populations} populations, {len(self.agents)} agents, "
                f"{len(fails)} failures, max gain {worst:.3g} $, {self.seconds:.1f}s")
        if fails:
            a = max(fails, key=lambda x: x.gain)
            line += (f"; worst: seed={self.seed} population={a.population} agent={a.agent_id} "
                     f"truth=({a.b:.4g},{a.pi:.4g}) best=({a.f_star:.4g},{a.mu_star})")
        return line


def _price_fn(mechanism: str, reports, k, params, alpha=None) -> Callable:
    if mechanism == "baseline_only":
        return baseline_only.price_fn(baseline_only.configure(params), alpha)
    if mechanism == "srbm_pi":
        return srbm.unilateral_price_fn(reports, k, params, info="partial")
    if mechanism == "srbm_pi_complete":
        return srbm.unilateral_price_fn(reports, k, params, info="complete")
    if mechanism == "srbm_ci":
        return srbm_ci.unilateral_price_fn_ci(reports, k, params)
    raise ValueError(f"unknown mechanism {mechanism!r}; expected one of {MECHANISMS}")


def _feasible(mechanism: str, agents, params) -> bool:
    if mechanism == "baseline_only":
        return True
    reports = [truthful_report(a) for a in agents]
    try:
        if mechanism == "srbm_ci":
            srbm_ci.ci_pod_sort(reports, params)
        else:
            srbm.pod_sort(reports, params)
    except MechanismError:
        return False
    return True


def audit_population(mechanism: str, agents, params: MarketParams, grid_steps: int = 50,
                     population: int = 0, alpha: Optional[float] = None) -> list:
    """Audit every agent of one population; returns AgentAudit records.

    ``alpha`` overrides the baseline-only selection probability.
    """
    with_mu = mechanism != "baseline_only"
    reports = [truthful_report(a, with_mu) for a in agents]
    b_max = max(a.b for a in agents)
    f_grid, mu_grid = default_grids(b_max, params.pi_e, params.pi_max, grid_steps)
    if not with_mu:
        mu_grid = [None]
    out = []
    for a in agents:
        fn = _price_fn(mechanism, reports, a.id, params, alpha)
        br = best_response(a, fn, f_grid, mu_grid, params.pi_e,
                           truthful=Report(a.id, a.b, a.pi if with_mu else None))
        df, dmu = br.grid_resolution
        near = abs(br.f_star - a.b) <= df + 1e-12 and (
            not with_mu or abs(br.mu_star - a.pi) <= dmu + 1e-12)
        out.append(AgentAudit(population, a.id, a.b, a.pi, br.truthful_cost, br.expected_cost,
                              br.f_star, br.mu_star, near, len(br.diagnostics)))
    return out


def run_audit(mechanism: str, n_populations: int = 50, seed: int = 0,
              sampler: Optional[PopulationSampler] = None, grid_steps: int = 50,
              base_params: Optional[MarketParams] = None,
              alpha: Optional[float] = None) -> AuditReport:
    """Audit ``n_populations`` feasible random populations.

    Population p is drawn from SeedSequence(seed, spawn_key=(p,)), so any
    failure is reproducible from (seed, p).
    """
    from .domain import EXAMPLE_1

    sampler = sampler or SAMPLERS[mechanism]
    base = base_params or EXAMPLE_1
    report = AuditReport(mechanism, seed)
    t0 = time.perf_counter()
    p = 0
    while report.populations < n_populations:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(p,))))
        D = float(rng.uniform(*sampler.D_range))
        params = MarketParams(base.pi_e, base.pi_o, base.pi_max, D, base.m)
        agents = sampler.draw(rng)
        if not _feasible(mechanism, agents, params):
            report.skipped_populations += 1
            p += 1
            if report.skipped_populations > sampler.max_tries * max(1, n_populations):
                raise MechanismError(f"{mechanism}: could not draw feasible populations")
            continue
        report.agents.extend(audit_population(mechanism, agents, params, grid_steps, p, alpha))
        report.populations += 1
        p += 1
    report.seconds = time.perf_counter() - t0
    return report
