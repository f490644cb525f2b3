"""Closed-form cost bounds and stopping-time checks.

All cost figures are $/kWh of demand reduction. Notation follows the rest of
the package: E[b] mean baseline, E[pi] mean marginal utility, E[1/pi] its
harmonic moment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import MarketParams


@dataclass(frozen=True)
class PopulationStats:
    e_b: float
    e_pi: float
    e_inv_pi: float
    pi_max: float
    e_inv_pi_se: float = 0.0

    def __post_init__(self):
        if min(self.e_b, self.e_pi, self.e_inv_pi, self.pi_max) <= 0:
            raise ValueError("population moments must be positive")
        # Jensen: E[1/pi] >= 1/E[pi]
        if self.e_inv_pi < 1 / self.e_pi - 1e-12 - 3 * self.e_inv_pi_se:
            raise ValueError("E[1/pi] < 1/E[pi] violates Jensen's inequality")

    @classmethod
    def uniform_pi(cls, lo: float, hi: float, e_b: float, pi_max: float = None):
        """pi ~ U[lo, hi]; E[1/pi] = ln(hi/lo)/(hi - lo)."""
        if not 0 < lo < hi:
            raise ValueError("need 0 < lo < hi")
        return cls(e_b, (lo + hi) / 2, math.log(hi / lo) / (hi - lo), hi if pi_max is None else pi_max)

    @classmethod
    def point_pi(cls, pi0: float, e_b: float, pi_max: float = None):
        return cls(e_b, pi0, 1 / pi0, pi0 if pi_max is None else pi_max)

    @classmethod
    def from_sampler(cls, sample_pi, e_b: float, pi_max: float, n: int = 1_000_000, rng=None):
        """Monte Carlo moments for an arbitrary pi distribution, with the se of E[1/pi]."""
        rng = np.random.default_rng(0) if rng is None else rng
        x = np.asarray(sample_pi(rng, n), dtype=float)
        inv = 1 / x
        return cls(e_b, float(x.mean()), float(inv.mean()), pi_max,
                   e_inv_pi_se=float(inv.std(ddof=1) / math.sqrt(n)))


EXAMPLE_1_STATS = PopulationStats.uniform_pi(0.3, 1.3, e_b=5.0)


def phi_min(stats: PopulationStats, params: MarketParams) -> float:
    """Lower bound on cost over every linear reward/penalty self-reporting mechanism."""
    h = stats.e_inv_pi
    return 1 / h - params.pi_e + params.pi_o / (params.m * params.pi_e * stats.e_b * h)


def phi_min_approx(stats: PopulationStats, params: MarketParams) -> float:
    """phi_min with E[1/pi] replaced by 1/E[pi] (modest-spread approximation)."""
    return stats.e_pi - params.pi_e + params.pi_o * stats.e_pi / (params.m * params.pi_e * stats.e_b)


def phi_bo_upper(stats: PopulationStats, params: MarketParams) -> float:
    """Upper bound on cost of baseline-only reporting at its optimal prices."""
    pe, pmax, eb, D = params.pi_e, params.pi_max, stats.e_b, params.D
    return ((pmax - pe) * (1 + pe * eb / (pmax * D))
            + params.pi_o * pmax / (params.m * pe * eb)
            + params.pi_o / (params.m * D))


def phi_bo_upper_large_D(stats: PopulationStats, params: MarketParams) -> float:
    pe, pmax = params.pi_e, params.pi_max
    return pmax - pe + params.pi_o * pmax / (params.m * pe * stats.e_b)


def em_upper(stats: PopulationStats, params: MarketParams) -> float:
    """E[M] < E[pi]/pi_e + 3 (the ratio form, as used in the SRBM cost bound)."""
    return stats.e_pi / params.pi_e + 3


def en_upper(e_m: float, stats: PopulationStats, params: MarketParams) -> float:
    """E[N] <= (E[M] + 1)(D/E[b] + 1) for a given E[M] (bound or simulated)."""
    return (e_m + 1) * (params.D / stats.e_b + 1)


def en_em_upper(stats: PopulationStats, params: MarketParams) -> tuple:
    em = em_upper(stats, params)
    return en_upper(em, stats, params), em


def phi_srbm_upper(stats: PopulationStats, params: MarketParams) -> float:
    pe = params.pi_e
    recruit = params.pi_o / (params.m * stats.e_b) + params.pi_o / (params.m * params.D)
    return stats.e_pi + 2 * pe + recruit * (stats.e_pi / pe + 3)


def phi_srbm_upper_large_D(stats: PopulationStats, params: MarketParams) -> float:
    pe = params.pi_e
    top = stats.e_pi + 3 * pe
    return top - pe + params.pi_o * top / (params.m * pe * stats.e_b)


# -- stopping times ---------------------------------------------------------

def first_passage_counts(sample_x, D: float, n_samples: int, rng) -> np.ndarray:
    """Draw n_samples copies of N = min{t : X_1 + ... + X_t >= D}.

    ``sample_x(rng, shape)`` draws i.i.d. non-negative increments.
    """
    out = np.empty(n_samples, dtype=np.int64)
    width = 16
    done = np.zeros(n_samples, dtype=bool)
    while not done.all():
        todo = np.flatnonzero(~done)
        x = np.asarray(sample_x(rng, (todo.size, width)), dtype=float)
        s = np.cumsum(x, axis=1)
        hit = s >= D
        ok = hit.any(axis=1)
        out[todo[ok]] = hit[ok].argmax(axis=1) + 1
        done[todo[ok]] = True
        width *= 2  # rows that never crossed are redrawn with a longer horizon
    return out


@dataclass(frozen=True)
class StoppingTimeReport:
    mean: float
    se: float
    lower: float
    upper: float
    n: int

    @property
    def passed(self) -> bool:
        return self.lower - 3 * self.se <= self.mean <= self.upper + 3 * self.se


def stopping_time_check(samples, chi: float, D: float) -> StoppingTimeReport:
    """Check D/chi <= E[N] < D/chi + 1 on samples of the first-passage count N."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 10_000:
        raise ValueError("need at least 10,000 samples")
    se = float(samples.std(ddof=1) / math.sqrt(samples.size))
    return StoppingTimeReport(float(samples.mean()), se, D / chi, D / chi + 1, samples.size)


def wald_check(samples_x_sums, samples_n, chi: float) -> float:
    """Return E[S_N] - chi*E[N] (Wald's identity says this is 0) in standard errors."""
    s = np.asarray(samples_x_sums, dtype=float)
    n = np.asarray(samples_n, dtype=float)
    d = s - chi * n
    return float(d.mean() / (d.std(ddof=1) / math.sqrt(d.size)))
