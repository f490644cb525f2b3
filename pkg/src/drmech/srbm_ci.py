"""SRBM, complete-information setting.

Agents here know how pods are sorted, so an agent's price and probability
must not depend on its own report at all. Everything for agent k is computed
from the pod sort with k removed: nu^j_{-k} is the top report of pod j in that
sort, the reward is nu^i_{-k} - pi_e, and the probability
c^i_k pi_e / nu^{i+1}_{-k} carries a jump factor c^i_k that shrinks fast enough
up the pod ladder to remove any gain from climbing it.

Jump factors, for k allotted pod i (1-based):

    c^1 = 1,   c^{j+1} = e^j c^j,
    e^j = nu^{j+2} (m_j - nu^j) / (nu^{j+1} (m_j - nu^{j+1})),
    m_j = nu^{j-1} for j <= i,  nu^{i-1} for j > i.

nu^j is the top report of core j+1 (pod j is core j plus the next core), so
nu^0 is the top of core 1. That keeps pi_k <= nu^{i-1}_{-k} for every core
member, pod 1 included.

Pod-level probability is beta^i = min_k beta^i_k over the core.
"""

from __future__ import annotations

import bisect
import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .domain import (TOL, Agent, DegeneratePopulation, EventResult, InvariantViolation,
                     MarketParams, MechanismError, Pod, PodStructure, RecruitmentShortfall,
                     Report)
from . import _kernels as _k
from .srbm import _DeviationPricer, sort_reports

log = logging.getLogger(__name__)

DENOM_EPS = 1e-12


@dataclass(frozen=True)
class JumpFactors:
    """Jump factors of one agent. Lists are 1-based in meaning: ``c[0]`` is c^1."""

    i: int
    nu_minus_k: tuple  # (nu^0, nu^1, nu^2, ...)
    c: tuple
    e: tuple
    mu_plus: tuple

    def __post_init__(self):
        if self.c[0] != 1.0:
            raise InvariantViolation("c^1 must equal 1")

    def c_at(self, j: int) -> float:
        return self.c[j - 1]

    def nu(self, j: int) -> float:
        return self.nu_minus_k[j]


def compute_jump_factors(nu_minus_k: Sequence[float], i: int, upto: Optional[int] = None) -> JumpFactors:
    """Jump factors c^1..c^upto for an agent allotted pod i.

    ``nu_minus_k`` lists nu^0, nu^1, ...; it must reach index upto+1.
    ``upto`` defaults to i.
    """
    upto = i if upto is None else upto
    if i < 1 or upto < 1:
        raise ValueError("pod indices are 1-based")
    nu = tuple(float(x) for x in nu_minus_k)
    if len(nu) < upto + 2:
        raise ValueError(f"need nu^0..nu^{upto + 1}, got {len(nu)} values")
    if any(x <= 0 for x in nu):
        raise ValueError("nu values must be positive")
    if any(b < a - TOL for a, b in zip(nu, nu[1:])):
        raise ValueError("nu values must be non-decreasing")
    c, e, mplus = [1.0], [], []
    for j in range(1, upto):
        m = nu[j - 1] if j <= i else nu[i - 1]
        den = nu[j + 1] * (m - nu[j + 1])
        if abs(m - nu[j + 1]) < DENOM_EPS:
            raise DegeneratePopulation(f"mu^{j}+ = nu^{j + 1} = {m}: jump factor undefined")
        num = nu[j + 2] * (m - nu[j])
        ej = num / den
        if ej < 0:
            raise InvariantViolation(f"negative jump ratio e^{j} = {ej}; nu = {nu}, i = {i}")
        if ej == 0:
            raise DegeneratePopulation(f"e^{j} = 0 from tied reports (nu^{j - 1} = nu^{j})")
        e.append(ej)
        mplus.append(m)
        c.append(c[-1] * ej)
    return JumpFactors(i, nu, tuple(c), tuple(e), tuple(mplus))


def ci_prices(jf: JumpFactors, pi_e: float) -> tuple:
    """(beta_k, reward_price) for the agent's allotted pod."""
    i = jf.i
    return jf.c_at(i) * pi_e / jf.nu(i + 1), jf.nu(i) - pi_e


def ci_utility_profile(pi_k: float, b_k: float, jf: JumpFactors, pi_e: float) -> list:
    """Net utility U~^j for j = 1..len(jf.c): utility in core j priced with the
    jump factors computed for the allotted pod."""
    out = []
    for j in range(1, len(jf.c) + 1):
        beta = jf.c_at(j) * pi_e / jf.nu(j + 1)
        reward = jf.nu(j) - pi_e
        out.append(beta * reward * b_k + (1 - beta) * (pi_k - pi_e) * b_k)
    return out


# -- pod sort with k removed -------------------------------------------------

def _prefix(f) -> list:
    return [0.0] + list(itertools.accumulate(float(x) for x in f))


def _core_ends(cs: list, D: float, max_cores: int) -> list:
    ends, start, n = [], 0, len(cs) - 1
    while len(ends) < max_cores:
        e = max(bisect.bisect_left(cs, cs[start] + D - TOL), start + 1)
        if e > n:
            break
        ends.append(e)
        start = e
    return ends


def _first_reaching_minus(cs: list, p: int, lo: int, target: float) -> int:
    """Smallest x >= lo with S(x) >= target, where S are the prefix sums with
    position p removed; -1 if none."""
    n = len(cs) - 1
    if lo <= p and cs[p] >= target:
        return bisect.bisect_left(cs, target, lo, p + 1)
    fp = cs[p + 1] - cs[p]
    # S(x) = cs[x + 1] - fp for x > p
    y = bisect.bisect_left(cs, target + fp, max(lo, p + 1) + 1, n + 1)
    return -1 if y > n else y - 1


def nu_minus(mu: Sequence[float], cs: list, p: int, D: float, upto: int) -> tuple:
    """nu^0..nu^upto with position p removed, the positions (in the full
    array) they were read from, and the number of clamped entries.

    nu^j is the top report of core j+1 in the sort without p. Entries past the
    last complete core repeat the last available value.
    """
    ends, start = [], 0
    s_start = 0.0
    while len(ends) < upto + 1:
        e = _first_reaching_minus(cs, p, start + 1, s_start + D - TOL)
        if e < 0:
            break
        ends.append(e)
        start = e
        s_start = cs[e] if e <= p else cs[e + 1] - (cs[p + 1] - cs[p])
    if len(ends) < 2:
        raise RecruitmentShortfall("fewer than two cores once the agent is removed")
    src = [e - 1 if e - 1 < p else e for e in ends]  # undo the removal shift
    clamped = max(0, upto + 1 - len(src))
    src = (src + [src[-1]] * clamped)[:upto + 1]
    return tuple(float(mu[j]) for j in src), src, clamped


@dataclass(frozen=True)
class CIPods:
    """Array form of a CI pod structure in sorted order (see srbm.SortedPods)."""

    ids: np.ndarray
    mu: np.ndarray
    f: np.ndarray
    bounds: np.ndarray
    betas: np.ndarray
    reward: np.ndarray
    agent_beta: np.ndarray
    D: float = 0.0
    pi_e: float = 0.0
    clamped: int = 0
    watch_read: bool = False

    def jump_factors(self, pos: int, upto: Optional[int] = None) -> JumpFactors:
        """Jump factors of the core member at sorted position ``pos``
        (``upto`` extends them past its own pod, for utility profiles)."""
        i = int(self.core_of()[pos]) + 1
        if i < 1:
            raise ValueError(f"position {pos} is not in a called core")
        upto = i if upto is None else upto
        nus, _, _ = nu_minus(self.mu, _prefix(self.f), pos, self.D, upto + 1)
        return compute_jump_factors(nus, i, upto)

    @property
    def M(self) -> int:
        return self.betas.size

    @property
    def n_core(self) -> int:
        return int(self.bounds[self.M])

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.betas)[:-1]))

    def core_of(self) -> np.ndarray:
        out = np.full(self.ids.size, -1)
        for i in range(self.M):
            out[self.bounds[i]:self.bounds[i + 1]] = i
        return out

    def selection_prob(self) -> np.ndarray:
        core = self.core_of()[: self.n_core]
        return np.clip(np.minimum(self.agent_beta[: self.n_core], 1.0 - self.starts[core]), 0.0, 1.0)

    def selected_mask(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        core = self.core_of()[: self.n_core]
        lo = self.starts[core]
        hi = lo + self.agent_beta[: self.n_core]
        return (u[:, None] >= lo) & (u[:, None] <= hi)

    def to_structure(self) -> PodStructure:
        ids = [int(x) for x in self.ids]
        pods = []
        for i in range(self.M):
            a, b, c = self.bounds[i], self.bounds[i + 1], self.bounds[i + 2]
            pods.append(Pod(tuple(ids[a:b]), tuple(ids[b:c]), float(self.mu[c - 1]), float(self.betas[i])))
        M = self.M
        n = self.n_core
        return PodStructure(
            order=tuple(ids), pods=tuple(pods),
            extra_header_ids=tuple(ids[self.bounds[M]:self.bounds[M + 1]]),
            reward_prices={ids[j]: float(self.reward[j]) for j in range(n)},
            agent_betas={ids[j]: float(self.agent_beta[j]) for j in range(n)},
        )


def ci_form_pods(ids, mu, f, D: float, pi_e: float, watch: Optional[int] = None) -> CIPods:
    """CI pod sort on arrays in (mu, id) order; pods are added until the pod
    probabilities reach 1. ``watch`` as in srbm.form_pods.

    Compiled; ``ci_form_pods_ref`` is the readable version it is tested against.
    """
    ids = np.asarray(ids)
    mu = np.ascontiguousarray(mu, dtype=float)
    f = np.ascontiguousarray(f, dtype=float)
    if mu.size and mu.min() <= 0:
        raise ValueError("mu reports must be positive")
    status, M, ends, agent_beta, reward, betas, watch_read, clamped = _k.ci_pod_kernel(
        mu, f, float(D), float(pi_e), -1 if watch is None else int(watch), TOL, DENOM_EPS)
    if status != _k.CI_OK:
        err = {_k.CI_SHORTFALL: RecruitmentShortfall,
               _k.CI_DEGENERATE: DegeneratePopulation,
               _k.CI_INVARIANT: InvariantViolation}[status](
            f"CI pod sort failed after {M} pods (status {status})")
        err.watch_read = bool(watch_read)
        raise err
    if clamped:
        log.debug("CI pod sort clamped %d nu references past the last core", clamped)
    bounds = np.concatenate(([0], ends[: M + 1]))
    return CIPods(ids, mu, f, bounds, betas.copy(), reward, agent_beta, float(D), float(pi_e),
                  int(clamped), bool(watch_read))


def ci_form_pods_ref(ids, mu, f, D: float, pi_e: float, watch: Optional[int] = None) -> CIPods:
    """Reference CI pod sort in plain Python."""
    ids = np.asarray(ids)
    mu = np.asarray(mu, dtype=float)
    f = np.asarray(f, dtype=float)
    n = mu.size
    cs = _prefix(f)
    ends = _core_ends(cs, D, n)
    if len(ends) < 2:
        err = RecruitmentShortfall(f"{n} reports form {len(ends)} cores; need at least 2",
                                   missing_kwh=float("nan"))
        err.watch_read = False
        raise err
    bounds = [0] + ends
    reward = np.full(n, np.nan)
    agent_beta = np.full(n, np.nan)
    betas, clamped = [], 0
    acc = 0.0
    complete = False
    watch_read = False
    for i in range(1, len(ends)):  # pod i uses core i, header core i+1
        s, e = bounds[i - 1], bounds[i]
        for p in range(s, e):
            try:
                nus, src, cl = nu_minus(mu, cs, p, D, i + 1)
            except RecruitmentShortfall as exc:
                exc.watch_read = watch_read
                raise
            clamped += cl
            watch_read = watch_read or (p != watch and watch in src)
            try:
                jf = compute_jump_factors(nus, i)
            except MechanismError as exc:
                exc.watch_read = True
                raise
            beta_k, r = ci_prices(jf, pi_e)
            agent_beta[p], reward[p] = beta_k, r
        beta = float(agent_beta[s:e].min())
        betas.append(beta)
        acc += beta
        if acc >= 1.0 - TOL:
            complete = True
            break
    if not complete:
        err = RecruitmentShortfall(
            f"CI pods cover probability {acc:.6g} < 1 with {len(ends)} cores", missing_kwh=float("nan"))
        err.watch_read = watch_read
        raise err
    if clamped:
        log.debug("CI pod sort clamped %d nu references past the last core", clamped)
    M = len(betas)
    return CIPods(ids, mu, f, np.asarray(bounds[: M + 2]), np.asarray(betas), reward, agent_beta,
                  float(D), float(pi_e), clamped, watch_read)


def ci_pod_sort(reports: Sequence[Report], params: MarketParams) -> PodStructure:
    rs = sort_reports(reports)
    return ci_form_pods([r.agent_id for r in rs], [r.mu for r in rs], [r.f for r in rs],
                        params.D, params.pi_e).to_structure()


def run_event_ci(pods: PodStructure, reports: Sequence[Report], agents: Sequence[Agent], u: float,
                 params: MarketParams, event_index: int = 0) -> EventResult:
    """Same settlement as the PI mechanism, on a CI pod structure."""
    from .srbm import run_event
    return run_event(pods, reports, agents, u, params, event_index)


def unilateral_price_fn_ci(reports: Sequence[Report], k: int, params: MarketParams) -> Callable:
    """Price map for agent k deviating alone under CI pricing (see
    srbm.unilateral_price_fn)."""
    return _DeviationPricer(
        reports, k, params,
        lambda ids, mu, f, slot: ci_form_pods(ids, mu, f, params.D, params.pi_e, watch=slot))
