"""SRBM, partial-information setting.

Agents report (f, mu). The aggregator sorts by mu, cuts the sorted list into
greedy cores that each just cover D, and stacks pods (core + header, where the
header is the next core) until the pod probabilities sum to 1. A uniform draw
picks which agents are called; called agents are paid a VCG-like price set by
the rest of their pod.

Two pod-probability rules are provided:

``"min_agent"``  beta^i = min over the core of pi_e/(pi^r_k + pi_e)   (default)
``"nu"``         beta^i = pi_e/nu^i, nu^i the largest mu in pod i

Both satisfy beta^i <= beta^i_k for every core member.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ._kernels import smallest_feasible_prefix
from .agent import optimal_consumption_arrays
from .domain import (TOL, Agent, DegeneratePopulation, EventResult, InvariantViolation,
                     MarketParams, MechanismError, Pod, PodStructure, RecruitmentShortfall,
                     Report, StructuralError)

BETA_RULES = ("min_agent", "nu")
DEFAULT_BETA_RULE = "min_agent"


def _check_rule(rule: str) -> None:
    if rule not in BETA_RULES:
        raise ValueError(f"unknown beta rule {rule!r}; expected one of {BETA_RULES}")


def _core_end(cs: np.ndarray, start: int, D: float) -> Optional[int]:
    """End (exclusive) of the minimal prefix from ``start`` covering D."""
    e = int(np.searchsorted(cs, cs[start] + D - TOL, side="left"))
    e = max(e, start + 1)
    return e if e < cs.size else None


@dataclass(frozen=True)
class SortedPods:
    """Array form of a pod structure, in sorted order.

    ``bounds[i]:bounds[i+1]`` is core i (0-based); the last slice is the extra
    core. ``reward`` and ``agent_beta`` are NaN outside cores 0..M-1.
    """

    ids: np.ndarray
    mu: np.ndarray
    f: np.ndarray
    bounds: np.ndarray
    betas: np.ndarray
    nu: np.ndarray
    reward: np.ndarray
    agent_beta: np.ndarray
    watch_read: bool = False

    @property
    def M(self) -> int:
        return self.betas.size

    @property
    def starts(self) -> np.ndarray:
        """Cumulative beta before each pod."""
        return np.concatenate(([0.0], np.cumsum(self.betas)[:-1]))

    @property
    def n_core(self) -> int:
        return int(self.bounds[self.M])

    def core_of(self) -> np.ndarray:
        """Pod index for each sorted position; -1 for the extra core and leftovers."""
        out = np.full(self.ids.size, -1)
        for i in range(self.M):
            out[self.bounds[i]:self.bounds[i + 1]] = i
        return out

    def selection_prob(self) -> np.ndarray:
        """Realised selection probability per sorted core position (interval
        clipped at 1)."""
        core = self.core_of()[: self.n_core]
        start = self.starts[core]
        return np.clip(np.minimum(self.agent_beta[: self.n_core], 1.0 - start), 0.0, 1.0)

    def selected_mask(self, u) -> np.ndarray:
        """Boolean (len(u), n_core) mask of called core positions for draws u."""
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
            pods.append(Pod(tuple(ids[a:b]), tuple(ids[b:c]), float(self.nu[i]), float(self.betas[i])))
        M = self.M
        extra = tuple(ids[self.bounds[M]:self.bounds[M + 1]])
        n = self.n_core
        return PodStructure(
            order=tuple(ids), pods=tuple(pods), extra_header_ids=extra,
            reward_prices={ids[j]: float(self.reward[j]) for j in range(n)},
            agent_betas={ids[j]: float(self.agent_beta[j]) for j in range(n)},
        )


def _s_minus_k_top(cs, s, e, D, n):
    """Sorted index of the top of S_{-k} for each member k of core [s, e)."""
    f = cs[s + 1:e + 1] - cs[s:e]
    j = np.searchsorted(cs, cs[s] + f + D - TOL, side="left") - 1
    if np.any(j >= n):
        raise StructuralError(f"header of core starting at {s} cannot replace a removed member")
    return j


def form_pods(ids, mu, f, D: float, pi_e: float, rule: str = DEFAULT_BETA_RULE,
              watch: Optional[int] = None) -> SortedPods:
    """Pod sort on arrays already in (mu, id) order.

    ``watch`` is a sorted position; ``watch_read`` on the result says whether
    its mu was used to price anyone other than itself (it never prices itself).
    """
    _check_rule(rule)
    ids = np.asarray(ids)
    mu = np.asarray(mu, dtype=float)
    f = np.asarray(f, dtype=float)
    cs = np.concatenate(([0.0], np.cumsum(f)))
    n = mu.size
    bounds = [0]
    e = _core_end(cs, 0, D)
    if e is None:
        err = RecruitmentShortfall(
            f"{n} reports cover {cs[-1]:.6g} kWh; no core of D={D} can be formed",
            missing_kwh=D - cs[-1])
        err.watch_read = False
        raise err
    bounds.append(e)
    betas, nus = [], []
    reward = np.full(n, np.nan)
    agent_beta = np.full(n, np.nan)
    acc = 0.0
    watch_read = False
    while True:
        s, e = bounds[-2], bounds[-1]
        h = _core_end(cs, e, D)
        if h is None:
            # header of the current pod (= next core) cannot be formed
            err = RecruitmentShortfall(
                f"pods cover probability {acc:.6g} < 1 after {len(betas)} pods; "
                f"next core short of {D - (cs[-1] - cs[e]):.6g} kWh",
                missing_kwh=D - (cs[-1] - cs[e]))
            err.watch_read = watch_read
            raise err
        bounds.append(h)
        top = _s_minus_k_top(cs, s, e, D, n)
        r = mu[top] - pi_e
        if np.any(r + pi_e <= 0):
            raise DegeneratePopulation("reward price + pi_e must be positive")
        reward[s:e] = r
        agent_beta[s:e] = pi_e / (r + pi_e)
        nu = mu[h - 1]
        if watch is not None:
            watch_read = watch_read or (watch in top) or (rule == "nu" and watch == h - 1)
        beta = pi_e / nu if rule == "nu" else float(agent_beta[s:e].min())
        betas.append(beta)
        nus.append(nu)
        acc += beta
        if acc >= 1.0 - TOL:
            break
    # bounds: M+2 entries after the loop (cores 0..M-1 plus the extra core)
    return SortedPods(ids, mu, f, np.asarray(bounds), np.asarray(betas), np.asarray(nus),
                      reward, agent_beta, watch_read)


def sort_reports(reports: Sequence[Report]) -> list:
    for r in reports:
        if r.mu is None:
            raise ValueError(f"report {r.agent_id} has no mu")
    return sorted(reports, key=lambda r: (r.mu, r.agent_id))


def pod_sort_arrays(reports: Sequence[Report], D: float, pi_e: float,
                    rule: str = DEFAULT_BETA_RULE) -> SortedPods:
    rs = sort_reports(reports)
    return form_pods([r.agent_id for r in rs], [r.mu for r in rs], [r.f for r in rs], D, pi_e, rule)


def pod_sort(reports: Sequence[Report], params: MarketParams,
             rule: str = DEFAULT_BETA_RULE) -> PodStructure:
    """Sort reports into pods. Raises RecruitmentShortfall if the reports cannot
    close the stopping rule with one spare core."""
    return pod_sort_arrays(reports, params.D, params.pi_e, rule).to_structure()


def reward_price(pods: PodStructure, k: int, reports: Sequence[Report], params: MarketParams) -> float:
    """Reference computation of pi^r_k by a direct greedy over pod members.

    Walks the pod (core then header) in sorted order skipping k and stops at
    the first prefix that covers D.
    """
    i = pods.core_index(k)
    if i is None:
        raise ValueError(f"agent {k} is not in any core")
    by_id = {r.agent_id: r for r in reports}
    pod = pods.pods[i]
    total, top = 0.0, None
    for j in pod.core_ids + pod.header_ids:
        if j == k:
            continue
        total += by_id[j].f
        top = by_id[j].mu
        if total >= params.D - TOL:
            return top - params.pi_e
    raise StructuralError(f"pod {i + 1} header exhausted while pricing agent {k}")


def select(pods: PodStructure, u: float) -> frozenset:
    """Ids called for draw u: core member k of pod i is called iff
    c_{i-1} <= u <= c_{i-1} + beta_k."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u={u} outside [0, 1]")
    starts = pods.cumulative_betas()
    out = set()
    for i, pod in enumerate(pods.pods):
        c = starts[i]
        if u < c:
            break
        for k in pod.core_ids:
            if u <= c + pods.agent_betas[k]:
                out.add(k)
    return frozenset(out)


def run_event(pods: PodStructure, reports: Sequence[Report], agents: Sequence[Agent], u: float,
              params: MarketParams, event_index: int = 0) -> EventResult:
    """Call the agents chosen by u and settle everyone."""
    called = select(pods, u)
    by_report = {r.agent_id: r for r in reports}
    ag = list(agents)
    b = np.array([a.b for a in ag])
    pi = np.array([a.pi for a in ag])
    f = np.array([by_report[a.id].f for a in ag])
    sel = np.array([a.id in called for a in ag])
    reward = np.array([pods.reward_prices.get(a.id, 0.0) if s else params.pi_p for a, s in zip(ag, sel)])
    q, _ = optimal_consumption_arrays(b, pi, f, reward, params.pi_e, sel)
    short = np.maximum(f - q, 0.0)
    return EventResult(
        event_index=event_index,
        called_ids=called,
        delivered=max(float(np.sum(b - q)), 0.0),
        payout=float(np.sum(reward[sel] * short[sel])),
        penalty_revenue=float(params.pi_p * short[~sel].sum()),
    )


class _DeviationPricer:
    """Shared machinery for unilateral deviation price maps.

    A deviating report (f, mu) is inserted into the sorted list of the other
    reports. Core boundaries depend only on f and the insertion slot, so a
    result is cached on (f, slot) unless the pod sort read k's mu to price
    someone else, in which case it is cached on (f, mu).
    """

    def __init__(self, reports, k, params, sort_fn):
        others = sort_reports([r for r in reports if r.agent_id != k])
        self.keys = [(r.mu, r.agent_id) for r in others]
        self.ids = [r.agent_id for r in others]
        self.mu = [r.mu for r in others]
        self.f = [r.f for r in others]
        self.k = k
        self.params = params
        self.sort_fn = sort_fn
        self.by_slot = {}
        self.by_mu = {}

    def __call__(self, report: Report):
        if report.mu is None:
            raise ValueError("SRBM needs a mu report")
        slot = bisect.bisect_left(self.keys, (report.mu, self.k))
        hit = self.by_slot.get((report.f, slot))
        if hit is None:
            hit = self.by_mu.get((report.f, report.mu))
        if hit is None:
            hit, mu_free = self._price(report, slot)
            (self.by_slot if mu_free else self.by_mu)[
                (report.f, slot) if mu_free else (report.f, report.mu)] = hit
        if isinstance(hit, Exception):
            raise hit
        return hit

    def _price(self, report, slot):
        ids = self.ids[:slot] + [self.k] + self.ids[slot:]
        mu = np.array(self.mu[:slot] + [report.mu] + self.mu[slot:])
        f = np.array(self.f[:slot] + [report.f] + self.f[slot:])
        pi_p = self.params.pi_p
        try:
            sp = self.sort_fn(ids, mu, f, slot)
        except MechanismError as exc:
            return exc, not getattr(exc, "watch_read", True)
        if sp.core_of()[slot] < 0:
            out = (0.0, None, pi_p)
        else:
            out = (float(sp.selection_prob()[slot]), float(sp.reward[slot]), pi_p)
        return out, not sp.watch_read


def _pod_local_price_fn(reports, k, params, rule):
    sp = pod_sort_arrays(reports, params.D, params.pi_e, rule)
    pos = int(np.flatnonzero(sp.ids == k)[0])
    core = sp.core_of()
    i = core[pos]
    if i < 0 and pos < sp.bounds[sp.M + 1]:
        i = sp.M - 1  # extra core: header of the last pod
    if i < 0:
        return lambda report: (0.0, None, params.pi_p)
    lo, hi = sp.bounds[i], sp.bounds[i + 2]
    group = [j for j in range(lo, hi) if j != pos]
    keys = [(sp.mu[j], sp.ids[j]) for j in group]
    cs = [0.0] + list(itertools.accumulate(float(sp.f[j]) for j in group))
    top = bisect.bisect_left(cs, params.D - TOL)
    if top >= len(cs):
        raise StructuralError(f"pod {i + 1} cannot cover D without agent {k}")
    reward = float(sp.mu[group[top - 1]]) - params.pi_e
    beta = params.pi_e / (reward + params.pi_e)

    def fn(report: Report):
        if report.mu is None:
            raise ValueError("SRBM needs a mu report")
        slot = bisect.bisect_left(keys, (report.mu, k))
        # k is called iff the agents sorted ahead of it leave D uncovered
        if cs[slot] < params.D - TOL:
            return beta, reward, params.pi_p
        return 0.0, None, params.pi_p

    return fn


def unilateral_price_fn(reports: Sequence[Report], k: int, params: MarketParams,
                        rule: str = DEFAULT_BETA_RULE, info: str = "partial") -> Callable:
    """Price map for agent k deviating alone, others' reports fixed.

    Returns report -> (selection_prob, reward_price, penalty_price).

    ``info="partial"`` is the agent's view when it is not told how pods are
    sorted: its pod (core plus header, from the given profile) is fixed, and a
    deviation only decides whether k lands in the minimal covering prefix of
    that pod, where it is called with the probability and reward it was told.

    ``info="complete"`` re-runs the full pod sort with k's report inserted. The
    probability is k's interval clipped to [0, 1], zero outside every called
    core. Unpriceable profiles raise the mechanism's error.
    """
    if info == "partial":
        return _pod_local_price_fn(reports, k, params, rule)
    if info != "complete":
        raise ValueError(f"info must be 'partial' or 'complete', got {info!r}")
    return _DeviationPricer(
        reports, k, params,
        lambda ids, mu, f, slot: form_pods(ids, mu, f, params.D, params.pi_e, rule, watch=slot))


# -- recruitment -------------------------------------------------------------

def smallest_feasible_prefix_ref(mu, f, D: float, pi_e: float, rule: str = DEFAULT_BETA_RULE) -> int:
    """Pure-Python reference for the compiled recruitment kernel."""
    mu = np.asarray(mu, dtype=float)
    f = np.asarray(f, dtype=float)
    for t in range(1, mu.size + 1):
        order = np.lexsort((np.arange(t), mu[:t]))
        try:
            form_pods(order, mu[:t][order], f[:t][order], D, pi_e, rule)
        except RecruitmentShortfall:
            continue
        return t
    return -1


def smallest_feasible_prefix_fast(mu, f, D: float, pi_e: float, rule: str = DEFAULT_BETA_RULE) -> int:
    _check_rule(rule)
    return int(smallest_feasible_prefix(np.ascontiguousarray(mu, dtype=float),
                                        np.ascontiguousarray(f, dtype=float),
                                        float(D), float(pi_e), rule == "min_agent", TOL))


def recruit(agent_stream: Iterable[Agent], params: MarketParams, rule: str = DEFAULT_BETA_RULE,
            max_recruits: int = 1_000_000) -> list:
    """Recruit truthful agents until the pod sort succeeds; returns the
    smallest feasible prefix of the stream."""
    it = iter(agent_stream)
    agents = []
    batch = 64
    while True:
        more = list(itertools.islice(it, batch))
        agents.extend(more)
        mu = np.array([a.pi for a in agents])
        f = np.array([a.b for a in agents])
        t = smallest_feasible_prefix_fast(mu, f, params.D, params.pi_e, rule) if agents else -1
        if t > 0:
            return agents[:t]
        if len(more) < batch or len(agents) >= max_recruits:
            raise RecruitmentShortfall(
                f"{len(agents)} agents recruited without closing the pod stopping rule",
                missing_kwh=float("nan"))
        batch *= 2
