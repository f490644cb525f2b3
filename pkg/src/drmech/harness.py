"""Monte Carlo harness: cost of DR provision per mechanism and population.

One replication recruits a truthful population from an i.i.d. agent stream,
builds the mechanism once and runs m events:

    phi = E[payout per event]/D + pi_o * E[N] / (m * D)

Replication r draws from SeedSequence(seed, spawn_key=(r, stream)), so results
do not depend on how replications are spread over worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import baseline_only, bounds, srbm, srbm_ci
from ._kernels import ci_smallest_feasible_prefix
from .agent import optimal_consumption_arrays
from .domain import TOL, Agent, MarketParams, RecruitmentShortfall, SimulationSummary

MECHANISMS = ("srbm_pi", "srbm_ci", "baseline_only")

# stream indices inside a replication's seed sequence
_MU, _B, _EVENTS, _JITTER = 0, 1, 2, 3


# -- distributions -----------------------------------------------------------

@dataclass(frozen=True)
class Distribution:
    """A non-negative scalar distribution that can be rescaled to a mean.

    kinds: ``point(value)``, ``uniform(low, high)``, ``uniform_rel(half_width)``
    (U[(1-h)m, (1+h)m] around the requested mean m), ``exponential(mean)`` and
    ``quantile(p, x)`` (piece-wise linear inverse CDF through the points).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        k, p = self.kind, self.params
        need = {"point": ("value",), "uniform": ("low", "high"), "uniform_rel": ("half_width",),
                "exponential": ("mean",), "quantile": ("p", "x")}
        if k not in need:
            raise ValueError(f"unknown distribution kind {k!r}")
        missing = [n for n in need[k] if n not in p]
        if missing:
            raise ValueError(f"{k} distribution needs {missing}")
        if k == "uniform" and not 0 <= p["low"] <= p["high"]:
            raise ValueError("uniform needs 0 <= low <= high")
        if k == "uniform_rel" and not 0 <= p["half_width"] <= 1:
            raise ValueError("uniform_rel half_width must be in [0, 1]")
        if k == "quantile":
            ps, xs = np.asarray(p["p"], float), np.asarray(p["x"], float)
            if ps.size < 2 or ps.size != xs.size or ps[0] != 0 or ps[-1] != 1 \
                    or np.any(np.diff(ps) <= 0) or np.any(np.diff(xs) < 0) or xs[0] < 0:
                raise ValueError("quantile table needs p from 0 to 1 increasing and x non-decreasing >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        d = dict(d)
        return cls(d.pop("kind"), d)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    def mean(self) -> float:
        p = self.params
        if self.kind == "point":
            return float(p["value"])
        if self.kind == "uniform":
            return (p["low"] + p["high"]) / 2
        if self.kind == "uniform_rel":
            return 1.0
        if self.kind == "exponential":
            return float(p["mean"])
        ps, xs = np.asarray(p["p"], float), np.asarray(p["x"], float)
        return float(np.sum(np.diff(ps) * (xs[1:] + xs[:-1]) / 2))

    def inv_mean(self) -> float:
        """E[1/X] (inf when X can be 0 with positive density)."""
        p = self.params
        if self.kind == "point":
            return 1 / p["value"]
        if self.kind == "uniform":
            lo, hi = p["low"], p["high"]
            if lo == 0:
                return math.inf
            return 1 / lo if hi == lo else math.log(hi / lo) / (hi - lo)
        if self.kind == "uniform_rel":
            h = p["half_width"]
            return math.inf if h == 1 else (1.0 if h == 0 else math.log((1 + h) / (1 - h)) / (2 * h))
        if self.kind == "exponential":
            return math.inf
        ps, xs = np.asarray(p["p"], float), np.asarray(p["x"], float)
        total = 0.0
        for dp, a, b in zip(np.diff(ps), xs[:-1], xs[1:]):
            if a <= 0:
                return math.inf
            total += dp * (1 / a if b == a else math.log(b / a) / (b - a))
        return total

    def upper(self) -> float:
        p = self.params
        if self.kind == "point":
            return float(p["value"])
        if self.kind == "uniform":
            return float(p["high"])
        if self.kind == "uniform_rel":
            return 1 + p["half_width"]
        if self.kind == "exponential":
            return math.inf
        return float(p["x"][-1])

    def sample(self, rng: np.random.Generator, n: int, mean: Optional[float] = None) -> np.ndarray:
        """n draws, rescaled so the distribution mean is ``mean`` if given.

        Every kind consumes one uniform per draw, so extending a stream in
        chunks reproduces a single long draw.
        """
        u = rng.random(n)
        p = self.params
        if self.kind == "point":
            x = np.full(n, float(p["value"]))
        elif self.kind == "uniform":
            x = p["low"] + (p["high"] - p["low"]) * u
        elif self.kind == "uniform_rel":
            x = 1 + p["half_width"] * (2 * u - 1)
        elif self.kind == "exponential":
            x = -p["mean"] * np.log1p(-u)
        else:
            x = np.interp(u, p["p"], p["x"])
        if mean is not None:
            x = x * (mean / self.mean())
        return x


UNIFORM_PI = Distribution("uniform", {"low": 0.3, "high": 1.3})
POINT_B = Distribution("point", {"value": 5.0})
# U[0.5 E[b], 1.5 E[b]] at E[b] = 5; rescaling keeps the relative spread
UNIFORM_B = Distribution("uniform", {"low": 2.5, "high": 7.5})


@dataclass(frozen=True)
class PopulationSpec:
    """Agent stream: baselines are ``b`` rescaled to mean ``e_b``; marginal
    utilities are ``pi`` as given."""

    b: Distribution = UNIFORM_B
    pi: Distribution = UNIFORM_PI
    e_b: Optional[float] = None

    @property
    def mean_b(self) -> float:
        return self.b.mean() if self.e_b is None else self.e_b

    def stats(self, pi_max: float) -> bounds.PopulationStats:
        return bounds.PopulationStats(self.mean_b, self.pi.mean(), self.pi.inv_mean(), pi_max)


@dataclass(frozen=True)
class ExperimentConfig:
    mechanism: str
    params: MarketParams
    population: PopulationSpec = PopulationSpec()
    replications: int = 2000
    seed: int = 0
    beta_rule: str = srbm.DEFAULT_BETA_RULE
    workers: int = 1
    max_recruits: int = 2_000_000
    ci_jitter: float = 1e-9

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.beta_rule not in srbm.BETA_RULES:
            raise ValueError(f"beta_rule must be one of {srbm.BETA_RULES}")
        if self.population.pi.upper() > self.params.pi_max + TOL:
            raise ValueError("pi distribution exceeds pi_max")

    def with_e_b(self, e_b: float) -> "ExperimentConfig":
        return replace(self, population=replace(self.population, e_b=e_b))


# -- one replication ---------------------------------------------------------

@dataclass(frozen=True)
class Replication:
    N: int
    M: int
    psi: float  # mean payout per event, $
    min_margin: float  # min over events of delivered - D, kWh
    penalty: float  # total penalty revenue, $


def _rng(seed: int, r: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(r, stream))))


class _Stream:
    """Lazily extended agent stream for one replication."""

    def __init__(self, cfg: ExperimentConfig, r: int, jitter: float = 0.0):
        self.cfg = cfg
        self.r = r
        self.rmu = _rng(cfg.seed, r, _MU)
        self.rb = _rng(cfg.seed, r, _B)
        self.rj = _rng(cfg.seed, r, _JITTER) if jitter > 0 else None
        self.jitter = jitter
        self.mu = np.empty(0)
        self.b = np.empty(0)

    def extend(self, n: int) -> None:
        pop = self.cfg.population
        mu = pop.pi.sample(self.rmu, n)
        if self.rj is not None:
            # ties make the CI jump factors singular
            mu = mu + self.rj.uniform(-self.jitter, self.jitter, n)
        self.mu = np.concatenate((self.mu, mu))
        self.b = np.concatenate((self.b, pop.b.sample(self.rb, n, pop.mean_b)))

    def grow(self) -> None:
        n = max(256, self.mu.size)
        if self.mu.size + n > self.cfg.max_recruits:
            n = self.cfg.max_recruits - self.mu.size
            if n <= 0:
                raise RecruitmentShortfall(
                    f"replication {self.r} (seed {self.cfg.seed}): {self.mu.size} agents "
                    f"recruited without a feasible structure (max_recruits)",
                    missing_kwh=float("nan"), seed=(self.cfg.seed, self.r))
        self.extend(n)


def _settle(b, pi, price, selected, pi_e, pi_p):
    """Vectorised truthful settlement. ``selected``/``price`` are (events, N)."""
    q, _ = optimal_consumption_arrays(b, pi, b, price, pi_e, selected)
    short = np.maximum(b - q, 0.0)
    payout = np.where(selected, price * short, 0.0).sum(axis=1)
    penalty = np.where(selected, 0.0, pi_p * short).sum(axis=1)
    delivered = (b - q).sum(axis=1)
    return payout, penalty, delivered


def _srbm_prefix(st: _Stream, cfg: ExperimentConfig) -> int:
    p = cfg.params
    while True:
        n = srbm.smallest_feasible_prefix_fast(st.mu, st.b, p.D, p.pi_e, cfg.beta_rule)
        if n > 0:
            return n
        st.grow()


def recruit_population(cfg: ExperimentConfig, r: int = 0) -> list:
    """The truthful SRBM population replication r would recruit."""
    st = _Stream(cfg, r)
    st.grow()
    n = _srbm_prefix(st, cfg)
    return [Agent(j, float(st.b[j]), float(st.mu[j])) for j in range(n)]


def _replicate_srbm(cfg: ExperimentConfig, r: int) -> Replication:
    p = cfg.params
    st = _Stream(cfg, r)
    st.grow()
    n = _srbm_prefix(st, cfg)
    mu, b = st.mu[:n], st.b[:n]
    order = np.lexsort((np.arange(n), mu))
    sp = srbm.form_pods(order, mu[order], b[order], p.D, p.pi_e, cfg.beta_rule)
    return _events(cfg, r, sp, mu[order], b[order], n)


def _ci_prefix_scan(st: _Stream, cfg: ExperimentConfig) -> int:
    p = cfg.params
    while True:
        n = ci_smallest_feasible_prefix(st.mu, st.b, p.D, p.pi_e, TOL, srbm_ci.DENOM_EPS)
        if n > 0:
            return n
        st.grow()


def _replicate_ci(cfg: ExperimentConfig, r: int) -> Replication:
    p = cfg.params
    st = _Stream(cfg, r, cfg.ci_jitter)
    st.grow()
    n = _ci_prefix_scan(st, cfg)
    mu, b = st.mu[:n], st.b[:n]
    order = np.lexsort((np.arange(n), mu))
    sp = srbm_ci.ci_form_pods(order, mu[order], b[order], p.D, p.pi_e)
    return _events(cfg, r, sp, mu[order], b[order], n)


def _events(cfg, r, sp, mu, b, n) -> Replication:
    p = cfg.params
    u = _rng(cfg.seed, r, _EVENTS).random(p.m)
    sel = np.zeros((p.m, n), dtype=bool)
    sel[:, : sp.n_core] = sp.selected_mask(u)
    reward = np.full(n, p.pi_p)
    reward[: sp.n_core] = sp.reward[: sp.n_core]
    price = np.where(sel, reward, p.pi_p)
    payout, penalty, delivered = _settle(b, mu, price, sel, p.pi_e, p.pi_p)
    return Replication(n, sp.M, math.fsum(payout) / p.m, float(np.min(delivered) - p.D),
                       math.fsum(penalty))


def _replicate_bo(cfg: ExperimentConfig, r: int) -> Replication:
    p = cfg.params
    prices = baseline_only.configure(p)
    st = _Stream(cfg, r)
    st.grow()
    while True:
        cov = prices.alpha * np.cumsum(st.b)
        hit = np.flatnonzero(cov >= p.D - TOL)
        if hit.size:
            n = int(hit[0]) + 1
            break
        st.grow()
    mu, b = st.mu[:n], st.b[:n]
    sel = _rng(cfg.seed, r, _EVENTS).random((p.m, n)) < prices.alpha
    price = np.where(sel, prices.reward_price, prices.penalty_price)
    payout, penalty, delivered = _settle(b, mu, price, sel, p.pi_e, p.pi_p)
    return Replication(n, 0, math.fsum(payout) / p.m, float(np.min(delivered) - p.D),
                       math.fsum(penalty))


_REPLICATE = {"srbm_pi": _replicate_srbm, "srbm_ci": _replicate_ci, "baseline_only": _replicate_bo}


def replicate(cfg: ExperimentConfig, r: int) -> Replication:
    return _REPLICATE[cfg.mechanism](cfg, r)


def _replicate_range(args) -> list:
    cfg, lo, hi = args
    return [replicate(cfg, r) for r in range(lo, hi)]


# -- experiments -------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    summary: SimulationSummary
    phi_min: float
    phi_upper: float
    se_phi: float
    se_N: float
    se_M: float
    se_psi: float
    min_margin: float
    penalty_total: float

    def row(self) -> dict:
        s = self.summary
        return {
            "mechanism": self.config.mechanism,
            "D": self.config.params.D,
            "E_b": self.config.population.mean_b,
            "phi_mean": s.mean_phi,
            "phi_ci": s.ci_halfwidth_phi,
            "N_mean": s.mean_N,
            "M_mean": s.mean_M,
            "CR": s.competitive_ratio,
            "phi_min": self.phi_min,
            "phi_upper": self.phi_upper,
            "seed": self.config.seed,
        }


def _mean_se(x: Sequence[float]) -> tuple:
    x = list(x)
    n = len(x)
    m = math.fsum(x) / n
    if n < 2:
        return m, math.nan
    var = math.fsum((v - m) ** 2 for v in x) / (n - 1)
    return m, math.sqrt(var / n)


def run_replications(cfg: ExperimentConfig) -> list:
    R = cfg.replications
    if cfg.workers == 1:
        return [replicate(cfg, r) for r in range(R)]
    chunk = max(1, math.ceil(R / (cfg.workers * 4)))
    jobs = [(cfg, lo, min(R, lo + chunk)) for lo in range(0, R, chunk)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
        parts = list(ex.map(_replicate_range, jobs))  # map keeps job order
    return [rep for part in parts for rep in part]


def phi_upper_for(cfg: ExperimentConfig, stats: bounds.PopulationStats) -> float:
    if cfg.mechanism == "srbm_pi":
        return bounds.phi_srbm_upper(stats, cfg.params)
    if cfg.mechanism == "baseline_only":
        return bounds.phi_bo_upper(stats, cfg.params)
    return math.nan  # no closed-form cost bound for the CI variant


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    reps = run_replications(cfg)
    phis = [r.psi / p.D + p.pi_o * r.N / (p.m * p.D) for r in reps]
    phi, se_phi = _mean_se(phis)
    n_mean, se_n = _mean_se(r.N for r in reps)
    m_mean, se_m = _mean_se(r.M for r in reps)
    psi, se_psi = _mean_se(r.psi for r in reps)
    stats = cfg.population.stats(p.pi_max)
    pmin = bounds.phi_min(stats, p)
    summary = SimulationSummary(
        mean_phi=phi, mean_N=n_mean, mean_M=m_mean, mean_psi=psi,
        competitive_ratio=phi / pmin, replication_count=len(reps),
        ci_halfwidth_phi=3 * se_phi if math.isfinite(se_phi) else math.nan)
    return ExperimentResult(cfg, summary, pmin, phi_upper_for(cfg, stats), se_phi, se_n, se_m, se_psi,
                            min(r.min_margin for r in reps), math.fsum(r.penalty for r in reps))


def sweep_e_b(cfg: ExperimentConfig, e_b_values: Sequence[float]) -> list:
    """Run ``cfg`` once per mean baseline (the inverse-E[b] sweep of the tables)."""
    return [run_experiment(cfg.with_e_b(float(e))) for e in e_b_values]


CSV_COLUMNS = ("mechanism", "D", "E_b", "phi_mean", "phi_ci", "N_mean", "M_mean", "CR",
               "phi_min", "phi_upper", "seed")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.6g" % v


def csv_text(results: Sequence[ExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for res in results:
        row = res.row()
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(results: Sequence[ExperimentResult], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(results))


# -- config files ------------------------------------------------------------

class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


_REQUIRED = object()


def _get(d: dict, key: str, where: str, cast, default=_REQUIRED):
    if key not in d or d[key] is None:
        if default is _REQUIRED:
            raise ConfigError(f"missing field {where}{key}")
        return default
    try:
        return cast(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field {where}{key}: {exc}") from None


def _dist(pop: dict, key: str, default: Distribution) -> Distribution:
    if key not in pop:
        return default
    try:
        return Distribution.from_dict(pop[key])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"field population.{key}: {exc}") from None


def config_from_dict(d: dict) -> tuple:
    """Parse a JSON experiment config; returns (ExperimentConfig, sweep list or None).

    Field names carry units, e.g. ``D_kwh`` or ``pi_e_usd_per_kwh``. Errors
    are ConfigError naming the field.
    """
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    known = {"mechanism", "market", "population", "replications", "seed", "beta_rule",
             "workers", "max_recruits", "ci_jitter", "sweep", "description"}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    mk = d.get("market")
    if not isinstance(mk, dict):
        raise ConfigError("missing field market")
    w = "market."
    try:
        params = MarketParams(
            pi_e=_get(mk, "pi_e_usd_per_kwh", w, float), pi_o=_get(mk, "pi_o_usd_per_agent", w, float),
            pi_max=_get(mk, "pi_max_usd_per_kwh", w, float), D=_get(mk, "D_kwh", w, float),
            m=_get(mk, "events_per_recruitment", w, int),
            pi_p=float(mk["pi_p_usd_per_kwh"]) if mk.get("pi_p_usd_per_kwh") is not None else None)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"field market: {exc}") from None
    pop = d.get("population", {})
    if not isinstance(pop, dict):
        raise ConfigError("field population must be an object")
    try:
        spec = PopulationSpec(
            b=_dist(pop, "b_kwh", UNIFORM_B), pi=_dist(pop, "pi_usd_per_kwh", UNIFORM_PI),
            e_b=_get(pop, "E_b_kwh", "population.", float, None))
        cfg = ExperimentConfig(
            mechanism=str(d.get("mechanism", "srbm_pi")), params=params, population=spec,
            replications=_get(d, "replications", "", int, 2000), seed=_get(d, "seed", "", int, 0),
            beta_rule=str(d.get("beta_rule", srbm.DEFAULT_BETA_RULE)),
            workers=_get(d, "workers", "", int, 1),
            max_recruits=_get(d, "max_recruits", "", int, 2_000_000),
            ci_jitter=_get(d, "ci_jitter", "", float, 1e-9))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sweep = d.get("sweep", {})
    if not isinstance(sweep, dict):
        raise ConfigError("field sweep must be an object")
    if "E_b_kwh" not in sweep:
        return cfg, None
    try:
        values = [float(x) for x in sweep["E_b_kwh"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field sweep.E_b_kwh: {exc}") from None
    if not values or min(values) <= 0:
        raise ConfigError("field sweep.E_b_kwh must be a non-empty list of positive values")
    return cfg, values


def read_config(path) -> dict:
    """The raw JSON object of a config file (ConfigError if unreadable)."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return d


def load_config(path) -> tuple:
    return config_from_dict(read_config(path))


def config_to_dict(cfg: ExperimentConfig, sweep: Optional[Sequence[float]] = None) -> dict:
    p = cfg.params
    out = {
        "mechanism": cfg.mechanism,
        "market": {"pi_e_usd_per_kwh": p.pi_e, "pi_o_usd_per_agent": p.pi_o,
                   "pi_max_usd_per_kwh": p.pi_max, "D_kwh": p.D, "events_per_recruitment": p.m,
                   "pi_p_usd_per_kwh": p.pi_p},
        "population": {"b_kwh": cfg.population.b.to_dict(),
                       "pi_usd_per_kwh": cfg.population.pi.to_dict()},
        "replications": cfg.replications, "seed": cfg.seed, "beta_rule": cfg.beta_rule,
        "workers": cfg.workers, "max_recruits": cfg.max_recruits, "ci_jitter": cfg.ci_jitter,
    }
    if cfg.population.e_b is not None:
        out["population"]["E_b_kwh"] = cfg.population.e_b
    if sweep is not None:
        out["sweep"] = {"E_b_kwh": list(sweep)}
    return out
