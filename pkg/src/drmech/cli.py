"""drmech command line.

Exit codes: 0 ok, 1 audit found a profitable deviation, 2 bad config or
arguments, 3 recruitment shortfall (infeasible population).

Seed precedence: --seed, then $DRMECH_SEED, then the config's "seed", then
DEFAULT_SEED.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import Optional

from . import audit, bounds, caiso, harness
from .domain import EXAMPLE_1, MarketParams, MechanismError, RecruitmentShortfall

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3
DEFAULT_SEED = 7
SEED_ENV = "DRMECH_SEED"


def resolve_seed(cli_seed: Optional[int], config: Optional[dict] = None) -> int:
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise harness.ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    if config is not None and config.get("seed") is not None:
        return int(config["seed"])
    return DEFAULT_SEED


def _load(path: Optional[str], seed: Optional[int]):
    """(ExperimentConfig, sweep) from ``path``, or Example-1 defaults."""
    if path is None:
        cfg = harness.ExperimentConfig("srbm_pi", EXAMPLE_1, seed=resolve_seed(seed))
        return cfg, None
    raw = harness.read_config(path)
    cfg, sweep = harness.config_from_dict(raw)
    return replace(cfg, seed=resolve_seed(seed, raw)), sweep


# -- simulate ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg, sweep = _load(args.config, args.seed)
    if args.replications is not None:
        cfg = replace(cfg, replications=args.replications)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    results = harness.sweep_e_b(cfg, sweep) if sweep else [harness.run_experiment(cfg)]
    text = harness.csv_text(results)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    for res in results:
        s = res.summary
        print(f"{cfg.mechanism} D={cfg.params.D:g} E_b={res.config.population.mean_b:g}: "
              f"phi={s.mean_phi:.4f} +/- {s.ci_halfwidth_phi:.4f} $/kWh  N={s.mean_N:.2f}  "
              f"M={s.mean_M:.2f}  CR={s.competitive_ratio:.3f}  (R={s.replication_count})")
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


# -- bounds ------------------------------------------------------------------

def _bounds_config(args):
    cfg, _ = _load(args.config, 0)
    p = cfg.params
    fields = {f: getattr(p, f) for f in ("pi_e", "pi_o", "pi_max", "D", "m", "pi_p")}
    for f in ("pi_e", "pi_o", "pi_max", "D", "m"):
        if getattr(args, f) is not None:
            fields[f] = getattr(args, f)
    if args.pi_e is not None:
        fields["pi_p"] = None  # back to the default penalty pi_e
    p = MarketParams(**fields)
    pop = cfg.population
    if args.pi_lo is not None or args.pi_hi is not None:
        lo = args.pi_lo if args.pi_lo is not None else pop.pi.params.get("low", 0.3)
        hi = args.pi_hi if args.pi_hi is not None else pop.pi.params.get("high", 1.3)
        pop = replace(pop, pi=harness.Distribution("uniform", {"low": lo, "high": hi}))
    if args.E_b is not None:
        pop = replace(pop, e_b=args.E_b)
    return replace(cfg, params=p, population=pop)


def bounds_table(cfg: harness.ExperimentConfig) -> dict:
    p = cfg.params
    st = cfg.population.stats(p.pi_max)
    en, em = bounds.en_em_upper(st, p)
    return {"phi_min": bounds.phi_min(st, p), "phi_bo_upper": bounds.phi_bo_upper(st, p),
            "phi_srbm_upper": bounds.phi_srbm_upper(st, p), "E_M_upper": em, "E_N_upper": en}


def cmd_bounds(args) -> int:
    cfg = _bounds_config(args)
    table = bounds_table(cfg)
    if args.json:
        print(json.dumps({"config": harness.config_to_dict(cfg), "bounds": table}, indent=2))
    else:
        print(f"phi_min {table['phi_min']:.4f} / phi_BO {table['phi_bo_upper']:.4f} / "
              f"phi_SRBM {table['phi_srbm_upper']:.4f} $/kWh   "
              f"E[M] < {table['E_M_upper']:.3f}  E[N] <= {table['E_N_upper']:.2f}")
    return EXIT_OK


# -- audit -------------------------------------------------------------------

def cmd_audit(args) -> int:
    raw = harness.read_config(args.config) if args.config else None
    base = harness.config_from_dict(raw)[0].params if raw else EXAMPLE_1
    seed = resolve_seed(args.seed, raw)
    sampler = audit.SAMPLERS[args.mechanism]
    if args.agents is not None:
        lo, hi = args.agents
        if not 1 <= lo <= hi:
            raise harness.ConfigError("--agents needs 1 <= LO <= HI")
        sampler = replace(sampler, size_range=(lo, hi))
    if args.alpha is not None and args.mechanism != "baseline_only":
        raise harness.ConfigError("--alpha only applies to baseline_only")
    rep = audit.run_audit(args.mechanism, args.populations, seed, sampler, args.grid, base, args.alpha)
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_AUDIT


# -- caiso -------------------------------------------------------------------

def cmd_caiso(args) -> int:
    cfg, _ = _load(args.config, args.seed)
    if args.D is not None:
        cfg = replace(cfg, params=replace(cfg.params, D=args.D))
    agents = harness.recruit_population(cfg)
    rows = caiso.compare(agents, cfg.params, args.cap, args.grid)
    if args.out:
        import csv

        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["agent_id", "b", "pi", "reward_price", "incentive", "caiso_multiplier",
                        "caiso_factor", "srbm_factor"])
            for r in rows:
                w.writerow([r.agent_id] + ["%.6g" % v for v in (
                    r.b, r.pi, r.reward_price, r.incentive, r.caiso_multiplier, r.caiso_factor,
                    r.srbm_factor)])
    pos = [r for r in rows if r.incentive > 0]
    c_f = max((r.caiso_factor for r in pos), default=1.0)
    c_min = min((r.caiso_factor for r in pos), default=1.0)
    s_f = max(r.srbm_factor for r in rows)
    print(f"{len(rows)} called-core agents of {len(agents)} recruited (D={cfg.params.D:g}, "
          f"cap={args.cap:g}); {len(pos)} with pi^r > pi^e")
    print(f"CAISO inflation factor {c_min:.2f}..{c_f:.2f}   SRBM factor {s_f:.2f}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drmech", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="Monte Carlo cost of DR provision (CSV)")
    s.add_argument("config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="CSV path (default: standard output)")
    s.add_argument("--replications", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(fn=cmd_simulate)

    b = sub.add_parser("bounds", help="closed-form cost bounds")
    b.add_argument("--config")
    b.add_argument("--pi-e", type=float)
    b.add_argument("--pi-o", type=float)
    b.add_argument("--pi-max", type=float)
    b.add_argument("--D", type=float)
    b.add_argument("--m", type=int)
    b.add_argument("--E-b", dest="E_b", type=float, default=None)
    b.add_argument("--pi-lo", type=float)
    b.add_argument("--pi-hi", type=float)
    b.add_argument("--json", action="store_true")
    b.set_defaults(fn=cmd_bounds)

    a = sub.add_parser("audit", help="best-response audit of truthful reporting")
    a.add_argument("config", nargs="?")
    a.add_argument("--mechanism", choices=audit.MECHANISMS, default="srbm_pi")
    a.add_argument("--populations", type=int, default=50)
    a.add_argument("--agents", type=int, nargs=2, metavar=("LO", "HI"),
                   help="population size range")
    a.add_argument("--grid", type=int, default=50, help="grid steps per axis")
    a.add_argument("--alpha", type=float, help="override the baseline-only selection probability")
    a.add_argument("--seed", type=int)
    a.set_defaults(fn=cmd_audit)

    c = sub.add_parser("caiso", help="CAISO 10/10 vs SRBM payment inflation")
    c.add_argument("config", nargs="?")
    c.add_argument("--seed", type=int)
    c.add_argument("--cap", type=float, default=0.20)
    c.add_argument("--D", type=float)
    c.add_argument("--grid", type=int, default=20)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_caiso)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.fn(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RecruitmentShortfall as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except MechanismError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
