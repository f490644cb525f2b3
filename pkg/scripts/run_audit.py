"""Best-response audit of truthful reporting for every mechanism.

    python scripts/run_audit.py [--populations 50] [--seed 1] [--grid 50]

Exit status 1 if any agent gains by misreporting; the report names the seed,
population and agent that reproduce the worst deviation.
"""

import argparse
import sys

from drmech import audit


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--populations", type=int, default=50)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--grid", type=int, default=50)
    ap.add_argument("--mechanisms", nargs="+", default=["baseline_only", "srbm_pi", "srbm_ci"],
                    choices=audit.MECHANISMS)
    args = ap.parse_args(argv)
    ok = True
    for m in args.mechanisms:
        rep = audit.run_audit(m, args.populations, args.seed, grid_steps=args.grid)
        print(rep.summary(), flush=True)
        ok &= rep.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
