"""Train with gradient recording and compare measured drift to the bound round by round.

    python scripts/verify_drift_bound.py configs/convex_drift.ini
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from harmofl.config import load
from harmofl.experiment import execute


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--verbose", action="store_true", help="print every round")
    args = ap.parse_args()

    cfg = replace(load(args.config), drift_verification=True)
    ok = True
    for seed in cfg.seeds:
        report = execute(cfg, seed).drift
        c = report.constants
        ratios = [g / b for g, b in zip(report.gammas, report.bounds)]
        kind = "convex" if report.convex else "non-convex"
        print(f"seed {seed} ({kind}): beta={c.beta:.3g} G={c.G:.3g} sigma={c.sigma:.3g} "
              f"eps={c.epsilon:.3g} max gamma/bound={max(ratios):.3g} holds={report.holds}")
        if args.verbose:
            for t, (g, b) in enumerate(zip(report.gammas, report.bounds), 1):
                print(f"  round {t:3d} gamma={g:.4e} bound={b:.4e}")
        ok &= report.holds
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
