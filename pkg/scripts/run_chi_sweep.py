#!/usr/bin/env python3
"""Haptotactic-strength sweep: chi in {0.25, 0.75, 1.25} at mu = 0.01.

The chi = 1.25 member is the transport-dominated case: expect strong
spurious oscillations (negative cell-density undershoot) from t = 1 on; the
summary CSV tabulates per-run peaks and any breakdown flags.
"""

import sys

from haptosim import cli

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out/chi_sweep"
    sys.exit(
        cli.main(
            [
                "sweep",
                "--axis", "chi=0.25,0.75,1.25",
                "--axis", "mu=0.01",
                "--out", out,
            ]
        )
    )
