#!/usr/bin/env python3
"""Proliferation sweep: mu in {1e-10, 0.5, 1.0} at weak drift chi = 0.01.

Writes one output directory per run plus a summary CSV with the peak cell
density at the snapshot times t = 5, 15, 25, 35.
"""

import sys

from haptosim import cli

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out/mu_sweep"
    sys.exit(
        cli.main(
            [
                "sweep",
                "--axis", "mu=1e-10,0.5,1.0",
                "--axis", "chi=0.01",
                "--out", out,
            ]
        )
    )
