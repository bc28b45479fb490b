#!/usr/bin/env python3
"""Three-dimensional invasion on the 32^3-element grid, mu = chi = 1, to
t = 35. Takes a few minutes; writes snapshots at t = 5, 15, 25, 35."""

import sys

from haptosim import cli

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out/invasion_3d"
    sys.exit(
        cli.main(
            [
                "run",
                "--set", "dim=3",
                "--set", "mu=1.0",
                "--set", "chi=1.0",
                "--set", "t_final=35",
                "--out", out,
            ]
        )
    )
