#!/usr/bin/env python3
"""Equal proliferation and drift, mu = chi = 1: rapid invasion of the whole
box. Snapshots at t = 0, 10, 20, 30."""

import sys

from haptosim import cli

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out/equal_rates"
    sys.exit(
        cli.main(
            [
                "run",
                "--set", "mu=1.0",
                "--set", "chi=1.0",
                "--set", "snapshots=0,10,20,30",
                "--out", out,
            ]
        )
    )
