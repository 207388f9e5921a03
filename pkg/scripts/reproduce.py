#!/usr/bin/env python3
"""Rerun the frozen experiment suite and write per-criterion tables.

Equivalent to ``ebsde reproduce``; kept as a script so the suite can be
rerun without installing the console entry point:

    python3 scripts/reproduce.py --out-dir reproduce-out
"""
import sys

from ebsde import cli

if __name__ == "__main__":
    sys.exit(cli.main(["reproduce"] + sys.argv[1:]))
