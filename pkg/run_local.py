#!/usr/bin/env python3
"""
Local experiment runner
Runs a small flow-based experiment without any config file
"""
import sys

from hgfc.main import main

if __name__ == "__main__":
    sys.exit(main([
        "run",
        "--algorithm", "alg2",
        "--trials", "5",
        "--epsilon", "1.0",
        "--out", "results/local",
    ]))
