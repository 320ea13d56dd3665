"""Haar-state campaign with 2, 3 and 4 Fourier layers for d = 3..6.

Usage: python scripts/run_states.py [OUT_DIR] [extra ftmesh flags...]
"""

import sys

from ftmesh.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/states"
    sys.exit(main(["-v", "experiment", "--family", "state", "--dims", "3..6",
                   "--layers", "2,3,4", "--out-dir", out, *sys.argv[2:]]))
