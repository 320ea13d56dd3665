"""Haar-unitary campaign: rules d, d+1 and d+2 for d = 3..6.

Usage: python scripts/run_haar_unitary.py [OUT_DIR] [extra ftmesh flags...]
"""

import sys

from ftmesh.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/haar-unitary"
    sys.exit(main(["-v", "experiment", "--family", "haar-unitary", "--dims", "3..6",
                   "--rules", "d,d+1,d+2", "--out-dir", out, *sys.argv[2:]]))
