"""Block-diagonal campaign: rules d and d+1 for d = 3..6.

Usage: python scripts/run_block_diagonal.py [OUT_DIR] [extra ftmesh flags...]
"""

import sys

from ftmesh.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/block-diagonal"
    sys.exit(main(["-v", "experiment", "--family", "block-diagonal", "--dims", "3..6",
                   "--rules", "d,d+1", "--out-dir", out, *sys.argv[2:]]))
