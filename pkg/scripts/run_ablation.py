"""Phase-reduction ablation on Haar unitaries at d = 3 with d+1 Fourier layers.

Runs the unreduced baseline and each reduction on the same targets.

Usage: python scripts/run_ablation.py [OUT_DIR] [extra ftmesh flags...]
"""

import sys

from ftmesh.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/ablation"
    sys.exit(main(["-v", "experiment", "--family", "haar-unitary", "--dims", "3",
                   "--reduce-phases", "drop-random,pin-inner,pin-last", "--out-dir", out, *sys.argv[2:]]))
