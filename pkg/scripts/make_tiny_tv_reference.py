"""Regenerate src/stochprox/data/tiny_tv_reference.npz (about 3 minutes)."""

import sys
from pathlib import Path

import numpy as np

from stochprox.bench import compute_tiny_tv_reference, tiny_tv_problem
from stochprox.solvers import kkt_residual

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 1_000_000
x, v = compute_tiny_tv_reference(iterations)
problem, _ = tiny_tv_problem()
print(f"iterations={iterations} kkt={kkt_residual(problem, x, [v]):.3e}")
out = Path(__file__).resolve().parents[1] / "src" / "stochprox" / "data" / "tiny_tv_reference.npz"
np.savez(out, x=x, v=v, iterations=iterations)
print(f"wrote {out}")
