"""Compare the full pipeline with the flat and two-level baselines.

All three see the same split and the same number of item-level gradient
steps.  Pass seeds on the command line (default: 0 1 2 3 4).

    python demos/05_method_comparison.py 0 1
"""

import sys

import numpy as np

from hiermerge.benchmark import compare_methods

seeds = [int(s) for s in sys.argv[1:]] or [0, 1, 2, 3, 4]
rows = []
for seed in seeds:
    c = compare_methods(seed)
    rows.append(c)
    print(f"seed {seed}: macro full {c.full.macro:.4f} htl {c.htl.macro:.4f} flat {c.flat.macro:.4f} | "
          f"energy MAE full {c.full.energy_mae:.1f} flat {c.flat.energy_mae:.1f} | "
          f"{len(c.records)} iterations, {c.gradient_steps['full']} item steps each")

for name in ("full", "htl", "flat"):
    macro = np.mean([getattr(c, name).macro for c in rows])
    micro = np.mean([getattr(c, name).micro for c in rows])
    mae = np.mean([getattr(c, name).energy_mae for c in rows])
    print(f"{name:>5}: macro {macro:.4f}  micro {micro:.4f}  energy MAE {mae:.2f} kcal")

# items sharing a visual mode are indistinguishable, so macro accuracy
# cannot exceed modes / items for any method
print("macro ceiling on this benchmark: 16 / 64 = 0.25")
