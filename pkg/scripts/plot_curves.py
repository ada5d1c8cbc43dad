"""Plot reward curves and episode end points from an ``evaluate`` run.

    python3 scripts/plot_curves.py runs/default

Needs matplotlib, which the package itself does not depend on.
"""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/default")
curves = defaultdict(lambda: defaultdict(list))
for r in csv.DictReader(open(out / "curves.csv")):
    curves[r["query_type"]][r["learner"]].append((int(r["seed"]), int(r["update"]), float(r["mean_return"])))

fig, axes = plt.subplots(1, len(curves), figsize=(5 * len(curves), 4), squeeze=False)
for ax, (q, by_learner) in zip(axes[0], sorted(curves.items())):
    for name, rows in sorted(by_learner.items()):
        updates = sorted({u for _, u, _ in rows})
        ax.plot(updates, [np.mean([v for _, u, v in rows if u == x]) for x in updates], marker="o", label=name)
    ax.set_title(f"query type {q}")
    ax.set_xlabel("update")
    ax.set_ylabel("mean return")
axes[0][0].legend()
fig.tight_layout()
fig.savefig(out / "curves.png", dpi=120)
print(f"wrote {out / 'curves.png'}")
