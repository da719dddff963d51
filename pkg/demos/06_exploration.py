"""
Exploration: VAAC against SAC and RND
=====================================

Train each agent on the reward-free maze and compare how many cells they
cover. Pass a step count to shorten or lengthen the runs, e.g.

    python demos/06_exploration.py 20000
"""

import sys
from pathlib import Path

from vaac.harness import RunConfig, SweepSpec, sweep

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
base = RunConfig(total_steps=steps, report_interval=max(steps // 10, 1), save_checkpoint=False)
result = sweep(SweepSpec(base, seeds=[0], agents=["vaac", "sac", "rnd"]), Path("demo_output") / "exploration")

for agent in ("vaac", "sac", "rnd"):
    print(f"{agent:5s} unique cells {result.final[agent][0]:5d}   rooms {result.rooms[agent][0]}")
print("histograms are in", result.out_dir)
