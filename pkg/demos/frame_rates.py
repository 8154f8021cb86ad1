"""Error versus frame rate for both backends, as a small table.

A shortened version of the full sweep run by ``python3 -m viotrack grid``.

    python3 demos/frame_rates.py [duration]
"""

import sys

from viotrack import harness

duration = float(sys.argv[1]) if len(sys.argv) > 1 else 10.0
configs = harness.grid_configs(duration=duration, scripts=("trans-hard", "circ-hard"))
reports = harness.run_grid(configs, workers=1)

print(f"{'backend':8s}{'script':12s}" + "".join(f"{fr:>10.0f}" for fr in harness.FRAME_RATES))
for backend in harness.BACKENDS:
    for script in ("trans-hard", "circ-hard"):
        cells = [r.mean_proj_px for c, r in zip(configs, reports) if c.backend == backend and c.script == script]
        print(f"{backend:8s}{script:12s}" + "".join(f"{e:10.3f}" for e in cells))
print(f"\nmean 2D projection error (px), {duration:g} s per run, columns are frames per second")
