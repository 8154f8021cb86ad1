"""Switch parts of the frontend off and see what each one buys.

Compares the full tracker against runs without bias correction, without
pose inspection, and without the backend at all, on the medium scripts.

    python3 demos/ablation.py
"""

from viotrack import harness

variants = {
    "full": {},
    "no bias correction": {"disable_bscm": True},
    "no inspection": {"disable_pia": True},
    "no backend": {"disable_backend": True},
}

print(f"{'script':14s}" + "".join(f"{name:>22s}" for name in variants))
for script in ("trans-medium", "circ-medium"):
    row = f"{script:14s}"
    for flags in variants.values():
        r = harness.run_experiment(harness.ExperimentConfig(script=script, duration=15.0, **flags))
        lost = r.unprojectable / max(r.n_frames, 1)
        cell = f"{r.mean_proj_px:.3f} px" + (f" ({100 * lost:.0f}% off)" if lost > 0.01 else "")
        row += f"{cell:>22s}"
    print(row)
print("\nmean 2D projection error, exact backend, 60 fps; '% off' = frames whose box no longer projects")
