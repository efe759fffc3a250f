"""
Expansion along a family of levels
==================================

Sweep a grid of scales for three actions on small budgets and classify
each family.  The full-size grids live in configs/ and run through
``warpedcone family --config configs/<name>.json``.
"""

import tempfile

from warpedcone import harness

out = tempfile.mkdtemp()
small = dict(restarts=2, p_list=(2,), ahlfors_centers=16, ahlfors_samples=50_000, output_dir=out)

families = [
    harness.sl2z_config(levels=(4, 8, 16, 20), **small),
    harness.rotation_config(levels=(8, 16, 32, 64, 128, 160), **small),
    harness.identity_config(levels=(4, 8, 16, 20), **small),
]

for cfg in families:
    v = harness.run_family(cfg)
    series = ", ".join(f"{e:.3f}" for e in v.eta_series(2))
    print(f"{cfg.label}: {v.verdict}")
    print(f"  #Z grows {v.growth:.1f}x, eta(2,1) = [{series}]")
    print(f"  kappa_hat in [{v.kappa_min:.3f}, {v.kappa_max:.3f}]")
    print(f"  csv: {v.csv_path}")
