"""Scalar curvature of a few immersions, two ways.

Run with ``python demos/curvature_tour.py``.  For each chart the extrinsic
value |H|^2 - |alpha|^2 is compared with the intrinsic finite-difference one.
"""

import numpy as np

from scalpos.bundle_scaling import veronese_affine_chart
from scalpos.jetcalc import (
    Sampling,
    clifford_torus_chart,
    curvature_at,
    intrinsic_scalar_oracle,
    perturbed_sphere_chart,
    round_sphere_chart,
    sample_points,
)

charts = [
    round_sphere_chart(3),
    clifford_torus_chart(),
    perturbed_sphere_chart(2, seed=1),
    veronese_affine_chart("C"),
]

for chart in charts:
    pts = sample_points(chart, Sampling(count=5, seed=0, margin=0.1))
    _, _, cs = curvature_at(chart, pts)
    ref = intrinsic_scalar_oracle(chart, pts)
    print(f"{chart.label:32s} scal in [{cs.scal.min():8.4f}, {cs.scal.max():8.4f}]"
          f"  max |extrinsic - intrinsic| = {np.abs(cs.scal - ref).max():.2e}")
