"""From scattered image estimates to model-ready cell observations.

Estimates land on a fixed reference grid and collapse to one observation
per (cell, year, source): a weighted mean with the summed weight.  Values
then shift into the open unit interval for the Beta likelihood and weights
normalize to mean one.
"""

import numpy as np

from coralcast.aggregation import (adjust_to_open_interval, aggregate_cells,
                                   normalize_weights, scale_for_likelihood)
from coralcast.ingestion import build_reference_raster, cell_of
from coralcast.weighting import ImageEstimate

# a raster over a small patch of reef, 0.005 dd cells
ring = [(150.002, -22.998), (150.018, -22.998), (150.018, -22.982),
        (150.002, -22.982)]
raster = build_reference_raster((150.0, -23.0, 150.02, -22.98), 0.005,
                                [ring])
print(f"raster {raster.n_cols} x {raster.n_rows} cells, "
      f"{raster.reef_mask.sum()} flagged as reef")
print("cell containing (150.0074, -22.9949):",
      cell_of(150.0074, -22.9949, raster))

rng = np.random.default_rng(0)
estimates = [
    ImageEstimate(f"img-{i:03d}", "Catlin", 2012,
                  150.0 + rng.uniform(0, 0.0199),
                  -23.0 + rng.uniform(0, 0.0199),
                  float(rng.uniform(0, 0.6)), 10.0)
    for i in range(30)
]
estimates += [
    ImageEstimate("transect-7", "LTMP", 2012, 150.013, -22.989, 0.42, 40.0),
]

observations = aggregate_cells(estimates, raster)
print(f"\n{len(estimates)} image estimates -> {len(observations)} "
      f"cell observations")

observations, delta = adjust_to_open_interval(observations)
print(f"interval adjustment delta = {delta:g} "
      f"(smallest positive cell mean)")

observations = normalize_weights(observations)
w = np.array([o.w_norm for o in observations])
print(f"normalized weights: min {w.min():.4f}, max {w.max():.4f}, "
      f"sum {w.sum():.6f} over N = {len(w)}")

lik = scale_for_likelihood(observations)
print(f"likelihood scale (sums to one): first three {np.round(lik[:3], 4)}")
