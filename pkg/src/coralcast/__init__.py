"""Fusion of heterogeneous coral-cover surveys into weighted, gridded
observations, a weighted spatio-temporal Beta regression on a sparse
Gaussian Markov random field, and gridded predictions with uncertainty.

Submodules
----------
ingestion    reference raster, covariate grids, design rows, file formats
elicitation  classification points, label store, citizen accuracy scoring
service      HTTP/JSON elicitation service for the classification UI
weighting    mechanistic weights for citizen and professional estimates
aggregation  cell-level weighted means, interval adjustment, normalization
spde         mesh, finite elements, Matern/RW1 precisions, field sampling
inference    weighted Beta latent-Gaussian model, Laplace hyperfit
prediction   gridded posterior predictions, intervals, surface export
assessment   cross-validation, upweighting sweeps, synthetic worlds
cli          deterministic command-line pipeline
"""

__version__ = "0.1.0"
