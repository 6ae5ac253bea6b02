"""Posterior predictions at arbitrary sites and years, plus surface export.

Predictions draw jointly from the Gaussian approximation at the fitted
mode, so spatial and temporal dependence carries into every site.  The
predicted mean excludes the nugget (it is a smooth surface); the predictive
standard deviation includes a fresh nugget draw per site, seeded from
(seed, cell, year) so records are reproducible regardless of evaluation
order.  Intervals are q -/+ 1.96 sigma on the response scale, clamped to
[0, 1]; draw percentiles ride along for diagnostics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .ingestion import (CellKey, CovariateGrid, ReferenceRaster,
                        design_matrix, extract_covariates,
                        generate_prediction_sites, write_ascii_grid)
from .inference import FitResult, sample_latent, _Objective
from .spde import project

__all__ = [
    "PredictionRecord",
    "predict_rows",
    "predict",
    "interval",
    "export_surfaces",
    "write_predictions_csv",
]

Z95 = 1.96


@dataclass(frozen=True)
class PredictionRecord:
    cell: CellKey
    lon: float
    lat: float
    year: int
    q: float
    sigma: float
    lower: float
    upper: float
    pct_lower: float
    pct_upper: float

    def __post_init__(self):
        if not self.lower <= self.q <= self.upper:
            raise ValueError("interval must bracket the predicted mean")


def interval(q: float, sigma: float) -> tuple[float, float]:
    """95% prediction interval q -/+ 1.96 sigma, clamped into [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return max(0.0, q - Z95 * sigma), min(1.0, q + Z95 * sigma)


def _nugget_draws(theta_log_nugget_prec: float, keys, n_draws: int,
                  seed: int) -> np.ndarray:
    sd = math.exp(-0.5 * theta_log_nugget_prec)
    out = np.empty((len(keys), n_draws))
    for i, key in enumerate(keys):
        rng = np.random.default_rng(np.random.SeedSequence([seed, *key]))
        out[i] = sd * rng.standard_normal(n_draws)
    return out


def predict_rows(
    fit_result: FitResult,
    x: np.ndarray,
    a: sp.spmatrix,
    year_index: np.ndarray,
    n_draws: int = 1000,
    seed: int = 0,
    nugget_keys: Sequence[tuple[int, ...]] | None = None,
    beta_noise: bool = False,
):
    """Predict for explicit design rows.

    Returns (q, sigma, pct_lower, pct_upper).  q averages the inverse-logit
    of the nugget-free linear predictor; sigma is the spread of draws with a
    fresh nugget added.  ``nugget_keys`` seeds one nugget stream per row
    (defaults to the row index).  With ``beta_noise`` the draws also pass
    through the Beta observation model, widening sigma to the full
    predictive spread of a new observation (used by the cross-validation
    harness; the exported prediction surfaces keep the smooth-surface
    definition).
    """
    obj = _Objective(fit_result.data, fit_result.spec)
    draws = sample_latent(fit_result, n_draws, seed)
    beta = draws[obj.sl_beta]
    u = draws[obj.sl_u]
    z = draws[obj.sl_z]
    eta = np.asarray(x) @ beta + a @ u + obj.b[np.asarray(year_index)] @ z
    q = expit(eta).mean(axis=1)
    if nugget_keys is None:
        nugget_keys = [(i,) for i in range(eta.shape[0])]
    eps = _nugget_draws(fit_result.theta.log_nugget_prec, nugget_keys,
                        n_draws, seed)
    noisy = expit(eta + eps)
    if beta_noise:
        phi = fit_result.theta.phi
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, eta.shape[0], n_draws]))
        mean = np.clip(noisy, 1e-12, 1.0 - 1e-12)
        noisy = np.clip(rng.beta(mean * phi, (1.0 - mean) * phi),
                        1e-12, 1.0 - 1e-12)
    sigma = noisy.std(axis=1, ddof=1)
    lo, hi = np.percentile(noisy, [2.5, 97.5], axis=1)
    return q, sigma, lo, hi


def predict(
    fit_result: FitResult,
    raster: ReferenceRaster,
    layers,
    years: Sequence[int],
    n_draws: int = 1000,
    seed: int = 0,
) -> tuple[list[PredictionRecord], list[str]]:
    """Predict at the centroid of every reef-masked cell for each year.

    Sites whose covariates are nodata are skipped with a warning.  Years
    must be among the fitted years (the year walk does not extrapolate).
    """
    fitted_years = fit_result.data.years
    for year in years:
        if year not in fitted_years:
            raise ValueError(f"year {year} was not in the fitted data")
    sites = generate_prediction_sites(raster)
    records: list[PredictionRecord] = []
    warnings: list[str] = []
    year_lookup = {y: i for i, y in enumerate(fitted_years)}
    for year in years:
        wanted = [(cell, year) for cell, _, _ in sites]
        rows, warns = extract_covariates(wanted, layers, raster)
        warnings.extend(warns)
        if not rows:
            continue
        x = design_matrix(rows)
        lonlat = np.array([raster.centroid(r.cell) for r in rows])
        a = project(fit_result.data.mesh, lonlat).a
        year_idx = np.full(len(rows), year_lookup[year])
        keys = [(r.cell.col, r.cell.row, year) for r in rows]
        q, sigma, plo, phi_ = predict_rows(
            fit_result, x, a, year_idx, n_draws=n_draws, seed=seed,
            nugget_keys=keys)
        for i, r in enumerate(rows):
            lo, hi = interval(float(q[i]), float(sigma[i]))
            records.append(PredictionRecord(
                cell=r.cell, lon=lonlat[i, 0], lat=lonlat[i, 1], year=year,
                q=float(q[i]), sigma=float(sigma[i]), lower=lo, upper=hi,
                pct_lower=float(plo[i]), pct_upper=float(phi_[i]),
            ))
    return records, warnings


def export_surfaces(records: Sequence[PredictionRecord],
                    raster: ReferenceRaster, year: int,
                    mean_path, sd_path,
                    comment: str | None = None) -> None:
    """Write mean and sd ASCII grids for one year; unpredicted cells nodata."""
    selected = [r for r in records if r.year == year]
    if not selected:
        raise ValueError(f"no prediction records for year {year}")
    mean_vals = np.full(raster.n_cols * raster.n_rows, np.nan)
    sd_vals = np.full(raster.n_cols * raster.n_rows, np.nan)
    for r in selected:
        idx = raster.cell_index(r.cell)
        mean_vals[idx] = r.q
        sd_vals[idx] = r.sigma
    common = dict(origin_lon=raster.origin_lon, origin_lat=raster.origin_lat,
                  cell_size=raster.cell_size, n_cols=raster.n_cols,
                  n_rows=raster.n_rows, year=year)
    write_ascii_grid(mean_path,
                     CovariateGrid(name="pred_mean", values=mean_vals,
                                   **common),
                     comment=comment)
    write_ascii_grid(sd_path,
                     CovariateGrid(name="pred_sd", values=sd_vals, **common),
                     comment=comment)


def write_predictions_csv(path, records: Sequence[PredictionRecord],
                          comment: str | None = None) -> None:
    """Export: cell_col,cell_row,lon,lat,year,q,sigma,lower,upper."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["cell_col", "cell_row", "lon", "lat", "year",
                         "q", "sigma", "lower", "upper"])
        for r in records:
            writer.writerow([
                r.cell.col, r.cell.row, f"{r.lon:.10g}", f"{r.lat:.10g}",
                r.year, f"{r.q:.8g}", f"{r.sigma:.8g}",
                f"{r.lower:.8g}", f"{r.upper:.8g}",
            ])
