"""Cross-validation, the upweighting sweep, and synthetic data generation.

The cross-validation harness mirrors the two-model comparison: the AllData
variant trains on everything outside the held-out fold while the CoreOnly
variant trains on the core (always-train) sources alone, and both predict
the held-out observations.  Folds ignore spatio-temporal structure on
purpose.  The upweighting sweep multiplies the normalized weights of one
source, refits, and scores in-sample fitted values on that source; it is
deliberately not a cross-validation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .inference import (FitError, HyperParams, ModelData, ModelSpec, fit,
                        fitted_mu_draws, posterior_summaries,
                        build_model_data)
from .ingestion import (CellKey, CovariateGrid, DESIGN_COLUMNS,
                        ReferenceRaster, design_matrix, SiteCovariates)
from .linalg import CholeskySolver
from .prediction import interval, predict_rows
from .spde import (assemble_fem, build_mesh, project, rw1_precision,
                   spde_precision, sum_to_zero_basis, SpdeParams)

__all__ = [
    "CvResult",
    "FoldDetail",
    "UpweightResult",
    "SyntheticSource",
    "SyntheticLayout",
    "SyntheticDataset",
    "kfold_split",
    "rmspe",
    "coverage95",
    "correlation",
    "run_cv",
    "relative_gain",
    "simulate_upweight",
    "generate_synthetic",
    "write_cv_csv",
    "write_upweight_csv",
]

DEFAULT_MULTIPLIERS = (1, 1000, 10000, 100000)


@dataclass(frozen=True)
class FoldDetail:
    fold: int
    n_train: int
    n_test: int
    train_rows: tuple[int, ...]
    rmspe: float | None
    coverage95: float | None
    corr: float | None
    error: str | None = None


@dataclass(frozen=True)
class CvResult:
    model: str
    coverage95: float
    rmspe: float
    corr: float
    per_fold: tuple[FoldDetail, ...]
    complete: bool

    def __post_init__(self):
        if not 0.0 <= self.coverage95 <= 100.0:
            raise ValueError("coverage must be a percentage")


@dataclass(frozen=True)
class UpweightResult:
    multiplier: float
    coverage95: float
    rmspe: float
    corr: float


def kfold_split(items, k: int = 10, seed: int = 0) -> np.ndarray:
    """Random fold id per item; fold sizes differ by at most one."""
    n = items if isinstance(items, int) else len(items)
    if k < 2:
        raise ValueError("need at least two folds")
    if n < k:
        raise ValueError(f"cannot split {n} observations into {k} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % k
    return folds


def rmspe(obs, pred) -> float:
    """Root mean square prediction error."""
    obs = np.asarray(obs, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if obs.shape != pred.shape or obs.size == 0:
        raise ValueError("observation and prediction vectors must match")
    return float(np.sqrt(np.mean((pred - obs) ** 2)))


def coverage95(obs, intervals) -> float:
    """Percent of observations inside their closed intervals."""
    obs = np.asarray(obs, dtype=float)
    lower = np.asarray([iv[0] for iv in intervals], dtype=float)
    upper = np.asarray([iv[1] for iv in intervals], dtype=float)
    if obs.shape != lower.shape:
        raise ValueError("observation and interval counts must match")
    inside = (lower <= obs) & (obs <= upper)
    return float(100.0 * np.mean(inside))


def correlation(obs, pred) -> float:
    """Pearson correlation; defined as 0 when either side is constant."""
    obs = np.asarray(obs, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if obs.shape != pred.shape or obs.size < 2:
        raise ValueError("need at least two paired values")
    so = obs.std()
    sp_ = pred.std()
    if so < 1e-15 or sp_ < 1e-15:
        return 0.0
    return float(np.corrcoef(obs, pred)[0, 1])


def _metrics(y, q, sigma):
    ivals = [interval(float(qi), float(si)) for qi, si in zip(q, sigma)]
    return rmspe(y, q), coverage95(y, ivals), correlation(y, q)


def run_cv(
    data: ModelData,
    spec: ModelSpec,
    core_sources: Sequence[str],
    k: int = 10,
    seed: int = 0,
    n_draws: int = 1000,
) -> dict[str, CvResult]:
    """10-fold comparison of the AllData and CoreOnly variants.

    Only non-core observations are ever held out; the CoreOnly variant
    never trains on them at all (its training rows are recorded per fold
    for auditing).  A failed fold is logged and skipped rather than
    aborting the run; the result is then flagged incomplete.
    """
    if data.sources is None:
        raise ValueError("data must carry per-observation sources")
    core_sources = set(core_sources)
    is_core = np.isin(data.sources, sorted(core_sources))
    validatable = np.flatnonzero(~is_core)
    core_rows = np.flatnonzero(is_core)
    if validatable.size == 0 or core_rows.size == 0:
        raise ValueError("need both core and validatable sources")
    folds = kfold_split(validatable.size, k=k, seed=seed)
    all_rows = np.arange(data.n)
    results: dict[str, CvResult] = {}
    for variant in ("AllData", "CoreOnly"):
        details: list[FoldDetail] = []
        pooled_y: list[np.ndarray] = []
        pooled_q: list[np.ndarray] = []
        pooled_sigma: list[np.ndarray] = []
        for f in range(k):
            held = validatable[folds == f]
            if variant == "AllData":
                train = np.setdiff1d(all_rows, held)
            else:
                train = core_rows
            try:
                fitted = fit(data.subset(train), spec)
                # full predictive spread for held-out observations: fresh
                # nugget plus Beta observation noise
                q, sigma, _, _ = predict_rows(
                    fitted, data.x[held], data.a[held],
                    data.year_index[held], n_draws=n_draws,
                    seed=seed + f,
                    nugget_keys=[(int(i),) for i in held],
                    beta_noise=True)
            except FitError as exc:
                details.append(FoldDetail(
                    fold=f, n_train=train.size, n_test=held.size,
                    train_rows=tuple(int(i) for i in train),
                    rmspe=None, coverage95=None, corr=None, error=str(exc)))
                continue
            y_held = data.y[held]
            r, c, rho = _metrics(y_held, q, sigma)
            details.append(FoldDetail(
                fold=f, n_train=train.size, n_test=held.size,
                train_rows=tuple(int(i) for i in train),
                rmspe=r, coverage95=c, corr=rho))
            pooled_y.append(y_held)
            pooled_q.append(q)
            pooled_sigma.append(sigma)
        if not pooled_y:
            raise FitError(f"every fold failed for variant {variant}")
        y = np.concatenate(pooled_y)
        q = np.concatenate(pooled_q)
        sigma = np.concatenate(pooled_sigma)
        r, c, rho = _metrics(y, q, sigma)
        results[variant] = CvResult(
            model=variant, coverage95=c, rmspe=r, corr=rho,
            per_fold=tuple(details),
            complete=all(d.error is None for d in details),
        )
    return results


def relative_gain(best_rmspe: float, other_rmspe: float) -> float:
    """Gain in predictive ability of the better model: 1 - best/other."""
    if other_rmspe <= 0:
        raise ValueError("reference RMSPE must be positive")
    return 1.0 - best_rmspe / other_rmspe


def simulate_upweight(
    data: ModelData,
    target_source: str,
    spec: ModelSpec,
    multipliers: Sequence[float] = DEFAULT_MULTIPLIERS,
    seed: int = 0,
    n_draws: int = 2000,
) -> list[UpweightResult]:
    """Refit with the target source's normalized weights scaled by each
    multiplier and score in-sample fitted values on that source.

    Fitted values include each observation's own nugget coordinate, so a
    heavily upweighted observation pins its fitted value.  The same draw
    seed is used at every multiplier; at multiplier 1 the run is
    bit-identical to a plain fit with that seed.

    Later multipliers start their hyperparameter search from the previous
    fit, with the Beta precision initial shifted by the log weight ratio
    (the precision optimum grows with the weight mass); the first
    multiplier runs from the configured initials, so a leading multiplier
    of one stays a plain fit.
    """
    if data.sources is None:
        raise ValueError("data must carry per-observation sources")
    target = np.flatnonzero(data.sources == target_source)
    if target.size == 0:
        raise ValueError(f"source {target_source!r} not present in data")
    results = []
    prev: tuple[float, HyperParams] | None = None
    for m in multipliers:
        if m <= 0:
            raise ValueError("multipliers must be positive")
        w = data.w.copy()
        w[target] = w[target] * m
        if prev is None:
            spec_m = spec if m == 1 else replace(
                spec, init_log_phi=spec.init_log_phi + math.log(m))
        else:
            m_prev, theta_prev = prev
            spec_m = replace(
                spec,
                init_log_phi=theta_prev.log_phi + math.log(m / m_prev),
                init_log_rw1_prec=theta_prev.log_rw1_prec,
                init_log_nugget_prec=theta_prev.log_nugget_prec,
                init_log_kappa=theta_prev.log_kappa,
                init_log_tau=theta_prev.log_tau)
        fitted = fit(data.with_weights(w), spec_m)
        prev = (float(m), fitted.theta)
        mu = fitted_mu_draws(fitted, n_draws=n_draws, seed=seed)[target]
        q = mu.mean(axis=1)
        # interval spread includes the Beta observation noise of a fitted
        # value's replicate, so covering the observed y is a fair ask
        phi = fitted.theta.phi
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, target.size, n_draws]))
        mean = np.clip(mu, 1e-12, 1.0 - 1e-12)
        y_rep = np.clip(rng.beta(mean * phi, (1.0 - mean) * phi),
                        1e-12, 1.0 - 1e-12)
        sigma = y_rep.std(axis=1, ddof=1)
        y = data.y[target]
        r, c, rho = _metrics(y, q, sigma)
        results.append(UpweightResult(
            multiplier=float(m), coverage95=c, rmspe=r, corr=rho))
    return results


# ---------------------------------------------------------------------------
# synthetic worlds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSource:
    """One simulated source: where it samples and how much weight it carries.

    ``region`` is (x0, x1, y0, y1) in fractions of the domain; cells are
    drawn uniformly inside it.
    """

    name: str
    n_cells: int
    w_raw: float
    region: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class SyntheticLayout:
    bbox: tuple[float, float, float, float]  # lon0, lat0, lon1, lat1
    cell_size: float
    years: tuple[int, ...]
    sources: tuple[SyntheticSource, ...]
    mesh_resolution: float = 0.5
    mesh_extension: float = 0.5


@dataclass(frozen=True)
class SyntheticDataset:
    data: ModelData
    raster: ReferenceRaster
    layers: tuple[CovariateGrid, ...]
    beta_true: np.ndarray
    theta_true: HyperParams
    u_true: np.ndarray
    v_true: np.ndarray
    eps_true: np.ndarray
    mu_true: np.ndarray


# strong negative bleaching effect; cyclone damage negative as well
DEFAULT_BETA = {
    "intercept": -0.85,
    "cyclone": -0.6,
    "bleaching": -1.2,
    "sst_anomaly": -0.3,
    "shelf_mid": 0.3,
    "shelf_outer": 0.5,
    "no_take": 0.2,
}


def default_beta_true() -> np.ndarray:
    return np.array([DEFAULT_BETA[name] for name in DESIGN_COLUMNS])


def generate_synthetic(
    layout: SyntheticLayout,
    theta_true: HyperParams,
    beta_true: np.ndarray | None = None,
    seed: int = 0,
) -> SyntheticDataset:
    """Draw a full synthetic world with known latents.

    Field values are drawn from the same SPDE precision used in fitting,
    the year effect from the constrained random walk, the nugget iid, and
    responses from the Beta observation model.  Raw source weights are
    normalized to mean one exactly as in the real pipeline.
    """
    beta_true = default_beta_true() if beta_true is None else \
        np.asarray(beta_true, dtype=float)
    lon0, lat0, lon1, lat1 = layout.bbox
    n_cols = int(round((lon1 - lon0) / layout.cell_size))
    n_rows = int(round((lat1 - lat0) / layout.cell_size))
    raster = ReferenceRaster(lon0, lat0, layout.cell_size, n_cols, n_rows,
                             np.ones(n_cols * n_rows, dtype=bool))
    rng = np.random.default_rng(seed)

    cells: list[CellKey] = []
    sources: list[str] = []
    for src in layout.sources:
        x0f, x1f, y0f, y1f = src.region
        c0, c1 = int(x0f * n_cols), max(int(x0f * n_cols) + 1,
                                        int(x1f * n_cols))
        r0, r1 = int(y0f * n_rows), max(int(y0f * n_rows) + 1,
                                        int(y1f * n_rows))
        avail = [(c, r) for r in range(r0, r1) for c in range(c0, c1)]
        if src.n_cells > len(avail):
            raise ValueError(
                f"source {src.name!r} wants {src.n_cells} cells but its "
                f"region only holds {len(avail)}")
        chosen = rng.choice(len(avail), size=src.n_cells, replace=False)
        for j in sorted(chosen):
            cells.append(CellKey(*avail[j]))
            sources.append(src.name)

    # covariates for every raster cell (row-major), so the same world can
    # be exported as gridded layers; observations share the cell values
    all_cells = [(c, r) for r in range(n_rows) for c in range(n_cols)]
    static = {}
    for col, row in all_cells:
        static[(col, row)] = (int(rng.choice([1, 2, 3])),
                              int(rng.random() < 0.3))
    dyn = {}
    for col, row in all_cells:
        for year in layout.years:
            dyn[(col, row, year)] = (
                int(rng.random() < 0.15),
                int(rng.random() < 0.2),
                float(rng.normal(0.0, 0.6)),
            )
    grid_common = dict(origin_lon=lon0, origin_lat=lat0,
                       cell_size=layout.cell_size, n_cols=n_cols,
                       n_rows=n_rows)
    layers = [
        CovariateGrid(name="shelf", values=np.array(
            [static[c][0] for c in all_cells], dtype=float),
            **grid_common),
        CovariateGrid(name="no_take", values=np.array(
            [static[c][1] for c in all_cells], dtype=float),
            **grid_common),
    ]
    for year in layout.years:
        for j, name in enumerate(("cyclone", "bleaching", "sst_anomaly")):
            layers.append(CovariateGrid(
                name=name, year=year, values=np.array(
                    [dyn[(c, r, year)][j] for c, r in all_cells],
                    dtype=float),
                **grid_common))

    rows: list[SiteCovariates] = []
    obs_cells: list[CellKey] = []
    obs_sources: list[str] = []
    years_per_obs: list[int] = []
    for cell, source in zip(cells, sources):
        shelf, no_take = static[(cell.col, cell.row)]
        for year in layout.years:
            cyclone, bleaching, sst = dyn[(cell.col, cell.row, year)]
            rows.append(SiteCovariates(
                cell=cell, year=year, cyclone=cyclone, bleaching=bleaching,
                sst_anomaly=sst, shelf=shelf, no_take=no_take))
            obs_cells.append(cell)
            obs_sources.append(source)
            years_per_obs.append(year)
    x = design_matrix(rows)
    sites = np.array([raster.centroid(c) for c in obs_cells])

    mesh = build_mesh(sites, extension=layout.mesh_extension,
                      resolution=layout.mesh_resolution)
    fem = assemble_fem(mesh)
    q_mat = spde_precision(fem, SpdeParams(theta_true.log_kappa,
                                           theta_true.log_tau))
    u = CholeskySolver(q_mat).sample(rng.standard_normal(mesh.n_nodes))

    t = len(layout.years)
    b = sum_to_zero_basis(t)
    structure, _ = rw1_precision(layout.years, 1.0)
    k_mat = math.exp(theta_true.log_rw1_prec) * (
        b.T @ structure.r.toarray() @ b)
    l_mat = np.linalg.cholesky(k_mat)
    z = np.linalg.solve(l_mat.T, rng.standard_normal(t - 1))
    v = b @ z

    n = len(rows)
    eps_sd = math.exp(-0.5 * theta_true.log_nugget_prec)
    eps = eps_sd * rng.standard_normal(n)

    year_lookup = {y: i for i, y in enumerate(layout.years)}
    year_idx = np.array([year_lookup[t_] for t_ in years_per_obs])
    a = project(mesh, sites).a
    eta = x @ beta_true + a @ u + v[year_idx] + eps
    mu = expit(eta)
    phi = math.exp(theta_true.log_phi)
    y = rng.beta(mu * phi, (1.0 - mu) * phi)
    y = np.clip(y, 1e-6, 1.0 - 1e-6)

    w_raw = np.array([
        next(s.w_raw for s in layout.sources if s.name == src)
        for src in obs_sources])
    w_norm = n * w_raw / w_raw.sum()

    data = build_model_data(
        y=y, w=w_norm, x=x, coef_names=DESIGN_COLUMNS, sites=sites,
        years_per_obs=years_per_obs, mesh=mesh,
        sources=obs_sources, cells=obs_cells,
    )
    return SyntheticDataset(
        data=data, raster=raster, layers=tuple(layers),
        beta_true=beta_true, theta_true=theta_true, u_true=u, v_true=v,
        eps_true=eps, mu_true=mu,
    )


def write_cv_csv(path, results: dict[str, CvResult],
                 comment: str | None = None) -> None:
    """Export the two-model comparison: model,coverage95,rmspe,corr."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["model", "coverage95", "rmspe", "corr"])
        for name in sorted(results):
            r = results[name]
            writer.writerow([r.model, f"{r.coverage95:.4f}",
                             f"{r.rmspe:.6g}", f"{r.corr:.6g}"])


def write_upweight_csv(path, results: Sequence[UpweightResult],
                       comment: str | None = None) -> None:
    """Export the sweep: weight,coverage95,rmspe,corr."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["weight", "coverage95", "rmspe", "corr"])
        for r in results:
            writer.writerow([f"{r.multiplier:g}", f"{r.coverage95:.4f}",
                             f"{r.rmspe:.6g}", f"{r.corr:.6g}"])
