"""Deterministic command-line pipeline.

Subcommands chain through plain-text artifacts in the output directory:

    ingest     validate and summarize every input named in the config
    accuracy   score citizen accuracy against the expert labels
    weights    weighted per-image estimates (citizen + professional)
    aggregate  cell/year/source observations with normalized weights
    fit        weighted Beta latent-Gaussian fit; writes model state
    predict    gridded predictions with uncertainty surfaces
    cv         10-fold AllData vs CoreOnly comparison
    upweight   weight-multiplier sweep on one source
    synth      generate a synthetic world the other commands can consume
    serve      run the elicitation HTTP service

Every run writes a manifest (inputs, config hash, seed, version) and stamps
its hash into each text artifact, so reruns with identical config and seed
are byte-identical.  Exit codes: 0 success, 2 validation failure,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import aggregation, assessment, elicitation, ingestion, inference
from . import prediction as prediction_mod
from . import weighting
from .inference import FitError, HyperParams, ModelSpec, NonFiniteError
from .linalg import NotPositiveDefiniteError
from .service import (ElicitationService, build_app, read_catalog_csv,
                      read_expert_labels_csv)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline run needs, parsed from key-value text."""

    base_dir: Path
    survey_csv: Path | None = None
    classifications_csv: Path | None = None
    images_csv: Path | None = None
    expert_labels_csv: Path | None = None
    source_profiles_csv: Path | None = None
    reef_polygons: Path | None = None
    covariate_dir: Path | None = None
    classification_log: Path | None = None
    bbox: tuple[float, float, float, float] | None = None
    cell_size: float = 0.005
    years: tuple[int, ...] = ()
    mesh_resolution: float = 0.25
    mesh_extension: float = 0.5
    seed: int = 0
    out_dir: Path = Path("out")
    n_draws: int = 1000
    core_sources: tuple[str, ...] = ("LTMP", "MMP")
    target_source: str = "Catlin"
    n_points: int = 20
    spec: ModelSpec = ModelSpec()

    def require(self, *names):
        for name in names:
            if getattr(self, name) in (None, ()):
                raise ConfigError(f"config key {name!r} is required "
                                  f"for this command")


_PATH_KEYS = ("survey_csv", "classifications_csv", "images_csv",
              "expert_labels_csv", "source_profiles_csv", "reef_polygons",
              "covariate_dir", "classification_log", "out_dir")
_SPEC_FLOAT_KEYS = {f.name for f in fields(ModelSpec)
                    if f.type in ("float", float)}
_SPEC_INT_KEYS = {"newton_max_iter", "max_fn_evals"}
_SPEC_PAIR_KEYS = {"phi_prior", "rw1_prior", "nugget_prior"}


def parse_config(path) -> PipelineConfig:
    """Parse `key = value` lines; relative paths resolve next to the file."""
    path = Path(path)
    base = path.parent
    raw: dict[str, str] = {}
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        raw[key.strip()] = value.strip()

    kwargs: dict = {"base_dir": base}
    spec_kwargs: dict = {}
    for key, value in raw.items():
        if key in _PATH_KEYS:
            kwargs[key] = (base / value).resolve()
        elif key == "bbox":
            parts = [float(v) for v in value.split(",")]
            if len(parts) != 4:
                raise ConfigError("bbox needs four comma-separated numbers")
            kwargs[key] = tuple(parts)
        elif key == "years":
            kwargs[key] = tuple(int(v) for v in value.split(","))
        elif key in ("cell_size", "mesh_resolution", "mesh_extension"):
            kwargs[key] = float(value)
        elif key in ("seed", "n_draws", "n_points"):
            kwargs[key] = int(value)
        elif key == "core_sources":
            kwargs[key] = tuple(v.strip() for v in value.split(","))
        elif key == "target_source":
            kwargs[key] = value
        elif key in _SPEC_FLOAT_KEYS:
            spec_kwargs[key] = float(value)
        elif key in _SPEC_INT_KEYS:
            spec_kwargs[key] = int(value)
        elif key in _SPEC_PAIR_KEYS:
            parts = [float(v) for v in value.split(",")]
            if len(parts) != 2:
                raise ConfigError(f"{key} needs two comma-separated values")
            spec_kwargs[key] = tuple(parts)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if spec_kwargs:
        kwargs["spec"] = replace(ModelSpec(), **spec_kwargs)
    return PipelineConfig(**kwargs)


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Manifest:
    def __init__(self, command: str, config_path, cfg: PipelineConfig,
                 args_repr: dict, out_dir: Path | None = None):
        self.out_dir = out_dir
        self.body = {
            "command": command,
            "config": str(config_path),
            "config_sha256": _sha256(Path(config_path)),
            "seed": cfg.seed,
            "args": args_repr,
            "version": __version__,
            "inputs": {},
            "outputs": [],
        }

    def add_input(self, path: Path | None):
        if path is None or not Path(path).is_file():
            return
        path = Path(path)
        key = str(path)
        if self.out_dir is not None:
            try:
                # pipeline artifacts are named relative to the output
                # directory so reruns into another directory hash equal
                key = f"out:{path.relative_to(self.out_dir)}"
            except ValueError:
                pass
        self.body["inputs"][key] = _sha256(path)

    @property
    def hash(self) -> str:
        canon = json.dumps(
            {k: self.body[k] for k in
             ("command", "config_sha256", "seed", "args", "version",
              "inputs")},
            sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def write(self, out_dir: Path, outputs: list[str]):
        self.body["outputs"] = sorted(outputs)
        self.body["manifest_hash"] = self.hash
        path = out_dir / f"manifest_{self.body['command']}.json"
        path.write_text(json.dumps(self.body, sort_keys=True, indent=2)
                        + "\n")


# ---------------------------------------------------------------------------
# shared loaders
# ---------------------------------------------------------------------------


def _load_raster(cfg: PipelineConfig) -> ingestion.ReferenceRaster:
    """Raster over the configured bbox; without reef geometry every cell
    counts as reef (synthetic worlds have no coastline files)."""
    cfg.require("bbox")
    if cfg.reef_polygons is None:
        raster = ingestion.build_reference_raster(cfg.bbox, cfg.cell_size,
                                                  [])
        return ingestion.ReferenceRaster(
            raster.origin_lon, raster.origin_lat, raster.cell_size,
            raster.n_cols, raster.n_rows,
            np.ones(raster.n_cols * raster.n_rows, dtype=bool))
    rings = ingestion.read_reef_polygons(cfg.reef_polygons)
    return ingestion.build_reference_raster(cfg.bbox, cfg.cell_size, rings)


def _load_layers(cfg: PipelineConfig) -> list[ingestion.CovariateGrid]:
    cfg.require("covariate_dir")
    layers = []
    for path in sorted(Path(cfg.covariate_dir).glob("*.asc")):
        stem = path.stem
        name, _, suffix = stem.rpartition("_")
        if not name:
            raise ConfigError(
                f"{path}: covariate files follow <name>_<year>.asc or "
                f"<name>_static.asc")
        year = None if suffix == "static" else int(suffix)
        layers.append(ingestion.read_ascii_grid(path, name=name, year=year))
    if not layers:
        raise ConfigError(f"no .asc layers found in {cfg.covariate_dir}")
    return layers


def _source_table(cfg: PipelineConfig) -> weighting.SourceTable:
    if cfg.source_profiles_csv is not None:
        return weighting.SourceTable.from_csv(cfg.source_profiles_csv)
    return weighting.default_source_table()


def _image_years(cfg: PipelineConfig) -> dict[str, int]:
    cfg.require("images_csv")
    return {img.media_id: img.year
            for img in read_catalog_csv(cfg.images_csv)}


def _read_accuracy_csv(path: Path) -> dict[str, float]:
    out = {}
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        for row in csv.DictReader(lines):
            out[row["user_id"]] = float(row["w_a"])
    return out


def _observations_with_model_inputs(cfg: PipelineConfig, out_dir: Path):
    """Rebuild ModelData from the aggregated observations artifact."""
    obs_path = out_dir / "observations.csv"
    if not obs_path.is_file():
        raise ConfigError(f"{obs_path} not found; run `aggregate` "
                          f"(or `synth`) first")
    observations = aggregation.read_observations_csv(obs_path)
    if any(o.y_adj is None or o.w_norm is None for o in observations):
        raise ConfigError(f"{obs_path}: observations lack y_adj/w_norm")
    raster = _load_raster(cfg)
    layers = _load_layers(cfg)
    sites = [(o.cell, o.year) for o in observations]
    rows, warnings = ingestion.extract_covariates(sites, layers, raster)
    if warnings:
        raise ConfigError(
            "covariates missing at observation sites:\n  "
            + "\n  ".join(warnings))
    x = ingestion.design_matrix(rows)
    lonlat = np.array([raster.centroid(o.cell) for o in observations])
    data = inference.build_model_data(
        y=np.array([o.y_adj for o in observations]),
        w=np.array([o.w_norm for o in observations]),
        x=x,
        coef_names=ingestion.DESIGN_COLUMNS,
        sites=lonlat,
        years_per_obs=[o.year for o in observations],
        mesh_resolution=cfg.mesh_resolution,
        mesh_extension=cfg.mesh_extension,
        sources=[o.source for o in observations],
        cells=[o.cell for o in observations],
    )
    return data, raster, layers, obs_path


def _write_model_state(path: Path, theta: HyperParams, comment: str):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        for key, val in zip(
                ("log_phi", "log_rw1_prec", "log_nugget_prec", "log_kappa",
                 "log_tau"), theta.to_array()):
            writer.writerow([key, repr(float(val))])


def _read_model_state(path: Path) -> HyperParams:
    if not path.is_file():
        raise ConfigError(f"{path} not found; run `fit` first")
    vals = {}
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        for row in csv.DictReader(lines):
            vals[row["key"]] = float(row["value"])
    return HyperParams(**vals)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(cfg: PipelineConfig, args, manifest: Manifest,
               out_dir: Path) -> list[str]:
    summary = {}
    if cfg.survey_csv is not None:
        manifest.add_input(cfg.survey_csv)
        summary["survey_records"] = len(
            ingestion.read_survey_csv(cfg.survey_csv))
    if cfg.classifications_csv is not None:
        manifest.add_input(cfg.classifications_csv)
        summary["classifications"] = len(
            elicitation.read_classification_csv(cfg.classifications_csv))
    if cfg.reef_polygons is not None:
        manifest.add_input(cfg.reef_polygons)
        summary["reef_rings"] = len(
            ingestion.read_reef_polygons(cfg.reef_polygons))
    if cfg.covariate_dir is not None:
        layers = _load_layers(cfg)
        for path in sorted(Path(cfg.covariate_dir).glob("*.asc")):
            manifest.add_input(path)
        summary["covariate_layers"] = len(layers)
    if cfg.bbox is not None:
        raster = _load_raster(cfg)
        summary["raster_cells"] = raster.n_cols * raster.n_rows
        summary["reef_cells"] = int(raster.reef_mask.sum())
    with open(out_dir / "ingest_summary.csv", "w", newline="") as fh:
        fh.write(f"# manifest_hash={manifest.hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["item", "count"])
        for key in sorted(summary):
            writer.writerow([key, summary[key]])
    return ["ingest_summary.csv"]


def cmd_accuracy(cfg: PipelineConfig, args, manifest: Manifest,
                 out_dir: Path) -> list[str]:
    cfg.require("classifications_csv", "expert_labels_csv")
    manifest.add_input(cfg.classifications_csv)
    manifest.add_input(cfg.expert_labels_csv)
    records = elicitation.read_classification_csv(cfg.classifications_csv)
    expert = read_expert_labels_csv(cfg.expert_labels_csv)
    profiles = elicitation.profiles_from_records(records, expert)
    with open(out_dir / "accuracy.csv", "w", newline="") as fh:
        fh.write(f"# manifest_hash={manifest.hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["user_id", "w_a", "n_validation_images"])
        for user_id in sorted(profiles):
            p = profiles[user_id]
            writer.writerow([user_id, repr(p.w_a),
                             len(p.per_image_counts)])
    return ["accuracy.csv"]


def cmd_weights(cfg: PipelineConfig, args, manifest: Manifest,
                out_dir: Path) -> list[str]:
    table = _source_table(cfg)
    manifest.add_input(cfg.source_profiles_csv)
    if args.source:
        print(f"{table.weight_for(args.source):g}")
        return []
    estimates = []
    if cfg.survey_csv is not None:
        manifest.add_input(cfg.survey_csv)
        estimates += weighting.professional_estimates(
            ingestion.read_survey_csv(cfg.survey_csv), table)
    if cfg.classifications_csv is not None:
        cfg.require("images_csv")
        manifest.add_input(cfg.classifications_csv)
        manifest.add_input(cfg.images_csv)
        accuracy_path = out_dir / "accuracy.csv"
        if not accuracy_path.is_file():
            raise ConfigError(
                f"{accuracy_path} not found; run `accuracy` first")
        accuracies = _read_accuracy_csv(accuracy_path)
        records = elicitation.read_classification_csv(
            cfg.classifications_csv)
        catalog = read_catalog_csv(cfg.images_csv)
        # validation images exist for accuracy scoring, not as survey data
        survey_media = {img.media_id: img.year for img in catalog
                        if not img.validation}
        records = [r for r in records if r.media_id in survey_media]
        years = survey_media
        estimates += weighting.citizen_image_estimates(
            records, accuracies, years, table)
    if not estimates:
        raise ConfigError("no survey or classification inputs configured")
    estimates.sort(key=lambda e: (e.source_id, e.media_id))
    weighting.write_image_estimates_csv(
        out_dir / "image_estimates.csv", estimates,
        comment=f"manifest_hash={manifest.hash}")
    return ["image_estimates.csv"]


def cmd_aggregate(cfg: PipelineConfig, args, manifest: Manifest,
                  out_dir: Path) -> list[str]:
    est_path = out_dir / "image_estimates.csv"
    if not est_path.is_file():
        raise ConfigError(f"{est_path} not found; run `weights` first")
    manifest.add_input(est_path)
    estimates = weighting.read_image_estimates_csv(est_path)
    raster = _load_raster(cfg)
    observations = aggregation.aggregate_cells(estimates, raster)
    observations, delta = aggregation.adjust_to_open_interval(observations)
    observations = aggregation.normalize_weights(observations)
    aggregation.write_observations_csv(
        out_dir / "observations.csv", observations,
        comment=f"manifest_hash={manifest.hash} delta={delta!r}")
    return ["observations.csv"]


def cmd_fit(cfg: PipelineConfig, args, manifest: Manifest,
            out_dir: Path) -> list[str]:
    data, _, _, obs_path = _observations_with_model_inputs(cfg, out_dir)
    manifest.add_input(obs_path)
    result = inference.fit(data, cfg.spec)
    summaries = inference.posterior_summaries(result, n_draws=cfg.n_draws,
                                              seed=cfg.seed)
    comment = f"manifest_hash={manifest.hash}"
    inference.write_fit_report(out_dir / "fit_report.csv", result,
                               summaries, comment=comment)
    _write_model_state(out_dir / "model_state.csv", result.theta, comment)
    from .spde import write_mesh_csv
    write_mesh_csv(out_dir / "mesh_nodes.csv",
                   out_dir / "mesh_triangles.csv", data.mesh)
    return ["fit_report.csv", "model_state.csv", "mesh_nodes.csv",
            "mesh_triangles.csv"]


def cmd_predict(cfg: PipelineConfig, args, manifest: Manifest,
                out_dir: Path) -> list[str]:
    data, raster, layers, obs_path = _observations_with_model_inputs(
        cfg, out_dir)
    manifest.add_input(obs_path)
    state_path = out_dir / "model_state.csv"
    theta = _read_model_state(state_path)
    manifest.add_input(state_path)
    result = inference.fit_at(theta, data, cfg.spec)
    years = tuple(args.years) if args.years else \
        (cfg.years or data.years)
    # cells whose centroid falls outside the mesh hull cannot be projected
    from .spde import mesh_contains
    centroids = np.array([
        raster.centroid(ingestion.CellKey(c, r))
        for r in range(raster.n_rows) for c in range(raster.n_cols)])
    coverable = mesh_contains(data.mesh, centroids)
    hull_warnings = []
    if not coverable.all():
        mask = raster.reef_mask & coverable
        skipped = int(raster.reef_mask.sum() - mask.sum())
        if skipped:
            hull_warnings.append(
                f"{skipped} reef cells outside the mesh hull were skipped")
        raster = ingestion.ReferenceRaster(
            raster.origin_lon, raster.origin_lat, raster.cell_size,
            raster.n_cols, raster.n_rows, mask)
    records, warnings = prediction_mod.predict(
        result, raster, layers, years, n_draws=cfg.n_draws, seed=cfg.seed)
    warnings = hull_warnings + warnings
    comment = f"manifest_hash={manifest.hash}"
    outputs = ["predictions.csv"]
    prediction_mod.write_predictions_csv(out_dir / "predictions.csv",
                                         records, comment=comment)
    for year in years:
        mean_name = f"pred_mean_{year}.asc"
        sd_name = f"pred_sd_{year}.asc"
        prediction_mod.export_surfaces(records, raster, year,
                                       out_dir / mean_name,
                                       out_dir / sd_name, comment=comment)
        outputs += [mean_name, sd_name]
    if warnings:
        with open(out_dir / "predict_warnings.txt", "w") as fh:
            fh.write(f"# manifest_hash={manifest.hash}\n")
            fh.write("\n".join(warnings) + "\n")
        outputs.append("predict_warnings.txt")
    return outputs


def cmd_cv(cfg: PipelineConfig, args, manifest: Manifest,
           out_dir: Path) -> list[str]:
    data, _, _, obs_path = _observations_with_model_inputs(cfg, out_dir)
    manifest.add_input(obs_path)
    results = assessment.run_cv(data, cfg.spec,
                                core_sources=cfg.core_sources,
                                k=args.k, seed=cfg.seed,
                                n_draws=cfg.n_draws)
    comment = f"manifest_hash={manifest.hash}"
    assessment.write_cv_csv(out_dir / "cv_report.csv", results,
                            comment=comment)
    with open(out_dir / "cv_folds.csv", "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["model", "fold", "n_train", "n_test", "rmspe",
                         "coverage95", "corr", "error"])
        for name in sorted(results):
            for d in results[name].per_fold:
                writer.writerow([
                    name, d.fold, d.n_train, d.n_test,
                    "" if d.rmspe is None else f"{d.rmspe:.6g}",
                    "" if d.coverage95 is None else f"{d.coverage95:.4f}",
                    "" if d.corr is None else f"{d.corr:.6g}",
                    d.error or ""])
    return ["cv_report.csv", "cv_folds.csv"]


def cmd_upweight(cfg: PipelineConfig, args, manifest: Manifest,
                 out_dir: Path) -> list[str]:
    data, _, _, obs_path = _observations_with_model_inputs(cfg, out_dir)
    manifest.add_input(obs_path)
    multipliers = tuple(args.multipliers) if args.multipliers else \
        assessment.DEFAULT_MULTIPLIERS
    source = args.source or cfg.target_source
    results = assessment.simulate_upweight(
        data, source, cfg.spec, multipliers=multipliers, seed=cfg.seed,
        n_draws=cfg.n_draws)
    assessment.write_upweight_csv(
        out_dir / "upweight_report.csv", results,
        comment=f"manifest_hash={manifest.hash}")
    return ["upweight_report.csv"]


def cmd_synth(cfg: PipelineConfig, args, manifest: Manifest,
              out_dir: Path) -> list[str]:
    cfg.require("bbox", "years")
    theta = HyperParams(
        log_phi=math.log(400.0), log_rw1_prec=math.log(4.0),
        log_nugget_prec=math.log(25.0), log_kappa=0.634, log_tau=-1.9)
    layout = assessment.SyntheticLayout(
        bbox=cfg.bbox, cell_size=cfg.cell_size, years=cfg.years,
        sources=(
            assessment.SyntheticSource("LTMP", n_cells=8, w_raw=40.0,
                                       region=(0.0, 0.45, 0.0, 0.45)),
            assessment.SyntheticSource("MMP", n_cells=6, w_raw=32.0,
                                       region=(0.1, 0.5, 0.5, 0.95)),
            assessment.SyntheticSource("Catlin", n_cells=30, w_raw=10.0),
            assessment.SyntheticSource("UQ-RSRC", n_cells=12, w_raw=10.0),
        ),
        mesh_resolution=cfg.mesh_resolution,
        mesh_extension=cfg.mesh_extension)
    world = assessment.generate_synthetic(layout, theta, seed=cfg.seed)
    comment = f"manifest_hash={manifest.hash}"
    outputs = []
    for grid in world.layers:
        suffix = "static" if grid.year is None else str(grid.year)
        name = f"{grid.name}_{suffix}.asc"
        ingestion.write_ascii_grid(out_dir / name, grid, comment=comment)
        outputs.append(name)
    observations = [
        aggregation.CellObservation(
            cell=world.data.cells[i],
            year=int(world.data.years[world.data.year_index[i]]),
            source=str(world.data.sources[i]),
            y_bar=float(world.data.y[i]),
            w_raw=float(world.data.w[i]),
            y_adj=float(world.data.y[i]),
            w_norm=float(world.data.w[i]))
        for i in range(world.data.n)
    ]
    aggregation.write_observations_csv(out_dir / "observations.csv",
                                       observations, comment=comment)
    outputs.append("observations.csv")
    with open(out_dir / "truth.csv", "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        for name, val in zip(world.data.coef_names, world.beta_true):
            writer.writerow([f"beta_{name}", repr(float(val))])
        for key, val in zip(
                ("log_phi", "log_rw1_prec", "log_nugget_prec", "log_kappa",
                 "log_tau"), theta.to_array()):
            writer.writerow([key, repr(float(val))])
    outputs.append("truth.csv")
    return outputs


def cmd_serve(cfg: PipelineConfig, args, manifest: Manifest,
              out_dir: Path) -> list[str]:
    cfg.require("images_csv", "expert_labels_csv")
    import uvicorn
    catalog = read_catalog_csv(cfg.images_csv)
    expert = read_expert_labels_csv(cfg.expert_labels_csv)
    store = elicitation.ClassificationStore(
        log_path=cfg.classification_log)
    service = ElicitationService(catalog, expert, store=store,
                                 n_points=cfg.n_points, seed=cfg.seed)
    app = build_app(service)
    uvicorn.run(app, host="127.0.0.1", port=args.port)
    return []


_COMMANDS = {
    "ingest": cmd_ingest,
    "accuracy": cmd_accuracy,
    "weights": cmd_weights,
    "aggregate": cmd_aggregate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "cv": cmd_cv,
    "upweight": cmd_upweight,
    "synth": cmd_synth,
    "serve": cmd_serve,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coralcast",
        description="weighted coral-cover fusion and prediction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None,
                       help="overrides the config seed")
        p.add_argument("--out", default=None,
                       help="overrides the config output directory")
        if name == "cv":
            p.add_argument("--k", type=int, default=10)
        if name == "upweight":
            p.add_argument("--multipliers",
                           type=lambda s: [int(v) for v in s.split(",")],
                           default=None)
            p.add_argument("--source", default=None)
        if name == "weights":
            p.add_argument("--source", default=None,
                           help="print this source's configured weight")
        if name == "predict":
            p.add_argument("--years",
                           type=lambda s: [int(v) for v in s.split(",")],
                           default=None)
        if name == "serve":
            p.add_argument("--port", type=int, default=8000)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=Path(args.out))
    out_dir = cfg.out_dir if cfg.out_dir.is_absolute() else \
        cfg.base_dir / cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    # the output directory is a location, not an input: leaving it out of
    # the manifest keeps reruns into different directories byte-identical
    args_repr = {k: v for k, v in sorted(vars(args).items())
                 if k not in ("command", "config", "out") and v is not None}
    manifest = Manifest(args.command, args.config, cfg, args_repr,
                        out_dir=out_dir)
    try:
        outputs = _COMMANDS[args.command](cfg, args, manifest, out_dir)
    except (ConfigError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FitError, NonFiniteError, NotPositiveDefiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.command != "serve":
        manifest.write(out_dir, outputs)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
