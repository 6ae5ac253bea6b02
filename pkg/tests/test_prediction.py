import numpy as np
import pytest

from conftest import make_world
from coralcast.assessment import SyntheticSource
from coralcast.ingestion import (CellKey, CovariateGrid, ReferenceRaster,
                                 read_ascii_grid)
from coralcast.inference import HyperParams, ModelSpec, fit
from coralcast.prediction import (PredictionRecord, export_surfaces,
                                  interval, predict, predict_rows,
                                  write_predictions_csv)

SPEC = ModelSpec()


class TestInterval:
    def test_plain_arithmetic(self):
        assert interval(0.5, 0.1) == (pytest.approx(0.304),
                                      pytest.approx(0.696))

    def test_zero_sigma_collapses(self):
        assert interval(0.42, 0.0) == (0.42, 0.42)

    def test_lower_clamp(self):
        lo, hi = interval(0.05, 0.1)
        assert lo == 0.0
        assert hi == pytest.approx(0.246)

    def test_upper_clamp(self):
        lo, hi = interval(0.95, 0.1)
        assert hi == 1.0

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            interval(0.5, -0.1)


def _record(col, row, year, q=0.4, sigma=0.05):
    lo, hi = interval(q, sigma)
    return PredictionRecord(cell=CellKey(col, row), lon=0.0, lat=0.0,
                            year=year, q=q, sigma=sigma, lower=lo,
                            upper=hi, pct_lower=lo, pct_upper=hi)


class TestExportSurfaces:
    def _raster(self):
        return ReferenceRaster(150.0, -23.0, 0.1, 3, 3,
                               np.ones(9, dtype=bool))

    def test_value_and_nodata_bookkeeping(self, tmp_path):
        records = [_record(0, 0, 2005), _record(1, 0, 2005),
                   _record(2, 1, 2005), _record(1, 2, 2005)]
        export_surfaces(records, self._raster(), 2005,
                        tmp_path / "mean.asc", tmp_path / "sd.asc")
        grid = read_ascii_grid(tmp_path / "mean.asc")
        assert np.isnan(grid.values).sum() == 5
        assert (~np.isnan(grid.values)).sum() == 4

    def test_roundtrip_within_1e6(self, tmp_path):
        records = [_record(0, 0, 2005, q=0.123456789, sigma=0.0321)]
        export_surfaces(records, self._raster(), 2005,
                        tmp_path / "mean.asc", tmp_path / "sd.asc")
        mean = read_ascii_grid(tmp_path / "mean.asc")
        sd = read_ascii_grid(tmp_path / "sd.asc")
        assert mean.values[0] == pytest.approx(0.123456789, abs=1e-6)
        assert sd.values[0] == pytest.approx(0.0321, abs=1e-6)

    def test_sd_surface_positive_where_predicted(self, tmp_path):
        records = [_record(c, r, 2005, sigma=0.01 + 0.01 * c)
                   for c in range(3) for r in range(3)]
        export_surfaces(records, self._raster(), 2005,
                        tmp_path / "mean.asc", tmp_path / "sd.asc")
        sd = read_ascii_grid(tmp_path / "sd.asc")
        assert (sd.values[~np.isnan(sd.values)] > 0).all()

    def test_missing_year_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_surfaces([_record(0, 0, 2005)], self._raster(), 2009,
                            tmp_path / "m.asc", tmp_path / "s.asc")


class TestPredictRows:
    def test_deterministic_per_seed(self):
        world = make_world(seed=21)
        res = fit(world.data, SPEC)
        data = world.data
        idx = np.arange(5)
        a = predict_rows(res, data.x[idx], data.a[idx],
                         data.year_index[idx], n_draws=400, seed=3)
        b = predict_rows(res, data.x[idx], data.a[idx],
                         data.year_index[idx], n_draws=400, seed=3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_high_weight_tiny_nugget_pins_prediction(self):
        # nearly noise-free world; upweight one observation hard and the
        # fitted surface must pass through it
        world = make_world(
            seed=22, n_cells=12,
            theta=HyperParams(log_phi=np.log(3000.0),
                              log_rw1_prec=np.log(8.0),
                              log_nugget_prec=np.log(2000.0),
                              log_kappa=0.2, log_tau=-0.5))
        data = world.data
        w = data.w.copy()
        w[0] *= 100.0
        res = fit(data.with_weights(w), SPEC)
        q, sigma, _, _ = predict_rows(res, data.x[:1], data.a[:1],
                                      data.year_index[:1], n_draws=800,
                                      seed=1)
        assert abs(q[0] - data.y[0]) < 0.02

    def test_sigma_grows_with_distance_from_data(self):
        # all data in the west half; compare a well-observed west cell with
        # a bare east cell
        world = make_world(
            seed=23, bbox=(150.0, -23.0, 152.0, -22.0), cell_size=0.1,
            sources=(SyntheticSource("A", n_cells=15, w_raw=2.0,
                                     region=(0.0, 0.35, 0.0, 1.0)),),
            mesh_resolution=0.5, mesh_extension=1.6)
        data = world.data
        res = fit(data, SPEC)
        near_site = data.sites[0]
        far_site = np.array([151.9, -22.5])
        from coralcast.spde import project
        a = project(data.mesh, np.vstack([near_site, far_site])).a
        x = np.vstack([data.x[0], data.x[0]])
        yidx = np.array([data.year_index[0], data.year_index[0]])
        _, sigma, _, _ = predict_rows(res, x, a, yidx, n_draws=1500, seed=2)
        assert sigma[1] > sigma[0]


class TestDataEffects:
    def test_prediction_at_mesh_node_uses_single_projection_weight(self):
        world = make_world(seed=26)
        res = fit(world.data, SPEC)
        mesh = world.data.mesh
        node = 4
        site = mesh.nodes[node][None, :]
        from coralcast.spde import project
        a = project(mesh, site).a
        row = a.toarray()[0]
        assert (row > 0).sum() == 1 and row[node] == pytest.approx(1.0)
        q, sigma, _, _ = predict_rows(res, world.data.x[:1], a,
                                      world.data.year_index[:1],
                                      n_draws=500, seed=8)
        # the same node draws pushed through the inverse link by hand
        from coralcast.inference import sample_latent, _Objective
        from scipy.special import expit
        obj = _Objective(res.data, res.spec)
        draws = sample_latent(res, 500, 8)
        eta = (world.data.x[0] @ draws[obj.sl_beta]
               + draws[obj.sl_u][node]
               + obj.b[world.data.year_index[0]] @ draws[obj.sl_z])
        assert q[0] == pytest.approx(float(expit(eta).mean()), abs=1e-12)

    def test_new_data_in_empty_region_moves_prediction_there(self):
        import scipy.sparse as sp
        from dataclasses import replace
        from coralcast.spde import project
        world = make_world(
            seed=27, bbox=(150.0, -23.0, 152.0, -22.0), cell_size=0.1,
            sources=(SyntheticSource("A", n_cells=12, w_raw=2.0,
                                     region=(0.0, 0.35, 0.0, 1.0)),),
            mesh_resolution=0.5, mesh_extension=1.6)
        data = world.data
        east = np.array([[151.8, -22.5]])
        a_east = project(data.mesh, east).a
        augmented = replace(
            data,
            y=np.append(data.y, 0.72),
            w=np.append(data.w, 1.0),
            x=np.vstack([data.x, data.x[0]]),
            a=sp.vstack([data.a, a_east]).tocsr(),
            year_index=np.append(data.year_index, data.year_index[0]),
            sites=np.vstack([data.sites, east]),
            sources=None, cells=None)
        fit_before = fit(data, SPEC)
        fit_after = fit(augmented, SPEC)
        args = (data.x[:1], a_east, data.year_index[:1])
        q0, s0, _, _ = predict_rows(fit_before, *args, n_draws=1500, seed=9)
        q1, s1, _, _ = predict_rows(fit_after, *args, n_draws=1500, seed=9)
        assert q1[0] != pytest.approx(q0[0], abs=1e-6)
        assert s1[0] != pytest.approx(s0[0], abs=1e-6)


class TestPredictGrid:
    def _setup(self):
        world = make_world(seed=24, n_cells=12, mesh_resolution=0.6)
        res = fit(world.data, SPEC)
        raster = world.raster
        n = raster.n_cols * raster.n_rows
        years = world.data.years

        def flat(name, value, year=None):
            return CovariateGrid(name, raster.origin_lon, raster.origin_lat,
                                 raster.cell_size, raster.n_cols,
                                 raster.n_rows, np.full(n, value), year)

        layers = []
        for year in years:
            layers += [flat("cyclone", 0.0, year),
                       flat("bleaching", 0.0, year),
                       flat("sst_anomaly", 0.1, year)]
        layers += [flat("shelf", 2.0), flat("no_take", 0.0)]
        return world, res, raster, layers

    def test_records_cover_masked_cells_with_valid_intervals(self):
        world, res, raster, layers = self._setup()
        mask = np.zeros(raster.n_cols * raster.n_rows, dtype=bool)
        mask[:6] = True
        small = ReferenceRaster(raster.origin_lon, raster.origin_lat,
                                raster.cell_size, raster.n_cols,
                                raster.n_rows, mask)
        records, warnings = predict(res, small, layers,
                                    [world.data.years[0]], n_draws=300,
                                    seed=5)
        assert len(records) == 6 and not warnings
        for r in records:
            assert 0.0 <= r.lower <= r.q <= r.upper <= 1.0
            assert r.sigma > 0

    def test_unfitted_year_rejected(self):
        world, res, raster, layers = self._setup()
        with pytest.raises(ValueError):
            predict(res, world.raster, layers, [1990])

    def test_nodata_cells_skipped_with_warning(self):
        world, res, raster, layers = self._setup()
        n = raster.n_cols * raster.n_rows
        sst = np.full(n, 0.1)
        sst[0] = np.nan
        year = world.data.years[0]
        patched = [g for g in layers
                   if not (g.name == "sst_anomaly" and g.year == year)]
        patched.append(CovariateGrid(
            "sst_anomaly", raster.origin_lon, raster.origin_lat,
            raster.cell_size, raster.n_cols, raster.n_rows, sst, year))
        mask = np.zeros(n, dtype=bool)
        mask[:4] = True
        small = ReferenceRaster(raster.origin_lon, raster.origin_lat,
                                raster.cell_size, raster.n_cols,
                                raster.n_rows, mask)
        records, warnings = predict(res, small, patched, [year],
                                    n_draws=200, seed=6)
        assert len(records) == 3 and len(warnings) == 1

    def test_csv_export(self, tmp_path):
        world, res, raster, layers = self._setup()
        mask = np.zeros(raster.n_cols * raster.n_rows, dtype=bool)
        mask[:3] = True
        small = ReferenceRaster(raster.origin_lon, raster.origin_lat,
                                raster.cell_size, raster.n_cols,
                                raster.n_rows, mask)
        records, _ = predict(res, small, layers, [world.data.years[0]],
                             n_draws=200, seed=7)
        path = tmp_path / "pred.csv"
        write_predictions_csv(path, records, comment="manifest_hash=q")
        lines = path.read_text().splitlines()
        assert lines[1] == \
            "cell_col,cell_row,lon,lat,year,q,sigma,lower,upper"
        assert len(lines) == 2 + len(records)
