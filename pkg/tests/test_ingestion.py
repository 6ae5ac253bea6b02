import math

import numpy as np
import pytest

from coralcast.ingestion import (CellKey, CovariateGrid, ReferenceRaster,
                                 build_reference_raster, cell_of,
                                 design_matrix, extract_covariates,
                                 generate_prediction_sites,
                                 read_ascii_grid, read_reef_polygons,
                                 read_survey_csv, resample_covariate,
                                 write_ascii_grid, SiteCovariates,
                                 DESIGN_COLUMNS)


def _raster(n_cols=3, n_rows=3, mask=None, origin=(150.0, -23.0),
            cell_size=0.005):
    if mask is None:
        mask = np.ones(n_cols * n_rows, dtype=bool)
    return ReferenceRaster(origin[0], origin[1], cell_size, n_cols, n_rows,
                           mask)


def _grid(name, values, n_cols, n_rows, origin=(150.0, -23.0),
          cell_size=0.005, year=None):
    return CovariateGrid(name, origin[0], origin[1], cell_size, n_cols,
                         n_rows, np.asarray(values, dtype=float), year)


class TestBuildReferenceRaster:
    def test_bbox_dimensions_round_up(self):
        # 0.015 x 0.010 dd at 0.005 -> 3 cols x 2 rows
        r = build_reference_raster((150.0, -23.0, 150.015, -22.990), 0.005,
                                   [])
        assert (r.n_cols, r.n_rows) == (3, 2)

    def test_no_polygons_means_empty_mask(self):
        r = build_reference_raster((150.0, -23.0, 150.015, -22.985), 0.005,
                                   [])
        assert not r.reef_mask.any()

    def test_polygon_covering_one_cell_masks_exactly_it(self):
        # polygon congruent with the centre cell of a 3x3 raster
        ring = [(150.005, -22.995), (150.010, -22.995),
                (150.010, -22.990), (150.005, -22.990)]
        r = build_reference_raster((150.0, -23.0, 150.015, -22.985), 0.005,
                                   [ring])
        assert r.reef_mask.sum() == 1
        assert r.is_reef(CellKey(1, 1))

    def test_degenerate_bbox_rejected(self):
        with pytest.raises(ValueError):
            build_reference_raster((150.0, -23.0, 150.0, -22.9), 0.005, [])

    def test_nonpositive_cell_size_rejected(self):
        with pytest.raises(ValueError):
            build_reference_raster((150.0, -23.0, 150.1, -22.9), 0.0, [])


class TestCellOf:
    def test_origin_maps_to_first_cell(self):
        assert cell_of(150.0, -23.0, _raster()) == CellKey(0, 0)

    def test_interior_point(self):
        # offsets (0.0074, 0.0051) at size 0.005 -> cell (1, 1)
        assert cell_of(150.0074, -23.0 + 0.0051, _raster()) == CellKey(1, 1)

    def test_shared_edge_goes_to_larger_index(self):
        assert cell_of(150.005, -22.999, _raster()).col == 1

    def test_outside_extent_rejected(self):
        with pytest.raises(ValueError):
            cell_of(149.0, -23.0, _raster())


class TestCentroids:
    def test_first_cell_centroid(self):
        r = _raster()
        assert r.centroid(CellKey(0, 0)) == (
            pytest.approx(150.0025), pytest.approx(-22.9975))

    def test_prediction_sites_cover_masked_cells(self):
        mask = np.zeros(9, dtype=bool)
        mask[[0, 2, 4, 7]] = True
        sites = generate_prediction_sites(_raster(mask=mask))
        assert len(sites) == 4

    def test_no_masked_cells_gives_empty_list(self):
        mask = np.zeros(9, dtype=bool)
        assert generate_prediction_sites(_raster(mask=mask)) == []

    def test_roundtrip_every_site_maps_to_its_cell(self):
        r = _raster(n_cols=7, n_rows=5,
                    mask=np.ones(35, dtype=bool), cell_size=0.013)
        for cell, lon, lat in generate_prediction_sites(r):
            assert cell_of(lon, lat, r) == cell


class TestResample:
    def test_identity_when_grids_align(self):
        vals = np.arange(9.0)
        src = _grid("x", vals, 3, 3)
        out = resample_covariate(src, _raster())
        np.testing.assert_array_equal(out.values, vals)

    def test_coarse_source_replicates_into_fine_cells(self):
        src = _grid("x", [1.0, 2.0, 3.0, 4.0], 2, 2, cell_size=0.01)
        dst = _raster(n_cols=4, n_rows=4, mask=np.ones(16, bool))
        out = resample_covariate(src, dst)
        expected = np.array([
            1, 1, 2, 2,
            1, 1, 2, 2,
            3, 3, 4, 4,
            3, 3, 4, 4,
        ], dtype=float)
        np.testing.assert_array_equal(out.values, expected)

    def test_nodata_propagates(self):
        src = _grid("x", [1.0, np.nan, 3.0, 4.0], 2, 2, cell_size=0.01)
        dst = _raster(n_cols=4, n_rows=4, mask=np.ones(16, bool))
        out = resample_covariate(src, dst)
        assert np.isnan(out.values.reshape(4, 4)[0, 2])

    def test_disjoint_grids_rejected(self):
        src = _grid("x", [1.0], 1, 1, origin=(10.0, 10.0))
        with pytest.raises(ValueError):
            resample_covariate(src, _raster())


def _layers(n_cols=3, n_rows=3, sst_values=None):
    ones = np.ones(n_cols * n_rows)
    sst = np.full(n_cols * n_rows, 0.4) if sst_values is None else sst_values
    return [
        _grid("cyclone", ones, n_cols, n_rows, year=2002),
        _grid("bleaching", 0 * ones, n_cols, n_rows, year=2002),
        _grid("sst_anomaly", sst, n_cols, n_rows, year=2002),
        _grid("shelf", 2 * ones, n_cols, n_rows),
        _grid("no_take", ones, n_cols, n_rows),
    ]


class TestExtractCovariates:
    def test_direct_lookup(self):
        rows, warns = extract_covariates([(CellKey(1, 1), 2002)], _layers(),
                                         _raster())
        assert warns == []
        row = rows[0]
        assert (row.cyclone, row.bleaching, row.sst_anomaly, row.shelf,
                row.no_take) == (1, 0, pytest.approx(0.4), 2, 1)

    def test_static_layer_serves_any_year(self):
        layers = _layers() + [
            _grid("cyclone", np.ones(9), 3, 3, year=2003),
            _grid("bleaching", np.zeros(9), 3, 3, year=2003),
            _grid("sst_anomaly", np.full(9, 0.1), 3, 3, year=2003),
        ]
        rows, _ = extract_covariates(
            [(CellKey(0, 0), 2002), (CellKey(0, 0), 2003)], layers,
            _raster())
        assert rows[0].shelf == rows[1].shelf == 2

    def test_nodata_site_excluded_with_warning(self):
        sst = np.full(9, 0.4)
        sst[4] = np.nan
        rows, warns = extract_covariates(
            [(CellKey(1, 1), 2002), (CellKey(0, 0), 2002)],
            _layers(sst_values=sst), _raster())
        assert len(rows) == 1 and len(warns) == 1
        assert "sst_anomaly" in warns[0]

    def test_missing_layer_year_raises(self):
        with pytest.raises(KeyError):
            extract_covariates([(CellKey(0, 0), 1999)], _layers(), _raster())

    def test_row_plus_warning_count_equals_site_count(self):
        sst = np.full(9, 0.4)
        sst[[0, 4]] = np.nan
        sites = [(CellKey(c, r), 2002) for c in range(3) for r in range(3)]
        rows, warns = extract_covariates(sites, _layers(sst_values=sst),
                                         _raster())
        assert len(rows) + len(warns) == len(sites)


class TestDesignMatrix:
    def test_shelf_indicator_encoding(self):
        rows = [
            SiteCovariates(CellKey(0, 0), 2002, 1, 0, 0.4, 1, 1),
            SiteCovariates(CellKey(0, 0), 2002, 0, 1, -0.2, 2, 0),
            SiteCovariates(CellKey(0, 0), 2002, 0, 0, 0.0, 3, 0),
        ]
        x = design_matrix(rows)
        assert x.shape == (3, len(DESIGN_COLUMNS))
        np.testing.assert_array_equal(x[:, 0], 1.0)          # intercept
        np.testing.assert_array_equal(x[0], [1, 1, 0, 0.4, 0, 0, 1])
        np.testing.assert_array_equal(x[1], [1, 0, 1, -0.2, 1, 0, 0])
        np.testing.assert_array_equal(x[2], [1, 0, 0, 0.0, 0, 1, 0])

    def test_invalid_codes_rejected(self):
        with pytest.raises(ValueError):
            SiteCovariates(CellKey(0, 0), 2002, 2, 0, 0.0, 1, 0)
        with pytest.raises(ValueError):
            SiteCovariates(CellKey(0, 0), 2002, 0, 0, 0.0, 4, 0)


class TestFileFormats:
    def test_ascii_grid_roundtrip(self, tmp_path):
        grid = _grid("x", [0.1, 0.2, np.nan, 0.437251], 2, 2)
        path = tmp_path / "x_static.asc"
        write_ascii_grid(path, grid, comment="manifest_hash=abc")
        back = read_ascii_grid(path, name="x")
        assert back.n_cols == 2 and back.n_rows == 2
        np.testing.assert_allclose(back.values[[0, 1, 3]],
                                   grid.values[[0, 1, 3]], rtol=1e-9)
        assert np.isnan(back.values[2])

    def test_ascii_grid_row_order_is_north_first(self, tmp_path):
        # internal layout is south-west origin; files store north row first
        grid = _grid("x", [1.0, 2.0, 3.0, 4.0], 2, 2)
        path = tmp_path / "g.asc"
        write_ascii_grid(path, grid)
        lines = path.read_text().splitlines()
        assert lines[6].split() == ["3", "4"]
        assert lines[7].split() == ["1", "2"]

    def test_survey_csv(self, tmp_path):
        path = tmp_path / "survey.csv"
        path.write_text(
            "source,record_id,lon,lat,year,coral_cover,image_extent_m2,"
            "n_points,n_images\n"
            "LTMP,r1,150.01,-22.99,2004,0.35,0.2,5,40\n"
        )
        recs = read_survey_csv(path)
        assert recs[0].source == "LTMP"
        assert recs[0].coral_cover == pytest.approx(0.35)

    def test_survey_csv_rejects_cover_outside_unit_interval(self, tmp_path):
        path = tmp_path / "survey.csv"
        path.write_text(
            "source,record_id,lon,lat,year,coral_cover,image_extent_m2,"
            "n_points,n_images\n"
            "LTMP,r1,150.01,-22.99,2004,1.35,0.2,5,40\n"
        )
        with pytest.raises(ValueError):
            read_survey_csv(path)

    def test_reef_polygons(self, tmp_path):
        path = tmp_path / "reefs.txt"
        path.write_text(
            "a,150.0,-23.0\na,150.1,-23.0\na,150.1,-22.9\n"
            "b,151.0,-23.0\nb,151.1,-23.0\nb,151.0,-22.9\n"
        )
        rings = read_reef_polygons(path)
        assert len(rings) == 2
        assert rings[0][0] == (150.0, -23.0)
