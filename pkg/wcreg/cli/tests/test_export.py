"""Tests for grid export."""

import numpy as np
import pytest
from astropy.table import Table

from wcreg.certify import BoundsReport
from wcreg.cli import MAX_GRID_POINTS, export_grid
from wcreg.models import Box, ModelSpec, build_model
from wcreg.utils.exceptions import ConfigError


def bowl(x):
    return float(x[0] ** 2 + 0.5 * x[1])


class Test_export_grid(object):
    def setup_method(self):
        self.model = build_model(ModelSpec('mlp', n_inputs=2, widths=(3,)))
        self.theta = self.model.init_params(0)
        self.box = Box([-1.0, 0.0], [1.0, 2.0])

    def test_row_count_and_columns(self):
        table = export_grid((self.model, self.theta), bowl, self.box, resolution=3)
        assert len(table) == 9
        assert table.colnames == ['x1', 'x2', 'f', 'f_hat', 'err', 'lower', 'upper']

    def test_values_match_direct_evaluation(self):
        bounds = BoundsReport(form='const-asym', wce=0.5, const_lower=0.25,
                              const_upper=0.5, box=self.box)
        table = export_grid((self.model, self.theta), bowl, self.box, resolution=4,
                            bounds=bounds)
        for row in table:
            x = np.array([row['x1'], row['x2']])
            f_hat = self.model.predict(self.theta, x)
            errStr = f"Row at {x}: f_hat {row['f_hat']}, direct {f_hat}."
            assert np.isclose(row['f_hat'], f_hat, rtol=1e-12, atol=1e-14), errStr
            assert row['f'] == bowl(x) and np.isclose(row['err'], row['f'] - row['f_hat'])
            assert np.isclose(row['lower'], row['f_hat'] - 0.25)
            assert np.isclose(row['upper'], row['f_hat'] + 0.5)

    def test_without_target_or_bounds(self):
        table = export_grid((self.model, self.theta), None, self.box, resolution=2)
        assert np.all(np.isnan(table['f'])) and np.all(np.isnan(table['lower']))
        assert np.all(np.isfinite(table['f_hat']))

    @pytest.mark.parametrize('resolution', [1, 0, 4000])
    def test_rejected_resolution(self, resolution):
        assert 4000 ** 2 > MAX_GRID_POINTS
        with pytest.raises(ConfigError):
            export_grid((self.model, self.theta), bowl, self.box, resolution=resolution)

    def test_frozen_dimension_not_counted(self):
        box = Box([-1.0, 1.0], [1.0, 1.0])
        table = export_grid((self.model, self.theta), bowl, box, resolution=5)
        assert len(table) == 5 and np.all(table['x2'] == 1.0)

    def test_needs_a_box(self):
        with pytest.raises(ConfigError):
            export_grid((self.model, self.theta), bowl)

    def test_csv(self, tmp_path):
        path = str(tmp_path / 'grid.csv')
        export_grid((self.model, self.theta), bowl, self.box, resolution=3, path=path)
        back = Table.read(path, format='ascii.csv')
        assert len(back) == 9 and back.colnames[:3] == ['x1', 'x2', 'f']
