"""BIC values, scan grids, winner selection, and the CSV table."""

import csv

import numpy as np
import pytest

from tmclust.em import FitOptions
from tmclust.mlnd import MlndParams, sample
from tmclust.parsimony import ScaleModel
from tmclust.selection import ScanGrid, ScanRow, _prefer, bic, scan, write_bic_table


def three_group_batch(rng, n=60, dims=(2, 2), gap=5.0):
    scales = tuple(np.eye(m) for m in dims)
    labels = np.repeat(np.arange(3), n // 3)
    batch = np.stack(
        [
            sample(MlndParams(mean=np.full(dims, gap * k), scales=scales), rng).array
            for k in labels
        ]
    )
    return batch, labels


def test_bic_fixture():
    assert bic(-100.0, 10, 50) == pytest.approx(-239.12023005428146, rel=1e-15)


def test_bic_monotone_in_loglik_and_rho():
    assert bic(-90.0, 10, 50) > bic(-100.0, 10, 50)
    assert bic(-100.0, 5, 50) > bic(-100.0, 10, 50)
    assert bic(-100.0, 10, 1) == -200.0  # log(1) = 0


def test_bic_rejects_bad_input():
    with pytest.raises(ValueError):
        bic(np.nan, 10, 50)
    with pytest.raises(ValueError):
        bic(-1.0, 10, 0)


def test_grid_validation():
    with pytest.raises(ValueError):
        ScanGrid(groups=(), spec_candidates=((ScaleModel.VVV,),))
    with pytest.raises(ValueError):
        ScanGrid(groups=(0,), spec_candidates=((ScaleModel.VVV,),))
    with pytest.raises(ValueError):
        ScanGrid(groups=(1,), spec_candidates=((ScaleModel.VVV,), ()))


def test_grid_cell_order():
    grid = ScanGrid(
        groups=(2, 3),
        spec_candidates=((ScaleModel.VVV, ScaleModel.GPCM_EEE), (ScaleModel.VVV,)),
    )
    cells = list(grid.cells())
    assert [g for g, _ in cells] == [2, 2, 3, 3]
    assert cells[0][1] == (ScaleModel.VVV, ScaleModel.VVV)
    assert cells[1][1] == (ScaleModel.GPCM_EEE, ScaleModel.VVV)


def test_scan_selects_true_group_count(rng):
    batch, _ = three_group_batch(rng)
    grid = ScanGrid(
        groups=(2, 3, 4),
        spec_candidates=((ScaleModel.VVV,), (ScaleModel.VVV,)),
        options=FitOptions(seed=1),
    )
    result = scan(batch, grid)
    assert result.best is not None
    assert result.best.g == 3
    assert len(result.rows) == 3


def test_scan_single_cell(rng):
    batch, _ = three_group_batch(rng, n=30)
    grid = ScanGrid(groups=(1,), spec_candidates=((ScaleModel.VVV,), (ScaleModel.VVV,)))
    result = scan(batch, grid)
    assert len(result.rows) == 1
    assert result.best is result.rows[0]
    assert result.rows[0].converged


def test_scan_isolates_failing_cells(rng):
    batch, _ = three_group_batch(rng, n=12)
    grid = ScanGrid(
        groups=(1, 50), spec_candidates=((ScaleModel.VVV,), (ScaleModel.VVV,))
    )
    result = scan(batch, grid)
    bad = result.rows[1]
    assert bad.error is not None
    assert bad.loglik is None and bad.bic is None
    assert bad.rho > 0  # parameter count is still known
    assert result.best is result.rows[0]


def test_scan_thread_count_does_not_change_results(rng):
    batch, _ = three_group_batch(rng)
    grid = ScanGrid(
        groups=(2, 3),
        spec_candidates=((ScaleModel.VVV, ScaleModel.GPCM_EEE), (ScaleModel.VVV,)),
        options=FitOptions(seed=3),
    )
    serial = scan(batch, grid, threads=1)
    pooled = scan(batch, grid, threads=2)
    for a, b in zip(serial.rows, pooled.rows):
        assert (a.g, a.specs, a.loglik, a.bic, a.converged) == (
            b.g, b.specs, b.loglik, b.bic, b.converged,
        )


def test_scan_keep_models(rng):
    batch, _ = three_group_batch(rng, n=30)
    grid = ScanGrid(groups=(3,), spec_candidates=((ScaleModel.VVV,), (ScaleModel.VVV,)))
    with_models = scan(batch, grid, keep_models=True)
    without = scan(batch, grid)
    assert with_models.rows[0].model is not None
    assert with_models.rows[0].report is not None
    assert without.rows[0].model is None


def _row(g, rho, value):
    return ScanRow(
        g=g, specs=(ScaleModel.VVV,), loglik=0.0, rho=rho, bic=value,
        converged=True, n_singular_events=0,
    )


def test_tie_breaking_prefers_fewer_params_then_fewer_groups():
    assert _prefer(_row(2, 10, -100.0), _row(3, 12, -100.0 - 5e-10)) is True
    assert _prefer(_row(2, 12, -100.0), _row(3, 10, -100.0)) is False
    assert _prefer(_row(2, 10, -100.0), _row(3, 10, -100.0)) is True
    # a real gap beats any tie rule
    assert _prefer(_row(5, 99, -99.0), _row(2, 10, -100.0)) is True


def test_write_bic_table_round_trips(rng, tmp_path):
    batch, _ = three_group_batch(rng, n=30)
    grid = ScanGrid(
        groups=(1, 2),
        spec_candidates=((ScaleModel.VVV,), (ScaleModel.GPCM_EEE,)),
        options=FitOptions(seed=2),
    )
    result = scan(batch, grid)
    path = tmp_path / "table.csv"
    write_bic_table(result, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert set(rows[0]) == {
        "G", "spec_d1", "spec_d2", "loglik", "rho", "bic", "converged", "singular_events",
    }
    for parsed, row in zip(rows, result.rows):
        assert int(parsed["G"]) == row.g
        assert parsed["spec_d2"] == "EEE"
        assert float(parsed["loglik"]) == row.loglik
        assert float(parsed["bic"]) == row.bic
