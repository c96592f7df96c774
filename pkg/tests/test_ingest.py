import numpy as np
import pytest

from ordlattice.errors import IngestError
from ordlattice.ingest import ingest, write_dataset_csv
from ordlattice.lattice import build_queen_adjacency, make_grid
from ordlattice.model import Cutoffs
from ordlattice.synthetic import TruthSpec, simulate_dataset

CUTOFFS = Cutoffs(5)


def write_toy(tmp_path, rows_data, header="site_id,week,y,x1"):
    data = tmp_path / "data.csv"
    data.write_text(header + "\n" + "\n".join(rows_data) + "\n")
    sites = tmp_path / "sites.csv"
    sites.write_text("site_id,row,col\n1,0,0\n2,0,1\n")
    return data, sites


class TestIngestValidation:
    def test_toy_file_standardization(self, tmp_path):
        rows = [
            "1,1,0,1.0", "1,2,1,2.0", "1,3,2,3.0",
            "2,1,3,4.0", "2,2,4,5.0", "2,3,5,6.0",
        ]
        data, sites = write_toy(tmp_path, rows)
        out = ingest(data, sites, CUTOFFS)
        assert len(out.panels) == 2
        assert out.panels[0].T == 3
        stacked = np.concatenate([p.x[:, 1] for p in out.panels])
        assert abs(stacked.mean()) < 1e-12
        assert stacked.std(ddof=0) == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(out.panels[0].y, [0, 1, 2])

    def test_duplicate_row_named(self, tmp_path):
        rows = [
            "1,1,0,1.0", "1,1,1,2.0", "1,3,2,3.0",
            "2,1,3,4.0", "2,2,4,5.0", "2,3,5,6.0",
        ]
        data, sites = write_toy(tmp_path, rows)
        with pytest.raises(IngestError, match="duplicate .site, week.*site 1 week 1"):
            ingest(data, sites, CUTOFFS)

    def test_noncontiguous_weeks(self, tmp_path):
        rows = [
            "1,1,0,1.0", "1,2,1,2.0", "1,4,2,3.0",
            "2,1,3,4.0", "2,2,4,5.0", "2,4,5,6.0",
        ]
        data, sites = write_toy(tmp_path, rows)
        with pytest.raises(IngestError, match="contiguous"):
            ingest(data, sites, CUTOFFS)

    def test_missing_cell(self, tmp_path):
        rows = [
            "1,1,0,1.0", "1,2,1,2.0", "1,3,2,3.0",
            "2,1,3,4.0", "2,3,5,6.0",
        ]
        data, sites = write_toy(tmp_path, rows)
        with pytest.raises(IngestError, match="missing"):
            ingest(data, sites, CUTOFFS)

    def test_out_of_range_level(self, tmp_path):
        rows = [
            "1,1,0,1.0", "1,2,6,2.0", "1,3,2,3.0",
            "2,1,3,4.0", "2,2,4,5.0", "2,3,5,6.0",
        ]
        data, sites = write_toy(tmp_path, rows)
        with pytest.raises(IngestError, match="outside 0..5"):
            ingest(data, sites, CUTOFFS)

    def test_zero_variance_covariate(self, tmp_path):
        rows = [
            "1,1,0,2.0", "1,2,1,2.0", "1,3,2,2.0",
            "2,1,3,2.0", "2,2,4,2.0", "2,3,5,2.0",
        ]
        data, sites = write_toy(tmp_path, rows)
        with pytest.raises(IngestError, match="zero-variance.*x1"):
            ingest(data, sites, CUTOFFS)

    def test_training_window_only_standardization(self, tmp_path):
        # holdout weeks must not influence the standardization constants
        rows = [
            "1,1,0,1.0", "1,2,1,2.0", "1,3,2,100.0",
            "2,1,3,3.0", "2,2,4,4.0", "2,3,5,200.0",
        ]
        data, sites = write_toy(tmp_path, rows)
        out = ingest(data, sites, CUTOFFS, t_train=2)
        train_raw = np.array([1.0, 2.0, 3.0, 4.0])
        assert out.x_mean[0] == pytest.approx(train_raw.mean())
        assert out.x_sd[0] == pytest.approx(train_raw.std(ddof=0))
        assert out.panels[0].T == 2
        assert out.holdout_y.tolist() == [[2], [5]]
        # holdout design rows use the training constants
        assert out.x_std_full[0, 2, 1] == pytest.approx(
            (100.0 - train_raw.mean()) / train_raw.std(ddof=0)
        )


class TestRoundTrip:
    def test_simulate_emit_ingest_round_trip(self, tmp_path, rng):
        graph = build_queen_adjacency(make_grid(2, 3))
        data = simulate_dataset(
            graph, 24, 2, CUTOFFS, TruthSpec.default(2), rng, t_train=20
        )
        grid = make_grid(2, 3)
        write_dataset_csv(tmp_path / "d.csv", tmp_path / "s.csv", grid, data.y, data.x_raw)
        back = ingest(tmp_path / "d.csv", tmp_path / "s.csv", CUTOFFS, t_train=20)
        for panel, original in zip(back.panels, data.panels):
            assert np.array_equal(panel.y, original.y)
            assert np.max(np.abs(panel.x - original.x)) < 1e-12
        assert np.array_equal(back.y_full, data.y)
        assert [g.site_id for g in back.grid] == [g.site_id for g in grid]
