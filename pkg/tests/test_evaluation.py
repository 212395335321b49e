import csv
import json

import numpy as np
import pytest

from chshml.evaluation import (
    SLICE_1,
    SLICE_2,
    SLICE_FULL8,
    SLICES,
    SliceSpec,
    as_classifier,
    dataset_metrics,
    full_report,
    simplex_region,
    slice_accuracy,
    slice_grid,
    spread_test,
    uniform_region,
    volume_curve,
    volume_ratio,
    write_report_json,
    write_slice_csv,
    write_slice_json,
    write_volume_csv,
)
from chshml.geometry import tlm_margin
from chshml.oracles import get_oracle, local_oracle, tlm_oracle
from chshml.sampling import sample_uniform


def always_quantum(X):
    return np.ones(len(np.atleast_2d(X)), dtype=bool)


class TestSpread:
    @pytest.mark.parametrize("sigma", [1e-3, 1e-2])
    def test_oracle_scores_high(self, sigma):
        assert spread_test(tlm_oracle, sigma=sigma, n=2000, rng=1) >= 0.99

    def test_constant_model_scores_half(self):
        assert spread_test(always_quantum, sigma=1e-2, n=4000, rng=2) == pytest.approx(0.5, abs=0.03)


class TestSlices:
    def test_bases_orthonormal(self):
        for spec in SLICES.values():
            assert spec.e1 @ spec.e2 == pytest.approx(0, abs=1e-12)
            assert np.linalg.norm(spec.e1) == pytest.approx(1)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SliceSpec("bad", np.zeros(4), np.eye(4)[0], np.ones(4) / 2)
        with pytest.raises(ValueError):
            SliceSpec("bad", np.zeros(4), np.eye(4)[0], 2 * np.eye(4)[1])

    def test_slice1_contains_pr_boxes(self):
        np.testing.assert_allclose(SLICE_1.point(2.0, 0.0), [1, 1, 1, -1])

    def test_tsirelson_point_on_slice2(self):
        # orthonormal coordinates of (1, 1, 1, -1)/sqrt(2)
        p = SLICE_2.point(np.sqrt(1.5), -1 / np.sqrt(2))
        np.testing.assert_allclose(p, np.array([1, 1, 1, -1]) / np.sqrt(2), atol=1e-15)
        assert abs(tlm_margin(p)) < 1e-12

    def test_oracle_self_agreement(self):
        assert slice_accuracy(SLICE_1, tlm_oracle) == 1.0

    def test_constant_model_gives_quantum_fraction(self):
        grid = slice_grid(SLICE_2, tlm_oracle)
        q = np.mean(grid.labels[grid.in_ns] == 1)
        assert slice_accuracy(SLICE_2, always_quantum, truth_grid=grid) == pytest.approx(q)

    def test_point_symmetry_of_slice2(self):
        # flipping every correlator sign maps (u, v) to (-u, -v) and keeps the arcsin test
        grid = slice_grid(SLICE_2, tlm_oracle)
        n = SLICE_2.resolution
        labels = grid.labels.reshape(n, n)
        np.testing.assert_array_equal(labels, labels[::-1, ::-1])

    def test_grid_shape(self):
        grid = slice_grid(SLICE_1, tlm_oracle)
        assert len(grid.u) == SLICE_1.resolution ** 2
        assert np.all(grid.labels[~grid.in_ns] == -1)
        assert set(np.unique(grid.labels[grid.in_ns])) == {0, 1}

    def test_outputs(self, tmp_path):
        grid = slice_grid(SliceSpec("tiny", np.zeros(4), np.eye(4)[0], np.eye(4)[1], resolution=5), tlm_oracle)
        write_slice_csv(grid, tmp_path / "s.csv")
        write_slice_json(grid, tmp_path / "s.json")
        rows = list(csv.reader(open(tmp_path / "s.csv")))
        assert rows[0] == ["u", "v", "label"]
        data = json.loads((tmp_path / "s.json").read_text())
        assert data["slice"] == "tiny" and len(data["points"]) == len(rows) - 1

    def test_full8_stand_in(self):
        grid = slice_grid(SliceSpec("f8", SLICE_FULL8.origin, SLICE_FULL8.e1, SLICE_FULL8.e2, resolution=9),
                          local_oracle)
        assert grid.in_ns.any()


class TestVolumes:
    def test_corr4_quantum(self):
        est = volume_ratio(uniform_region("corr4"), tlm_oracle, 20_000, 3)
        assert est.ratio == pytest.approx(0.925, abs=0.01)
        assert est.stderr == pytest.approx(np.sqrt(est.ratio * (1 - est.ratio) / 20_000))

    def test_stderr_scaling(self):
        a = volume_ratio(uniform_region("corr4"), tlm_oracle, 5_000, 4)
        b = volume_ratio(uniform_region("corr4"), tlm_oracle, 20_000, 5)
        assert a.stderr / b.stderr == pytest.approx(2.0, rel=0.2)

    def test_simplex_level_1ab(self):
        est = volume_ratio(simplex_region(), get_oracle("npa:1ab"), 200, 6)
        assert 0 < est.ratio < 1

    def test_empty(self):
        assert volume_ratio(uniform_region("corr4"), tlm_oracle, 0).n == 0

    def test_curve(self, tmp_path):
        rows = volume_curve(["1", "1ab"], 100, 7)
        assert [r["level"] for r in rows] == ["1", "1ab"]
        # the hierarchy only shrinks
        assert rows[1]["ratio"] <= rows[0]["ratio"]
        write_volume_csv(rows, tmp_path / "v.csv")
        assert (tmp_path / "v.csv").read_text().startswith("level,ratio,stderr,tPerPoint")


class TestReports:
    def test_as_classifier(self):
        f = as_classifier(tlm_oracle)
        np.testing.assert_array_equal(f(np.array([[0.0] * 4, [1, 1, 1, -1.0]])), [1, 0])

    def test_dataset_metrics_for_oracle(self):
        pts = sample_uniform("corr4", 200, tlm_oracle, rng=8)
        assert dataset_metrics(tlm_oracle, pts)["accuracy"] == 1.0

    def test_full_report(self, tmp_path):
        pts = sample_uniform("corr4", 200, tlm_oracle, balanced=True, rng=9)
        rep = full_report(tlm_oracle, {"test": pts}, spread_sigmas=[1e-2], slices=["pr-pair"], spread_n=500)
        assert rep.accuracy == 1.0 and rep.f1 == 1.0
        assert set(rep.per_suite) == {"test", "spread:0.01", "slice:pr-pair"}
        write_report_json(rep, tmp_path / "r.json")
        assert json.loads((tmp_path / "r.json").read_text())["per_suite"]["slice:pr-pair"]["accuracy"] == 1.0
