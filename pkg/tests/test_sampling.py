import json

import numpy as np
import pytest

from chshml.geometry import CANONICAL, P_PR, Space, chsh_value, ns_system, tlm_boundary_radius, tlm_margin
from chshml.npa import membership_slack
from chshml.oracles import local_oracle, tlm_oracle
from chshml.sampling import (
    DatasetError,
    LabelledPoint,
    OffsetConfig,
    SpreadConfig,
    StartNotInterior,
    boundary_pair,
    chord,
    facet_directions,
    facet_mask,
    filter_to_facet,
    hit_and_run,
    ns_sampler,
    offset_sample,
    random_direction,
    read_jsonl,
    sample_simplex,
    sample_uniform,
    simplex_vertices,
    spread_sample,
    to_arrays,
    write_csv,
    write_jsonl,
)

PR_DIR = P_PR / np.linalg.norm(P_PR)
TSIRELSON_DIR = np.array([1.0, 1.0, 1.0, -1.0]) / 2.0


class TestHitAndRun:
    def test_chord_in_cube(self):
        lo, hi = chord(ns_system("corr4"), np.zeros(4), np.eye(4)[0])
        assert (lo[0], hi[0]) == (-1.0, 1.0)

    def test_cube_moments(self):
        pts = hit_and_run(ns_system("corr4"), np.zeros(4), 100_000, rng=1)
        np.testing.assert_allclose(pts.mean(axis=0), 0, atol=0.02)
        np.testing.assert_allclose(pts.var(axis=0), 1 / 3, atol=0.02)

    def test_full8_closure(self):
        pts = hit_and_run(ns_system("full8"), np.zeros(8), 10_000, rng=2)
        assert np.all(ns_system("full8").contains(pts, tol=1e-12))

    def test_start_must_be_interior(self):
        with pytest.raises(StartNotInterior):
            hit_and_run(ns_system("corr4"), np.array([1.0, 0, 0, 0]), 5)

    def test_sampler_continues_stream(self):
        s = ns_sampler("corr4", 3)
        a, b = s.draw(150), s.draw(150)
        assert len(a) == len(b) == 150
        assert not np.any(np.all(a[:, None] == b[None], axis=2))

    def test_deterministic(self):
        np.testing.assert_array_equal(ns_sampler("full8", 4).draw(10), ns_sampler("full8", 4).draw(10))


class TestLabelledPoints:
    def test_round_trip(self, tmp_path):
        pts = sample_uniform("corr4", 20, tlm_oracle, rng=5, level="tlm")
        write_jsonl(pts, tmp_path / "d.jsonl")
        back = read_jsonl(tmp_path / "d.jsonl")
        X, y = to_arrays(pts)
        Xb, yb = to_arrays(back)
        np.testing.assert_array_equal(X, Xb)
        np.testing.assert_array_equal(y, yb)
        assert back[0].seed == 5 and back[0].method == "uniform"

    def test_record_fields(self, tmp_path):
        write_jsonl(sample_uniform("corr4", 1, tlm_oracle, rng=5), tmp_path / "d.jsonl")
        d = json.loads((tmp_path / "d.jsonl").read_text())
        assert set(d) == {"space", "x", "label", "method", "epsilon", "sigma", "level", "seed"}

    def test_missing_seed_is_an_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rec = {"space": "corr4", "x": [0, 0, 0, 0], "label": 1, "method": "uniform"}
        path.write_text(json.dumps(rec) + "\n")
        with pytest.raises(DatasetError, match=":1:"):
            read_jsonl(path)

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = LabelledPoint(np.zeros(4), 1, "uniform", seed=0).to_dict()
        path.write_text(json.dumps(good) + "\n{not json\n")
        with pytest.raises(DatasetError, match=":2:"):
            read_jsonl(path)

    def test_unlabelled_lines_in_lenient_mode(self, tmp_path):
        path = tmp_path / "raw.jsonl"
        path.write_text(json.dumps({"x": [0.1] * 8}) + "\n")
        (x,) = read_jsonl(path, strict=False)
        assert x.shape == (8,)

    def test_invalid_label(self):
        with pytest.raises(ValueError):
            LabelledPoint(np.zeros(4), 2, "uniform")

    def test_csv(self, tmp_path):
        write_csv(sample_uniform("corr4", 3, tlm_oracle, rng=1), tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == "space,x0,x1,x2,x3,label,method,epsilon,sigma,level,seed"
        assert len(lines) == 4

    def test_empty_dataset(self, tmp_path):
        write_jsonl([], tmp_path / "e.jsonl")
        assert read_jsonl(tmp_path / "e.jsonl") == []


class TestUniform:
    def test_quantum_fraction(self):
        _, y = to_arrays(sample_uniform("corr4", 10_000, tlm_oracle, rng=6))
        assert y.mean() == pytest.approx(0.925, abs=0.015)

    def test_balanced(self):
        _, y = to_arrays(sample_uniform("corr4", 1000, tlm_oracle, balanced=True, rng=7))
        assert (y == 1).sum() == (y == 0).sum() == 500

    def test_balanced_needs_even_size(self):
        with pytest.raises(ValueError):
            sample_uniform("corr4", 3, tlm_oracle, balanced=True)

    def test_local_fraction(self):
        _, y = to_arrays(sample_uniform("full8", 20_000, local_oracle, rng=8))
        assert y.mean() == pytest.approx(0.9412, abs=0.01)

    def test_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            write_jsonl(sample_uniform("full8", 50, local_oracle, rng=9), tmp_path / name)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


class TestSimplex:
    def test_vertices(self):
        v = simplex_vertices()
        assert v.shape == (9, 8)
        np.testing.assert_allclose(chsh_value(v[:8]), 2.0)

    def test_pr_weight(self):
        w = np.zeros(9)
        w[8] = 1
        assert chsh_value(sample_simplex(1, weights=w)[0]) == 4.0

    def test_barycentre(self):
        assert chsh_value(sample_simplex(1, weights=np.full(9, 1 / 9))[0]) == pytest.approx(20 / 9)

    def test_samples_lie_in_simplex(self):
        pts = sample_simplex(10_000, 10)
        assert np.all(chsh_value(pts) >= 2 - 1e-12)
        assert np.all(ns_system("full8").contains(pts, tol=1e-12))


class TestDirections:
    def test_unit_norm(self):
        u = random_direction(8, 0, 100)
        np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1, atol=1e-12)

    def test_isotropy(self):
        np.testing.assert_allclose(random_direction(8, 1, 100_000).mean(axis=0), 0, atol=0.01)

    def test_reproducible(self):
        np.testing.assert_array_equal(random_direction(4, 3), random_direction(4, 3))

    def test_facet_filter(self):
        assert facet_mask(PR_DIR)[0]
        assert not facet_mask(-PR_DIR)[0]
        assert filter_to_facet(np.vstack([PR_DIR, -PR_DIR])).shape == (1, 8)

    def test_acceptance_rate_rough(self):
        rate = facet_mask(random_direction(8, 2, 200_000)).mean()
        assert rate == pytest.approx(0.0021, abs=0.0005)

    def test_facet_directions_point_at_facet(self):
        dirs = facet_directions(20, 3)
        assert dirs.shape == (20, 8)
        assert np.all(chsh_value(dirs, CANONICAL) > 0)


class TestOffset:
    def test_tsirelson_pair(self):
        inner, outer = boundary_pair(TSIRELSON_DIR, OffsetConfig(1e-3, "1"))
        assert (inner.label, outer.label) == (1, 0)
        assert tlm_margin(inner.x) < 0 < tlm_margin(outer.x)

    def test_epsilon_floor(self):
        with pytest.raises(ValueError):
            OffsetConfig(0.0)

    def test_corr4_agreement(self):
        pts = offset_sample("corr4", 400, OffsetConfig(1e-3, "1"), rng=4)
        X, y = to_arrays(pts)
        assert len(pts) == 400 and y.sum() == 200
        np.testing.assert_array_equal(tlm_oracle(X), y.astype(bool))

    def test_full8_level_oracle_agreement(self):
        cfg = OffsetConfig(1e-3, "1ab")
        for p in offset_sample("full8", 10, cfg, rng=5, facet_only=True):
            assert (membership_slack(p.x, "1ab") >= -1e-8) == bool(p.label)

    def test_inner_points_nonsignalling(self):
        for p in offset_sample("full8", 10, OffsetConfig(1e-2, "1ab"), rng=6):
            if p.label:
                assert ns_system("full8").contains(p.x, tol=1e-9)


class TestSpread:
    def test_labels_match_arcsin_test(self):
        pts = spread_sample(SpreadConfig(1e-2), "1", 2000, 7, "corr4")
        X, y = to_arrays(pts)
        assert len(pts) == 2000
        assert np.mean(tlm_oracle(X) == y.astype(bool)) >= 0.99

    def test_points_hug_boundary_for_small_sigma(self):
        pts = spread_sample(SpreadConfig(1e-9), "1", 50, 8, "corr4")
        for p in pts:
            r = np.linalg.norm(p.x)
            assert r == pytest.approx(tlm_boundary_radius(p.x / r), rel=1e-7)

    def test_label_follows_radius(self):
        pts = spread_sample(SpreadConfig(1e-2), "1", 200, 9, "corr4")
        for p in pts:
            r = np.linalg.norm(p.x)
            lam = tlm_boundary_radius(p.x / r)
            assert p.label == int(r < lam)

    def test_config(self):
        with pytest.raises(ValueError):
            SpreadConfig(0.0)
        with pytest.raises(ValueError):
            SpreadConfig(1e-2, 1.5)

    def test_full8(self):
        pts = spread_sample(SpreadConfig(1e-2), "1ab", 4, 10, "full8", batch=500)
        assert len(pts) == 4 and all(p.space is Space.FULL8 for p in pts)
