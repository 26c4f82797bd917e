import math
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from nestdeblur.errors import ContractError, DataError
from nestdeblur.metrics import ReportRow, psnr, read_report, ssim, write_report

from oracles import brute_psnr, brute_ssim


def skimage_ssim(a, b, data_range=1.0):
    vals = [
        structural_similarity(a[i, c], b[i, c], data_range=data_range, gaussian_weights=True,
                              sigma=1.5, use_sample_covariance=False)
        for i in range(a.shape[0]) for c in range(a.shape[1])
    ]
    return float(np.mean(vals))


def pair(seed, shape=(1, 2, 32, 32)):
    rng = np.random.default_rng(seed)
    a = rng.random(shape)
    return a, np.clip(a + rng.normal(0, 0.1, shape), 0, 1)


class TestPSNR:
    def test_identical_is_inf(self):
        a = np.random.default_rng(0).random((1, 2, 4, 4))
        assert psnr(a, a) == math.inf

    def test_uniform_diff(self):
        a = np.full((1, 2, 8, 8), 0.25)
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_zero_vs_one(self):
        assert psnr(np.zeros((1, 1, 4, 4)), np.ones((1, 1, 4, 4))) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            psnr(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 4, 5)))

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force(self, seed):
        a, b = pair(seed)
        assert abs(psnr(a, b) - brute_psnr(a, b)) < 1e-6

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31), st.floats(0.1, 1000))
    def test_symmetric_and_scale_invariant(self, seed, scale):
        a, b = pair(seed, (1, 2, 8, 8))
        assert psnr(a, b) == psnr(b, a)
        assert abs(psnr(a * scale, b * scale, scale) - psnr(a, b)) < 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-4, 0.5), st.floats(1e-4, 0.5))
    def test_decreasing_in_mse(self, d1, d2):
        a = np.zeros((1, 1, 4, 4))
        p1, p2 = psnr(a, a + d1), psnr(a, a + d2)
        if d1 < d2:
            assert p1 > p2
        elif d1 > d2:
            assert p1 < p2


class TestSSIM:
    def test_identical(self):
        a = np.random.default_rng(1).random((1, 2, 16, 16))
        assert abs(ssim(a, a) - 1.0) < 1e-9

    def test_constant_pair_closed_form(self):
        c1 = 1e-4
        got = ssim(np.zeros((1, 2, 16, 16)), np.ones((1, 2, 16, 16)))
        assert got == pytest.approx(c1 / (1 + c1), rel=1e-12)
        assert got == pytest.approx(9.999e-5, abs=1e-8)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_oracles(self, seed):
        a, b = pair(seed)
        got = ssim(a, b)
        assert abs(got - skimage_ssim(a, b)) < 1e-4
        assert abs(got - brute_ssim(a, b)) < 1e-4

    def test_too_small(self):
        with pytest.raises(ContractError):
            ssim(np.zeros((1, 1, 10, 20)), np.zeros((1, 1, 10, 20)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31), st.floats(0.1, 1000))
    def test_bounded_symmetric_scale_invariant(self, seed, scale):
        rng = np.random.default_rng(seed)
        a, b = rng.random((1, 2, 12, 12)), rng.random((1, 2, 12, 12))
        v = ssim(a, b)
        assert -1 <= v <= 1
        assert abs(v - ssim(b, a)) < 1e-12
        assert abs(ssim(a * scale, b * scale, scale) - v) < 1e-9

    def test_anticorrelated_negative(self):
        a = np.random.default_rng(3).random((1, 1, 16, 16))
        assert ssim(a, 1 - a) < 0


class TestReport:
    ROW = ReportRow("z=10", "nested-N2-residual", 2, "residual", 31.5, 0.91, 66244)

    def test_empty(self, tmp_path):
        write_report([], tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text() == "tag,model,levels,mode,psnr_db,ssim,params\n"

    def test_one_row(self, tmp_path):
        write_report([self.ROW], tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert len(lines) == 2
        assert lines[1] == "z=10,nested-N2-residual,2,residual,31.5,0.91,66244"

    def test_inf_literal_and_round_trip(self, tmp_path):
        row = ReportRow("z=0", "input", 0, "-", math.inf, 1.0, 0)
        write_report([row], tmp_path / "r.csv")
        assert ",inf," in (tmp_path / "r.csv").read_text()
        assert read_report(tmp_path / "r.csv") == [row]

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["z=10", "z=16", "z=2"]), st.sampled_from(["a", "b", "input"])),
                    max_size=12, unique=True), st.randoms(use_true_random=False))
    def test_sorted(self, keys, rnd):
        rows = [ReportRow(t, m, 1, "residual", 20.0, 0.5, 1) for t, m in keys]
        rnd.shuffle(rows)
        with tempfile.TemporaryDirectory() as d:
            write_report(rows, Path(d) / "r.csv")
            back = read_report(Path(d) / "r.csv")
        assert [(r.tag, r.model) for r in back] == sorted(keys)

    def test_unwritable(self, tmp_path):
        with pytest.raises(DataError):
            write_report([], tmp_path / "missing" / "r.csv")
