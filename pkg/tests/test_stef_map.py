import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dynmaps.core import NoDynamicsData, Trajectory
from dynmaps.ingest import generate_synthetic
from dynmaps.stef_map import (
    FreMEnModel,
    STeFCell,
    STeFMap,
    accumulate_bin_histograms,
    build_stef_map,
    daily_harmonics,
    fit_fremen,
    heading_to_bin,
    load_stef_map,
    predict_bin_probs,
    sample_velocity_from_stef,
    save_stef_map,
)

DAY = 86400.0
W = daily_harmonics()


def flat_cell(values):
    return STeFCell(tuple(FreMEnModel(float(v)) for v in values))


def one_cell_map(values, k=8):
    return STeFMap(1.0, {(0, 0): flat_cell(values)}, k=k)


class TestHeadingBins:
    def test_exact_centres(self):
        assert heading_to_bin(0.0, 8) == 0
        assert heading_to_bin(math.pi / 2, 8) == 2
        assert heading_to_bin(-math.pi, 8) == 4
        assert heading_to_bin(-math.pi / 4, 8) == 7

    def test_midpoint_goes_to_lower_bin(self):
        assert heading_to_bin(math.pi / 8, 8) == 0
        assert heading_to_bin(3 * math.pi / 8, 8) == 1

    def test_seam_midpoint_wraps(self):
        # halfway between bin 7 and bin 0, approached from below
        assert heading_to_bin(-math.pi / 8, 8) == 7

    @given(st.floats(-math.pi, math.pi - 1e-9), st.integers(2, 36))
    def test_nearest_centre(self, h, k):
        b = heading_to_bin(h, k)
        width = 2 * math.pi / k
        d = abs(math.remainder(h - b * width, 2 * math.pi))
        assert d <= width / 2 + 1e-9


def track(pid, t, x, y):
    return Trajectory(pid, np.asarray(t, float), np.asarray(x, float), np.asarray(y, float))


class TestHistograms:
    def test_single_direction(self):
        tr = track("a", np.arange(0, 1200, 60.0), np.linspace(0, 0.4, 20), np.zeros(20))
        h = accumulate_bin_histograms([tr], k=8, t_interval=600)
        series = h.cells[(0, 0)]
        np.testing.assert_array_equal(series[:, 0], 1.0)
        np.testing.assert_array_equal(series[:, 1:], 0.0)
        np.testing.assert_allclose(h.times, [300.0, 900.0])

    def test_opposite_directions_split_evenly(self):
        east = track("e", [0, 10, 20], [0.0, 0.1, 0.2], [0, 0, 0])
        west = track("w", [5, 15, 25], [0.2, 0.1, 0.0], [0, 0, 0])
        h = accumulate_bin_histograms([east, west], k=8, t_interval=600)
        row = h.cells[(0, 0)][0]
        assert row[0] == 0.5 and row[4] == 0.5
        assert row.sum() == 1.0

    def test_rows_sum_to_one_or_zero(self):
        trajs = generate_synthetic("bimodal", {"n": 30}, seed=3)
        h = accumulate_bin_histograms(trajs, k=8, t_interval=600)
        for series in h.cells.values():
            sums = series.sum(axis=1)
            assert np.all(np.isclose(sums, 1.0) | (sums == 0.0))

    def test_unobserved_intervals_are_skipped(self):
        a = track("a", [0, 10], [0, 0.1], [0, 0])
        b = track("b", [7200, 7210], [0, 0.1], [0, 0])
        h = accumulate_bin_histograms([a, b], t_interval=600)
        assert len(h.times) == 2

    def test_k_must_be_two_or_more(self):
        with pytest.raises(ValueError):
            accumulate_bin_histograms([], k=1)


def sampled(t, f):
    return np.asarray(t), f(np.asarray(t))


class TestFremen:
    def test_constant_series(self):
        t = np.arange(0, 2 * DAY, 600.0)
        m = fit_fremen(t, np.full(len(t), 0.7), W, 2)
        assert m.mean == pytest.approx(0.7)
        assert all(a <= 1e-9 for _, a, _ in m.components)

    def test_single_cosine(self):
        w0 = W[0]
        t, v = sampled(np.arange(0, 3 * DAY, 600.0), lambda t: 0.5 + 0.3 * np.cos(w0 * t))
        m = fit_fremen(t, v, W, 2)
        omega, amp, phase = m.components[0]
        assert omega == w0
        assert amp == pytest.approx(0.3, abs=0.01)
        assert abs(phase) < 0.05

    def test_phase_reconstructs_shifted_signal(self):
        w0 = W[3]
        t, v = sampled(np.arange(0, DAY, 300.0), lambda t: 0.4 + 0.2 * np.cos(w0 * t - 1.1))
        m = fit_fremen(t, v, W, 1)
        assert m.components[0][2] == pytest.approx(1.1, abs=1e-6)
        np.testing.assert_allclose(m.predict(t), v, atol=1e-9)

    def test_two_cosines_in_amplitude_order(self):
        t, v = sampled(np.arange(0, 2 * DAY, 600.0), lambda t: 0.5 + 0.15 * np.cos(W[0] * t) + 0.3 * np.cos(W[2] * t + 0.4))
        m = fit_fremen(t, v, W, 2)
        (w1, a1, _), (w2, a2, _) = m.components
        assert (w1, w2) == (W[2], W[0])
        assert a1 == pytest.approx(0.3, abs=0.01)
        assert a2 == pytest.approx(0.15, abs=0.01)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 23), st.floats(0.05, 0.5), st.floats(-math.pi, math.pi), st.integers(3, 5))
    def test_spectral_recovery(self, i, amp, phase, days):
        # at least three full periods of the slowest harmonic
        t = np.arange(0, days * DAY, 600.0)
        v = 0.5 + amp * np.cos(W[i] * t - phase)
        m = fit_fremen(t, v, W, 2)
        omega, a, _ = m.components[0]
        assert omega == W[i]
        assert abs(a - amp) < 0.05 * amp

    def test_short_series_is_mean_only(self):
        m = fit_fremen([0.0, 1.0, 2.0, 3.0], [0.1, 0.2, 0.3, 0.4], W, 2)
        assert m.components == ()
        assert m.mean == pytest.approx(0.25)
        assert np.all(m.predict(np.array([0.0, 1e5, 3e7])) == m.mean)

    def test_exactly_m_components_sorted(self):
        rng = np.random.default_rng(0)
        t = np.arange(0, DAY, 600.0)
        m = fit_fremen(t, rng.random(len(t)), W, 3)
        amps = [a for _, a, _ in m.components]
        assert len(amps) == 3
        assert amps == sorted(amps, reverse=True)


class TestPredictBinProbs:
    def test_flat_models(self):
        cell = flat_cell([0.8, 0.2, 0, 0, 0, 0, 0, 0])
        for t in (0.0, 12345.0, 1e9):
            np.testing.assert_array_equal(predict_bin_probs(cell, t), [0.8, 0.2, 0, 0, 0, 0, 0, 0])

    def test_cosine_peak_and_trough(self):
        w = W[0]
        cell = STeFCell((FreMEnModel(0.5, ((w, 0.4, 0.3),)),))
        assert predict_bin_probs(cell, 0.3 / w)[0] == pytest.approx(0.9)
        assert predict_bin_probs(cell, (0.3 + math.pi) / w)[0] == pytest.approx(0.1)

    def test_clipping(self):
        cell = STeFCell((FreMEnModel(1.3), FreMEnModel(-0.2)))
        np.testing.assert_array_equal(predict_bin_probs(cell, 0.0), [1.0, 0.0])


class TestSampling:
    def test_single_bin(self):
        smap = one_cell_map([0, 0, 0.6, 0, 0, 0, 0, 0])
        rng = np.random.default_rng(0)
        for _ in range(50):
            s = sample_velocity_from_stef(0.0, 0.0, smap, 0.0, 1.37, rng)
            assert s.velocity.heading == pytest.approx(math.pi / 2)
            assert s.velocity.speed == 1.37
            assert s.fitness == 1.0

    def test_three_to_one(self):
        smap = one_cell_map([0.75, 0, 0, 0, 0.25, 0, 0, 0])
        rng = np.random.default_rng(42)
        draws = [sample_velocity_from_stef(0.0, 0.0, smap, 0.0, 1.0, rng) for _ in range(10_000)]
        n0 = sum(abs(d.velocity.heading) < 1e-9 for d in draws)
        n4 = len(draws) - n0
        assert n0 / n4 == pytest.approx(3.0, rel=0.05)
        assert {d.fitness for d in draws} == {0.75, 0.25}
        _, p = stats.chisquare([n0, n4], [7500, 2500])
        assert p > 0.001

    def test_unnormalised_values_are_normalised(self):
        smap = one_cell_map([0.3, 0.3, 0, 0, 0, 0, 0, 0])
        rng = np.random.default_rng(1)
        fits = {sample_velocity_from_stef(0, 0, smap, 0.0, 1.0, rng).fitness for _ in range(100)}
        assert fits == {0.5}

    def test_empty_region(self):
        smap = one_cell_map([1, 0, 0, 0, 0, 0, 0, 0])
        with pytest.raises(NoDynamicsData):
            sample_velocity_from_stef(5.0, 5.0, smap, 0.0, 1.0, np.random.default_rng(0))

    def test_all_zero_bins(self):
        smap = one_cell_map([0] * 8)
        with pytest.raises(NoDynamicsData):
            sample_velocity_from_stef(0.0, 0.0, smap, 0.0, 1.0, np.random.default_rng(0))

    @given(st.floats(0, 10, allow_subnormal=False))
    def test_speed_passthrough_is_exact(self, speed):
        smap = one_cell_map([0.5, 0.1, 0, 0.2, 0, 0, 0, 0.2])
        s = sample_velocity_from_stef(0.2, -0.3, smap, 0.0, speed, np.random.default_rng(0))
        assert s.velocity.speed == speed

    def test_negative_prev_speed(self):
        with pytest.raises(ValueError):
            sample_velocity_from_stef(0.0, 0.0, one_cell_map([1] + [0] * 7), 0.0, -1.0, np.random.default_rng(0))


class TestBuild:
    def test_empty(self):
        assert len(build_stef_map([])) == 0

    def test_corridor_dominant_bin(self):
        trajs = generate_synthetic("corridor", {"n": 40, "days": 2}, seed=1)
        smap = build_stef_map(trajs)
        assert len(smap) > 0
        for cell in smap.cells.values():
            means = [m.mean for m in cell.bin_models]
            assert int(np.argmax(means)) == 0

    def test_twelve_hour_flip_found(self):
        trajs = generate_synthetic("time_varying", {"n": 600, "days": 4, "hour_start": 0, "hour_end": 24}, seed=2)
        smap = build_stef_map(trajs, t_interval=1800)
        w12 = 2 * math.pi / 43200
        assert w12 in smap.candidate_freqs
        # cells on the east branch: the east bin follows the flip
        checked = 0
        for (i, j), cell in smap.cells.items():
            if i >= 8 and abs(j) <= 2:
                east = cell.bin_models[0]
                if east.mean > 0.05:
                    assert east.components[0][0] == pytest.approx(w12)
                    checked += 1
        assert checked >= 3

    def test_roundtrip(self, tmp_path):
        trajs = generate_synthetic("bimodal", {"n": 30}, seed=4)
        smap = build_stef_map(trajs, t_interval=1800)
        save_stef_map(smap, tmp_path / "s")
        back = load_stef_map(tmp_path / "s")
        assert back == smap
        assert (tmp_path / "s" / "stef_map.csv").read_text().splitlines()[0] == "x_m,y_m,bin,comp_index,freq_rad_s,amplitude,phase_rad"
