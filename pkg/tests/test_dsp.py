import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardiofocus.config import SpatialPoint, compact_config
from cardiofocus.dsp import (
    PointSignal,
    RaMap,
    angle_fft,
    bandpass_differentiate,
    extract_point_signal,
    localize_cube,
    range_fft,
    rough_localize,
    unwrap_phase,
)
from cardiofocus.scene import Scatterer, Scene, simulate_data_cube
from cardiofocus.signals import DisplacementSeries

from conftest import single_target_scene

FS = 200.0


def _cube(point, n_frames=1, **kw):
    scene, cfg = single_target_scene(point, n_frames=n_frames, **kw)
    return simulate_data_cube(scene, cfg)


class TestRangeFft:
    def test_parseval(self):
        cube = _cube((0.1, 0.7, 0.0), n_frames=2)
        prof = range_fft(cube)
        e_in = np.sum(np.abs(cube.samples.astype(np.complex128)) ** 2)
        e_out = np.sum(np.abs(prof.profiles) ** 2)
        assert e_out == pytest.approx(e_in, rel=1e-6)

    def test_zero_cube(self, zero_cube):
        assert not np.any(range_fft(zero_cube).profiles)

    def test_two_separated_scatterers(self):
        cfg = compact_config(n_frames=1)
        wave = DisplacementSeries(np.zeros(1), FS)
        other = Scatterer(SpatialPoint(0.0, 1.0, 0.0), 1.0)
        cube = simulate_data_cube(Scene(SpatialPoint(0, 0.6, 0), wave, clutter=(other,)), cfg)
        prof = np.abs(range_fft(cube).profiles[0, 0, 0])
        bins = [round(r / cfg.range_bin_m(64)) for r in (0.6, 1.0)]
        for b in bins:
            assert prof[b] >= prof[b - 1] and prof[b] >= prof[b + 1]

    def test_rejects_small_fft(self, zero_cube):
        with pytest.raises(ValueError):
            range_fft(zero_cube, fft_size=8)


class TestAngleFft:
    def test_boresight_peaks_at_zero_angle(self):
        ra = angle_fft(range_fft(_cube((0.0, 0.8, 0.0))))
        _, j = np.unravel_index(np.argmax(ra.magnitudes), ra.magnitudes.shape)
        assert ra.angle_axis_rad[j] == 0.0

    def test_twenty_degrees_within_one_bin(self):
        # sin(20 deg) falls almost halfway between two bins, either neighbour is fine
        th = np.deg2rad(20.0)
        ra = angle_fft(range_fft(_cube((0.8 * np.sin(th), 0.8 * np.cos(th), 0.0))))
        _, j = np.unravel_index(np.argmax(ra.magnitudes), ra.magnitudes.shape)
        assert abs(np.sin(ra.angle_axis_rad[j]) - np.sin(th)) <= ra.sin_bin

    def test_on_grid_angle_is_exact(self):
        ra0 = angle_fft(range_fft(_cube((0.0, 0.8, 0.0))))
        th = np.arcsin(4 * ra0.sin_bin)
        ra = angle_fft(range_fft(_cube((0.8 * np.sin(th), 0.8 * np.cos(th), 0.0))))
        _, j = np.unravel_index(np.argmax(ra.magnitudes), ra.magnitudes.shape)
        assert ra.angle_axis_rad[j] == pytest.approx(th)

    def test_constant_channels_give_single_bin_without_padding(self):
        cube = _cube((0.0, 0.8, 0.0))
        ra = angle_fft(range_fft(cube), fft_size=cube.config.virtual_channels)
        row = ra.magnitudes[np.argmax(ra.magnitudes.max(axis=1))]
        zero = np.flatnonzero(ra.angle_axis_rad == 0.0)[0]
        others = np.delete(row, zero)
        assert others.max() < 1e-4 * row[zero]

    def test_single_channel_has_no_angle(self):
        cfg = compact_config(n_frames=1, virtual_channels=1)
        scene, _ = single_target_scene((0, 0.8, 0))
        with pytest.raises(ValueError, match="AoA"):
            angle_fft(range_fft(simulate_data_cube(scene, cfg)))

    def test_csv_round_trip(self, tmp_path):
        ra = angle_fft(range_fft(_cube((0.1, 0.8, 0.0))))
        ra.to_csv(tmp_path / "ra.csv")
        back = RaMap.from_csv(tmp_path / "ra.csv")
        np.testing.assert_array_equal(back.magnitudes, ra.magnitudes)
        np.testing.assert_array_equal(back.angle_axis_rad, ra.angle_axis_rad)


class TestRoughLocalize:
    def _map(self, mags):
        return RaMap(np.asarray(mags, float), np.array([0.4, 0.8]), np.array([-0.3, 0.0, 0.3]))

    def test_single_cell(self):
        p = rough_localize(self._map([[0, 0, 0], [0, 1.0, 0]]))
        assert tuple(p) == pytest.approx((0.0, 0.8, 0.0))

    def test_stronger_target_wins(self):
        weak = 10 ** (-6 / 20)
        p = rough_localize(self._map([[0, 0, weak], [1.0, 0, 0]]))
        assert tuple(p) == pytest.approx((0.8 * np.sin(-0.3), 0.8 * np.cos(-0.3), 0.0))

    def test_all_zero_is_no_target(self):
        with pytest.raises(ValueError, match="no target"):
            rough_localize(self._map(np.zeros((2, 3))))

    def test_rejects_bad_axes(self):
        with pytest.raises(ValueError, match="increasing"):
            RaMap(np.zeros((2, 2)), np.array([0.8, 0.4]), np.array([0.0, 0.1]))
        with pytest.raises(ValueError, match="non-negative"):
            RaMap(-np.ones((2, 2)), np.array([0.4, 0.8]), np.array([0.0, 0.1]))

    def test_cube_localization_within_a_bin(self):
        p = localize_cube(_cube((0.25, 0.9, 0.0)))
        cfg = compact_config()
        assert abs(p.range_m - SpatialPoint(0.25, 0.9, 0).range_m) <= cfg.range_bin_m(64)


class TestExtraction:
    def test_static_point_has_constant_phase(self):
        cube = _cube((0.1, 0.7, 0.0), n_frames=20)
        z = extract_point_signal(cube, SpatialPoint(0.1, 0.7, 0.0)).complex_series
        assert np.std(np.angle(z)) < 1e-6

    def test_focus_is_sharper_than_three_bins_away(self):
        cfg = compact_config()
        cube = _cube((0.0, 0.7, 0.0))
        on = abs(extract_point_signal(cube, SpatialPoint(0.0, 0.7, 0.0)).complex_series[0])
        off = abs(extract_point_signal(cube, SpatialPoint(0.0, 0.7 + 3 * cfg.range_bin_m(64), 0.0)).complex_series[0])
        assert on >= 10 * off

    def test_beyond_range_raises(self):
        with pytest.raises(ValueError, match="max range"):
            extract_point_signal(_cube((0, 0.7, 0)), SpatialPoint(0, 1.5, 0))

    def test_csv(self, tmp_path):
        sig = extract_point_signal(_cube((0, 0.7, 0), n_frames=3), SpatialPoint(0, 0.7, 0))
        sig.to_csv(tmp_path / "p.csv")
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines[0] == "time_s,value" and len(lines) == 4


def _psig(phase, lam=0.0039):
    return PointSignal(np.exp(1j * np.asarray(phase)), SpatialPoint(0, 1, 0), FS, lam)


class TestUnwrap:
    def test_constant_phase_is_zero(self):
        assert np.allclose(unwrap_phase(_psig(np.full(10, 0.7))).samples, 0.0)

    def test_ramp_to_pi_is_quarter_wavelength(self):
        h = unwrap_phase(_psig(np.linspace(0, np.pi, 50))).samples
        assert h[-1] - h[0] == pytest.approx(0.0039 / 4, rel=1e-9)

    def test_crossing_the_seam(self):
        phase = np.angle(np.exp(1j * np.linspace(np.pi / 2, 3 * np.pi / 2, 40)))
        h = unwrap_phase(_psig(phase)).samples
        assert h[-1] - h[0] == pytest.approx(0.0039 / 4, rel=1e-9)
        assert np.all(np.diff(h) > 0)

    def test_needs_two_frames(self):
        with pytest.raises(ValueError):
            unwrap_phase(_psig([0.0]))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-3.0, 3.0), min_size=2, max_size=40))
    def test_recovers_small_steps(self, steps):
        # steps below pi are unwrapped exactly
        phase = np.cumsum(steps)
        h = unwrap_phase(_psig(np.angle(np.exp(1j * phase)))).samples
        expected = 0.0039 * phase / (4 * np.pi)
        np.testing.assert_allclose(h, expected - expected.mean(), atol=1e-12)


def _series(x):
    return DisplacementSeries(np.asarray(x, float), FS, check_bound=False)


class TestBandpassDifferentiate:
    t = np.arange(int(60 * FS)) / FS

    def _gain(self, f):
        x = 1e-3 * np.sin(2 * np.pi * f * self.t)
        y = bandpass_differentiate(_series(x)).samples
        ref = np.gradient(x) * FS
        return np.sqrt(np.mean(y**2)) / np.sqrt(np.mean(ref**2))

    def test_respiration_band_attenuated(self):
        assert self._gain(0.2) <= 0.1

    def test_cardiac_band_passes(self):
        assert self._gain(10.0) >= 10 ** (-3 / 20)

    def test_zero_input(self):
        assert not np.any(bandpass_differentiate(_series(np.zeros(400))).samples)

    def test_linearity(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal(800) * 1e-4, rng.standard_normal(800) * 1e-4
        lhs = bandpass_differentiate(_series(2 * a + 3 * b)).samples
        rhs = 2 * bandpass_differentiate(_series(a)).samples + 3 * bandpass_differentiate(_series(b)).samples
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_rate_too_low(self):
        with pytest.raises(ValueError, match="too low"):
            bandpass_differentiate(DisplacementSeries(np.ones(100), 100.0, check_bound=False))

    def test_zero_noise_round_trip_tracks_truth(self):
        from conftest import cardiac_waveform

        _, wave = cardiac_waveform(2.0, beats=(0.5, 1.3))
        cube = _cube((0.05, 0.7, 0.0), n_frames=len(wave), waveform=wave)
        h = unwrap_phase(extract_point_signal(cube, SpatialPoint(0.05, 0.7, 0.0))).samples
        truth = wave.samples - wave.samples.mean()
        assert np.corrcoef(h, truth)[0, 1] > 0.999
