import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arousal_cpd.errors import (
    IncompatibleSeriesError,
    InvalidFilterError,
    SeriesTooShortError,
    UpsamplingNotSupportedError,
    ZeroVarianceWarning,
)
from arousal_cpd.timeseries import (
    FilterSpec,
    MaskSpec,
    UniformSeries,
    butterworth_lowpass,
    decimate,
    draw_mask,
    fuse_ground_truth,
    impute_masked,
    mask_and_impute,
    zscore,
)


def series(values, rate=1.0, names=None):
    return UniformSeries.from_array(values, rate, names=names)


def steady_amplitude(y, t, freq):
    """Least-squares amplitude of a sinusoid of known frequency."""
    basis = np.column_stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return float(np.hypot(*coef))


def analog_gain_db(f, fc, order):
    return -10 * math.log10(1 + (f / fc) ** (2 * order))


class TestUniformSeries:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            series([1.0, math.nan, 2.0])

    def test_rejects_duplicate_names(self):
        with pytest.raises(ValueError):
            series(np.zeros((3, 2)), names=["a", "a"])

    def test_data_is_read_only(self):
        s = series([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            s.data[0, 0] = 5.0

    def test_too_short(self):
        with pytest.raises(SeriesTooShortError):
            series([1.0])


class TestButterworth:
    def test_constant_passes_unchanged(self):
        s = series(np.full(500, 5.0), rate=4.0)
        out = butterworth_lowpass(s, FilterSpec(0.05))
        np.testing.assert_allclose(out.data, 5.0, atol=1e-9)
        assert out.rate_hz == s.rate_hz and out.data.shape == s.data.shape

    def test_minus_3db_at_cutoff(self):
        fs, fc = 100.0, 5.0
        t = np.arange(4000) / fs
        s = series(np.sin(2 * np.pi * fc * t), rate=fs)
        out = butterworth_lowpass(s, FilterSpec(fc, 3)).data[:, 0]
        mid = slice(1000, 3000)
        gain = 20 * math.log10(steady_amplitude(out[mid], t[mid], fc))
        assert gain == pytest.approx(analog_gain_db(fc, fc, 3), abs=0.2)

    def test_ten_times_cutoff_attenuated(self):
        fs, fc = 1000.0, 5.0
        t = np.arange(20000) / fs
        s = series(np.sin(2 * np.pi * 10 * fc * t), rate=fs)
        out = butterworth_lowpass(s, FilterSpec(fc, 3)).data[:, 0]
        mid = slice(5000, 15000)
        gain = 20 * math.log10(steady_amplitude(out[mid], t[mid], 10 * fc))
        assert analog_gain_db(10 * fc, fc, 3) == pytest.approx(-60.0, abs=0.01)
        assert gain <= -55.0

    def test_zero_phase_keeps_step_centered(self):
        x = np.r_[np.zeros(200), np.ones(200)]
        out = butterworth_lowpass(series(x, rate=10.0), FilterSpec(0.5)).data[:, 0]
        # forward-backward response to a step is symmetric about the step
        np.testing.assert_allclose(out[200 - 30 : 200], 1 - out[200 : 200 + 30][::-1], atol=1e-3)

    def test_cutoff_at_nyquist_rejected(self):
        with pytest.raises(InvalidFilterError):
            butterworth_lowpass(series(np.zeros(100), rate=1.0), FilterSpec(0.5))

    def test_too_short_for_filter(self):
        with pytest.raises(SeriesTooShortError):
            butterworth_lowpass(series(np.zeros(9), rate=1.0), FilterSpec(0.1, 3))

    def test_multichannel_filtered_independently(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(300, 2))
        both = butterworth_lowpass(series(x, rate=2.0), FilterSpec(0.1)).data
        first = butterworth_lowpass(series(x[:, 0], rate=2.0), FilterSpec(0.1)).data[:, 0]
        np.testing.assert_allclose(both[:, 0], first, atol=1e-12)


class TestDecimate:
    def test_integer_rate_ratio_takes_every_rth_sample(self):
        s = series(np.arange(3100.0), rate=15.5)
        out = decimate(s, 0.5)
        assert out.n_samples == 100
        assert out.rate_hz == 0.5
        np.testing.assert_array_equal(out.data[:, 0], np.arange(0, 3100, 31))

    def test_identity_at_equal_rate(self):
        s = series(np.random.default_rng(1).normal(size=50), rate=2.0)
        out = decimate(s, 2.0)
        np.testing.assert_array_equal(out.data, s.data)

    def test_ramp_values_at_two_second_spacing(self):
        t = np.arange(60) / 3.0
        s = series(t / t[-1], rate=3.0)
        out = decimate(s, 0.5)
        expected_t = np.arange(out.n_samples) * 2.0
        np.testing.assert_allclose(out.data[:, 0], expected_t / t[-1], atol=1e-12)

    def test_non_integer_ratio_interpolates(self):
        # 1.3 Hz -> 0.5 Hz: output sample j sits at raw index 2.6 j
        t = np.arange(130) / 1.3
        s = series(3.0 * t + 1.0, rate=1.3)
        out = decimate(s, 0.5)
        assert out.n_samples == math.floor(130 * 0.5 / 1.3)
        np.testing.assert_allclose(out.data[:, 0], 3.0 * 2.0 * np.arange(out.n_samples) + 1.0, atol=1e-9)

    def test_upsampling_rejected(self):
        with pytest.raises(UpsamplingNotSupportedError):
            decimate(series(np.zeros(10), rate=1.0), 2.0)

    def test_filter_then_decimate_constant(self):
        s = series(np.full(3100, -2.5), rate=15.5)
        out = decimate(butterworth_lowpass(s, FilterSpec(0.05)), 0.5)
        np.testing.assert_allclose(out.data, -2.5, atol=1e-9)


class TestZscore:
    def test_three_values(self):
        np.testing.assert_allclose(zscore(series([1.0, 2.0, 3.0])).data[:, 0], [-1, 0, 1])

    def test_constant_channel_warns(self):
        with pytest.warns(ZeroVarianceWarning):
            out = zscore(series([7.0, 7.0, 7.0]))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_random_moments(self):
        x = np.random.default_rng(3).normal(4.0, 9.0, size=(1000, 3))
        out = zscore(series(x)).data
        assert np.all(np.abs(out.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(out.std(axis=0, ddof=1) - 1) < 1e-9)

    @settings(max_examples=50, deadline=None)
    @given(
        a=st.floats(0.01, 100.0),
        b=st.floats(-100.0, 100.0),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_affine_invariance(self, a, b, seed):
        x = np.random.default_rng(seed).normal(size=40)
        np.testing.assert_allclose(zscore(series(a * x + b)).data, zscore(series(x)).data, atol=1e-9)


class TestFuse:
    def test_identical_inputs(self):
        x = np.random.default_rng(4).normal(size=30)
        out = fuse_ground_truth(series(x, 0.5), series(x, 0.5))
        np.testing.assert_allclose(out.data, zscore(series(x, 0.5)).data, atol=1e-15)
        assert out.names == ["fused"]

    def test_symmetric_cancellation(self):
        out = fuse_ground_truth(series([1.0, -1.0], 0.5), series([-1.0, 1.0], 0.5))
        np.testing.assert_allclose(out.data[:, 0], [0.0, 0.0], atol=1e-15)

    def test_random_pair_matches_direct_mean(self):
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=40), rng.normal(3, 2, size=40)
        out = fuse_ground_truth(series(a, 0.5), series(b, 0.5)).data[:, 0]
        za = (a - a.mean()) / a.std(ddof=1)
        zb = (b - b.mean()) / b.std(ddof=1)
        np.testing.assert_allclose(out, (za + zb) / 2, atol=1e-12)

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(6)
        a, b = series(rng.normal(size=25), 0.5), series(rng.normal(size=30), 0.5)
        np.testing.assert_array_equal(fuse_ground_truth(a, b).data, fuse_ground_truth(b, a).data)

    def test_trims_to_shorter(self):
        out = fuse_ground_truth(series(np.arange(10.0), 0.5), series(np.arange(7.0), 0.5))
        assert out.n_samples == 7

    def test_rate_mismatch(self):
        with pytest.raises(IncompatibleSeriesError):
            fuse_ground_truth(series([1.0, 2.0], 0.5), series([1.0, 2.0], 1.0))


class TestMasking:
    def test_fraction_zero_is_identity(self):
        s = series(np.arange(100.0))
        np.testing.assert_array_equal(mask_and_impute(s, MaskSpec(0.0, seed=3)).data, s.data)

    def test_fraction_one_is_first_sample(self):
        s = series(np.arange(100.0) + 4.0)
        np.testing.assert_array_equal(mask_and_impute(s, MaskSpec(1.0, seed=3)).data, 4.0)

    def test_seeded_example(self):
        # seed 1 with 2-sample patches masks exactly rows {2, 3}
        spec = MaskSpec(0.4, max_patch_fraction=0.4, seed=1)
        assert set(np.flatnonzero(draw_mask(5, spec))) == {2, 3}
        out = mask_and_impute(series([1.0, 2.0, 3.0, 4.0, 5.0]), spec)
        np.testing.assert_array_equal(out.data[:, 0], [1, 2, 2, 2, 5])

    def test_prefix_back_filled(self):
        mask = np.array([True, True, False, True, False])
        out = impute_masked(np.array([[9.0], [8.0], [3.0], [4.0], [5.0]]), mask)
        np.testing.assert_array_equal(out[:, 0], [3, 3, 3, 3, 5])

    def test_deterministic(self):
        s = series(np.random.default_rng(0).normal(size=500))
        a = mask_and_impute(s, MaskSpec(0.3, seed=11)).data
        b = mask_and_impute(s, MaskSpec(0.3, seed=11)).data
        np.testing.assert_array_equal(a, b)

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(2, 400),
        f=st.floats(0.0, 1.0),
        patch=st.floats(0.005, 0.2),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_masked_fraction_band(self, n, f, patch, seed):
        spec = MaskSpec(f, patch, seed)
        frac = draw_mask(n, spec).mean()
        max_len = math.ceil(patch * n)
        assert f - 1e-12 <= frac <= f + max_len / n + 1e-12
        out = mask_and_impute(series(np.random.default_rng(seed).normal(size=n)), spec)
        assert np.all(np.isfinite(out.data))
