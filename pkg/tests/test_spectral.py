import math

import numpy as np
import pytest

from nimbus.errors import (
    DegeneratePairError,
    DomainError,
    FormatError,
    InsufficientDataError,
    ParameterError,
    ShapeError,
)
from nimbus.models import (
    Aggregator,
    BandRaster,
    CloudField,
    GammaModel,
    GammaSample,
    GammaSampleSet,
    MultiBandImage,
)
from nimbus.sensors import builtin_profiles
from nimbus.spectral import (
    bin_samples,
    collect_gamma_samples,
    extrapolate_all,
    extrapolate_band,
    extrapolate_values,
    format_fit_report,
    gamma_of,
    gamma_values,
    invert_gamma,
    invert_gamma_values,
    lsgf_fit,
    read_samples_csv,
    write_samples_csv,
)

TARGET_WAVELENGTHS = sorted(
    {wl for profile in builtin_profiles().values() for wl in profile.wavelengths}
)


def _reference_extrapolation(c: float, lambda_r: float, lambda_t: float) -> float:
    gamma = min(max(-0.14 * math.log(c), 0.0), 4.0)
    return (lambda_r / lambda_t) ** gamma * c


# --------------------------------------------------------------------
# Forward model
# --------------------------------------------------------------------


def test_gamma_worked_value(model):
    assert gamma_of(0.05, model) == pytest.approx(0.41940, abs=1e-5)


def test_gamma_clamps(model):
    assert gamma_of(1.0, model) == 0.0
    assert gamma_of(2.0, model) == 0.0
    assert gamma_of(1e-13, model) == 4.0
    with pytest.raises(DomainError):
        gamma_values(np.array([-0.1]), model)


def test_extrapolation_worked_value(model):
    value = float(extrapolate_values(0.05, 1.375, 0.4626, model))
    assert value == pytest.approx(0.07896, abs=1e-5)


def test_extrapolation_matches_scalar_oracle(rng, model):
    c = rng.uniform(1e-4, 0.2, size=1000)
    targets = rng.choice(TARGET_WAVELENGTHS, size=1000)
    for c_r, lambda_t in zip(c, targets):
        ours = float(extrapolate_values(c_r, 1.375, float(lambda_t), model))
        expected = _reference_extrapolation(float(c_r), 1.375, float(lambda_t))
        assert ours == pytest.approx(expected, rel=1e-12)


def test_extrapolation_edge_cases(model):
    assert float(extrapolate_values(0.0, 1.375, 0.45, model)) == 0.0
    with pytest.raises(ParameterError):
        extrapolate_values(0.05, 1.375, 0.0, model)
    with pytest.raises(DomainError):
        extrapolate_values(np.array([-1.0]), 1.375, 0.45, model)


def test_extrapolate_all_follows_profile(landsat, model):
    cirrus = CloudField.from_array(np.full((3, 4), 0.05))
    cloud = extrapolate_all(cirrus, landsat, model)
    assert cloud.band_count == 5
    assert cloud.wavelengths == landsat.wavelengths
    blue = extrapolate_band(cirrus, 0.4626, model)
    assert float(blue.data[0, 0]) == pytest.approx(0.07896, abs=1e-5)
    # shorter wavelengths scatter more
    means = [band.data.mean() for band in cloud.bands]
    assert means == sorted(means, reverse=True)


# --------------------------------------------------------------------
# Inversion and sampling
# --------------------------------------------------------------------


def test_invert_gamma_worked_value():
    assert invert_gamma(0.05, 0.07896, 0.4626, 1.375) == pytest.approx(
        0.41940, abs=1e-4
    )


def test_invert_gamma_errors():
    with pytest.raises(DegeneratePairError):
        invert_gamma(0.05, 0.07, 1.375, 1.375)
    with pytest.raises(DomainError):
        invert_gamma(0.0, 0.07, 0.45, 1.375)
    with pytest.raises(DomainError):
        invert_gamma(0.05, -0.07, 0.45, 1.375)


def test_forward_inverse_round_trip(rng, model):
    c = rng.uniform(1e-4, 0.2, size=500)
    for lambda_t in TARGET_WAVELENGTHS:
        c_t = extrapolate_values(c, 1.375, lambda_t, model)
        recovered = invert_gamma_values(c, c_t, lambda_t, 1.375)
        np.testing.assert_allclose(recovered, gamma_values(c, model), atol=1e-9)


def test_collect_samples_from_synthesized_bands(rng, landsat, model):
    cirrus = CloudField.from_array(rng.uniform(1e-4, 0.2, size=(16, 16)))
    cloud = extrapolate_all(cirrus, landsat, model)
    samples = collect_gamma_samples(cloud, cirrus, min_cr=0.0)
    assert len(samples) == 5 * 16 * 16
    np.testing.assert_allclose(
        samples.gamma, gamma_values(samples.c_r, model), atol=5e-7
    )


def test_collect_samples_guard_and_reference_band(model):
    cirrus = CloudField.from_array(np.array([[0.001, 0.05]]))
    bands = MultiBandImage(
        bands=(
            BandRaster(data=np.array([[0.002, 0.07]]), wavelength=0.48),
            BandRaster(data=np.array([[0.001, 0.05]]), wavelength=1.375),
        )
    )
    samples = collect_gamma_samples(bands, cirrus, min_cr=0.002)
    assert len(samples) == 1
    assert samples.c_r[0] == pytest.approx(0.05)


def test_collect_samples_errors():
    cirrus = CloudField.from_array(np.full((2, 2), 0.05))
    wrong_shape = MultiBandImage(
        bands=(BandRaster(data=np.full((2, 3), 0.07), wavelength=0.48),)
    )
    with pytest.raises(ShapeError):
        collect_gamma_samples(wrong_shape, cirrus, 0.0)
    unlabelled = MultiBandImage(bands=(BandRaster(data=np.full((2, 2), 0.07)),))
    with pytest.raises(ParameterError):
        collect_gamma_samples(unlabelled, cirrus, 0.0)


# --------------------------------------------------------------------
# LSGF
# --------------------------------------------------------------------


def _exact_samples(coefficient: float = -0.14) -> GammaSampleSet:
    c = np.repeat(np.linspace(0.01, 0.5, 50), 3)
    return GammaSampleSet(c_r=c, gamma=coefficient * np.log(c))


@pytest.mark.parametrize("aggregator", [Aggregator.MEAN, Aggregator.MEDIAN])
def test_exact_model_is_recovered(aggregator):
    fit = lsgf_fit(_exact_samples(), bin_count=250, aggregator=aggregator)
    assert fit.coefficient == pytest.approx(-0.14, abs=1e-12)
    assert fit.r_squared[aggregator] == pytest.approx(1.0, abs=1e-12)
    assert len(fit.bin_stats) == 50
    assert fit.intercept_slope == pytest.approx(-0.14, abs=1e-9)
    assert fit.intercept == pytest.approx(0.0, abs=1e-9)
    assert fit.as_gamma_model() == GammaModel(coefficient=fit.coefficient)


def test_mode_aggregator_is_close_on_exact_data():
    fit = lsgf_fit(_exact_samples(), aggregator="mode")
    assert fit.aggregator is Aggregator.MODE
    assert fit.coefficient == pytest.approx(-0.14, abs=0.01)


def test_noisy_samples_recover_coefficient(rng):
    n = 200_000
    c = np.exp(rng.uniform(np.log(1e-3), np.log(0.1), n))
    gamma = -0.14 * np.log(c) + rng.normal(0.0, 0.05, n)
    fit = lsgf_fit(GammaSampleSet(c_r=c, gamma=gamma), bin_count=250)
    assert fit.coefficient == pytest.approx(-0.14, abs=0.01)
    for agg in Aggregator:
        assert fit.coefficients[agg] == pytest.approx(-0.14, abs=0.01)


def test_million_noisy_samples_recover_coefficient(rng):
    n = 1_000_000
    c = np.exp(rng.uniform(np.log(1e-3), np.log(0.1), n))
    gamma = -0.14 * np.log(c) + rng.normal(0.0, 0.05, n)
    fit = lsgf_fit(GammaSampleSet(c_r=c, gamma=gamma), bin_count=250)
    assert fit.coefficients[Aggregator.MEAN] == pytest.approx(-0.14, abs=0.01)
    assert fit.coefficients[Aggregator.MEDIAN] == pytest.approx(-0.14, abs=0.01)
    assert fit.coefficients[Aggregator.MODE] == pytest.approx(-0.14, abs=0.02)
    for agg in Aggregator:
        assert 0.0 < fit.r_squared[agg] <= 1.0


def test_fit_does_not_depend_on_sample_order(rng):
    c = rng.uniform(0.001, 0.2, 5000)
    gamma = -0.14 * np.log(c) + rng.normal(0.0, 0.05, 5000)
    order = rng.permutation(5000)
    a = lsgf_fit(GammaSampleSet(c_r=c, gamma=gamma), bin_count=40)
    b = lsgf_fit(GammaSampleSet(c_r=c[order], gamma=gamma[order]), bin_count=40)
    assert a == b


def test_fit_accepts_sample_records():
    records = list(_exact_samples().samples())
    assert isinstance(records[0], GammaSample)
    assert lsgf_fit(records).coefficient == pytest.approx(-0.14, abs=1e-12)


def test_too_few_bins_is_insufficient_data():
    single = GammaSampleSet(c_r=[0.05, 0.05], gamma=[0.4, 0.5])
    with pytest.raises(InsufficientDataError):
        lsgf_fit(single)
    with pytest.raises(InsufficientDataError):
        lsgf_fit(GammaSampleSet(c_r=[], gamma=[]))
    with pytest.raises(ParameterError):
        lsgf_fit(_exact_samples(), bin_count=0)


def test_bin_statistics_and_mode_ties():
    samples = GammaSampleSet(c_r=[0.05, 0.05], gamma=[0.101, 0.205])
    (stat,) = bin_samples(samples, 1)
    assert stat.count == 2
    assert stat.mode_gamma == pytest.approx(0.105)
    assert stat.median_gamma == pytest.approx(0.153)
    assert stat.mean_gamma == pytest.approx(0.153)


def test_mode_survives_an_outlier_gamma():
    samples = GammaSampleSet(c_r=[0.05, 0.05, 0.05], gamma=[0.101, 0.102, 1e9])
    (stat,) = bin_samples(samples, 1)
    assert stat.mode_gamma == pytest.approx(0.105)
    assert stat.median_gamma == pytest.approx(0.102)


def test_empty_bins_are_dropped():
    samples = GammaSampleSet(c_r=[0.01, 0.02, 0.5], gamma=[0.6, 0.5, 0.1])
    assert len(bin_samples(samples, 10)) == 2


# --------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------


def test_samples_csv_round_trip(tmp_path, rng):
    samples = GammaSampleSet(c_r=rng.uniform(0.001, 0.2, 50), gamma=rng.normal(size=50))
    path = tmp_path / "samples.csv"
    write_samples_csv(samples, path)
    assert path.read_text().splitlines()[0] == "c_r,gamma"
    back = read_samples_csv(path)
    np.testing.assert_array_equal(back.c_r, samples.c_r)
    np.testing.assert_array_equal(back.gamma, samples.gamma)


@pytest.mark.parametrize("scale", [1e-8, 1.0, 1e6])
def test_samples_csv_is_exact_across_magnitudes(tmp_path, rng, scale):
    samples = GammaSampleSet(
        c_r=rng.uniform(0.01, 1.0, 200) * scale, gamma=rng.uniform(-4.0, 4.0, 200)
    )
    path = tmp_path / "samples.csv"
    write_samples_csv(samples, path)
    back = read_samples_csv(path)
    assert back.c_r.tobytes() == samples.c_r.tobytes()
    assert back.gamma.tobytes() == samples.gamma.tobytes()


def test_samples_csv_with_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n0.1,0.2\n")
    with pytest.raises(FormatError):
        read_samples_csv(path)


def test_fit_report_layout():
    report = format_fit_report(lsgf_fit(_exact_samples()))
    lines = report.splitlines()
    assert lines[0].startswith("coefficient = -0.1")
    assert "aggregator = mean" in lines
    assert "mean_c_r,mode_gamma,median_gamma,mean_gamma,count" in lines
    assert lines[-1].endswith(",3")
