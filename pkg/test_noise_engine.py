"""
Noise engine: coefficients, Brownian paths, h_c, the rescaling transform and
the exceedance probabilities.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import ks_2samp, norm

from snls_lab.constants import Criticality, Direction, EstimateMethod, Frame
from snls_lab.errors import (
    CliValidationError,
    ExponentDimensionMismatchError,
    FrameMismatchError,
    InvalidParameterError,
    NonPositiveInputError,
    OffMeshError,
)
from snls_lab.numerics import noise
from snls_lab.numerics.profiles import gaussian
from snls_lab.numerics.spectral import FieldState, make_grid


def test_model_constants():
    model = noise.build_noise_model([1 + 1j, 2.0], 5.0, -1, 1)
    assert model.mu == pytest.approx(0.5 * (2 + 4))
    assert model.mu_hat == pytest.approx(0.5 * ((2 + 2j) + (4 + 4)))
    assert model.mu_hat.real == pytest.approx(model.c_norm ** 2)
    assert model.c_norm == pytest.approx(math.sqrt(5))
    assert model.criticality == Criticality.MASS

    quiet = noise.build_noise_model([], 3.0, 1, 2)
    assert quiet.mu_hat == 0 and quiet.c_norm == 0 and quiet.is_conservative


def test_conservative_noise_has_zero_norm():
    model = noise.build_noise_model([2j, -0.5j], 5.0, -1, 1)
    assert model.c_norm == 0.0
    assert model.mu_hat.real == pytest.approx(0.0, abs=1e-15)


def test_criticality():
    assert noise.criticality_of(5.0, 1) == Criticality.MASS
    assert noise.criticality_of(3.0, 2) == Criticality.MASS
    assert noise.criticality_of(5.0, 3) == Criticality.ENERGY
    assert noise.criticality_of(7 / 3, 3) == Criticality.MASS
    with pytest.raises(ExponentDimensionMismatchError):
        noise.build_noise_model([1.0], 3.0, -1, 1)


def test_model_dict_round_trip():
    model = noise.build_noise_model([0.3 - 0.4j, 1.5], 5.0, -1, 1)
    assert noise.NoiseModel.from_dict(model.to_dict()) == model


def test_parse_phi_list():
    assert noise.parse_phi_list("1+2i, -0.5i, i, 3") == [1 + 2j, -0.5j, 1j, 3]
    assert noise.parse_phi_list("1-i") == [1 - 1j]
    assert noise.parse_phi_list("") == []
    with pytest.raises(CliValidationError):
        noise.parse_complex("abc")


def test_sample_path_is_deterministic():
    model = noise.build_noise_model([1.0, 0.5j], 5.0, -1, 1)
    a = noise.sample_path(model, 1e-2, 1.0, [7, 0, 3])
    b = noise.sample_path(model, 1e-2, 1.0, [7, 0, 3])
    c = noise.sample_path(model, 1e-2, 1.0, [7, 0, 4])
    assert a.n_steps == 100 and a.M[0] == 0 and a.W[0] == 0
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)
    assert_allclose(a.M, a.beta[:, 0], atol=1e-14)


def test_path_lookups_require_mesh_times():
    model = noise.build_noise_model([1.0], 5.0, -1, 1)
    path = noise.sample_path(model, 1e-2, 1.0, 0)
    assert noise.eval_gbm(path, model, 0.0) == 1.0
    path.M_at(0.5)
    with pytest.raises(OffMeshError):
        noise.eval_gbm(path, model, 0.005)
    with pytest.raises(OffMeshError):
        path.W_at(2.0)


def test_coarsen_observes_the_same_realization():
    model = noise.build_noise_model([1.0], 5.0, -1, 1)
    path = noise.sample_path(model, 1e-3, 1.0, 1)
    coarse = path.coarsen(4)
    assert coarse.n_steps == 250 and coarse.dt == pytest.approx(4e-3)
    assert_allclose(coarse.M, path.M[::4], atol=1e-12)
    with pytest.raises(OffMeshError):
        path.coarsen(3)


def test_gbm_is_one_without_noise():
    quiet = noise.build_noise_model([], 5.0, -1, 1)
    path = noise.sample_path(quiet, 1e-2, 1.0, 0)
    assert np.all(noise.gbm_series(path, quiet) == 1.0)


def test_gbm_interpolant_agrees_on_mesh():
    model = noise.build_noise_model([2.0], 5.0, -1, 1)
    path = noise.sample_path(model, 1e-2, 1.0, 3)
    h = noise.gbm_interpolant(path, model)
    assert_allclose(h(path.times), noise.gbm_series(path, model), rtol=1e-12)


def test_rescale_round_trip_and_frames():
    grid = make_grid(1, 64, 20.0)
    model = noise.build_noise_model([1.0, 0.5 + 0.5j], 5.0, -1, 1)
    path = noise.sample_path(model, 1e-2, 1.0, 2)
    f = FieldState(grid=grid, values=gaussian(grid), frame=Frame.PHYSICAL, time=0.5)
    u = noise.rescale(f, path, model, Direction.TO_RESCALED)
    assert u.frame == Frame.RESCALED
    back = noise.rescale(u, path, model, Direction.TO_PHYSICAL)
    assert_allclose(back.values, f.values, rtol=1e-12)
    factor = noise.rescale_factor(path, model, 0.5)
    assert_allclose(u.values, f.values * factor, rtol=1e-12)
    with pytest.raises(FrameMismatchError):
        noise.rescale(u, path, model, Direction.TO_RESCALED)


def test_rescale_at_time_zero_is_identity():
    grid = make_grid(1, 64, 20.0)
    model = noise.build_noise_model([3.0], 5.0, -1, 1)
    path = noise.sample_path(model, 1e-2, 1.0, 0)
    f = FieldState(grid=grid, values=gaussian(grid), frame=Frame.PHYSICAL)
    assert_allclose(noise.rescale(f, path, model, Direction.TO_RESCALED).values, f.values, rtol=0, atol=0)


def test_wilson_interval():
    lo, hi = noise.wilson_interval(0, 20)
    assert lo == 0.0 and 0 < hi < 0.2
    lo, hi = noise.wilson_interval(20, 20)
    assert hi == 1.0 and 0.8 < lo < 1.0
    lo, hi = noise.wilson_interval(30, 100)
    assert lo < 0.3 < hi
    assert noise.wilson_interval(0, 0) == (0.0, 1.0)


def test_closed_form_unit_strength():
    estimate = noise.decay_exceedance_probability(1.0, 1.0, 5.0)
    assert estimate.method == EstimateMethod.CLOSED_FORM
    assert estimate.p_hat == pytest.approx(2 * norm.cdf(-1.0), abs=1e-12)
    assert estimate.p_hat == pytest.approx(0.3173, abs=1e-4)


def test_closed_form_decays_with_strength():
    values = [noise.decay_exceedance_probability(s, 0.5, 5.0).p_hat for s in (1, 2, 4, 8)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 0.05


def test_closed_form_small_epsilon_tends_to_one():
    assert noise.decay_exceedance_probability(1.0, 1e-12, 5.0).p_hat > 0.99


def test_exceedance_rejects_bad_inputs():
    with pytest.raises(NonPositiveInputError):
        noise.decay_exceedance_probability(0.0, 0.5, 5.0)
    with pytest.raises(NonPositiveInputError):
        noise.decay_exceedance_probability(1.0, -1.0, 5.0)


def test_monte_carlo_agrees_with_closed_form():
    exact = noise.exceedance_closed_form(1.0, 0.0)
    estimate = noise.decay_exceedance_probability(
        1.0, 1.0, 5.0, method=EstimateMethod.MONTE_CARLO, n_samples=20_000, seed=11, dt=1e-2, workers=1
    )
    se = math.sqrt(exact * (1 - exact) / estimate.n_samples)
    assert abs(estimate.p_hat - exact) <= 4 * se
    assert estimate.tail_bound is not None and estimate.tail_bound < 1e-3
    assert estimate.ci_lo <= estimate.p_hat <= estimate.ci_hi


@pytest.mark.slow
@pytest.mark.parametrize("c_norm", [1.0, 2.0, 4.0])
def test_monte_carlo_agrees_with_closed_form_full_size(c_norm):
    exact = noise.decay_exceedance_probability(c_norm, 0.5, 5.0).p_hat
    estimate = noise.decay_exceedance_probability(
        c_norm, 0.5, 5.0, method=EstimateMethod.MONTE_CARLO, n_samples=100_000, seed=0, dt=1e-3
    )
    se = math.sqrt(exact * (1 - exact) / estimate.n_samples)
    assert abs(estimate.p_hat - exact) <= 3 * se


def test_sup_bound_quantile_has_exact_tail():
    eta, alpha = 0.1, 5.0
    A = noise.sup_bound_quantile(alpha, eta)
    tail = noise.exceedance_closed_form(0.0, noise.reduced_level(A, alpha))
    assert tail == pytest.approx(eta / 2, rel=1e-12)
    with pytest.raises(InvalidParameterError):
        noise.sup_bound_quantile(alpha, 0.0)


def test_omega_probability_respects_union_bound():
    alpha, eta, epsilon, s = 5.0, 0.1, 1.0, 4.0
    A = noise.sup_bound_quantile(alpha, eta)
    estimate = noise.omega_c_probability(s, alpha, A, epsilon, n_samples=2000, seed=5, dt=1e-2, workers=1)
    lower = 1 - eta / 2 - noise.exceedance_closed_form(s, noise.reduced_level(epsilon, alpha))
    assert estimate.ci_hi >= lower - 0.01
    assert 0.0 <= estimate.p_hat <= 1.0


def test_time_change_identity():
    direct = noise.sup_gbm_samples(2.0, 5.0, 2000, seed=3, method="direct", dt=1e-2)
    reduced = noise.sup_gbm_samples(2.0, 5.0, 2000, seed=3, method="reduced", dt=1e-2)
    assert ks_2samp(np.log(direct), np.log(reduced)).pvalue > 1e-3


def test_direct_sampler_splits_strength_across_modes():
    samples = noise.sup_gbm_samples(2.0, 5.0, 50, seed=0, method="direct", dt=1e-2, phi=[1.2, 1.6 + 3j])
    assert samples.shape == (50,) and np.all(samples > 0)
    with pytest.raises(InvalidParameterError):
        noise.sup_gbm_samples(2.0, 5.0, 10, seed=0, method="direct", phi=[1.0])


def test_iterated_log_statistic_is_informational():
    stats = noise.iterated_log_statistic(n_samples=20, horizon=1000.0, seed=0)
    assert set(stats) >= {"mean", "max", "quantiles"}
    assert stats["max"] >= stats["mean"]
