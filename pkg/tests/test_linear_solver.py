import numpy as np
import pytest

from measures.grid import GridSpec, DensityField, make_gaussian, mean_vector, normalize, cell_average_gaussian
from measures.weights import DiffusionSpec
from invariants.functions import LinearForm, Monomial
from solvers.linear_solver import (
    SolveConfig, bernoulli, chang_cooper_delta, default_dt, build_generator, LinearStepper, step_linear,
    check_confining, evolve_linear, solve_linear_stationary, weak_form_residual, mass_defect
)
from solvers.trajectory import time_grid
from utils.exceptions import StabilityViolation, NotConfining


def _ou_drift(grid, rate=1.0, center=0.0):
    return -rate * (grid.centers - center)


def test_flux_weights():
    assert bernoulli(np.array([0.0]))[0] == pytest.approx(1.0)
    delta = chang_cooper_delta(np.array([-50.0, -1e-7, 0.0, 2.0, 50.0]))
    assert delta[2] == pytest.approx(0.5)
    assert np.all((delta >= 0) & (delta <= 1))
    assert delta[1] == pytest.approx(0.5, abs=1e-7)


@pytest.mark.parametrize("scheme", ["ChangCooper", "ExponentialUpwind"])
def test_generator_conserves_mass(grid_2d, scheme):
    drift = np.random.default_rng(0).normal(size=(grid_2d.size, 2))
    L = build_generator(grid_2d, drift, DiffusionSpec.create([1.0, 0.5], 2), scheme)
    assert np.allclose(np.asarray(L.sum(axis=0)).ravel(), 0.0, atol=1e-9)
    entries = L.tocoo()
    assert np.all(entries.data[entries.row != entries.col] >= 0)


def test_implicit_step_mass_and_positivity(grid_1d, unit_diffusion):
    rho = make_gaussian(grid_1d, 1.0, 0.1)
    after = step_linear(rho, _ou_drift(grid_1d), unit_diffusion, dt=0.05)
    assert mass_defect(rho, after) < 1e-12
    assert np.all(after.values >= 0)


def test_implicit_step_2d(grid_2d):
    rho = make_gaussian(grid_2d, [1.0, -1.0], [0.5, 0.5])
    stepper = LinearStepper(grid_2d, _ou_drift(grid_2d), DiffusionSpec.create(1.0, 2), dt=0.05)
    after = stepper.step(stepper.step(rho))
    assert after.mass == pytest.approx(1.0, abs=1e-12)


def test_explicit_step_stability(grid_1d, unit_diffusion):
    with pytest.raises(StabilityViolation):
        LinearStepper(grid_1d, _ou_drift(grid_1d), unit_diffusion, dt=1.0, stepping="explicit")
    rho = make_gaussian(grid_1d, 0.0, 1.0)
    after = step_linear(rho, _ou_drift(grid_1d), unit_diffusion, dt=1e-3, stepping="explicit")
    assert after.mass == pytest.approx(1.0, abs=1e-12)


def test_confinement(grid_1d):
    assert check_confining(grid_1d, _ou_drift(grid_1d))
    with pytest.raises(NotConfining):
        check_confining(grid_1d, grid_1d.centers)
    assert not check_confining(grid_1d, grid_1d.centers, mode="warn")


def test_stationary_is_discrete_gibbs(grid_1d, unit_diffusion):
    """Для b = -x стационарное решение совпадает с exp(-x^2/2) в центрах ячеек"""
    cfg = SolveConfig()
    mu = solve_linear_stationary(_ou_drift(grid_1d), unit_diffusion, cfg, grid_1d)
    gibbs = normalize(DensityField(grid_1d, np.exp(-0.5 * grid_1d.centers[:, 0] ** 2)))
    assert np.allclose(mu.values, gibbs.values, atol=1e-8)


def test_long_time_matches_direct(grid_1d, unit_diffusion):
    drift = _ou_drift(grid_1d, center=0.5)
    direct = solve_linear_stationary(drift, unit_diffusion, SolveConfig(), grid_1d)
    long_time = solve_linear_stationary(drift, unit_diffusion, SolveConfig(stationary_mode="LongTime"), grid_1d)
    assert np.allclose(long_time.values, direct.values, atol=1e-6)
    assert mean_vector(long_time)[0] == pytest.approx(0.5, abs=1e-6)


def test_evolve_linear_mean_decay(grid_1d, unit_diffusion):
    rho0 = make_gaussian(grid_1d, 2.0, 0.25)
    cfg = SolveConfig(dt=1e-3, T=1.0, snapshot_stride=0.25)
    trajectory = evolve_linear(rho0, _ou_drift(grid_1d), unit_diffusion, cfg)
    assert trajectory.times == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert mean_vector(trajectory.final)[0] == pytest.approx(2.0 * np.exp(-1.0), abs=1e-2)
    _, mass = trajectory.series("mass")
    assert np.max(np.abs(mass - 1.0)) < 1e-10


def test_weak_form_identity(grid_1d, unit_diffusion):
    rho = make_gaussian(grid_1d, 0.5, 0.8)
    drift = _ou_drift(grid_1d)
    assert weak_form_residual(rho, drift, unit_diffusion, LinearForm([1.0])) < 5e-3
    assert weak_form_residual(rho, drift, unit_diffusion, Monomial([2])) < 5e-2


def test_time_grid_alignment():
    dt, steps, every = time_grid(1.0, 0.03, 0.1)
    assert every == 4
    assert dt == pytest.approx(0.025)
    assert steps == 40
    assert time_grid(0.0, 0.1, 0.1)[1] == 0


def test_solve_config_validation(grid_1d):
    with pytest.raises(ValueError):
        SolveConfig(dt=-1.0)
    with pytest.raises(ValueError):
        SolveConfig(scheme="Upwind")
    with pytest.raises(ValueError):
        SolveConfig(drift_lag=0)
    assert default_dt(grid_1d, _ou_drift(grid_1d)) == pytest.approx(0.125 / (2 * 7.9375 + 1))


def test_second_order_against_cell_averages(unit_diffusion):
    """Ошибка относительно точных средних по ячейкам убывает в 4 раза при удвоении сетки"""
    errors = []
    for cells in (64, 128):
        grid = GridSpec.create(-8.0, 8.0, cells)
        mu = solve_linear_stationary(_ou_drift(grid), unit_diffusion, SolveConfig(), grid)
        exact = cell_average_gaussian(grid, 0.0, 1.0)
        errors.append(np.max(np.abs(mu.values - exact.values)))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.2)


def test_exponential_upwind_is_independent_cross_check(unit_diffusion):
    """Контрольная схема дает другой оператор, но сходится к тому же решению"""
    grid = GridSpec.create(-8.0, 8.0, 128)
    drift = _ou_drift(grid)
    chang_cooper = build_generator(grid, drift, unit_diffusion, "ChangCooper")
    upwind = build_generator(grid, drift, unit_diffusion, "ExponentialUpwind")
    assert abs(chang_cooper - upwind).max() > 1e-3
    assert np.allclose(np.asarray(upwind.sum(axis=0)).ravel(), 0.0, atol=1e-9)

    gaps = []
    for cells in (64, 128):
        grid = GridSpec.create(-8.0, 8.0, cells)
        reference = solve_linear_stationary(_ou_drift(grid), unit_diffusion, SolveConfig(), grid)
        check = solve_linear_stationary(_ou_drift(grid), unit_diffusion,
                                        SolveConfig(scheme="ExponentialUpwind"), grid)
        gaps.append(np.max(np.abs(reference.values - check.values)))
    assert 1e-7 < gaps[1] < 5e-3
    assert gaps[0] / gaps[1] > 2.0

    rho0 = make_gaussian(grid, 2.0, 0.25)
    cfg = SolveConfig(dt=0.01, T=1.0, snapshot_stride=0.5)
    final_cc = evolve_linear(rho0, _ou_drift(grid), unit_diffusion, cfg).final
    cfg_eu = SolveConfig(dt=0.01, T=1.0, snapshot_stride=0.5, scheme="ExponentialUpwind")
    final_eu = evolve_linear(rho0, _ou_drift(grid), unit_diffusion, cfg_eu).final
    assert mean_vector(final_eu)[0] == pytest.approx(mean_vector(final_cc)[0], abs=5e-3)
