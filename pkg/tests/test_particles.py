import os

import numpy as np
import pytest

from measures.grid import GridSpec, make_gaussian, mean_vector
from measures.weights import DiffusionSpec
from drift.kernels import LinearField, LinearKernel
from drift.models import MeanFieldLinear, ConvolutionKernel
from solvers.linear_solver import SolveConfig
from solvers.nonlinear_cauchy import evolve_nonlinear
from particles.simulator import (
    ParticleEnsemble, gaussian_sampler, mixture_sampler, uniform_sampler, point_sampler, simulate,
    simulate_replicas, count_out_of_box, empirical_density, cross_validate
)
from utils.exceptions import TimeGridMismatch


def test_ensemble_validation():
    with pytest.raises(ValueError):
        ParticleEnsemble(np.zeros((50, 1)))
    positions = np.zeros((200, 1))
    positions[3] = np.nan
    with pytest.raises(ValueError):
        ParticleEnsemble(positions)
    assert ParticleEnsemble(np.zeros((200, 2))).dim == 2


def test_samplers_shapes():
    rng = np.random.default_rng(0)
    assert gaussian_sampler([0.0, 1.0], 0.5)(rng, 300).shape == (300, 2)
    assert mixture_sampler([1, 1], [[-2.0], [2.0]], [[0.1], [0.1]])(rng, 300).shape == (300, 1)
    draws = uniform_sampler([-1.0], [1.0])(rng, 300)
    assert np.all((draws >= -1.0) & (draws <= 1.0))


def test_noiseless_run_is_explicit_euler(unit_diffusion):
    N, dt = 100, 0.01
    run = simulate(point_sampler(1.0), MeanFieldLinear(epsilon=0.0), unit_diffusion, N, dt=dt, T=1.0,
                   stride=0.1, noise=np.zeros((100, N, 1)))
    assert len(run.times) == 11
    assert np.allclose(run.final.positions, (1.0 - dt) ** 100)
    assert run.metadata["steps"] == 100


def test_noise_shape_checked(unit_diffusion):
    with pytest.raises(ValueError):
        simulate(point_sampler(0.0), MeanFieldLinear(epsilon=0.0), unit_diffusion, 100, dt=0.01, T=1.0,
                 stride=0.1, noise=np.zeros((10, 100, 1)))


def test_dimension_mismatch(unit_diffusion):
    with pytest.raises(ValueError):
        simulate(point_sampler([0.0, 0.0]), MeanFieldLinear(epsilon=0.0), unit_diffusion, 100, dt=0.01, T=0.1)


def test_ou_stationary_variance(unit_diffusion):
    """Стационарная дисперсия схемы Эйлера-Маруямы для b = -x равна 1 / (1 - dt/2)"""
    dt = 0.01
    run = simulate(gaussian_sampler(0.0, 1.0), MeanFieldLinear(epsilon=0.0), unit_diffusion, 20000,
                   dt=dt, T=2.0, seed=7, stride=0.5)
    variances, errors = run.estimate("variance")
    assert abs(variances[-1] - 1.0 / (1.0 - dt / 2)) < 5 * errors[-1]
    means, _ = run.estimate("mean:0")
    assert means.shape == (5,)


def test_same_seed_is_reproducible(unit_diffusion):
    sampler = gaussian_sampler(0.5, 1.0)
    model = MeanFieldLinear(epsilon=0.5)
    first = simulate(sampler, model, unit_diffusion, 500, dt=0.05, T=0.5, seed=11)
    second = simulate(sampler, model, unit_diffusion, 500, dt=0.05, T=0.5, seed=11)
    assert np.array_equal(first.final.positions, second.final.positions)

    replicas = simulate_replicas(sampler, model, unit_diffusion, 500, dt=0.05, T=0.5, seeds=[11, 12], threads=2)
    assert np.array_equal(replicas[0].final.positions, first.final.positions)
    assert not np.array_equal(replicas[1].final.positions, first.final.positions)


def test_divergence_stops_recording(unit_diffusion):
    model = ConvolutionKernel(LinearField(1e3), LinearKernel(), epsilon=0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        run = simulate(gaussian_sampler(0.0, 1.0), model, unit_diffusion, 100, dt=0.1, T=20.0, stride=1.0)
    assert run.diverged_at is not None
    assert run.diverged_at < 20.0
    assert all(np.all(np.isfinite(s)) for s in run.snapshots)


def test_empirical_density(grid_1d):
    positions = np.random.default_rng(5).standard_normal((5000, 1))
    density = empirical_density(positions, grid_1d)
    assert density.mass == pytest.approx(1.0)
    assert mean_vector(density)[0] == pytest.approx(0.0, abs=0.05)
    smooth = empirical_density(positions, grid_1d, smooth=True)
    assert smooth.mass == pytest.approx(1.0)
    assert count_out_of_box(np.array([[0.0], [9.0], [-100.0]]), grid_1d) == 2


def test_estimate_rejects_unknown_functional(unit_diffusion):
    run = simulate(gaussian_sampler(0.0, 1.0), MeanFieldLinear(epsilon=0.0), unit_diffusion, 100, dt=0.05, T=0.1)
    with pytest.raises(ValueError):
        run.estimate("median")
    values, errors = run.estimate(lambda x: x[:, 0] ** 2)
    assert np.all(errors > 0)


def test_export(unit_diffusion, tmp_path):
    run = simulate(gaussian_sampler(0.0, 1.0), MeanFieldLinear(epsilon=0.0), unit_diffusion, 100, dt=0.05, T=0.2)
    written = [os.path.basename(p) for p in run.export(str(tmp_path))]
    assert "particle_mean.csv" in written
    assert "particles.json" in written
    assert len([name for name in written if name.startswith("ensemble_")]) == 1


@pytest.mark.slow
def test_cross_validation_against_grid_solver():
    grid = GridSpec.create(-8.0, 8.0, 256)
    diffusion = DiffusionSpec.create(1.0, 1)
    model = MeanFieldLinear(epsilon=0.0)
    trajectory = evolve_nonlinear(make_gaussian(grid, 1.0, 0.5), model, diffusion,
                                  SolveConfig(dt=0.01, T=1.0, snapshot_stride=0.25))
    run = simulate(gaussian_sampler(1.0, 0.5), model, diffusion, 20000, dt=0.01, T=1.0, seed=3, stride=0.25)
    functionals = {"mean": "mean", "variance": "variance"}

    report = cross_validate(run, trajectory, functionals)
    assert report.times.tolist() == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    for z in report.z_scores.values():
        assert np.all(z < 6.0)

    run.snapshots = [s + 0.5 for s in run.snapshots]
    shifted = cross_validate(run, trajectory, functionals)
    assert not shifted.passed
    assert len(shifted.flags["mean"]) == 5

    coarse = simulate(gaussian_sampler(1.0, 0.5), model, diffusion, 1000, dt=0.01, T=1.0, stride=0.5)
    with pytest.raises(TimeGridMismatch):
        cross_validate(coarse, trajectory, functionals)


def test_permuted_particles_give_permuted_paths(unit_diffusion):
    N, steps = 100, 10
    rng = np.random.default_rng(4)
    initial = rng.normal(size=(N, 1))
    noise = rng.standard_normal((steps, N, 1))
    order = rng.permutation(N)
    model = MeanFieldLinear(epsilon=0.5)
    run = simulate(initial, model, unit_diffusion, N, dt=0.1, T=1.0, stride=1.0, noise=noise)
    permuted = simulate(initial[order], model, unit_diffusion, N, dt=0.1, T=1.0, stride=1.0,
                        noise=noise[:, order])
    assert np.allclose(permuted.final.positions, run.final.positions[order], atol=1e-12)


@pytest.mark.slow
def test_conserved_mean_across_seeds(unit_diffusion):
    """При eps = 1 выборочное среднее - мартингал: средний сдвиг по 50 зернам в пределах 3 SE"""
    N, T = 100, 1.0
    runs = simulate_replicas(gaussian_sampler(0.5, 1.0), MeanFieldLinear(epsilon=1.0), unit_diffusion, N,
                             dt=0.05, T=T, seeds=range(50), stride=0.5, threads=4)
    shifts = []
    for run in runs:
        means, _ = run.estimate("mean")
        shifts.append(means[-1] - means[0])
    shifts = np.array(shifts)
    standard_error = shifts.std(ddof=1) / np.sqrt(len(shifts))
    assert abs(shifts.mean()) < 3.0 * standard_error
    # Сдвиг среднего создает только шум: дисперсия 2T/N
    assert 0.4 < shifts.var(ddof=1) / (2.0 * T / N) < 1.8
