import os

import numpy as np
import pytest

from measures.grid import make_gaussian, mean_vector, covariance
from measures.weights import DiffusionSpec
from drift.models import MeanFieldLinear, RvhModel
from solvers.linear_solver import SolveConfig
from solvers.stationary_fixed_point import (
    t_map, t_map_moment_margin, find_stationary, branch_guess, branch_moment_bound, branch_sweep,
    verify_under_flow
)
from utils.exceptions import NoConvergence


def test_t_map_of_mean_field(grid_1d, unit_diffusion):
    """T(sigma) для b = -x + eps m(sigma): гауссовская мера со средним eps m"""
    sigma = make_gaussian(grid_1d, 1.0, 0.5)
    image = t_map(sigma, MeanFieldLinear(epsilon=0.5), unit_diffusion, SolveConfig())
    assert mean_vector(image)[0] == pytest.approx(0.5, abs=1e-8)
    assert covariance(image)[0, 0] == pytest.approx(1.0, abs=1e-6)


def test_unique_stationary_solution(grid_1d, unit_diffusion, weight):
    guess = make_gaussian(grid_1d, 0.5, 1.0)
    result = find_stationary(MeanFieldLinear(epsilon=0.5), unit_diffusion, SolveConfig(), guess)
    assert result.converged
    assert result.residual < 1e-8
    assert mean_vector(result.density)[0] == pytest.approx(0.0, abs=1e-7)
    assert covariance(result.density)[0, 0] == pytest.approx(1.0, abs=1e-6)
    assert result.moment_V == pytest.approx(2.0, abs=1e-5)
    assert len(result.history["residual"]) == result.iterations


def test_constrained_branch_of_unit_coupling(grid_1d, unit_diffusion):
    model = MeanFieldLinear(epsilon=1.0)
    guess = make_gaussian(grid_1d, 0.0, 1.0)
    result = find_stationary(model, unit_diffusion, SolveConfig(), guess, targets=[0.7])
    assert result.converged
    assert result.constraints["x"] == pytest.approx(0.7, abs=1e-9)
    assert mean_vector(result.density)[0] == pytest.approx(0.7, abs=1e-9)


def test_shifted_model_has_no_fixed_point(grid_1d, unit_diffusion):
    guess = make_gaussian(grid_1d, 0.0, 1.0)
    with pytest.raises(NoConvergence) as error:
        find_stationary(MeanFieldLinear(epsilon=1.0, shift=0.1), unit_diffusion, SolveConfig(), guess,
                        max_iterations=5)
    assert error.value.iterations == 5
    assert len(error.value.history["residual"]) == 5


def test_damping_must_be_in_unit_interval(grid_1d, unit_diffusion, standard_gaussian):
    with pytest.raises(ValueError):
        find_stationary(MeanFieldLinear(epsilon=0.5), unit_diffusion, SolveConfig(), standard_gaussian,
                        damping=1.5)


def test_moment_margin_of_t_map(grid_1d, unit_diffusion, weight):
    sigma = make_gaussian(grid_1d, 2.0, 0.25)
    model = MeanFieldLinear(epsilon=0.5)
    image = t_map(sigma, model, unit_diffusion, SolveConfig())
    # T(sigma) = N(1, 1): ∫V dT(sigma) = 3 <= C / Lambda = 4
    assert t_map_moment_margin(sigma, image, weight, C=4.0, Lambda=1.0) == pytest.approx(1.0, abs=1e-5)


def _rvh():
    return RvhModel(R=2.0 * np.eye(2), v=[1.0, 1.0], h=[1.0, 1.0])


def test_branch_guess_respects_constraint(grid_2d):
    guess = branch_guess(grid_2d, _rvh(), 1.0)
    assert np.sum(mean_vector(guess)) == pytest.approx(1.0, abs=1e-9)


def test_branch_sweep(grid_2d):
    diffusion = DiffusionSpec.create(1.0, 2)
    model = _rvh()
    results = branch_sweep(model, diffusion, SolveConfig(), grid_2d, [-1.0, 0.0, 1.0], threads=2)
    assert [r.converged for r in results] == [True, True, True]
    for Q, result in zip([-1.0, 0.0, 1.0], results):
        # Стационарная мера ветви Q: N(Q h / 2, I / 2)
        assert np.allclose(mean_vector(result.density), [Q / 2, Q / 2], atol=1e-6)
        assert result.moment_V <= branch_moment_bound(model, diffusion, Q)
    assert branch_moment_bound(model, diffusion, 0.0) == pytest.approx(3.0)


def test_branch_sweep_needs_single_constraint(grid_2d):
    with pytest.raises(ValueError):
        branch_sweep(MeanFieldLinear(epsilon=1.0, dim=2), DiffusionSpec.create(1.0, 2), SolveConfig(),
                     grid_2d, [0.0])


def test_stationary_is_invariant_under_flow(grid_1d, unit_diffusion, tmp_path):
    model = MeanFieldLinear(epsilon=0.5)
    result = find_stationary(model, unit_diffusion, SolveConfig(), make_gaussian(grid_1d, 0.5, 1.0))
    displacement = verify_under_flow(result, model, unit_diffusion, SolveConfig(dt=0.01), T=1.0)
    assert displacement < 1e-6

    written = result.export(str(tmp_path))
    assert [os.path.basename(p) for p in written] == ["stationary.csv", "stationary.json"]
