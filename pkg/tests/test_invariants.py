import numpy as np
import pytest

from measures.grid import make_gaussian, mean_vector
from measures.weights import DiffusionSpec
from drift.kernels import LinearField, LinearKernel
from drift.models import MeanFieldLinear, ConvolutionKernel, RvhModel
from invariants.functions import (
    Monomial, LinearForm, Exponential, Constant, SampledFunction, coordinate, function_from_dict,
    constraint_values, project_constraints
)
from invariants.classifier import check_membership, InvariantReport, I0, IPLUS, NEITHER
from invariants.tracking import track_functional, nonconvergence_witness
from solvers.trajectory import Trajectory
from utils.exceptions import NonSmoothPsi, AnisotropicDiffusion, EmptyTrajectory, NoConvergence


def test_monomial_derivatives():
    psi = Monomial([2, 1])
    point = np.array([[2.0, 3.0]])
    assert psi.value(point)[0] == pytest.approx(12.0)
    assert np.allclose(psi.gradient(point)[0], [12.0, 4.0])
    assert np.allclose(psi.hessian(point)[0], [[6.0, 4.0], [4.0, 0.0]])
    assert psi.laplacian(point)[0] == pytest.approx(6.0)


def test_exponential_and_constant():
    psi = Exponential([0.5], scale=2.0)
    x = np.array([[0.0], [2.0]])
    assert np.allclose(psi.gradient(x)[:, 0], 0.5 * psi.value(x))
    assert np.allclose(psi.hessian(x)[:, 0, 0], 0.25 * psi.value(x))
    assert np.allclose(Constant(3.0).gradient(x), 0.0)


def test_function_catalog():
    psi = function_from_dict({"kind": "monomial", "powers": 2}, 2)
    assert psi.powers.tolist() == [2, 0]
    assert isinstance(function_from_dict({"kind": "linear-form", "v": [1, 1]}, 2), LinearForm)
    with pytest.raises(ValueError):
        function_from_dict({"kind": "spline"}, 1)


def test_sampled_function_has_no_derivatives():
    psi = SampledFunction(np.abs, 1)
    with pytest.raises(NonSmoothPsi):
        psi.gradient(np.zeros((1, 1)))


def test_projection_single_constraint(standard_gaussian):
    projected = project_constraints(standard_gaussian, [coordinate(0, 1)], [0.5])
    assert projected.mass == pytest.approx(1.0)
    assert mean_vector(projected)[0] == pytest.approx(0.5, abs=1e-10)


def test_projection_two_constraints(grid_2d):
    density = make_gaussian(grid_2d, [0.0, 0.0], [1.0, 1.0])
    functions = [coordinate(0, 2), coordinate(1, 2)]
    projected = project_constraints(density, functions, [0.3, -0.2])
    assert np.allclose(constraint_values(projected, functions), [0.3, -0.2], atol=1e-10)


def test_projection_edge_cases(standard_gaussian):
    assert np.array_equal(project_constraints(standard_gaussian, [], []).values, standard_gaussian.values)
    with pytest.raises(ValueError):
        project_constraints(standard_gaussian, [coordinate(0, 1)], [0.1, 0.2])
    with pytest.raises(NoConvergence):
        # Среднее вне области недостижимо
        project_constraints(standard_gaussian, [coordinate(0, 1)], [20.0])


def test_mean_is_conserved_for_unit_coupling():
    kernel = MeanFieldLinear(epsilon=1.0).interaction_kernel()
    report = check_membership(LinearForm([1.0]), kernel, samples=200)
    assert report.classification == I0
    assert report.lam is None
    assert report.growth_ok


def test_square_is_neither():
    kernel = MeanFieldLinear(epsilon=1.0).interaction_kernel()
    report = check_membership(Monomial([2]), kernel, samples=200)
    assert report.classification == NEITHER
    assert not report.growth_ok


def test_iplus_with_fitted_and_wrong_lambda():
    model = ConvolutionKernel(LinearField(0.0), LinearKernel(P=0.5), epsilon=1.0)
    report = check_membership(LinearForm([1.0]), model.interaction_kernel(), samples=200)
    assert report.classification == IPLUS
    assert report.lam == pytest.approx(0.5)

    wrong = check_membership(LinearForm([1.0]), model.interaction_kernel(), candidate_lambda=0.3, samples=200)
    assert wrong.classification == NEITHER


def test_constraint_functional_of_rvh_model():
    model = RvhModel(R=2.0 * np.eye(2), v=[1.0, 1.0], h=[1.0, 1.0])
    report = check_membership(LinearForm([1.0, 1.0]), model.interaction_kernel(), samples=200)
    assert report.classification == I0


def test_membership_preconditions():
    kernel = MeanFieldLinear(epsilon=1.0).interaction_kernel()
    with pytest.raises(NonSmoothPsi):
        check_membership(SampledFunction(np.abs, 1), kernel)
    with pytest.raises(AnisotropicDiffusion):
        check_membership(LinearForm([1.0]), kernel, diffusion=DiffusionSpec.create(2.0, 1))
    with pytest.raises(ValueError):
        check_membership(LinearForm([1.0, 0.0]), kernel)


def _trajectory(grid, means):
    times = [0.5 * i for i in range(len(means))]
    snapshots = [make_gaussian(grid, m, 1.0) for m in means]
    return Trajectory(grid=grid, times=times, snapshots=snapshots)


def test_track_exponential_law(grid_1d):
    times = 0.5 * np.arange(9)
    trajectory = _trajectory(grid_1d, np.exp(-0.5 * times))
    track = track_functional(trajectory, LinearForm([1.0]))
    assert track.law == "exponential"
    assert track.rate == pytest.approx(-0.5, abs=1e-6)
    assert np.allclose(track.predicted(), track.values, rtol=1e-6)


def test_track_constant_law(grid_1d):
    track = track_functional(_trajectory(grid_1d, [1.0] * 5), LinearForm([1.0]))
    assert track.law == "constant"
    assert track.relative_deviation < 1e-12


def test_track_empty(grid_1d):
    with pytest.raises(EmptyTrajectory):
        track_functional(Trajectory(grid=grid_1d), LinearForm([1.0]))


def test_nonconvergence_witness(grid_1d):
    psi = LinearForm([1.0])
    nu = make_gaussian(grid_1d, 1.0, 1.0)
    mu = make_gaussian(grid_1d, 0.0, 1.0)
    conserved = InvariantReport(psi, I0, None, 0.0, True)
    growing = InvariantReport(psi, IPLUS, 0.5, 0.0, True)
    assert nonconvergence_witness(nu, mu, [conserved]) is psi
    assert nonconvergence_witness(nu, mu, [growing]) is psi
    assert nonconvergence_witness(mu, mu, [conserved, growing]) is None


def test_symmetric_sum_kernel_is_rejected():
    report = check_membership(LinearForm([1.0]), LinearKernel(P=1.0, Q=1.0), samples=200)
    assert report.classification == NEITHER
