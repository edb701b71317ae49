import numpy as np
import pytest

from measures.grid import mean_vector
from measures.weights import WeightFunction, DiffusionSpec
from drift.kernels import LinearField, OddDifferenceKernel
from drift.models import MeanFieldLinear, ConvolutionKernel, RvhModel
from drift.conditions import HConstants, closed_form_constants, default_test_measures, check_h_conditions
from utils.exceptions import ConstantsMissing


def test_closed_form_constants(weight, unit_diffusion):
    constants = closed_form_constants(MeanFieldLinear(epsilon=0.5, shift=0.5), weight, unit_diffusion, [1.0])
    # c = |0.5 + 0.5 * 1| = 1
    assert constants.C == pytest.approx(4.0)
    assert constants.N1 == pytest.approx(2.0)
    assert closed_form_constants(MeanFieldLinear(epsilon=2.0), weight, unit_diffusion, [0.0]) is None
    assert closed_form_constants(MeanFieldLinear(epsilon=0.5), WeightFunction(m=2.0), unit_diffusion, [0.0]) is None


def test_rvh_closed_form_constants():
    model = RvhModel(R=2.0 * np.eye(2), v=[1.0, 1.0], h=[1.0, 1.0])
    constants = closed_form_constants(model, WeightFunction(), DiffusionSpec.create(1.0, 2), [0.0])
    assert constants.C == pytest.approx(6.0)
    assert constants.Lambda == pytest.approx(1.0)


def test_halved_constants():
    halved = HConstants(C=4.0, Lambda=1.0, N1=2.0, N2=1.0).halved()
    assert (halved.C, halved.Lambda, halved.N1, halved.N2) == (2.0, 1.0, 1.0, 0.5)


def test_default_measures_follow_constraints(grid_1d):
    model = MeanFieldLinear(epsilon=0.5)
    measures = default_test_measures(model, grid_1d, count=4, seed=3, targets=[0.0])
    assert len(measures) == 4
    for density in measures:
        assert density.mass == pytest.approx(1.0)
        assert mean_vector(density)[0] == pytest.approx(0.0, abs=1e-9)


def test_closed_form_constants_satisfy_conditions(grid_1d, weight, unit_diffusion):
    model = MeanFieldLinear(epsilon=0.5)
    measures = default_test_measures(model, grid_1d, count=5, targets=[0.0])
    report = check_h_conditions(model, weight, measures, unit_diffusion, sample_points=2000, targets=[0.0])
    assert report.source == "closed-form"
    assert not report.violated
    assert report.measures == 5
    assert report.theta >= report.C / report.Lambda + 1.0


def test_halved_constants_violate_first_condition(grid_1d, weight, unit_diffusion):
    model = MeanFieldLinear(epsilon=0.5)
    measures = default_test_measures(model, grid_1d, count=3, targets=[0.0])
    constants = closed_form_constants(model, weight, unit_diffusion, [0.0]).halved()
    report = check_h_conditions(model, weight, measures, unit_diffusion, sample_points=2000,
                                constants=constants, targets=[0.0])
    assert report.source == "supplied"
    assert "H1" in report.violations
    assert report.margins["H1"] == pytest.approx(-1.5, abs=0.05)
    assert "violations" in report.to_dict()


def test_convolution_kernel_needs_fitting(grid_1d, weight, unit_diffusion):
    model = ConvolutionKernel(LinearField(-1.0), OddDifferenceKernel(0.5, 1.0), 0.3)
    measures = default_test_measures(model, grid_1d, count=3)
    with pytest.raises(ConstantsMissing):
        check_h_conditions(model, weight, measures, unit_diffusion, sample_points=500)

    report = check_h_conditions(model, weight, measures, unit_diffusion, sample_points=2000, auto_fit=True)
    assert report.source == "fitted"
    assert report.Lambda > 0
    assert not report.violated


def test_empty_measures_rejected(weight, unit_diffusion):
    with pytest.raises(ValueError):
        check_h_conditions(MeanFieldLinear(epsilon=0.5), weight, [], unit_diffusion)
