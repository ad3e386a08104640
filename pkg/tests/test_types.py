"""Core type invariants, validation and serialization round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poismix import (
    CiSet,
    CoverageReport,
    Dataset,
    GvaFit,
    ModelParams,
    NegativeCount,
    NonFiniteValue,
    ParameterCoverage,
    ShapeMismatch,
    VariationalParams,
    dataset_from_csv,
    dataset_to_csv,
    validate_dataset,
)
from poismix.types import (
    ci_set_from_dict,
    ci_set_to_dict,
    coverage_report_from_dict,
    coverage_report_to_dict,
    gva_fit_from_dict,
    gva_fit_to_dict,
    model_params_from_dict,
    model_params_to_dict,
)


def test_model_params_rejects_bad_values():
    with pytest.raises(ValueError):
        ModelParams(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        ModelParams(0.0, 0.0, -1.0)
    with pytest.raises(ValueError):
        ModelParams(np.nan, 0.0, 1.0)


def test_variational_params_invariants():
    v = VariationalParams([0.0, 1.0], [0.5, 0.25])
    assert v.m == 2
    with pytest.raises(ValueError):
        VariationalParams([0.0], [0.0])
    with pytest.raises(ValueError):
        VariationalParams([0.0, 1.0], [0.5])


def test_types_are_immutable():
    d = Dataset(x=[[0.0, 1.0]], y=[[1, 2]])
    with pytest.raises(ValueError):
        d.x[0, 0] = 5.0
    v = VariationalParams([0.0], [1.0])
    with pytest.raises(ValueError):
        v.mu[0] = 1.0


def test_validate_minimal_panel_ok():
    validate_dataset(Dataset(x=np.zeros((2, 2)), y=np.zeros((2, 2), dtype=int)))


def test_validate_shape_mismatch():
    d = Dataset.__new__(Dataset)
    object.__setattr__(d, "x", np.zeros((2, 2)))
    object.__setattr__(d, "y", np.zeros((2, 3), dtype=np.int64))
    object.__setattr__(d, "u_latent", None)
    with pytest.raises(ShapeMismatch):
        validate_dataset(d)


def test_validate_negative_count():
    y = np.zeros((2, 2), dtype=int)
    y[1, 0] = -1
    d = Dataset.__new__(Dataset)
    object.__setattr__(d, "x", np.zeros((2, 2)))
    object.__setattr__(d, "y", y)
    object.__setattr__(d, "u_latent", None)
    with pytest.raises(NegativeCount) as exc:
        validate_dataset(d)
    assert exc.value.index == (1, 0)


def test_validate_non_finite_x():
    x = np.zeros((2, 2))
    x[0, 1] = np.inf
    d = Dataset(x=x, y=np.zeros((2, 2), dtype=int))
    with pytest.raises(NonFiniteValue) as exc:
        validate_dataset(d)
    assert exc.value.index == (0, 1)


@settings(max_examples=60, deadline=None)
@given(
    m=st.integers(1, 6),
    n=st.integers(1, 6),
    bad=st.sampled_from(["ok", "negative", "nonfinite"]),
    seed=st.integers(0, 2**20),
)
def test_validate_accepts_exactly_the_invariants(m, n, bad, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(m, n))
    y = rng.poisson(1.0, size=(m, n)).astype(np.int64)
    if bad == "negative":
        y[rng.integers(m), rng.integers(n)] = -1 - int(rng.integers(3))
    if bad == "nonfinite":
        x[rng.integers(m), rng.integers(n)] = np.nan
    d = Dataset.__new__(Dataset)
    object.__setattr__(d, "x", x)
    object.__setattr__(d, "y", y)
    object.__setattr__(d, "u_latent", None)
    if bad == "ok":
        validate_dataset(d)
    else:
        with pytest.raises((NegativeCount, NonFiniteValue)):
            validate_dataset(d)


def _example_fit(m=3):
    return GvaFit(
        params=ModelParams(-0.3, 0.2, 0.5),
        variational=VariationalParams(np.linspace(-0.2, 0.2, m), np.full(m, 0.1)),
        lower_bound=-12.5,
        iterations=17,
        converged=True,
        residual_sup_norm=3e-9,
    )


def test_model_params_json_round_trip():
    p = ModelParams(-0.3, 0.2, 0.5)
    assert model_params_from_dict(model_params_to_dict(p)) == p


def test_gva_fit_json_round_trip():
    fit = _example_fit()
    back = gva_fit_from_dict(gva_fit_to_dict(fit))
    assert back.params == fit.params
    assert np.array_equal(back.variational.mu, fit.variational.mu)
    assert np.array_equal(back.variational.lam, fit.variational.lam)
    assert back.lower_bound == fit.lower_bound
    assert back.iterations == fit.iterations
    assert back.converged == fit.converged
    assert back.residual_sup_norm == fit.residual_sup_norm


def test_ci_set_round_trip_and_invariants():
    ci = CiSet(0.05, (-1.0, 1.0), (0.1, 0.3), (0.2, 0.8), tau2_hat=1.25)
    assert ci_set_from_dict(ci_set_to_dict(ci)) == ci
    ci_exact = CiSet(0.05, (-1.0, 1.0), (0.1, 0.3), (0.2, 0.8), tau2_hat=None)
    assert ci_set_from_dict(ci_set_to_dict(ci_exact)) == ci_exact
    with pytest.raises(ValueError):
        CiSet(0.05, (1.0, -1.0), (0.1, 0.3), (0.2, 0.8), 1.0)
    with pytest.raises(ValueError):
        CiSet(1.5, (-1.0, 1.0), (0.1, 0.3), (0.2, 0.8), 1.0)


def test_coverage_report_round_trip_and_consistency():
    rep = CoverageReport(
        truth=ModelParams(-0.3, 0.2, 0.5),
        dist="normal",
        m=100,
        n=10,
        alpha=0.05,
        replications=500,
        seed=7,
        beta0=ParameterCoverage(470, 100 * 470 / 498, 0.31),
        beta1=ParameterCoverage(474, 100 * 474 / 498, 0.11),
        sigma2=ParameterCoverage(460, 100 * 460 / 498, 0.27),
        failures=2,
    )
    assert coverage_report_from_dict(coverage_report_to_dict(rep)) == rep
    with pytest.raises(ValueError):  # count exceeding used replications
        CoverageReport(
            truth=ModelParams(-0.3, 0.2, 0.5),
            dist="normal",
            m=100,
            n=10,
            alpha=0.05,
            replications=500,
            seed=7,
            beta0=ParameterCoverage(499, 100 * 499 / 498, 0.3),
            beta1=ParameterCoverage(474, 100 * 474 / 498, 0.1),
            sigma2=ParameterCoverage(460, 100 * 460 / 498, 0.2),
            failures=2,
        )
    with pytest.raises(ValueError):  # inconsistent percentage
        CoverageReport(
            truth=ModelParams(-0.3, 0.2, 0.5),
            dist="normal",
            m=100,
            n=10,
            alpha=0.05,
            replications=500,
            seed=7,
            beta0=ParameterCoverage(470, 99.0, 0.3),
            beta1=ParameterCoverage(474, 100 * 474 / 498, 0.1),
            sigma2=ParameterCoverage(460, 100 * 460 / 498, 0.2),
            failures=2,
        )


def test_dataset_csv_round_trip():
    rng = np.random.default_rng(3)
    d = Dataset(x=rng.normal(size=(4, 3)), y=rng.poisson(2.0, size=(4, 3)))
    text = dataset_to_csv(d)
    assert text.splitlines()[0] == "group_id,x,y"
    back = dataset_from_csv(text)
    assert np.array_equal(back.x, d.x)  # repr round-trips doubles exactly
    assert np.array_equal(back.y, d.y)


def test_dataset_csv_rejects_malformed():
    with pytest.raises(ShapeMismatch):
        dataset_from_csv("x,y\n0,1\n")
    with pytest.raises(ShapeMismatch):
        dataset_from_csv("group_id,x,y\n")
    with pytest.raises(ShapeMismatch):
        dataset_from_csv("group_id,x,y\n0,0.0,1\n0,0.5,2\n1,0.1,0\n")
    with pytest.raises(ShapeMismatch):
        dataset_from_csv("group_id,x,y\n1,0.0,1\n0,0.5,2\n")


def test_row_totals_on_demand():
    d = Dataset(x=np.zeros((2, 3)), y=[[1, 2, 3], [0, 0, 4]])
    assert d.row_totals().tolist() == [6, 4]
