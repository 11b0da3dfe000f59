import numpy as np
import pytest

from icrsparse.baselines import ElasticNetParams, elastic_net, lasso
from icrsparse.model import MeasurementModel, SpikeSlabPrior, map_cost
from icrsparse.prox import QuadraticForm, SolverSettings

from conftest import random_model
from test_prox import orthant_oracle


def test_params_validation():
    with pytest.raises(ValueError):
        ElasticNetParams(-1.0, 1.0)
    with pytest.raises(ValueError):
        ElasticNetParams(0.0, 0.0)
    prior = SpikeSlabPrior.uniform(3, 0.01, 0.1, 0.01)
    params = ElasticNetParams.from_prior(prior)
    assert params.l2_weight == 0.1
    assert params.l1_weight == pytest.approx(prior.rho.mean())


def test_huge_l1_gives_zero(rng):
    model = random_model(rng, 5, 8)
    sol = elastic_net(model, ElasticNetParams(1e6, 0.1))
    assert np.all(sol.x == 0)
    A, y = model.design_matrix, model.observation
    sol = lasso(model, 2 * np.abs(A.T @ y).max())
    assert np.all(sol.x == 0)


def test_orthonormal_closed_form(rng):
    Qm, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    y = rng.standard_normal(6)
    model = MeasurementModel(Qm, y, 0.01)
    l1, l2 = 0.3, 0.2
    z = Qm.T @ y
    expected = np.sign(z) * np.maximum(np.abs(z) - l1 / 2, 0) / (1 + l2)
    assert elastic_net(model, ElasticNetParams(l1, l2)).x == pytest.approx(expected, abs=1e-9)
    expected_lasso = np.sign(z) * np.maximum(np.abs(z) - l1 / 2, 0)
    assert lasso(model, l1).x == pytest.approx(expected_lasso, abs=1e-9)


@pytest.mark.parametrize("l2", [0.1, 0.0])
def test_matches_orthant_oracle(rng, l2):
    for _ in range(10):
        model = random_model(rng, 3, 2)
        A, y = model.design_matrix, model.observation
        Q = QuadraticForm.from_least_squares(A, y, l2)
        w = np.full(2, 0.2)
        sol = elastic_net(model, ElasticNetParams(0.2, l2)) if l2 else lasso(model, 0.2)
        assert np.linalg.norm(sol.x - orthant_oracle(Q, w)) <= 1e-6


def test_lasso_recovers_single_column(rng):
    A = rng.standard_normal((3, 3))
    A /= np.linalg.norm(A, axis=0)
    model = MeasurementModel(A, A[:, 0].copy(), 0.01, unit_columns=True)
    sol = lasso(model, 1e-3)
    assert sol.support.tolist() == [0]


def test_small_l1_approaches_ridge(rng):
    model = random_model(rng, 5, 3)
    A, y = model.design_matrix, model.observation
    ridge = np.linalg.solve(A.T @ A + 0.1 * np.eye(3), A.T @ y)
    sol = elastic_net(model, ElasticNetParams(1e-8, 0.1))
    assert np.linalg.norm(sol.x - ridge) <= 1e-5


def test_cost_is_map_cost_when_prior_given(rng):
    model = random_model(rng, 6, 10)
    prior = SpikeSlabPrior.uniform(10, 0.05, 0.1, 0.01)
    sol = elastic_net(model, ElasticNetParams.from_prior(prior), SolverSettings(), prior)
    assert sol.cost == pytest.approx(map_cost(sol.x, sol.gamma, model, prior), rel=1e-10)


def test_support_size_path_logged(rng, caplog):
    # support monotonicity along the l1 path is a diagnostic only
    model = random_model(rng, 8, 16)
    sizes = [lasso(model, l1).support.size for l1 in np.geomspace(1e-3, 2.0, 12)]
    violations = sum(b > a for a, b in zip(sizes, sizes[1:]))
    print(f"support sizes {sizes}, violations {violations}")
    assert sizes[-1] <= sizes[0]
