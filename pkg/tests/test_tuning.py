import numpy as np
import pytest

from airway_hmm import tuning
from airway_hmm.simulator import WalkConfig, simulate_walk
from airway_hmm.tuning import (
    TuningError,
    TuningProblem,
    brute_force_lambda,
    gradient_descent_lambda,
    tuning_objective,
)


@pytest.fixture(scope="module")
def small_problem(phantom):
    seqs = [simulate_walk(phantom, WalkConfig(600, dwell=60, seed=s)) for s in range(3)]
    return TuningProblem([(q.likelihoods, q.truth) for q in seqs], phantom, lo=0, hi=30, samples=61)


def two_frame_problem(phantom, hard):
    p = np.full((2, phantom.size), 1 / phantom.size)
    truth = np.array([phantom.root, phantom.root])
    return TuningProblem([(p, truth)], phantom, hard_boundary=hard)


def test_two_frame_closed_form(phantom):
    k = phantom.size
    # boundary row cost 0 at the root, 1/(k-1) elsewhere; marginal = softmax of the negated row
    expected = -np.log(1.0 / (1.0 + (k - 1) * np.exp(-1.0 / (k - 1))))
    assert tuning_objective(0.0, two_frame_problem(phantom, hard=False)) == pytest.approx(expected, abs=1e-12)
    assert tuning_objective(0.0, two_frame_problem(phantom, hard=True)) == pytest.approx(0.0, abs=1e-12)


def test_large_weight_is_worse_on_a_moving_walk(phantom):
    seq = simulate_walk(phantom, WalkConfig(800, dwell=40, seed=2))
    problem = TuningProblem([(seq.likelihoods, seq.truth)], phantom)
    assert tuning_objective(1e6, problem) > tuning_objective(0.0, problem)


def test_duplicates_do_not_change_objective(phantom):
    seq = simulate_walk(phantom, WalkConfig(300, dwell=30, seed=4))
    one = TuningProblem([(seq.likelihoods, seq.truth)], phantom)
    two = TuningProblem([(seq.likelihoods, seq.truth)] * 2, phantom)
    assert tuning_objective(5.0, one) == tuning_objective(5.0, two)


def test_objective_deterministic(small_problem):
    assert tuning_objective(7.3, small_problem) == tuning_objective(7.3, small_problem)


def test_default_grid_step(phantom):
    p = TuningProblem([(np.full((3, phantom.size), 1 / phantom.size), np.zeros(3, dtype=int))], phantom)
    grid = p.grid
    assert len(grid) == 240 and grid[0] == 0.0 and grid[-1] == 60.0
    assert np.diff(grid).mean() == pytest.approx(0.25, abs=0.002)


def test_endpoint_grid(phantom):
    seq = simulate_walk(phantom, WalkConfig(100, dwell=10, seed=0))
    problem = TuningProblem([(seq.likelihoods, seq.truth)], phantom, lo=0, hi=60, samples=2)
    res = brute_force_lambda(problem)
    np.testing.assert_array_equal(res.nll_curve[:, 0], [0.0, 60.0])
    assert len(res.acc_curve) == 2


def test_grid_argmin_and_descent(small_problem):
    bf = brute_force_lambda(small_problem)
    assert bf.lambda_bf in small_problem.grid
    assert bf.nll_bf == bf.nll_curve[:, 1].min()
    gd = gradient_descent_lambda(small_problem, init=1.0)
    assert gd.lambda_gd >= 0
    assert gd.iterations <= 100
    step = small_problem.grid[1] - small_problem.grid[0]
    assert abs(gd.lambda_gd - bf.lambda_bf) <= 2 * step
    # grid points never beat the descent result by more than grid resolution allows
    assert bf.nll_bf <= tuning_objective(gd.lambda_gd, small_problem) + 1e-9 or \
        abs(gd.lambda_gd - bf.lambda_bf) <= step


def test_descent_from_minimum_stays(small_problem):
    bf = brute_force_lambda(small_problem)
    gd = gradient_descent_lambda(small_problem, init=bf.lambda_bf)
    step = small_problem.grid[1] - small_problem.grid[0]
    assert abs(gd.lambda_gd - bf.lambda_bf) <= step


@pytest.mark.parametrize("init", [0.0, 2.0])
def test_relu_clamp_at_zero(monkeypatch, small_problem, init):
    # objective increasing in lambda: the descent drives theta below 0 and lambda stays 0
    monkeypatch.setattr(tuning, "tuning_objective", lambda lam, problem: (lam + 1.0) ** 2)
    gd = gradient_descent_lambda(small_problem, init=init)
    assert gd.lambda_gd == 0.0


def test_descent_on_quadratic(monkeypatch, small_problem):
    monkeypatch.setattr(tuning, "tuning_objective", lambda lam, problem: 0.1 * (lam - 23.5) ** 2)
    gd = gradient_descent_lambda(small_problem, init=1.0)
    assert gd.lambda_gd == pytest.approx(23.5, abs=1e-3)
    assert gd.iterations < 20


def test_problem_validation(phantom):
    p = np.full((3, phantom.size), 1 / phantom.size)
    with pytest.raises(TuningError):
        TuningProblem([], phantom)
    with pytest.raises(TuningError):
        TuningProblem([(p, np.zeros(2, dtype=int))], phantom)
    with pytest.raises(TuningError):
        TuningProblem([(p, np.zeros(3, dtype=int))], phantom, lo=5, hi=5)
    with pytest.raises(TuningError):
        TuningProblem([(p, np.zeros(3, dtype=int))], phantom, samples=1)
    with pytest.raises(TuningError):
        tuning_objective(-1.0, TuningProblem([(p, np.zeros(3, dtype=int))], phantom))
