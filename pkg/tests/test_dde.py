"""
Tests for the delay-equation operator, condition checks and the Picard-S solver
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fixiter.core.errors import ConditionFailure, ConfigurationError, DomainError, StructuralError
from fixiter.core.space import GridFunction
from fixiter.services.convergence import StopRule
from fixiter.services.dde import (
    DDEProblem,
    check_conditions,
    dde_error_bound,
    integral_operator_apply,
    load_problem,
    make_grid,
    method_of_steps,
    solve_picard_s,
    write_solution_csv,
)
from fixiter.services.expression import compile_expression
from fixiter.services.schemes import ControlSequences


def delayed_problem(b=0.4, tau=0.2, rhs="v", history="1", lipschitz=1.0):
    return DDEProblem(
        t0=0.0,
        b=b,
        tau=tau,
        rhs=compile_expression(rhs, ("t", "u", "v")),
        lipschitz=lipschitz,
        history=compile_expression(history, ("t",)),
    )


def worked_example_oracle(t):
    """x' = x(t - 0.2), x = 1 on [-0.2, 0]"""
    t = np.asarray(t)
    first = 1.0 + t
    second = 1.2 + 0.8 * (t - 0.2) + (t ** 2 - 0.04) / 2
    return np.where(t <= 0.0, 1.0, np.where(t <= 0.2, first, second))


def cosine_history_oracle(t):
    """x' = x(t - 0.2), x = cos t on [-0.2, 0]"""
    tau = 0.2
    t = np.asarray(t)
    first = 1.0 + np.sin(t - tau) + math.sin(tau)
    x_tau = 1.0 + math.sin(tau)
    second = x_tau + (t - tau) * (1.0 + math.sin(tau)) - np.cos(t - 2 * tau) + math.cos(tau)
    return np.where(t <= 0.0, np.cos(t), np.where(t <= tau, first, second))


def max_node_error(solution, oracle):
    return float(np.max(np.abs(solution.values - oracle(solution.nodes()))))


class TestConditions:
    def test_worked_example_passes(self):
        report = check_conditions(delayed_problem())
        assert report.passed
        assert [r.code for r in report.results] == ["A1", "A2", "A3", "A4", "A5"]

    def test_long_interval_fails_a5(self):
        report = check_conditions(delayed_problem(b=0.6))
        assert report.failed_codes == ["A5"]
        assert "1.2" in report.result("A5").detail

    def test_understated_lipschitz_constant(self):
        report = check_conditions(delayed_problem(rhs="2*u"))
        assert "A4" in report.failed_codes
        witness = report.result("A4").witness
        assert set(witness) == {"t", "u", "v", "u2", "v2"}
        ratio = abs(2 * witness["u"] - 2 * witness["u2"]) / (
            abs(witness["u"] - witness["u2"]) + abs(witness["v"] - witness["v2"])
        )
        assert ratio > 1.0

    def test_discontinuous_history(self):
        report = check_conditions(delayed_problem(history="1/(t + 0.1)"))
        assert "A3" in report.failed_codes

    def test_reversed_interval(self):
        problem = DDEProblem(0.0, -1.0, 0.2, lambda t, u, v: v, 1.0, lambda t: 1.0, vectorized=False)
        assert "A1" in check_conditions(problem, samples=10).failed_codes


class TestIntegralOperator:
    def test_history_covers_all_delayed_reads(self):
        problem = delayed_problem(tau=1.0)
        x = make_grid(problem, 0.01)
        rng = np.random.default_rng(7)
        arbitrary = x.with_values(rng.normal(size=x.node_count))
        for candidate in (x, arbitrary):
            image = integral_operator_apply(candidate, problem)
            forward = image.nodes() >= -1e-12
            np.testing.assert_allclose(image.values[forward], 1.0 + image.nodes()[forward], atol=1e-12)

    def test_history_nodes_are_psi(self):
        problem = delayed_problem(history="cos(t)")
        x = make_grid(problem, 0.01)
        image = integral_operator_apply(x.with_values(np.full(x.node_count, 5.0)), problem)
        history = image.nodes() <= 0.0
        np.testing.assert_array_equal(image.values[history], np.cos(image.nodes()[history]))

    def test_zero_rhs_keeps_initial_value(self):
        problem = delayed_problem(rhs="0", history="2 + t")
        image = integral_operator_apply(make_grid(problem, 0.05), problem)
        assert np.all(image.values[image.nodes() >= 0.0] == 2.0)

    def test_grid_mismatch(self):
        problem = delayed_problem()
        wrong = GridFunction(0.0, 0.4, 0.01, np.zeros(41))
        with pytest.raises(StructuralError):
            integral_operator_apply(wrong, problem)

    def test_non_conforming_step(self):
        with pytest.raises(StructuralError):
            make_grid(delayed_problem(), 0.03)

    @settings(max_examples=30)
    @given(st.integers(min_value=0, max_value=2 ** 31))
    def test_operator_contraction(self, seed):
        problem = delayed_problem(rhs="0.5*u + 0.5*sin(v)", lipschitz=1.0)
        step = 0.01
        base = make_grid(problem, step)
        rng = np.random.default_rng(seed)
        x = base.with_values(rng.uniform(-5, 5, base.node_count))
        y = base.with_values(rng.uniform(-5, 5, base.node_count))
        gap = float(np.max(np.abs(x.values - y.values)))
        image_gap = float(np.max(np.abs(integral_operator_apply(x, problem).values - integral_operator_apply(y, problem).values)))
        factor = 2 * problem.lipschitz * (problem.b - problem.t0)
        assert image_gap <= factor * gap + 2 * problem.lipschitz * step * gap + 1e-12


class TestSolver:
    def test_worked_example(self):
        result = solve_picard_s(delayed_problem(), 0.001, ControlSequences.constant(0.5, 0.5, 0.5))
        assert result.solution.values[-1] == pytest.approx(1.42, abs=1e-5)
        assert max_node_error(result.solution, worked_example_oracle) <= 1e-5
        assert result.residual <= 1e-10

    def test_iteration_count(self):
        result = solve_picard_s(delayed_problem(), 0.001, stop=StopRule(max_iters=100, abs_tol=1e-10))
        assert result.iterations <= 30

    def test_history_preserved(self):
        problem = delayed_problem(history="cos(t)")
        result = solve_picard_s(problem, 0.01)
        history = result.solution.nodes() <= 0.0
        np.testing.assert_array_equal(result.solution.values[history], np.cos(result.solution.nodes()[history]))

    def test_constant_solution_in_one_iteration(self):
        result = solve_picard_s(delayed_problem(rhs="0", history="3"), 0.01)
        assert result.iterations == 1
        assert np.all(result.solution.values == 3.0)

    def test_second_order_refinement(self):
        problem = delayed_problem(history="cos(t)")
        coarse = max_node_error(solve_picard_s(problem, 0.002).solution, cosine_history_oracle)
        fine = max_node_error(solve_picard_s(problem, 0.001).solution, cosine_history_oracle)
        assert fine <= 1e-5
        assert 3.5 <= coarse / fine <= 4.5

    def test_error_to_oracle_nonincreasing(self):
        problem = delayed_problem()
        result = solve_picard_s(problem, 0.001)
        errors = [max_node_error(p.grid, worked_example_oracle) for p in result.trajectory.iterates]
        floor = 1e-9
        for before, after in zip(errors, errors[1:]):
            assert after <= before + floor

    def test_condition_failure(self):
        with pytest.raises(ConditionFailure) as info:
            solve_picard_s(delayed_problem(b=0.6), 0.001)
        assert info.value.exit_code == 4
        assert "A5" in info.value.message

    def test_divergence_flag_required(self):
        controls = ControlSequences.from_expressions("0.5", "0.5", "0.5")
        with pytest.raises(ConfigurationError):
            solve_picard_s(delayed_problem(), 0.01, controls)

    def test_reference_solution_matches_closed_form(self):
        problem = delayed_problem(history="cos(t)")
        reference = method_of_steps(problem, 0.01)
        assert max_node_error(reference, cosine_history_oracle) <= 1e-8

    def test_cosine_closed_form_is_continuous_and_solves_the_equation(self):
        tau = 0.2
        assert float(cosine_history_oracle(tau - 1e-12)) == pytest.approx(float(cosine_history_oracle(tau + 1e-12)), abs=1e-9)
        t = np.concatenate([np.linspace(0.05, 0.15, 5), np.linspace(0.25, 0.4, 7)])
        h = 1e-6
        slope = (cosine_history_oracle(t + h) - cosine_history_oracle(t - h)) / (2 * h)
        np.testing.assert_allclose(slope, cosine_history_oracle(t - tau), atol=1e-7)


class TestErrorBound:
    def test_by_hand(self):
        controls = ControlSequences.constant(0.5, 0.5, 0.5)
        assert dde_error_bound(0, delayed_problem(), controls, 1.0) == pytest.approx(0.95)
        assert dde_error_bound(3, delayed_problem(), controls, 0.0) == 0.0

    def test_requires_a5(self):
        with pytest.raises(DomainError):
            dde_error_bound(0, delayed_problem(b=0.6), ControlSequences.constant(), 1.0)

    def test_dominates_solver_errors(self):
        problem = delayed_problem()
        controls = ControlSequences.constant(0.5, 0.5, 0.5)
        result = solve_picard_s(problem, 0.001, controls)
        iterates = result.trajectory.iterates
        initial = max_node_error(iterates[0].grid, worked_example_oracle)
        for n in range(len(iterates) - 1):
            observed = max_node_error(iterates[n + 1].grid, worked_example_oracle)
            assert observed <= dde_error_bound(n, problem, controls, initial) + 1e-5


class TestFiles:
    def test_csv_layout(self, tmp_path):
        solution = GridFunction(0.0, 0.2, 0.1, [1.0, 1.1, 1.0 / 3.0])
        path = write_solution_csv(solution, tmp_path / "solution.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x"
        assert lines[1] == "0,1"
        assert lines[3] == "0.20000000000000001,0.33333333333333331"

    def test_load_problem(self, write_json):
        path = write_json("problem.json", {
            "name": "worked", "t0": 0, "b": 0.4, "tau": 0.2, "rhs": "v", "history": "1", "lipschitz": 1,
        })
        problem = load_problem(path)
        assert problem.name == "worked"
        assert check_conditions(problem).passed

    def test_bad_problem_file(self, write_json):
        with pytest.raises(ConfigurationError):
            load_problem(write_json("problem.json", {"t0": 0, "b": 0.4, "tau": 0.2, "rhs": "v +", "history": "1", "lipschitz": 1}))
        with pytest.raises(ConfigurationError):
            load_problem(write_json("missing.json", {"t0": 0}))
