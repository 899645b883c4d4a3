"""
Delay differential equations solved by Picard-S on a uniform grid

Problem:

    x'(t) = f(t, x(t), x(t - tau)),  t in [t0, b]
    x(t)  = psi(t),                  t in [t0 - tau, t0]

is rewritten as the fixed point of the integral operator

    Tx(t) = psi(t)                                        on [t0 - tau, t0]
    Tx(t) = psi(t0) + int_{t0}^{t} f(s, x(s), x(s - tau)) ds   on [t0, b]

which is a contraction in the sup norm with factor 2 L_f (b - t0) when that is
below 1. The grid step must divide both tau and b - t0 so every delayed read
lands on a node.
"""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.integrate import cumulative_trapezoid, solve_ivp

from fixiter.core.config import get_settings
from fixiter.core.errors import (
    ConditionFailure,
    ConfigurationError,
    DomainError,
    NonConvergenceError,
    NumericalError,
    StructuralError,
)
from fixiter.core.space import Grid, GridFunction, Point, steps_between, sup_distance
from fixiter.services.convergence import StopRule, Trajectory, run_steps
from fixiter.services.expression import compile_expression
from fixiter.services.schemes import ControlSequences, InstrumentedMap, IterationState, picard_s_step

logger = logging.getLogger("fixiter.services.dde")

RightHandSide = Callable[..., object]
History = Callable[..., object]


@dataclass(frozen=True)
class DDEProblem:
    """
    Scalar delay problem on [t0, b] with constant delay tau

    rhs(t, u, v) and history(t) may be vectorized over numpy arrays (the default,
    and what compiled expressions provide); set vectorized=False for plain
    float callables.
    """

    t0: float
    b: float
    tau: float
    rhs: RightHandSide
    lipschitz: float
    history: History
    vectorized: bool = True
    name: str = "problem"

    def evaluate_rhs(self, t: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        t, u, v = (np.asarray(a, dtype=np.float64) for a in (t, u, v))
        if self.vectorized:
            with np.errstate(all="ignore"):
                result = np.asarray(self.rhs(t, u, v), dtype=np.float64)
            return np.broadcast_to(result, np.broadcast(t, u, v).shape).astype(np.float64)
        return np.array([float(self.rhs(*args)) for args in zip(t.ravel(), u.ravel(), v.ravel())])

    def evaluate_history(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.vectorized:
            with np.errstate(all="ignore"):
                result = np.asarray(self.history(t), dtype=np.float64)
            return np.broadcast_to(result, t.shape).astype(np.float64)
        return np.array([float(self.history(s)) for s in t.ravel()]).reshape(t.shape)

    @property
    def contraction_factor(self) -> float:
        """2 L_f (b - t0)"""
        return 2.0 * self.lipschitz * (self.b - self.t0)


# ============================================================================
# Existence conditions
# ============================================================================

class ConditionResult(BaseModel):
    code: str
    description: str
    passed: bool
    witness: Optional[Dict[str, float]] = None
    detail: str = ""


class ConditionReport(BaseModel):
    results: List[ConditionResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failed_codes(self) -> List[str]:
        return [r.code for r in self.results if not r.passed]

    def result(self, code: str) -> ConditionResult:
        return next(r for r in self.results if r.code == code)


def _first_failure(mask: np.ndarray) -> Optional[int]:
    bad = np.flatnonzero(mask)
    return int(bad[0]) if bad.size else None


def check_conditions(
    problem: DDEProblem, samples: Optional[int] = None, rng: Optional[np.random.Generator] = None
) -> ConditionReport:
    """
    Check the existence conditions of a delay problem

    A1 (t0 < b, tau > 0) and A5 (2 L_f (b - t0) < 1) are exact. A2 (f continuous),
    A3 (psi continuous) and A4 (|f(t,u,v) - f(t,u',v')| <= L_f (|u-u'| + |v-v'|))
    are spot-checked on random samples; a failing sample is reported as the witness.
    """
    settings = get_settings()
    samples = samples or settings.dde_samples
    if rng is None:
        rng = np.random.default_rng(settings.sample_seed)
    radius = settings.dde_sample_radius
    h = settings.dde_continuity_step
    results = []

    # A1
    a1 = problem.t0 < problem.b and problem.tau > 0
    results.append(ConditionResult(
        code="A1",
        description="t0 < b and tau > 0",
        passed=a1,
        detail="" if a1 else f"t0={problem.t0:g}, b={problem.b:g}, tau={problem.tau:g}",
    ))

    low, high = min(problem.t0, problem.b), max(problem.t0, problem.b)
    t = rng.uniform(low, high, samples)
    u = rng.uniform(-radius, radius, samples)
    v = rng.uniform(-radius, radius, samples)
    u2 = rng.uniform(-radius, radius, samples)
    v2 = rng.uniform(-radius, radius, samples)

    # A2
    f = problem.evaluate_rhs(t, u, v)
    f_near = problem.evaluate_rhs(np.minimum(t + h, high), u + h, v + h)
    jump = np.abs(f_near - f)
    index = _first_failure(~np.isfinite(f) | ~np.isfinite(f_near) | (jump > settings.dde_continuity_tol))
    results.append(ConditionResult(
        code="A2",
        description="f continuous on [t0, b] x R x R",
        passed=index is None,
        witness=None if index is None else {"t": float(t[index]), "u": float(u[index]), "v": float(v[index])},
        detail="" if index is None else f"jump {jump[index]:.3g} over step {h:g}",
    ))

    # A3
    s = rng.uniform(problem.t0 - abs(problem.tau), problem.t0, samples)
    psi = problem.evaluate_history(s)
    psi_near = problem.evaluate_history(np.minimum(s + h, problem.t0))
    psi_jump = np.abs(psi_near - psi)
    index = _first_failure(~np.isfinite(psi) | ~np.isfinite(psi_near) | (psi_jump > settings.dde_continuity_tol))
    results.append(ConditionResult(
        code="A3",
        description="psi continuous on [t0 - tau, t0]",
        passed=index is None,
        witness=None if index is None else {"t": float(s[index])},
        detail="" if index is None else f"jump {psi_jump[index]:.3g} over step {h:g}",
    ))

    # A4
    f2 = problem.evaluate_rhs(t, u2, v2)
    lhs = np.abs(f - f2)
    allowed = problem.lipschitz * (np.abs(u - u2) + np.abs(v - v2))
    slack = settings.contraction_slack * (1.0 + np.abs(f) + np.abs(f2))
    index = _first_failure((problem.lipschitz <= 0) | ~np.isfinite(lhs) | (lhs > allowed + slack))
    witness = None
    detail = ""
    if index is not None:
        witness = {
            "t": float(t[index]),
            "u": float(u[index]),
            "v": float(v[index]),
            "u2": float(u2[index]),
            "v2": float(v2[index]),
        }
        spread = abs(u[index] - u2[index]) + abs(v[index] - v2[index])
        detail = f"observed ratio {lhs[index] / spread:.6g} > L_f = {problem.lipschitz:g}"
    results.append(ConditionResult(
        code="A4",
        description="f Lipschitz in (u, v) with constant L_f",
        passed=index is None,
        witness=witness,
        detail=detail,
    ))

    # A5
    factor = problem.contraction_factor
    a5 = factor < 1.0
    results.append(ConditionResult(
        code="A5",
        description="2 L_f (b - t0) < 1",
        passed=a5,
        detail=f"2 L_f (b - t0) = {factor:g}",
    ))

    report = ConditionReport(results=results)
    if report.passed:
        logger.info(f"{problem.name}: conditions A1-A5 hold on {samples} samples")
    else:
        logger.warning(f"{problem.name}: conditions failed: {', '.join(report.failed_codes)}")
    return report


# ============================================================================
# Grid and integral operator
# ============================================================================

@dataclass(frozen=True)
class GridLayout:
    """Node layout of a problem at a given step: history occupies nodes 0..delay_steps"""

    step: float
    delay_steps: int
    forward_steps: int
    nodes: np.ndarray
    history_values: np.ndarray

    @property
    def node_count(self) -> int:
        return self.delay_steps + self.forward_steps + 1


def grid_layout(problem: DDEProblem, step: float) -> GridLayout:
    """
    Raises:
        StructuralError: if step does not divide both tau and b - t0
    """
    delay_steps = steps_between(0.0, problem.tau, step)
    forward_steps = steps_between(problem.t0, problem.b, step)
    if delay_steps < 1 or forward_steps < 1:
        raise StructuralError(f"Step {step} is too coarse for tau={problem.tau} and [t0, b]=[{problem.t0}, {problem.b}]")

    count = delay_steps + forward_steps + 1
    nodes = np.linspace(problem.t0 - problem.tau, problem.b, count)
    nodes[delay_steps] = problem.t0
    history_values = problem.evaluate_history(nodes[: delay_steps + 1])
    return GridLayout(step, delay_steps, forward_steps, nodes, history_values)


def make_grid(problem: DDEProblem, step: float) -> GridFunction:
    """psi on the history nodes, extended by the constant psi(t0) over [t0, b]"""
    layout = grid_layout(problem, step)
    values = np.empty(layout.node_count)
    values[: layout.delay_steps + 1] = layout.history_values
    values[layout.delay_steps + 1:] = layout.history_values[-1]
    return GridFunction(problem.t0 - problem.tau, problem.b, step, values)


def integral_operator_apply(x: GridFunction, problem: DDEProblem, layout: Optional[GridLayout] = None) -> GridFunction:
    """
    Apply the integral operator to a grid function

    History nodes receive psi exactly. Forward node i receives psi(t0) plus the
    composite trapezoid integral of f(s, x(s), x(s - tau)) from t0 to node i,
    with the delayed value read at node i - delay_steps (psi when that node is
    in the history).

    Raises:
        StructuralError: if x is not laid out on the problem's grid
        NumericalError: if f is not finite at some node, with the node index
    """
    if layout is None:
        layout = grid_layout(problem, x.step)
    expected = GridFunction(problem.t0 - problem.tau, problem.b, layout.step, np.zeros(layout.node_count))
    if not x.same_geometry(expected):
        raise StructuralError(
            f"Grid [{x.t_start}, {x.t_end}] with {x.node_count} nodes does not match the problem layout"
        )

    k = layout.delay_steps
    extended = np.array(x.values)
    extended[: k + 1] = layout.history_values

    s = layout.nodes[k:]
    integrand = problem.evaluate_rhs(s, extended[k:], extended[: extended.size - k])
    bad = _first_failure(~np.isfinite(integrand))
    if bad is not None:
        raise NumericalError(f"Non-finite right-hand side at t={s[bad]:.6g}", k + bad)

    values = np.empty_like(extended)
    values[: k + 1] = layout.history_values
    values[k:] = layout.history_values[-1] + cumulative_trapezoid(integrand, dx=layout.step, initial=0.0)
    return x.with_values(values)


# ============================================================================
# Solver
# ============================================================================

@dataclass
class DDESolution:
    solution: GridFunction
    iterations: int
    residual: float
    trajectory: Trajectory


def solve_picard_s(
    problem: DDEProblem,
    step: float,
    controls: Optional[ControlSequences] = None,
    stop: Optional[StopRule] = None,
) -> DDESolution:
    """
    Solve a delay problem by Picard-S iteration of the integral operator

    Args:
        problem: the delay problem
        step: grid step dividing both tau and b - t0
        controls: Picard-S weights; defaults to constants from settings
        stop: defaults to StopRule.default()

    Returns:
        DDESolution with the last iterate, iteration count, residual ||Tx - x|| and trajectory

    Raises:
        ConfigurationError: controls without the divergence flag
        ConditionFailure: any of A1-A5 fails
        NonConvergenceError: stop rule exhausted, carrying the last residual
    """
    settings = get_settings()
    if controls is None:
        controls = ControlSequences.constant(0.5, settings.dde_eta1, settings.dde_eta2)
    if not controls.diverges:
        raise ConfigurationError("Picard-S on a delay problem needs controls with sum(eta1_n * eta2_n) = inf")
    if stop is None:
        stop = StopRule.default()

    report = check_conditions(problem)
    if not report.passed:
        raise ConditionFailure(report)

    layout = grid_layout(problem, step)

    def operator(p: Point) -> Point:
        return Grid(integral_operator_apply(p.grid, problem, layout))

    counter = InstrumentedMap(operator)

    def advance(state: IterationState) -> IterationState:
        return picard_s_step(state, counter, controls)

    x0 = Grid(make_grid(problem, step))
    trajectory = run_steps(advance, x0, stop, label=f"PicardS[{problem.name}]", counter=counter)
    final = trajectory.final
    residual = sup_distance(operator(final), final)

    if not trajectory.converged:
        logger.warning(f"{problem.name}: no convergence after {trajectory.n_final} iterations")
        raise NonConvergenceError(f"Picard-S on {problem.name} did not converge", residual, trajectory.n_final)

    logger.info(f"{problem.name}: converged in {trajectory.n_final} iterations, residual {residual:.3e}")
    return DDESolution(final.grid, trajectory.n_final, residual, trajectory)


def dde_error_bound(n: int, problem: DDEProblem, controls: ControlSequences, initial_error: float) -> float:
    """
    initial_error * prod_{k=0..n} [1 - eta1_k eta2_k (1 - 2 L_f (b - t0))]

    Raises:
        DomainError: if 2 L_f (b - t0) >= 1
    """
    factor = problem.contraction_factor
    if factor >= 1.0:
        raise DomainError(f"2 L_f (b - t0) = {factor:g} must be below 1")
    product = 1.0
    for k in range(n + 1):
        _, eta1, eta2 = controls.at(k)
        product *= 1.0 - eta1 * eta2 * (1.0 - factor)
    return initial_error * product


def method_of_steps(problem: DDEProblem, step: float, rtol: float = 1e-10, atol: float = 1e-12) -> GridFunction:
    """
    Reference solution integrating one delay interval at a time

    Each window [t0 + j tau, t0 + (j+1) tau] is an ordinary initial value problem
    whose delayed term comes from psi or the previous window's dense output.
    The result is sampled on the same grid as solve_picard_s.
    """
    t0, b, tau = problem.t0, problem.b, problem.tau
    layout = grid_layout(problem, step)
    segments: List[Tuple[float, float, object]] = []

    def scalar_rhs(t: float, u: float, v: float) -> float:
        return float(problem.evaluate_rhs(np.array([t]), np.array([u]), np.array([v]))[0])

    def scalar_history(t: float) -> float:
        return float(problem.evaluate_history(np.array([t]))[0])

    def solution_at(t: float) -> float:
        if t <= t0 or not segments:
            return scalar_history(min(t, t0))
        for _, end, dense in segments:
            if t <= end + 1e-12 * max(1.0, abs(end)):
                return float(dense(t)[0])
        return float(segments[-1][2](t)[0])

    start = t0
    value = scalar_history(t0)
    while start < b and not math.isclose(start, b, rel_tol=0.0, abs_tol=1e-12 * max(1.0, abs(b))):
        end = min(start + tau, b)
        result = solve_ivp(
            lambda t, y: [scalar_rhs(t, y[0], solution_at(t - tau))],
            (start, end),
            [value],
            method="DOP853",
            rtol=rtol,
            atol=atol,
            dense_output=True,
        )
        if not result.success:
            raise NumericalError(f"Reference integration failed on [{start:g}, {end:g}]: {result.message}", len(segments))
        segments.append((start, end, result.sol))
        value = float(result.y[0, -1])
        start = end

    values = np.empty(layout.node_count)
    values[: layout.delay_steps + 1] = layout.history_values
    for i in range(layout.delay_steps + 1, layout.node_count):
        values[i] = solution_at(float(layout.nodes[i]))
    return GridFunction(t0 - tau, b, step, values)


# ============================================================================
# Files
# ============================================================================

def write_solution_csv(solution: GridFunction, path) -> Path:
    """Write header t,x and one row per node with 17 significant digits"""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["t", "x"])
        for t, x in zip(solution.nodes(), solution.values):
            writer.writerow([f"{t:.17g}", f"{x:.17g}"])
    logger.info(f"Wrote {solution.node_count} nodes to {path}")
    return path


class ProblemFile(BaseModel):
    """JSON problem file: expressions in t, u, v (rhs) and t (history)"""

    name: str = "problem"
    t0: float
    b: float
    tau: float = Field(gt=0.0)
    rhs: str
    history: str
    lipschitz: float = Field(gt=0.0)

    def to_problem(self) -> DDEProblem:
        return DDEProblem(
            t0=self.t0,
            b=self.b,
            tau=self.tau,
            rhs=compile_expression(self.rhs, ("t", "u", "v")),
            lipschitz=self.lipschitz,
            history=compile_expression(self.history, ("t",)),
            name=self.name,
        )


def load_problem(path) -> DDEProblem:
    """
    Raises:
        ConfigurationError: unreadable file, invalid JSON or fields, bad expressions
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigurationError(f"Cannot read problem file {path}: {e}")
    try:
        problem_file = ProblemFile.model_validate_json(text)
    except ValueError as e:
        raise ConfigurationError(f"Invalid problem file {path}: {e}")
    return problem_file.to_problem()
