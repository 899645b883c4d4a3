"""
Data dependence of the Picard-S fixed point under an approximate operator

An approximate operator T~ stays within epsilon of T everywhere on the working
domain. Running Picard-S under T and its tilde recursion under T~ from a common
start gives fixed points x* and x~* with

    ||x* - x~*|| <= 5 epsilon / (1 - delta)

provided eta1_n * eta2_n >= 1/2 for every n. eta0 is accepted in the controls but
the tilde recursion never reads it.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel

from fixiter.core.config import get_settings
from fixiter.core.errors import ConfigurationError, DomainError, HypothesisViolation, NonConvergenceError
from fixiter.core.space import Grid, Point, Scalar, Vector, as_point, describe, sup_distance
from fixiter.services.convergence import StopRule, Trajectory, iterate, run_steps
from fixiter.services.schemes import (
    ContractionMap,
    ControlSequences,
    InstrumentedMap,
    IterationState,
    MapFunction,
    SchemeId,
    picard_s_core,
)

logger = logging.getLogger("fixiter.services.datadep")

DATA_DEPENDENCE_CONDITION = "data-dependence condition (i): eta1*eta2 >= 1/2"


def shift_point(p: Point, c: float) -> Point:
    """p + c, componentwise for vectors and grid functions"""
    if isinstance(p, Scalar):
        return Scalar(p.value + c)
    if isinstance(p, Vector):
        return Vector(p.values + c)
    return Grid(p.grid.with_values(p.grid.values + c))


@dataclass(frozen=True)
class ApproximateOperator:
    """
    Operator T~ with ||Tx - T~x|| <= epsilon on the working domain

    The contract is checked at construction on sample points: the given ones, or
    a seeded sample from the base map's domain.

    Raises:
        DomainError: if epsilon is negative or a sample point violates the contract
        ConfigurationError: if there are no sample points and the base map has no domain
    """

    base: ContractionMap
    perturbed: MapFunction
    epsilon: float
    samples: Optional[Sequence[Point]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.epsilon < 0:
            raise DomainError(f"epsilon must be nonnegative, got {self.epsilon}")
        self.validate(self.samples)

    def __call__(self, x: Point) -> Point:
        return self.perturbed(x)

    def validate(self, samples: Optional[Sequence[Point]] = None) -> "ApproximateOperator":
        settings = get_settings()
        if samples is None:
            if self.base.domain is None:
                raise ConfigurationError(
                    f"Cannot check the approximation contract: map {self.base.name} has no sampling domain"
                )
            samples = self.base.sample_points(settings.sample_count, np.random.default_rng(settings.sample_seed))

        for x in samples:
            gap = sup_distance(self.base(x), self.perturbed(x))
            if gap > self.epsilon + settings.approximation_slack:
                raise DomainError(
                    f"Perturbed operator is not {self.epsilon:g}-close to {self.base.name}: "
                    f"||Tx - T~x|| = {gap:.6g} at x={describe(x)}"
                )
        logger.debug(f"Approximation contract held on {len(samples)} samples (epsilon={self.epsilon:g})")
        return self

    @classmethod
    def shifted(cls, base: ContractionMap, c: float, epsilon: Optional[float] = None, **kwargs) -> "ApproximateOperator":
        """T~x = Tx + c, with epsilon defaulting to |c|"""

        def perturbed(x: Point) -> Point:
            return shift_point(base(x), c)

        return cls(base=base, perturbed=perturbed, epsilon=abs(c) if epsilon is None else epsilon, **kwargs)


def perturbed_picard_s_step(
    state: IterationState, op: ApproximateOperator, controls: ControlSequences
) -> IterationState:
    """
    z~ = (1 - eta2) x~ + eta2 T~x~
    y~ = (1 - eta1) T~x~ + eta1 T~z~
    x~' = T~y~

    Raises:
        HypothesisViolation: if eta1_n * eta2_n < 1/2
    """
    return _tilde_step(state, op.perturbed, controls)


def _tilde_step(state: IterationState, apply: MapFunction, controls: ControlSequences) -> IterationState:
    _, eta1, eta2 = controls.at(state.n)
    product = eta1 * eta2
    if product < 0.5:
        raise HypothesisViolation(DATA_DEPENDENCE_CONDITION, state.n, f"eta1*eta2 = {product:g}")
    return picard_s_core(state, apply, eta1, eta2)


def data_dependence_bound(epsilon: float, delta: float) -> float:
    """5 epsilon / (1 - delta)"""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if epsilon < 0:
        raise DomainError(f"epsilon must be nonnegative, got {epsilon}")
    return 5.0 * epsilon / (1.0 - delta)


class DataDependenceReport(BaseModel):
    epsilon: float
    delta: float
    empirical_gap: float
    bound: float
    satisfied: bool
    slack: float
    base_iterations: int
    perturbed_iterations: int
    base_fixed_point: str
    perturbed_fixed_point: str


def _require_converged(trajectory: Trajectory):
    if trajectory.converged:
        return
    residual = 0.0
    if trajectory.n_final > 0:
        residual = sup_distance(trajectory.iterates[-1], trajectory.iterates[-2])
    raise NonConvergenceError(f"{trajectory.scheme} run did not converge", residual, trajectory.n_final)


def verify_data_dependence(
    op: ApproximateOperator,
    controls: ControlSequences,
    stop: Optional[StopRule] = None,
    x0=None,
) -> DataDependenceReport:
    """
    Run Picard-S under T and the tilde recursion under T~ from a common x0 and
    compare the two limits against the data-dependence bound

    x0 defaults to the base map's fixed point hint.

    Raises:
        ConfigurationError: controls without the divergence flag, or no x0 available
        HypothesisViolation: eta1_n * eta2_n < 1/2 at some emitted index
        NonConvergenceError: if either run does not meet the stop rule
    """
    settings = get_settings()
    if stop is None:
        stop = StopRule.default()
    if not controls.diverges:
        raise ConfigurationError("Data dependence needs controls with sum(eta1_n * eta2_n) = inf")
    if x0 is None:
        if op.base.fixed_point_hint is None:
            raise ConfigurationError("No starting point given and the base map has no fixed point hint")
        x0 = op.base.fixed_point_hint
    x0 = as_point(x0)

    # Plain stop rules only: the perturbed fixed point is unknown
    abs_tol = settings.abs_tol if stop.abs_tol is None else stop.abs_tol
    stop = StopRule(max_iters=stop.max_iters, abs_tol=abs_tol)
    base_run = iterate(SchemeId.PICARD_S, op.base, x0, controls, stop)
    _require_converged(base_run)

    counter = InstrumentedMap(op.perturbed)

    def advance(state: IterationState) -> IterationState:
        return _tilde_step(state, counter, controls)

    perturbed_run = run_steps(advance, x0, stop, label="PicardS~", counter=counter)
    _require_converged(perturbed_run)

    gap = sup_distance(base_run.final, perturbed_run.final)
    bound = data_dependence_bound(op.epsilon, op.base.delta)
    satisfied = gap <= bound + settings.datadep_slack
    logger.info(f"Data dependence: gap {gap:.6g}, bound {bound:.6g}, satisfied={satisfied}")

    return DataDependenceReport(
        epsilon=op.epsilon,
        delta=op.base.delta,
        empirical_gap=gap,
        bound=bound,
        satisfied=satisfied,
        slack=settings.datadep_slack,
        base_iterations=base_run.n_final,
        perturbed_iterations=perturbed_run.n_final,
        base_fixed_point=describe(base_run.final),
        perturbed_fixed_point=describe(perturbed_run.final),
    )
