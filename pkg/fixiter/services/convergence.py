"""
Trajectory runner, theoretical error bounds and rate-of-convergence comparison

- iterate / run_steps: advance a scheme until a StopRule fires, recording
  iterates, errors to a known fixed point and the exact number of map applications
- picard_s_error_bound / cr_error_bound / picard_s_exponential_bound: a-priori
  error estimates for contraction maps
- theta_ratio / dominance_sequences: the ratio of the Picard-S and CR bound
  sequences under controls bounded below
- compare_rates: finite-sample reading of "a_n converges faster than b_n",
  i.e. lim |a_n - p| / |b_n - p| = 0
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from fixiter.core.config import get_settings
from fixiter.core.errors import ConfigurationError, DomainError, NonConvergenceError, NumericalError
from fixiter.core.space import Point, as_point, describe, is_finite, sup_distance, sup_norm
from fixiter.services.schemes import (
    ContractionMap,
    ControlSequences,
    InstrumentedMap,
    IterationState,
    MapFunction,
    SchemeId,
    step,
)

logger = logging.getLogger("fixiter.services.convergence")

# Schemes whose convergence guarantee needs sum(eta1_n * eta2_n) = inf
DIVERGENCE_GUARDED = frozenset({SchemeId.PICARD_S, SchemeId.CR})


class StopRule(BaseModel):
    """When to stop a run: max_iters always applies; abs_tol and target_tol when set"""

    model_config = ConfigDict(frozen=True)

    max_iters: int = Field(ge=1)
    abs_tol: Optional[float] = Field(default=None, ge=0.0)
    target_tol: Optional[float] = Field(default=None, ge=0.0)

    @classmethod
    def default(cls, **overrides) -> "StopRule":
        settings = get_settings()
        values = {"max_iters": settings.max_iters, "abs_tol": settings.abs_tol}
        values.update(overrides)
        return cls(**values)


@dataclass
class Trajectory:
    """Iterates x_0..x_N of one run, with errors to the fixed point when it is known"""

    scheme: str
    iterates: List[Point]
    errors: List[float] = field(default_factory=list)
    map_eval_count: int = 0
    converged: bool = False
    stop_reason: str = "max_iters"
    fixed_point: Optional[Point] = None

    @property
    def n_final(self) -> int:
        return len(self.iterates) - 1

    @property
    def final(self) -> Point:
        return self.iterates[-1]


def run_steps(
    advance: Callable[[IterationState], IterationState],
    x0,
    stop: StopRule,
    fixed_point: Optional[Point] = None,
    label: str = "run",
    counter: Optional[InstrumentedMap] = None,
) -> Trajectory:
    """
    Drive a one-step transition until the stop rule fires

    Raises:
        NumericalError: when an iterate is not finite, with its index
    """
    state = IterationState.start(x0)
    if not is_finite(state.x):
        raise NumericalError(f"Non-finite starting point for {label}", 0)

    trajectory = Trajectory(scheme=label, iterates=[state.x], fixed_point=fixed_point)
    if fixed_point is not None:
        trajectory.errors.append(sup_distance(state.x, fixed_point))
    elif stop.target_tol is not None:
        logger.warning(f"{label}: target_tol set but no fixed point is known; ignoring it")

    for _ in range(stop.max_iters):
        new_state = advance(state)
        if not is_finite(new_state.x):
            raise NumericalError(f"Non-finite iterate in {label}", new_state.n)
        step_size = sup_distance(new_state.x, state.x)
        trajectory.iterates.append(new_state.x)
        if fixed_point is not None:
            trajectory.errors.append(sup_distance(new_state.x, fixed_point))
        state = new_state
        logger.debug(f"{label} n={state.n} x={describe(state.x)} step={step_size:.3e}")

        if stop.target_tol is not None and fixed_point is not None and trajectory.errors[-1] <= stop.target_tol:
            trajectory.converged, trajectory.stop_reason = True, "target_tol"
            break
        if stop.abs_tol is not None and step_size <= stop.abs_tol:
            trajectory.converged, trajectory.stop_reason = True, "abs_tol"
            break

    if counter is not None:
        trajectory.map_eval_count = counter.count
    logger.info(
        f"{label}: stopped at n={trajectory.n_final} ({trajectory.stop_reason}), "
        f"{trajectory.map_eval_count} map evaluations, x={describe(trajectory.final)}"
    )
    return trajectory


def iterate(
    scheme: SchemeId,
    map: MapFunction,
    x0,
    controls: ControlSequences,
    stop: Optional[StopRule] = None,
    fixed_point: Optional[Point] = None,
) -> Trajectory:
    """
    Run a scheme from x0 until the stop rule fires

    The fixed point defaults to the map's fixed_point_hint; errors are recorded
    only when a fixed point is known.

    Raises:
        ConfigurationError: PicardS/CR without the divergence flag on the controls
        NumericalError: non-finite iterate, with its index
    """
    scheme = SchemeId(scheme)
    if scheme in DIVERGENCE_GUARDED and not controls.diverges:
        raise ConfigurationError(
            f"{scheme.value} needs controls with sum(eta1_n * eta2_n) = inf; set the divergence flag"
        )
    if stop is None:
        stop = StopRule.default()
    if fixed_point is None and isinstance(map, ContractionMap):
        fixed_point = map.fixed_point_hint

    counter = InstrumentedMap(map)

    def advance(state: IterationState) -> IterationState:
        return step(scheme, state, counter, controls)

    return run_steps(advance, as_point(x0), stop, fixed_point=fixed_point, label=scheme.value, counter=counter)


def estimate_fixed_point(map: MapFunction, x0, max_iters: Optional[int] = None, tol: Optional[float] = None) -> Point:
    """
    Locate the fixed point by a deep Picard run

    Stops once a step is within tol relative to the iterate's magnitude.

    Raises:
        NonConvergenceError: if the run does not settle within max_iters
    """
    settings = get_settings()
    max_iters = max_iters or settings.fixed_point_search_iters
    tol = settings.fixed_point_search_tol if tol is None else tol

    x = as_point(x0)
    step_size = math.inf
    for n in range(1, max_iters + 1):
        image = map(x)
        if not is_finite(image):
            raise NumericalError("Non-finite iterate while estimating the fixed point", n)
        step_size = sup_distance(image, x)
        x = image
        if step_size <= tol * max(1.0, sup_norm(x)):
            logger.info(f"Estimated fixed point {describe(x)} after {n} Picard steps")
            return x
    raise NonConvergenceError("Fixed point estimation did not settle", step_size, max_iters)


# ============================================================================
# Error bounds
# ============================================================================

def _check_unit_interval(label: str, value: float):
    if not 0.0 < value < 1.0:
        raise DomainError(f"{label} must lie in (0, 1), got {value}")


def picard_s_error_bound(n: int, delta: float, controls: ControlSequences, initial_error: float) -> float:
    """
    Bound on ||x_{n+1} - x*|| for Picard-S:

        initial_error * delta^(2(n+1)) * prod_{k=0..n} [1 - eta1_k eta2_k (1 - delta)]
    """
    _check_unit_interval("delta", delta)
    product = 1.0
    for k in range(n + 1):
        _, eta1, eta2 = controls.at(k)
        product *= 1.0 - eta1 * eta2 * (1.0 - delta)
    return initial_error * delta ** (2 * (n + 1)) * product


def picard_s_exponential_bound(n: int, delta: float, controls: ControlSequences, initial_error: float) -> float:
    """
    Exponential relaxation of the Picard-S bound (uses 1 - x <= e^(-x)):

        initial_error * delta^(2(n+1)) * exp(-(1 - delta) * sum_{k=0..n} eta1_k eta2_k)
    """
    _check_unit_interval("delta", delta)
    total = 0.0
    for k in range(n + 1):
        _, eta1, eta2 = controls.at(k)
        total += eta1 * eta2
    return initial_error * delta ** (2 * (n + 1)) * math.exp(-(1.0 - delta) * total)


def cr_error_bound(n: int, delta: float, controls: ControlSequences, initial_error: float) -> float:
    """
    Bound on ||u_{n+1} - x*|| for CR:

        initial_error * prod_{k=0..n} delta [1 - eta0_k (1 - delta)] [1 - eta1_k eta2_k (1 - delta)]
    """
    _check_unit_interval("delta", delta)
    product = 1.0
    for k in range(n + 1):
        eta0, eta1, eta2 = controls.at(k)
        product *= delta * (1.0 - eta0 * (1.0 - delta)) * (1.0 - eta1 * eta2 * (1.0 - delta))
    return initial_error * product


def theta_ratio(n: int, delta: float, eta0_lower: float) -> float:
    """
    theta_n = [delta / (1 - eta0_lower (1 - delta))]^(n+1)

    The base is below 1 whenever delta and eta0_lower lie in (0, 1).
    """
    _check_unit_interval("delta", delta)
    _check_unit_interval("eta0_lower", eta0_lower)
    base = delta / (1.0 - eta0_lower * (1.0 - delta))
    return base ** (n + 1)


class DominanceSequences(BaseModel):
    a: float
    b: float

    @property
    def theta(self) -> float:
        return self.a / self.b


def dominance_sequences(
    n: int,
    delta: float,
    eta0_lower: float,
    eta1_lower: float,
    eta2_lower: float,
    initial_error: float = 1.0,
) -> DominanceSequences:
    """
    Bound sequences under controls bounded below, accumulated factor by factor:

        a_n = delta^(2(n+1)) [1 - eta1 eta2 (1 - delta)]^(n+1) e0          (Picard-S)
        b_n = delta^(n+1) [1 - eta0 (1 - delta)]^(n+1) [1 - eta1 eta2 (1 - delta)]^(n+1) e0   (CR)
    """
    _check_unit_interval("delta", delta)
    for label, value in (("eta0_lower", eta0_lower), ("eta1_lower", eta1_lower), ("eta2_lower", eta2_lower)):
        _check_unit_interval(label, value)

    shared = 1.0 - eta1_lower * eta2_lower * (1.0 - delta)
    a = initial_error
    b = initial_error
    for _ in range(n + 1):
        a *= delta * delta * shared
        b *= delta * (1.0 - eta0_lower * (1.0 - delta)) * shared
    return DominanceSequences(a=a, b=b)


# ============================================================================
# Rate comparison
# ============================================================================

class RateClass(str, Enum):
    FASTER_A = "FasterA"
    FASTER_B = "FasterB"
    SAME_RATE = "SameRate"
    INCONCLUSIVE = "Inconclusive"


class RateVerdict(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    limit_estimate: float = Field(ge=0.0)
    classification: RateClass
    tail_window: int
    tail_ratios: List[float] = Field(default_factory=list)
    tail_indices: List[int] = Field(default_factory=list)


def trajectory_gap(traj_a: Trajectory, traj_b: Trajectory) -> List[float]:
    """||a_n - b_n|| for every index both trajectories reached"""
    common = min(len(traj_a.iterates), len(traj_b.iterates))
    return [sup_distance(traj_a.iterates[n], traj_b.iterates[n]) for n in range(common)]


def _first_at_floor(errors: List[float], floor: float) -> Optional[int]:
    return next((n for n, error in enumerate(errors) if error <= floor), None)


def compare_rates(
    traj_a: Trajectory,
    traj_b: Trajectory,
    fixed_point: Point,
    tail_window: Optional[int] = None,
    fast_threshold: Optional[float] = None,
    slow_threshold: Optional[float] = None,
    same_band: Optional[Tuple[float, float]] = None,
    stability_factor: Optional[float] = None,
    error_floor: Optional[float] = None,
) -> RateVerdict:
    """
    Estimate lim ||a_n - p|| / ||b_n - p|| from the tail of two trajectories

    Ratios are taken from n = 1 while both errors stay above the error floor; the
    limit estimate is the geometric mean of the last tail_window of them. With no
    usable ratio the side that reached the floor first wins; when both reach it
    together the verdict is Inconclusive.

    Classification: < fast_threshold FasterA, > slow_threshold FasterB, inside
    same_band with a stable tail SameRate, otherwise Inconclusive.
    """
    settings = get_settings()
    tail_window = tail_window or settings.rate_tail_window
    fast_threshold = settings.rate_fast_threshold if fast_threshold is None else fast_threshold
    slow_threshold = settings.rate_slow_threshold if slow_threshold is None else slow_threshold
    same_low, same_high = same_band or (settings.rate_same_low, settings.rate_same_high)
    stability_factor = settings.rate_stability_factor if stability_factor is None else stability_factor
    floor = settings.rate_error_floor if error_floor is None else error_floor

    errors_a = [sup_distance(p, fixed_point) for p in traj_a.iterates]
    errors_b = [sup_distance(p, fixed_point) for p in traj_b.iterates]
    common = min(len(errors_a), len(errors_b))
    floor_a = _first_at_floor(errors_a[:common], floor)
    floor_b = _first_at_floor(errors_b[:common], floor)
    end = min(i for i in (common, floor_a, floor_b) if i is not None)

    indices = list(range(1, end))
    if not indices:
        if floor_a is not None and (floor_b is None or floor_a < floor_b):
            verdict = RateVerdict(limit_estimate=0.0, classification=RateClass.FASTER_A, tail_window=tail_window)
        elif floor_b is not None and (floor_a is None or floor_b < floor_a):
            verdict = RateVerdict(limit_estimate=math.inf, classification=RateClass.FASTER_B, tail_window=tail_window)
        else:
            verdict = RateVerdict(limit_estimate=1.0, classification=RateClass.INCONCLUSIVE, tail_window=tail_window)
        logger.info(f"{traj_a.scheme} vs {traj_b.scheme}: no usable ratios, {verdict.classification.value}")
        return verdict

    tail = indices[-tail_window:]
    ratios = [errors_a[n] / errors_b[n] for n in tail]
    limit = math.exp(math.fsum(math.log(r) for r in ratios) / len(ratios))
    stable = max(ratios) <= stability_factor * min(ratios)

    if limit < fast_threshold:
        classification = RateClass.FASTER_A
    elif limit > slow_threshold:
        classification = RateClass.FASTER_B
    elif same_low <= limit <= same_high and stable:
        classification = RateClass.SAME_RATE
    else:
        classification = RateClass.INCONCLUSIVE

    logger.info(
        f"{traj_a.scheme} vs {traj_b.scheme}: limit estimate {limit:.3e} over n={tail[0]}..{tail[-1]} "
        f"-> {classification.value}"
    )
    return RateVerdict(
        limit_estimate=limit,
        classification=classification,
        tail_window=tail_window,
        tail_ratios=ratios,
        tail_indices=tail,
    )
