"""
One-step transition functions for the fixed-point iteration schemes

Every scheme advances an IterationState by one index using a contraction map T
and the control sequences eta0, eta1, eta2. Within one step each distinct image
(Tx, Tz, ...) is computed once and reused, so per-step map applications are:

    Picard 1, Mann 1, Ishikawa 2, S 2, Noor 3, SP 3, CR 3, PicardS 3
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from types import MappingProxyType
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from fixiter.core.config import get_settings
from fixiter.core.errors import DomainError, RoutingError
from fixiter.core.space import Point, Scalar, affine_combine, as_point, describe, sup_distance
from fixiter.services.expression import compile_expression

logger = logging.getLogger("fixiter.services.schemes")

MapFunction = Callable[[Point], Point]


class SchemeId(str, Enum):
    PICARD = "Picard"
    MANN = "Mann"
    ISHIKAWA = "Ishikawa"
    NOOR = "Noor"
    SP = "SP"
    S = "S"
    CR = "CR"
    PICARD_S = "PicardS"


# Map applications per step, given image sharing within a step
EVALUATIONS_PER_STEP: Dict[SchemeId, int] = {
    SchemeId.PICARD: 1,
    SchemeId.MANN: 1,
    SchemeId.ISHIKAWA: 2,
    SchemeId.NOOR: 3,
    SchemeId.SP: 3,
    SchemeId.S: 2,
    SchemeId.CR: 3,
    SchemeId.PICARD_S: 3,
}

INTERMEDIATE_KEYS: Dict[SchemeId, Tuple[str, ...]] = {
    SchemeId.PICARD: (),
    SchemeId.MANN: (),
    SchemeId.ISHIKAWA: ("w",),
    SchemeId.NOOR: ("rho", "varpi"),
    SchemeId.SP: ("r", "s"),
    SchemeId.S: ("u",),
    SchemeId.CR: ("v", "w"),
    SchemeId.PICARD_S: ("y", "z"),
}


# ============================================================================
# Contraction maps
# ============================================================================

def estimate_contraction_factor(apply: MapFunction, pairs: Iterable[Tuple[Point, Point]]) -> float:
    """
    Largest observed ratio ||Tx - Ty|| / ||x - y|| over sample pairs

    Pairs at zero distance are skipped. The estimate is a lower bound on the
    true factor and is advisory only.
    """
    worst = 0.0
    for x, y in pairs:
        gap = sup_distance(x, y)
        if gap == 0.0:
            continue
        worst = max(worst, sup_distance(apply(x), apply(y)) / gap)
    return worst


@dataclass(frozen=True)
class ContractionMap:
    """
    Self-map T with contraction factor delta: ||Tx - Ty|| <= delta * ||x - y||

    domain is an optional scalar interval used to draw sample points.
    """

    apply: MapFunction
    delta: float
    fixed_point_hint: Optional[Point] = None
    name: str = "T"
    domain: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"Contraction factor must lie in (0, 1), got {self.delta}")
        if self.domain is not None and not self.domain[0] < self.domain[1]:
            raise DomainError(f"Sampling domain must be a nonempty interval, got {self.domain}")

    def __call__(self, x: Point) -> Point:
        return self.apply(x)

    @classmethod
    def from_scalar(
        cls,
        function: Callable[[float], float],
        delta: float,
        fixed_point: Optional[float] = None,
        name: str = "T",
        domain: Optional[Tuple[float, float]] = None,
    ) -> "ContractionMap":
        """Wrap a float -> float function as a map on Scalar points"""

        def apply(x: Point) -> Point:
            return Scalar(float(function(x.value)))

        hint = Scalar(float(fixed_point)) if fixed_point is not None else None
        return cls(apply=apply, delta=delta, fixed_point_hint=hint, name=name, domain=domain)

    def sample_points(self, count: int, rng: Optional[np.random.Generator] = None) -> list:
        """Uniform sample points from the scalar sampling domain"""
        if self.domain is None:
            raise DomainError(f"Map {self.name} has no sampling domain; pass sample points explicitly")
        if rng is None:
            rng = np.random.default_rng(get_settings().sample_seed)
        low, high = self.domain
        return [Scalar(float(v)) for v in rng.uniform(low, high, size=count)]

    def sample_pairs(self, count: int, rng: Optional[np.random.Generator] = None) -> list:
        if rng is None:
            rng = np.random.default_rng(get_settings().sample_seed)
        points = self.sample_points(2 * count, rng)
        return list(zip(points[::2], points[1::2]))

    def validate(self, pairs: Optional[Sequence[Tuple[Point, Point]]] = None) -> "ContractionMap":
        """
        Check the contraction inequality on sample pairs

        Raises:
            DomainError: naming the first violating pair
        """
        settings = get_settings()
        if pairs is None:
            pairs = self.sample_pairs(settings.sample_count)
        for x, y in pairs:
            gap = sup_distance(x, y)
            image_gap = sup_distance(self.apply(x), self.apply(y))
            if image_gap > self.delta * gap + settings.contraction_slack:
                raise DomainError(
                    f"Map {self.name} is not a {self.delta:.6g}-contraction: "
                    f"||Tx - Ty|| = {image_gap:.6g} > delta * {gap:.6g} at x={describe(x)}, y={describe(y)}"
                )
        logger.debug(f"Map {self.name} passed contraction check on {len(pairs)} pairs")
        return self

    @classmethod
    def validated(cls, apply: MapFunction, delta: float, pairs: Sequence[Tuple[Point, Point]], **kwargs) -> "ContractionMap":
        """Construct a map and check the contraction inequality on the given pairs"""
        return cls(apply=apply, delta=delta, **kwargs).validate(pairs)

    @classmethod
    def estimated(cls, apply: MapFunction, pairs: Sequence[Tuple[Point, Point]], **kwargs) -> "ContractionMap":
        """Construct a map whose delta is the largest ratio observed over the pairs"""
        delta = estimate_contraction_factor(apply, pairs)
        logger.info(f"Estimated contraction factor {delta:.6g} from {len(pairs)} pairs")
        return cls(apply=apply, delta=delta, **kwargs)


def sahu_map(a: float = 3.0, c: float = 18.0) -> ContractionMap:
    """
    Cube-root map T x = (a x + c)^(1/3) on [0, inf)

    For a = 3, c = 18: delta = 18^(-1/3) and the fixed point is 3. In general
    delta = max(c^(-1/3), (a/3) c^(-2/3)) and the fixed point is the largest real
    root of x^3 - a x - c.
    """
    if a <= 0 or c <= 0:
        raise DomainError(f"Cube-root map needs a > 0 and c > 0, got a={a}, c={c}")
    delta = max(c ** (-1.0 / 3.0), a / 3.0 * c ** (-2.0 / 3.0))

    def function(x: float) -> float:
        return math.cbrt(a * x + c)

    roots = np.roots([1.0, 0.0, -a, -c])
    fixed = float(max(r.real for r in roots if abs(r.imag) < 1e-9))
    # polish onto the floating-point fixed point of the map itself
    for _ in range(100):
        image = function(fixed)
        if image == fixed:
            break
        fixed = image

    return ContractionMap.from_scalar(
        function, delta, fixed_point=fixed, name=f"cbrt({a:g}x+{c:g})", domain=(0.0, 1000.0)
    )


class InstrumentedMap:
    """Callable wrapper counting how often the underlying map is applied"""

    def __init__(self, apply: MapFunction):
        self._apply = apply
        self.count = 0

    def __call__(self, x: Point) -> Point:
        self.count += 1
        return self._apply(x)


# ============================================================================
# Control sequences
# ============================================================================

@lru_cache(maxsize=64)
def _sequence_expression(text: str):
    return compile_expression(text, ("n",))


@dataclass(frozen=True)
class ConstantSequence:
    value: float

    def __call__(self, n: int) -> float:
        return self.value


@dataclass(frozen=True)
class ExpressionSequence:
    text: str

    def __call__(self, n: int) -> float:
        return float(_sequence_expression(self.text)(n))


@dataclass(frozen=True)
class ControlSequences:
    """
    Weight sequences eta0, eta1, eta2 with values in [0, 1], indexed from n = 0

    diverges records whether sum(eta1_n * eta2_n) = inf holds; it is asserted by
    the caller and automatically true for positive constants.
    """

    eta0: Callable[[int], float]
    eta1: Callable[[int], float]
    eta2: Callable[[int], float]
    diverges: bool = False

    @classmethod
    def constant(cls, eta0: float = 0.5, eta1: float = 0.5, eta2: float = 0.5) -> "ControlSequences":
        for label, value in (("eta0", eta0), ("eta1", eta1), ("eta2", eta2)):
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{label} must lie in [0, 1], got {value}")
        return cls(
            ConstantSequence(float(eta0)),
            ConstantSequence(float(eta1)),
            ConstantSequence(float(eta2)),
            diverges=eta1 > 0.0 and eta2 > 0.0,
        )

    @classmethod
    def from_expressions(cls, eta0: str, eta1: str, eta2: str, diverges: bool = False) -> "ControlSequences":
        """Closed-form sequences in the variable n, e.g. '1/(n+2)'"""
        for text in (eta0, eta1, eta2):
            compile_expression(text, ("n",))
        return cls(ExpressionSequence(eta0), ExpressionSequence(eta1), ExpressionSequence(eta2), diverges=diverges)

    def at(self, n: int) -> Tuple[float, float, float]:
        """
        Control values at index n

        Raises:
            DomainError: if any value falls outside [0, 1]
        """
        values = (float(self.eta0(n)), float(self.eta1(n)), float(self.eta2(n)))
        for i, value in enumerate(values):
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"eta{i} at n={n} must lie in [0, 1], got {value}")
        return values


# ============================================================================
# Iteration state and steps
# ============================================================================

@dataclass(frozen=True)
class IterationState:
    n: int
    x: Point
    intermediates: Mapping[str, Point] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "intermediates", MappingProxyType(dict(self.intermediates)))

    @classmethod
    def start(cls, x0) -> "IterationState":
        return cls(0, as_point(x0), {})


StepFunction = Callable[[IterationState, MapFunction, ControlSequences], IterationState]


def picard_s_core(state: IterationState, apply: MapFunction, eta1: float, eta2: float) -> IterationState:
    """Picard-S recursion with explicit weights; shared with the perturbed-operator runs"""
    x = state.x
    tx = apply(x)
    z = affine_combine(x, tx, eta2)
    y = affine_combine(tx, apply(z), eta1)
    return IterationState(state.n + 1, apply(y), {"y": y, "z": z})


def picard_s_step(state: IterationState, map: MapFunction, controls: ControlSequences) -> IterationState:
    """
    z = (1 - eta2) x + eta2 Tx
    y = (1 - eta1) Tx + eta1 Tz
    x' = Ty
    """
    _, eta1, eta2 = controls.at(state.n)
    return picard_s_core(state, map, eta1, eta2)


def cr_step(state: IterationState, map: MapFunction, controls: ControlSequences) -> IterationState:
    """
    w = (1 - eta2) u + eta2 Tu
    v = (1 - eta1) Tu + eta1 Tw
    u' = (1 - eta0) v + eta0 Tv
    """
    eta0, eta1, eta2 = controls.at(state.n)
    u = state.x
    tu = map(u)
    w = affine_combine(u, tu, eta2)
    v = affine_combine(tu, map(w), eta1)
    return IterationState(state.n + 1, affine_combine(v, map(v), eta0), {"v": v, "w": w})


def _picard(x: Point, T: MapFunction, eta: Tuple[float, float, float]) -> Tuple[Point, Dict[str, Point]]:
    return T(x), {}


def _mann(x: Point, T: MapFunction, eta: Tuple[float, float, float]) -> Tuple[Point, Dict[str, Point]]:
    return affine_combine(x, T(x), eta[0]), {}


def _ishikawa(x: Point, T: MapFunction, eta: Tuple[float, float, float]) -> Tuple[Point, Dict[str, Point]]:
    w = affine_combine(x, T(x), eta[1])
    return affine_combine(x, T(w), eta[0]), {"w": w}


def _noor(x: Point, T: MapFunction, eta: Tuple[float, float, float]) -> Tuple[Point, Dict[str, Point]]:
    rho = affine_combine(x, T(x), eta[2])
    varpi = affine_combine(x, T(rho), eta[1])
    return affine_combine(x, T(varpi), eta[0]), {"rho": rho, "varpi": varpi}


def _sp(x: Point, T: MapFunction, eta: Tuple[float, float, float]) -> Tuple[Point, Dict[str, Point]]:
    # SP is written with weights numbered 1..3 (outermost first); they map
    # positionally onto eta0 (outer), eta1 (middle), eta2 (inner)
    s = affine_combine(x, T(x), eta[2])
    r = affine_combine(s, T(s), eta[1])
    return affine_combine(r, T(r), eta[0]), {"r": r, "s": s}


def _s(x: Point, T: MapFunction, eta: Tuple[float, float, float]) -> Tuple[Point, Dict[str, Point]]:
    tx = T(x)
    u = affine_combine(x, tx, eta[1])
    return affine_combine(tx, T(u), eta[0]), {"u": u}


_CLASSICAL = {
    SchemeId.PICARD: _picard,
    SchemeId.MANN: _mann,
    SchemeId.ISHIKAWA: _ishikawa,
    SchemeId.NOOR: _noor,
    SchemeId.SP: _sp,
    SchemeId.S: _s,
}


def classical_step(
    scheme: SchemeId, state: IterationState, map: MapFunction, controls: ControlSequences
) -> IterationState:
    """
    One step of Picard, Mann, Ishikawa, Noor, SP or S

    Picard ignores the controls.

    Raises:
        RoutingError: for CR and PicardS, which have dedicated step functions
    """
    scheme = SchemeId(scheme)
    if scheme not in _CLASSICAL:
        raise RoutingError(f"{scheme.value} is not a classical scheme; use its dedicated step function")
    eta = (0.0, 0.0, 0.0) if scheme is SchemeId.PICARD else controls.at(state.n)
    x_next, intermediates = _CLASSICAL[scheme](state.x, map, eta)
    return IterationState(state.n + 1, x_next, intermediates)


def step(scheme: SchemeId, state: IterationState, map: MapFunction, controls: ControlSequences) -> IterationState:
    """Advance any scheme by one index"""
    scheme = SchemeId(scheme)
    if scheme is SchemeId.PICARD_S:
        return picard_s_step(state, map, controls)
    if scheme is SchemeId.CR:
        return cr_step(state, map, controls)
    return classical_step(scheme, state, map, controls)


def step_function(scheme: SchemeId) -> StepFunction:
    """Bind a scheme id into a (state, map, controls) step callable"""
    scheme = SchemeId(scheme)

    def advance(state: IterationState, map: MapFunction, controls: ControlSequences) -> IterationState:
        return step(scheme, state, map, controls)

    return advance
