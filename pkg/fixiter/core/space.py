"""
Normed-space values the iteration schemes operate on

Three point variants share one arithmetic surface:
- Scalar: a real number
- Vector: a fixed-dimension real vector
- Grid: a function sampled on a uniform grid (see GridFunction)

Distances use the Chebyshev (sup) norm for every variant. Points are immutable;
every operation returns a fresh point.
"""
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from fixiter.core.errors import DomainError, StructuralError

# Relative tolerance used when checking that a grid span is a whole number of steps
GRID_TOLERANCE = 1e-9

NormValue = float


def _frozen_array(values: Iterable[float]) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    array.setflags(write=False)
    return array


def steps_between(start: float, end: float, step: float) -> int:
    """
    Number of whole steps covering [start, end]

    Raises:
        StructuralError: if the span is not an integer multiple of step
    """
    if step <= 0 or not math.isfinite(step):
        raise StructuralError(f"Grid step must be positive and finite, got {step}")
    ratio = (end - start) / step
    count = round(ratio)
    if abs(ratio - count) > GRID_TOLERANCE * max(1.0, abs(ratio)):
        raise StructuralError(
            f"Span [{start}, {end}] is not an integer multiple of step {step} (ratio {ratio})"
        )
    return int(count)


@dataclass(frozen=True)
class Scalar:
    value: float


@dataclass(frozen=True, eq=False)
class Vector:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.values.ndim != 1:
            raise StructuralError(f"Vector values must be one-dimensional, got shape {self.values.shape}")

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])

    def __eq__(self, other) -> bool:
        return isinstance(other, Vector) and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


@dataclass(frozen=True, eq=False)
class GridFunction:
    """
    Piecewise-linear function known at the nodes of a uniform grid on [t_start, t_end]

    Node i sits at t_start + i * step; the node count is
    round((t_end - t_start) / step) + 1 and the span must be a whole number of steps.
    """

    t_start: float
    t_end: float
    step: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise StructuralError(f"Grid needs t_start < t_end, got [{self.t_start}, {self.t_end}]")
        intervals = steps_between(self.t_start, self.t_end, self.step)
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.values.shape != (intervals + 1,):
            raise StructuralError(
                f"Grid on [{self.t_start}, {self.t_end}] with step {self.step} needs "
                f"{intervals + 1} values, got shape {self.values.shape}"
            )

    @property
    def node_count(self) -> int:
        return int(self.values.shape[0])

    def nodes(self) -> np.ndarray:
        """Node abscissae, endpoints exact"""
        return np.linspace(self.t_start, self.t_end, self.node_count)

    def same_geometry(self, other: "GridFunction") -> bool:
        return (
            self.node_count == other.node_count
            and math.isclose(self.t_start, other.t_start, rel_tol=0.0, abs_tol=GRID_TOLERANCE * self.step)
            and math.isclose(self.t_end, other.t_end, rel_tol=0.0, abs_tol=GRID_TOLERANCE * self.step)
        )

    def with_values(self, values: Sequence[float]) -> "GridFunction":
        return GridFunction(self.t_start, self.t_end, self.step, values)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GridFunction)
            and self.same_geometry(other)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.t_start, self.t_end, self.step, self.values.tobytes()))


@dataclass(frozen=True)
class Grid:
    grid: GridFunction


Point = Union[Scalar, Vector, Grid]


def as_point(value: Union[float, int, Sequence[float], np.ndarray, GridFunction, Scalar, Vector, Grid]) -> Point:
    """Lift plain Python/numpy values into the matching point variant"""
    if isinstance(value, (Scalar, Vector, Grid)):
        return value
    if isinstance(value, GridFunction):
        return Grid(value)
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Scalar(float(value))
    return Vector(value)


def _check_same_variant(a: Point, b: Point):
    if type(a) is not type(b):
        raise StructuralError(f"Cannot combine {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, Vector) and a.dimension != b.dimension:
        raise StructuralError(f"Vector dimensions differ: {a.dimension} vs {b.dimension}")
    if isinstance(a, Grid) and not a.grid.same_geometry(b.grid):
        raise StructuralError("Grid functions live on different grids")


def affine_combine(a: Point, b: Point, weight: float) -> Point:
    """
    Return (1 - weight) * a + weight * b

    The evaluation order is fixed so table reproduction is deterministic.
    weight == 0 returns a and weight == 1 returns b unchanged.

    Raises:
        StructuralError: if a and b are different variants, dimensions or grids
        DomainError: if weight is outside [0, 1]
    """
    _check_same_variant(a, b)
    if not 0.0 <= weight <= 1.0:
        raise DomainError(f"Affine weight must lie in [0, 1], got {weight}")
    if weight == 0.0:
        return a
    if weight == 1.0:
        return b

    keep = 1.0 - weight
    if isinstance(a, Scalar):
        return Scalar(keep * a.value + weight * b.value)
    if isinstance(a, Vector):
        return Vector(keep * a.values + weight * b.values)
    return Grid(a.grid.with_values(keep * a.grid.values + weight * b.grid.values))


def sup_distance(a: Point, b: Point) -> NormValue:
    """
    Chebyshev distance between two points of the same variant

    Raises:
        StructuralError: if a and b are different variants, dimensions or grids
    """
    _check_same_variant(a, b)
    if isinstance(a, Scalar):
        return abs(a.value - b.value)
    if isinstance(a, Vector):
        left, right = a.values, b.values
    else:
        left, right = a.grid.values, b.grid.values
    if left.size == 0:
        return 0.0
    return float(np.max(np.abs(left - right)))


def sup_norm(p: Point) -> NormValue:
    """Chebyshev norm of a point"""
    if isinstance(p, Scalar):
        return abs(p.value)
    values = p.values if isinstance(p, Vector) else p.grid.values
    return float(np.max(np.abs(values))) if values.size else 0.0


def is_finite(p: Point) -> bool:
    if isinstance(p, Scalar):
        return math.isfinite(p.value)
    values = p.values if isinstance(p, Vector) else p.grid.values
    return bool(np.all(np.isfinite(values)))


def describe(p: Point) -> str:
    """Short human-readable rendering for log lines"""
    if isinstance(p, Scalar):
        return f"{p.value:.12g}"
    if isinstance(p, Vector):
        return f"Vector(dim={p.dimension}, sup={sup_norm(p):.6g})"
    return f"Grid(nodes={p.grid.node_count}, sup={sup_norm(p):.6g})"
