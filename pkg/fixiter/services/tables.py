"""
Comparison tables: one row per iteration index, one column per scheme

Values are rounded half away from zero on their exact binary value and printed
with a fixed number of decimals (9 by default). A table ends at the first row
where every column prints the fixed point, or when the trajectories run out.
"""
import json
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import List, Optional, Sequence

from fixiter.core.config import get_settings
from fixiter.core.errors import ConfigurationError
from fixiter.core.space import Point, Scalar
from fixiter.services.convergence import Trajectory

logger = logging.getLogger("fixiter.services.tables")


def round_half_away(value: float, decimals: int) -> Decimal:
    """Round to a fixed number of decimals, ties away from zero"""
    return Decimal(value).quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_HALF_UP)


def format_fixed(value: float, decimals: Optional[int] = None) -> str:
    if decimals is None:
        decimals = get_settings().table_decimals
    rounded = round_half_away(value, decimals)
    if rounded.is_zero():
        rounded = rounded.copy_abs()
    return format(rounded, "f")


@dataclass
class Table:
    columns: List[str]
    rows: List[List[str]] = field(default_factory=list)
    indices: List[int] = field(default_factory=list)

    def column(self, name: str) -> List[str]:
        position = self.columns.index(name)
        return [row[position] for row in self.rows]

    def row(self, n: int) -> List[str]:
        return self.rows[self.indices.index(n)]


def _scalar_value(point: Point, scheme: str) -> float:
    if not isinstance(point, Scalar):
        raise ConfigurationError(f"Tables need scalar iterates; {scheme} produced {type(point).__name__}")
    return point.value


def _value_at(trajectory: Trajectory, n: int) -> Optional[float]:
    if n <= trajectory.n_final:
        return _scalar_value(trajectory.iterates[n], trajectory.scheme)
    # stationary padding for runs that settled before the others
    if trajectory.converged:
        return _scalar_value(trajectory.final, trajectory.scheme)
    return None


def build_table(
    trajectories: Sequence[Trajectory],
    fixed_point: Optional[Point] = None,
    decimals: Optional[int] = None,
) -> Table:
    """
    Assemble rows n = 1, 2, ... from completed trajectories

    Args:
        trajectories: one per column, in column order
        fixed_point: when given, the table stops at the first row where every
            column prints it
        decimals: printed decimals, defaults to settings.table_decimals

    Returns:
        Table with string cells; a column with no value at a row holds ""
    """
    if not trajectories:
        raise ConfigurationError("A table needs at least one trajectory")
    if decimals is None:
        decimals = get_settings().table_decimals

    target = None
    if fixed_point is not None:
        target = format_fixed(_scalar_value(fixed_point, "fixed point"), decimals)

    table = Table(columns=[t.scheme for t in trajectories])
    last = max(t.n_final for t in trajectories)
    for n in range(1, last + 1):
        cells = []
        for trajectory in trajectories:
            value = _value_at(trajectory, n)
            cells.append("" if value is None else format_fixed(value, decimals))
        table.rows.append(cells)
        table.indices.append(n)
        if target is not None and all(cell == target for cell in cells):
            break

    logger.info(f"Built table with {len(table.rows)} rows for {', '.join(table.columns)}")
    return table


def render_csv(table: Table) -> str:
    lines = [",".join(["n"] + table.columns)]
    for n, row in zip(table.indices, table.rows):
        lines.append(",".join([str(n)] + row))
    return "\n".join(lines) + "\n"


def render_json(table: Table) -> str:
    rows = [dict(zip(["n"] + table.columns, [n] + row)) for n, row in zip(table.indices, table.rows)]
    return json.dumps({"columns": table.columns, "rows": rows}, indent=2) + "\n"
