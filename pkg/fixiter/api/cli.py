"""
Command handlers and argument parsing for the fixiter command line

Commands:
- table:   run several schemes on one map and print the comparison table
- compare: estimate which of two schemes converges faster
- dde:     solve a delay differential equation by Picard-S
- datadep: check the data-dependence bound for a constant perturbation

Artifacts go to stdout (or --out); logs go to stderr.
"""
import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Annotated, List, Literal, Optional, TextIO, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from fixiter.core.config import get_settings
from fixiter.core.errors import ConfigurationError
from fixiter.core.space import Point, Scalar
from fixiter.services.convergence import RateVerdict, StopRule, compare_rates, estimate_fixed_point, iterate
from fixiter.services.datadep import ApproximateOperator, verify_data_dependence
from fixiter.services.dde import load_problem, solve_picard_s, write_solution_csv
from fixiter.services.expression import compile_expression
from fixiter.services.schemes import ContractionMap, ControlSequences, SchemeId, sahu_map
from fixiter.services.tables import build_table, render_csv, render_json

logger = logging.getLogger("fixiter.api.cli")


# ============================================================================
# Experiment configuration
# ============================================================================

class SahuMapSpec(BaseModel):
    kind: Literal["sahu"] = "sahu"
    a: float = Field(default=3.0, gt=0.0)
    c: float = Field(default=18.0, gt=0.0)

    def build(self) -> ContractionMap:
        return sahu_map(self.a, self.c)


class ExpressionMapSpec(BaseModel):
    """Scalar map written in the variable x, e.g. "cbrt(3*x + 18)" """

    kind: Literal["expression"]
    expression: str
    delta: float = Field(gt=0.0, lt=1.0)
    fixed_point: Optional[float] = None
    domain: Optional[Tuple[float, float]] = None

    def build(self) -> ContractionMap:
        function = compile_expression(self.expression, ("x",))
        contraction = ContractionMap.from_scalar(
            function, self.delta, fixed_point=self.fixed_point, name=self.expression, domain=self.domain
        )
        if self.domain is not None:
            contraction.validate()
        return contraction


MapSpec = Annotated[Union[SahuMapSpec, ExpressionMapSpec], Field(discriminator="kind")]


class ControlSpec(BaseModel):
    eta0: float = Field(default=0.5, ge=0.0, le=1.0)
    eta1: float = Field(default=0.5, ge=0.0, le=1.0)
    eta2: float = Field(default=0.5, ge=0.0, le=1.0)

    def build(self) -> ControlSequences:
        return ControlSequences.constant(self.eta0, self.eta1, self.eta2)


class StopSpec(BaseModel):
    """Unset fields fall back to the settings defaults"""

    max_iters: Optional[int] = Field(default=None, ge=1)
    abs_tol: Optional[float] = Field(default=None, ge=0.0)
    target_tol: Optional[float] = Field(default=None, ge=0.0)

    def build(self) -> StopRule:
        overrides = {k: v for k, v in self.model_dump().items() if v is not None}
        return StopRule.default(**overrides)


class OutputSpec(BaseModel):
    path: Optional[str] = None
    format: Literal["csv", "json"] = "csv"


class ExperimentConfig(BaseModel):
    map: MapSpec = Field(default_factory=SahuMapSpec)
    x0: float = 1000.0
    controls: ControlSpec = Field(default_factory=ControlSpec)
    schemes: List[SchemeId] = Field(default_factory=lambda: [SchemeId.PICARD_S], min_length=1)
    stop: StopSpec = Field(default_factory=StopSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)


def load_config(path) -> ExperimentConfig:
    """
    Raises:
        ConfigurationError: unreadable file or invalid JSON/fields
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}")
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid config {path}: {e}")


def _fixed_point(contraction: ContractionMap, x0: float) -> Point:
    if contraction.fixed_point_hint is not None:
        return contraction.fixed_point_hint
    logger.info(f"No fixed point given for {contraction.name}; estimating it")
    return estimate_fixed_point(contraction, Scalar(x0))


def _emit(text: str, path: Optional[str], stream: Optional[TextIO]):
    if path:
        Path(path).write_text(text)
        logger.info(f"Wrote {path}")
    else:
        (stream or sys.stdout).write(text)


# ============================================================================
# Commands
# ============================================================================

async def cmd_table(
    config: ExperimentConfig,
    out: Optional[str] = None,
    fmt: Optional[str] = None,
    stream: Optional[TextIO] = None,
) -> int:
    """Run every configured scheme concurrently and emit the table in column order"""
    contraction = config.map.build()
    controls = config.controls.build()
    stop = config.stop.build()
    fixed_point = _fixed_point(contraction, config.x0)

    trajectories = await asyncio.gather(*(
        asyncio.to_thread(iterate, scheme, contraction, Scalar(config.x0), controls, stop, fixed_point)
        for scheme in config.schemes
    ))
    table = build_table(trajectories, fixed_point)

    fmt = fmt or config.output.format
    text = render_json(table) if fmt == "json" else render_csv(table)
    _emit(text, out or config.output.path or get_settings().output_path, stream)
    return 0


class CompareReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    scheme_a: SchemeId
    scheme_b: SchemeId
    verdict: RateVerdict


async def cmd_compare(
    config: ExperimentConfig,
    scheme_a: SchemeId,
    scheme_b: SchemeId,
    out: Optional[str] = None,
    stream: Optional[TextIO] = None,
) -> int:
    contraction = config.map.build()
    controls = config.controls.build()
    stop = config.stop.build()
    fixed_point = _fixed_point(contraction, config.x0)

    traj_a, traj_b = await asyncio.gather(
        asyncio.to_thread(iterate, scheme_a, contraction, Scalar(config.x0), controls, stop, fixed_point),
        asyncio.to_thread(iterate, scheme_b, contraction, Scalar(config.x0), controls, stop, fixed_point),
    )
    verdict = compare_rates(traj_a, traj_b, fixed_point)
    report = CompareReport(scheme_a=scheme_a, scheme_b=scheme_b, verdict=verdict)
    _emit(report.model_dump_json(indent=2) + "\n", out or config.output.path, stream)
    return 0


class DDERunReport(BaseModel):
    problem: str
    step: float
    iterations: int
    residual: float
    output: str


async def cmd_dde(
    problem_path: str,
    step: float,
    tol: float,
    out: Optional[str] = None,
    stream: Optional[TextIO] = None,
) -> int:
    """Solve, write the t,x CSV and print iterations and residual as JSON"""
    problem = load_problem(problem_path)
    stop = StopRule.default(abs_tol=tol)
    result = await asyncio.to_thread(solve_picard_s, problem, step, None, stop)
    path = write_solution_csv(result.solution, out or get_settings().dde_output_path)

    report = DDERunReport(
        problem=problem.name,
        step=step,
        iterations=result.iterations,
        residual=result.residual,
        output=str(path),
    )
    (stream or sys.stdout).write(report.model_dump_json(indent=2) + "\n")
    return 0


async def cmd_datadep(
    config: ExperimentConfig,
    epsilon: float,
    perturbation: float,
    out: Optional[str] = None,
    stream: Optional[TextIO] = None,
) -> int:
    """Perturb the configured map by a constant and check the data-dependence bound"""
    if abs(perturbation) > epsilon:
        raise ConfigurationError(f"Perturbation {perturbation:g} exceeds epsilon {epsilon:g}")
    contraction = config.map.build()
    op = ApproximateOperator.shifted(contraction, perturbation, epsilon)
    report = await asyncio.to_thread(
        verify_data_dependence, op, config.controls.build(), config.stop.build(), Scalar(config.x0)
    )
    _emit(report.model_dump_json(indent=2) + "\n", out or config.output.path, stream)
    return 0


# ============================================================================
# Argument parsing
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fixiter",
        description="Fixed-point iteration experiments: scheme tables, rate comparison, data dependence, delay equations",
    )
    parser.add_argument(
        "--log-level",
        help="Logging level (default: FIXITER_LOG_LEVEL or WARNING)"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    table = commands.add_parser("table", help="Comparison table of several schemes")
    table.add_argument("--config", required=True, help="Experiment config (JSON)")
    table.add_argument("--out", help="Output file (default: stdout)")
    table.add_argument("--format", choices=["csv", "json"], help="Output format (default: from config)")

    compare = commands.add_parser("compare", help="Rate-of-convergence verdict for two schemes")
    compare.add_argument("--config", required=True, help="Experiment config (JSON)")
    compare.add_argument("--a", required=True, type=SchemeId, help="First scheme")
    compare.add_argument("--b", required=True, type=SchemeId, help="Second scheme")
    compare.add_argument("--out", help="Output file (default: stdout)")

    dde = commands.add_parser("dde", help="Solve a delay differential equation")
    dde.add_argument("--problem", required=True, help="Problem file (JSON)")
    dde.add_argument("--step", required=True, type=float, help="Grid step")
    dde.add_argument("--tol", required=True, type=float, help="Stop when the sup-norm step is below this")
    dde.add_argument("--out", help="Solution CSV (default: FIXITER_DDE_OUTPUT_PATH)")

    datadep = commands.add_parser("datadep", help="Data-dependence check under a constant perturbation")
    datadep.add_argument("--config", required=True, help="Experiment config (JSON)")
    datadep.add_argument("--epsilon", required=True, type=float, help="Approximation radius")
    datadep.add_argument("--perturb", required=True, type=float, help="Constant added to the map")
    datadep.add_argument("--out", help="Output file (default: stdout)")

    return parser


async def dispatch(args: argparse.Namespace) -> int:
    if args.command == "table":
        return await cmd_table(load_config(args.config), args.out, args.format)
    if args.command == "compare":
        return await cmd_compare(load_config(args.config), args.a, args.b, args.out)
    if args.command == "dde":
        return await cmd_dde(args.problem, args.step, args.tol, args.out)
    return await cmd_datadep(load_config(args.config), args.epsilon, args.perturb, args.out)
