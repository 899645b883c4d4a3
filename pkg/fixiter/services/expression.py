"""
Arithmetic expression grammar for user-defined maps, controls and delay problems

Grammar (recursive descent, lowest precedence first):

    expression := term (('+' | '-') term)*
    term       := unary (('*' | '/') unary)*
    unary      := ('+' | '-') unary | power
    power      := atom (('^' | '**') unary)?      right-associative
    atom       := NUMBER | CONSTANT | VARIABLE | FUNCTION '(' expression ')'
                | '(' expression ')'

Constants: pi, e. Functions: cbrt, sqrt, exp, log, sin, cos, abs.
Variables are declared by the caller at compile time. Evaluation goes through
numpy, so one compiled expression accepts floats or arrays.
"""
import logging
import operator
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np

from fixiter.core.errors import ExpressionError

logger = logging.getLogger("fixiter.services.expression")

Number = Union[float, np.ndarray]

CONSTANTS: Dict[str, float] = {
    "pi": float(np.pi),
    "e": float(np.e),
}

FUNCTIONS: Dict[str, Callable[[Number], Number]] = {
    "cbrt": np.cbrt,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
}

BINARY_OPERATORS: Dict[str, Callable[[Number, Number], Number]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": operator.truediv,
    "^": np.power,
}

_TOKEN_PATTERN = re.compile(
    r"""
    (?P<space>\s+)
    | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
    | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
    | (?P<op>\*\*|[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # number | name | op | end
    text: str
    position: int


def tokenize(text: str) -> List[Token]:
    """Split expression text into tokens, ending with an 'end' token"""
    tokens = []
    position = 0
    while position < len(text):
        match = _TOKEN_PATTERN.match(text, position)
        if match is None:
            raise ExpressionError(f"Unexpected character {text[position]!r}", position)
        kind = match.lastgroup
        if kind != "space":
            lexeme = match.group(kind)
            if lexeme == "**":
                lexeme = "^"
            tokens.append(Token(kind, lexeme, position))
        position = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


# ============================================================================
# Syntax tree
# ============================================================================

@dataclass(frozen=True)
class NumberNode:
    value: float

    def evaluate(self, env: Dict[str, Number]) -> Number:
        return np.float64(self.value)


@dataclass(frozen=True)
class VariableNode:
    name: str

    def evaluate(self, env: Dict[str, Number]) -> Number:
        return env[self.name]


@dataclass(frozen=True)
class UnaryNode:
    operator: str
    operand: "Node"

    def evaluate(self, env: Dict[str, Number]) -> Number:
        value = self.operand.evaluate(env)
        return -value if self.operator == "-" else value


@dataclass(frozen=True)
class BinaryNode:
    operator: str
    left: "Node"
    right: "Node"

    def evaluate(self, env: Dict[str, Number]) -> Number:
        return BINARY_OPERATORS[self.operator](self.left.evaluate(env), self.right.evaluate(env))


@dataclass(frozen=True)
class CallNode:
    function: str
    argument: "Node"

    def evaluate(self, env: Dict[str, Number]) -> Number:
        return FUNCTIONS[self.function](self.argument.evaluate(env))


Node = Union[NumberNode, VariableNode, UnaryNode, BinaryNode, CallNode]


class Parser:
    """Recursive-descent parser producing a syntax tree"""

    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.variables = tuple(variables)
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def _advance(self) -> Token:
        token = self.current
        self.index += 1
        return token

    def _expect(self, text: str) -> Token:
        if self.current.text != text:
            found = self.current.text or "end of input"
            raise ExpressionError(f"Expected {text!r}, found {found!r}", self.current.position)
        return self._advance()

    def parse(self) -> Node:
        if self.current.kind == "end":
            raise ExpressionError("Empty expression", 0)
        node = self.parse_expression()
        if self.current.kind != "end":
            raise ExpressionError(f"Unexpected {self.current.text!r}", self.current.position)
        return node

    def parse_expression(self) -> Node:
        node = self.parse_term()
        while self.current.text in ("+", "-"):
            op = self._advance().text
            node = BinaryNode(op, node, self.parse_term())
        return node

    def parse_term(self) -> Node:
        node = self.parse_unary()
        while self.current.text in ("*", "/"):
            op = self._advance().text
            node = BinaryNode(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> Node:
        if self.current.text in ("+", "-"):
            op = self._advance().text
            return UnaryNode(op, self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> Node:
        base = self.parse_atom()
        if self.current.text == "^":
            self._advance()
            # exponent parsed through unary so that 2^-1 and 2^3^2 = 2^(3^2) work
            return BinaryNode("^", base, self.parse_unary())
        return base

    def parse_atom(self) -> Node:
        token = self.current
        if token.kind == "number":
            self._advance()
            return NumberNode(float(token.text))
        if token.text == "(":
            self._advance()
            node = self.parse_expression()
            self._expect(")")
            return node
        if token.kind == "name":
            self._advance()
            if token.text in FUNCTIONS:
                self._expect("(")
                argument = self.parse_expression()
                self._expect(")")
                return CallNode(token.text, argument)
            if token.text in self.variables:
                return VariableNode(token.text)
            if token.text in CONSTANTS:
                return NumberNode(CONSTANTS[token.text])
            raise ExpressionError(
                f"Unknown name {token.text!r}; variables are {list(self.variables)}", token.position
            )
        found = token.text or "end of input"
        raise ExpressionError(f"Unexpected {found!r}", token.position)


class Expression:
    """A compiled expression over a fixed tuple of variable names"""

    def __init__(self, text: str, variables: Tuple[str, ...], root: Node):
        self.text = text
        self.variables = variables
        self.root = root

    def __call__(self, *args: Number, **kwargs: Number) -> Number:
        if len(args) > len(self.variables):
            raise ExpressionError(f"Expected at most {len(self.variables)} arguments, got {len(args)}")
        env = dict(zip(self.variables, args))
        env.update(kwargs)
        missing = [name for name in self.variables if name not in env]
        if missing:
            raise ExpressionError(f"Missing values for {missing} in {self.text!r}")
        env = {name: np.asarray(value, dtype=np.float64) for name, value in env.items()}

        with np.errstate(all="ignore"):
            result = self.root.evaluate(env)
        if np.ndim(result) == 0:
            return float(result)
        return np.asarray(result, dtype=np.float64)

    def __repr__(self) -> str:
        return f"Expression({self.text!r}, variables={self.variables})"


def compile_expression(text: str, variables: Sequence[str] = ("x",)) -> Expression:
    """
    Parse expression text into a callable

    Args:
        text: expression source, e.g. "cbrt(3*x + 18)"
        variables: names the expression may reference, in positional-call order

    Raises:
        ExpressionError: on any lexical or syntax error, with the offending position
    """
    overlap = set(variables) & (set(CONSTANTS) | set(FUNCTIONS))
    if overlap:
        raise ExpressionError(f"Variable names shadow builtins: {sorted(overlap)}")
    root = Parser(text, variables).parse()
    logger.debug(f"Compiled expression {text!r} over {tuple(variables)}")
    return Expression(text, tuple(variables), root)
