"""A small expression language for field inputs.

Grammar (Python syntax, restricted)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ('+' | '-') factor | power
    power  := atom ('**' number)?
    atom   := number | name | func '(' expr ')' | '(' expr ')'
    func   := sin | cos | exp
    name   := x | x1 | x2 | x3 | t | pi

``x`` is an alias of ``x1``.  Anything else (attribute access, other
calls, comparisons) is rejected before evaluation, so expressions are
safe to store in configs and reports.
"""
from __future__ import annotations

import ast
from typing import Callable

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
CONSTANTS = {"pi": np.pi}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class ExpressionError(ValueError):
    pass


def _variables(dim: int, with_time: bool) -> set[str]:
    names = {f"x{i + 1}" for i in range(dim)} | {"x"}
    if with_time:
        names.add("t")
    return names


def _check(node: ast.AST, allowed: set[str]) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, allowed)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        if isinstance(node.op, ast.Pow) and not isinstance(node.right, ast.Constant):
            raise ExpressionError("exponents must be numbers")
        _check(node.left, allowed)
        _check(node.right, allowed)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError("only unary + and - are allowed")
        _check(node.operand, allowed)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError("only sin, cos and exp may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        _check(node.args[0], allowed)
    elif isinstance(node, ast.Name):
        if node.id not in allowed and node.id not in CONSTANTS:
            raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError("only numeric literals are allowed")
    else:
        raise ExpressionError(f"syntax {type(node).__name__} not allowed")


def _eval(node: ast.AST, env: dict):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Call):
        return FUNCTIONS[node.func.id](_eval(node.args[0], env))
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else CONSTANTS[node.id]
    return float(node.value)


def compile_expression(text: str, dim: int, with_time: bool = True) -> Callable[..., np.ndarray]:
    """Callable ``fn(x1, ..., xm[, t])`` evaluating ``text`` with numpy broadcasting."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from exc
    allowed = _variables(dim, with_time)
    _check(tree, allowed)

    def fn(*args):
        want = dim + (1 if with_time else 0)
        if len(args) != want:
            raise TypeError(f"expected {want} arguments, got {len(args)}")
        env = {f"x{i + 1}": a for i, a in enumerate(args[:dim])}
        env["x"] = args[0]
        if with_time:
            env["t"] = args[dim]
        out = _eval(tree, env)
        return out + 0.0 * sum(np.asarray(a, dtype=float) for a in args)

    fn.source = text
    return fn
