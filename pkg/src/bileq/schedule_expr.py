"""Arithmetic schedule expressions in the variable ``n``.

Grammar: numbers, ``n``, the constants ``pi`` and ``e``, binary
``+ - * / ^`` (``^`` and ``**`` are both powers), unary minus, parentheses,
and the functions ``log exp sqrt abs min max``. Parsed with :mod:`ast` and
evaluated by walking a whitelisted subset of its nodes.
"""

from __future__ import annotations

import ast
import math
import operator

__all__ = ["ExpressionError", "compile_expression", "split_top_level"]


class ExpressionError(ValueError):
    pass


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "log": math.log,
    "exp": math.exp,
    "sqrt": math.sqrt,
    "abs": abs,
    "min": min,
    "max": max,
}
_CONSTS = {"pi": math.pi, "e": math.e}


def _check(node):
    if isinstance(node, ast.Expression):
        _check(node.body)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left)
        _check(node.right)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.operand)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
            raise ExpressionError("only log, exp, sqrt, abs, min, max may be called")
        if not node.args:
            raise ExpressionError(f"{node.func.id} needs arguments")
        for a in node.args:
            _check(a)
    elif isinstance(node, ast.Name):
        if node.id != "n" and node.id not in _CONSTS:
            raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"bad literal {node.value!r}")
    else:
        raise ExpressionError(f"syntax {type(node).__name__} not allowed")


def _eval(node, n):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, n), _eval(node.right, n))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, n))
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](*(_eval(a, n) for a in node.args))
    if isinstance(node, ast.Name):
        return n if node.id == "n" else _CONSTS[node.id]
    return node.value


def compile_expression(text: str):
    """Return a callable ``n -> float`` for `text`; raises ExpressionError."""
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    try:
        # '^' would parse as xor, which binds looser than '+'
        tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    _check(tree)
    body = tree.body

    def fn(n):
        try:
            return float(_eval(body, float(n)))
        except (ArithmeticError, ValueError, TypeError) as exc:
            raise ExpressionError(f"{text!r} at n={n}: {exc}") from None

    fn.source = text.strip()
    return fn


def split_top_level(text: str, sep=","):
    """Split on `sep` outside parentheses: ``"1+n,max(1,n)"`` -> two items."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur).strip())
    return [s for s in out if s]
