"""Closed-form expressions in config files, e.g. ``"20*sech(20*(w-1)^4)"``.

The grammar is deliberately small: numbers, the named variables, ``pi``,
``+ - * / ^`` (``**`` also accepted), and the functions in ``FUNCTIONS``.
The imaginary unit ``i`` is only available when the caller allows complex
values (the dipole builder); the real part of the result is returned.
"""

import ast
import operator

import numpy as np

from .spectral import sech, theta


class ExpressionError(ValueError):
    pass


FUNCTIONS = {
    "exp": np.exp,
    "tanh": np.tanh,
    "sech": sech,
    "sqrt": np.sqrt,
    "theta": theta,
    "abs": np.abs,
    "cos": np.cos,
    "sin": np.sin,
}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}

# complex-aware replacements when the imaginary unit is in play
_COMPLEX_FUNCTIONS = {"sech": lambda z: 1.0 / np.cosh(z)}


def evaluate(text: str, variables: dict, allow_complex: bool = False) -> np.ndarray:
    """Evaluate ``text`` with numpy broadcasting over the arrays in ``variables``."""
    if not isinstance(text, str):
        raise ExpressionError(f"expected an expression string, got {type(text).__name__}")
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None

    names = {"pi": np.pi}
    for key, value in variables.items():
        value = np.asarray(value, dtype=float)
        names[key] = value.astype(complex) if allow_complex else value
    if allow_complex:
        names["i"] = 1j

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in names:
                raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
            return names[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            fname = node.func.id
            if fname not in FUNCTIONS:
                raise ExpressionError(f"unknown function {fname!r} in {text!r}")
            if len(node.args) != 1:
                raise ExpressionError(f"{fname} takes exactly one argument")
            arg = ev(node.args[0])
            fn = FUNCTIONS[fname]
            if np.iscomplexobj(arg):
                if fname == "theta":
                    raise ExpressionError("theta needs a real argument")
                fn = _COMPLEX_FUNCTIONS.get(fname, fn)
            return fn(arg)
        raise ExpressionError(f"unsupported syntax in {text!r}")

    with np.errstate(all="ignore"):
        result = ev(tree)
        if np.iscomplexobj(result):
            result = np.real(result)
    shape = np.broadcast_shapes(*(np.shape(v) for v in variables.values())) if variables else ()
    result = np.broadcast_to(np.asarray(result, dtype=float), shape).copy()
    if not np.all(np.isfinite(result)):
        raise ExpressionError(f"{text!r} is not finite everywhere on its grid")
    return result
