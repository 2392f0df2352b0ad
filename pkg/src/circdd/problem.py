"""Linear elliptic Dirichlet problems ``L u + c u + f = 0`` on rectangles.

The generator is

    L = a_xx/2 d_xx + a_xy d_xy + a_yy/2 d_yy + b_x d_x + b_y d_y

so a Laplacian is encoded with ``a_xx = a_yy = 2``.

Every coefficient is a callable ``field(x, y)`` that accepts scalars or
equally shaped arrays. Fields are written with numpy ufuncs only, which lets
the Monte Carlo engine compile them with numba unchanged; a field may call
other functions only if those are numba-jitted.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from .errors import CoefficientError, ConfigurationError

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


def constant(value: float) -> Field:
    """Field equal to ``value`` everywhere."""
    value = float(value)

    def field(x, y):
        return value + 0.0 * x

    field.constant_value = value
    return field


@dataclass(frozen=True)
class RectDomain:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ConfigurationError(
                f"empty rectangle [{self.x0}, {self.x1}] x [{self.y0}, {self.y1}]")

    @classmethod
    def square(cls, half_width: float) -> "RectDomain":
        return cls(-half_width, half_width, -half_width, half_width)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def distance_to_boundary(self, x, y):
        """Distance to the nearest edge for points inside the rectangle."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.minimum(np.minimum(x - self.x0, self.x1 - x),
                          np.minimum(y - self.y0, self.y1 - y))

    def contains(self, x, y, closed=True):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if closed:
            return (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)
        return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)


@dataclass(frozen=True)
class EllipticProblem:
    a_xx: Field
    a_xy: Field
    a_yy: Field
    b_x: Field
    b_y: Field
    c: Field
    f: Field
    g: Field
    u_exact: Optional[Field] = None
    name: str = "custom"

    def coefficient_matrix(self, x, y) -> np.ndarray:
        """Second-order coefficient matrix, shape ``(..., 2, 2)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        axx = np.broadcast_to(self.a_xx(x, y), x.shape)
        axy = np.broadcast_to(self.a_xy(x, y), x.shape)
        ayy = np.broadcast_to(self.a_yy(x, y), x.shape)
        return np.stack([np.stack([axx, axy], -1), np.stack([axy, ayy], -1)], -2)

    def check_coefficients(self, x, y) -> None:
        """Raise CoefficientError unless a is SPD and c <= 0 at every point."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        a = self.coefficient_matrix(x, y)
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] ** 2
        bad = ~((a[..., 0, 0] > 0) & (det > 0))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise CoefficientError(
                f"coefficient matrix not positive definite at ({x[i]}, {y[i]})")
        cval = np.broadcast_to(self.c(x, y), x.shape)
        if (cval > 0).any():
            i = int(np.flatnonzero(cval > 0)[0])
            raise CoefficientError(f"c = {cval[i]} > 0 at ({x[i]}, {y[i]})")

    def residual(self, u: Field, x, y, step: float) -> np.ndarray:
        """``L u + c u + f`` with fourth-order central differences of ``u``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        h = step

        def d1(fx):
            return (-fx(2) + 8 * fx(1) - 8 * fx(-1) + fx(-2)) / (12 * h)

        def d2(fx):
            return (-fx(2) + 16 * fx(1) - 30 * fx(0) + 16 * fx(-1) - fx(-2)) / (12 * h * h)

        ux = d1(lambda k: u(x + k * h, y))
        uy = d1(lambda k: u(x, y + k * h))
        uxx = d2(lambda k: u(x + k * h, y))
        uyy = d2(lambda k: u(x, y + k * h))
        # mixed derivative from the fourth-order cross stencil
        uxy = (d1(lambda k: u(x + k * h, y + h)) * 8 - d1(lambda k: u(x + k * h, y - h)) * 8
               - d1(lambda k: u(x + k * h, y + 2 * h)) + d1(lambda k: u(x + k * h, y - 2 * h))) / (12 * h)
        return (0.5 * self.a_xx(x, y) * uxx + self.a_xy(x, y) * uxy + 0.5 * self.a_yy(x, y) * uyy
                + self.b_x(x, y) * ux + self.b_y(x, y) * uy + self.c(x, y) * u(x, y) + self.f(x, y))


def diffusion_factor(problem: EllipticProblem, x: float, y: float) -> np.ndarray:
    """Lower-triangular sigma with positive diagonal and sigma sigma^T = a(x, y)."""
    a = problem.coefficient_matrix(float(x), float(y))
    axx, axy, ayy = float(a[0, 0]), float(a[0, 1]), float(a[1, 1])
    if axx <= 0:
        raise CoefficientError(f"coefficient matrix not positive definite at ({x}, {y})")
    s11 = np.sqrt(axx)
    s21 = axy / s11
    rest = ayy - s21 * s21
    if rest <= 0:
        raise CoefficientError(f"coefficient matrix not positive definite at ({x}, {y})")
    return np.array([[s11, 0.0], [s21, np.sqrt(rest)]])


# -- built-in problems -------------------------------------------------------

_KAPPA = 9.0 / 625.0 + 1.0 / 400.0  # |grad|^2 of both sine phases


def paper46_exact(x, y):
    s = np.sqrt(1.0 + x * x / 100.0 + y * y / 50.0)
    q = np.sin(3.0 * x / 25.0 + y / 20.0) + np.sin(x / 20.0 - 3.0 * y / 25.0)
    return 3.0 + np.sin(s) / 3.0 + np.tanh(q) / 3.0


@numba.njit(error_model="numpy")
def paper46_laplacian(x, y):
    """Analytic Laplacian of ``paper46_exact``."""
    s = np.sqrt(1.0 + x * x / 100.0 + y * y / 50.0)
    grad_s2 = (x * x / 1.0e4 + y * y / 2500.0) / (s * s)
    lap_s = (1.0 / 100.0 + 1.0 / 50.0) / s - (x * x / 1.0e4 + y * y / 2500.0) / (s * s * s)
    alpha = 3.0 * x / 25.0 + y / 20.0
    beta = x / 20.0 - 3.0 * y / 25.0
    q = np.sin(alpha) + np.sin(beta)
    qx = 0.12 * np.cos(alpha) + 0.05 * np.cos(beta)
    qy = 0.05 * np.cos(alpha) - 0.12 * np.cos(beta)
    t = np.tanh(q)
    sech2 = 1.0 - t * t
    return ((np.cos(s) * lap_s - np.sin(s) * grad_s2)
            + sech2 * (-_KAPPA * q - 2.0 * t * (qx * qx + qy * qy))) / 3.0


def _paper46_source(x, y):
    return -paper46_laplacian(x, y)


def _xy(x, y):
    return x * y


def _one(x, y):
    return 1.0 + 0.0 * x


def _zero(x, y):
    return 0.0 * x


def _two(x, y):
    return 2.0 + 0.0 * x


for _fn, _v in ((_one, 1.0), (_zero, 0.0), (_two, 2.0)):
    _fn.constant_value = _v


def _laplace_problem(f, g, u_exact, name):
    return EllipticProblem(a_xx=_two, a_xy=_zero, a_yy=_two, b_x=_zero, b_y=_zero,
                           c=_zero, f=f, g=g, u_exact=u_exact, name=name)


BUILTIN_PROBLEMS = ("paper46", "constant", "harmonic_xy", "disc_exit_time")


def builtin_problem(name: str) -> EllipticProblem:
    if name == "paper46":
        return _laplace_problem(_paper46_source, paper46_exact, paper46_exact, name)
    if name == "constant":
        return _laplace_problem(_zero, _one, _one, name)
    if name == "harmonic_xy":
        return _laplace_problem(_zero, _xy, _xy, name)
    if name == "disc_exit_time":
        # exact solution depends on the disc; (R^2 - |x - c|^2) / 2 on a disc
        return EllipticProblem(a_xx=_one, a_xy=_zero, a_yy=_one, b_x=_zero, b_y=_zero,
                               c=_zero, f=_one, g=_zero, u_exact=None, name=name)
    raise ConfigurationError(
        f"unknown problem {name!r}; choose one of {', '.join(BUILTIN_PROBLEMS)}")


# -- inline coefficients ------------------------------------------------------

_FUNCTIONS = {name: getattr(np, name) for name in
              ("sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "sinh", "cosh",
               "arctan", "arctan2", "abs", "hypot")}
_CONSTANTS = {"pi": np.pi, "e": np.e}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
          ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def field_from_expression(text: str) -> Field:
    """Field from an arithmetic expression in ``x`` and ``y``.

    Only arithmetic, the listed numpy functions and ``pi``/``e`` are accepted,
    so the result is safe to evaluate and compiles under numba.
    """
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"invalid coefficient expression {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigurationError(
                f"unsupported syntax {type(node).__name__} in coefficient {text!r}")
        if isinstance(node, ast.Call) and not (
                isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS):
            raise ConfigurationError(f"unsupported function in coefficient {text!r}")
        if isinstance(node, ast.Name) and node.id not in ("x", "y", *_FUNCTIONS, *_CONSTANTS):
            raise ConfigurationError(f"unknown name {node.id!r} in coefficient {text!r}")
    if not any(isinstance(n, ast.Name) and n.id in ("x", "y") for n in ast.walk(tree)):
        value = float(eval(compile(tree, "<coefficient>", "eval"),
                           {"__builtins__": {}, **_FUNCTIONS, **_CONSTANTS}))
        return constant(value)
    scope = {"__builtins__": {}, **_FUNCTIONS, **_CONSTANTS}
    exec(f"def field(x, y):\n    return ({ast.unparse(tree)}) + 0.0 * x\n", scope)
    return scope["field"]


INLINE_KEYS = ("a_xx", "a_xy", "a_yy", "b_x", "b_y", "c", "f", "g", "u_exact")


def problem_from_expressions(spec: dict, name: str = "inline") -> EllipticProblem:
    """Problem from a mapping of coefficient names to expressions.

    Missing drift, ``a_xy``, ``c`` and ``f`` default to 0; ``a_xx``, ``a_yy``
    and ``g`` are required; ``u_exact`` is optional.
    """
    unknown = set(spec) - set(INLINE_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown coefficient keys {sorted(unknown)}")
    missing = [k for k in ("a_xx", "a_yy", "g") if k not in spec]
    if missing:
        raise ConfigurationError(f"inline problem is missing {missing}")
    fields = {k: field_from_expression(spec.get(k, "0")) for k in INLINE_KEYS[:-1]}
    exact = field_from_expression(spec["u_exact"]) if "u_exact" in spec else None
    return EllipticProblem(**fields, u_exact=exact, name=name)
