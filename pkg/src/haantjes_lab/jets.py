"""Second-order truncated jets: value, gradient and Hessian in one pass.

A ``Jet2`` carries the value of a scalar quantity together with its exact
gradient and (packed upper-triangular) Hessian with respect to a fixed set
of ``d`` independent variables.  Arithmetic implements the product, quotient
and chain rules truncated at second order, so there is no truncation error,
only floating-point rounding.

Derived quantities that are themselves first derivatives (see
``partial_jet``) only know their value and gradient; their ``hess`` slot is
``None`` and propagates as ``None`` through arithmetic.  Torsion
computations never need second derivatives of operator entries, so this is
enough for every consumer in the package.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Jet2",
    "JetDomainError",
    "constant",
    "seed",
    "partial_jet",
    "apply_function",
    "FUNCTION_TABLE",
]


class JetDomainError(ValueError):
    """Raised when an elementary function is evaluated outside its domain."""


# Cached upper-triangle index machinery, keyed by dimension.
_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _triu(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (rows, cols, position) arrays for the packed upper triangle.

    ``position[i, j]`` is the index of entry (i, j) (or (j, i)) inside the
    packed vector of length d(d+1)/2.
    """
    cached = _TRIU_CACHE.get(d)
    if cached is None:
        rows, cols = np.triu_indices(d)
        pos = np.zeros((d, d), dtype=np.intp)
        pos[rows, cols] = np.arange(rows.size)
        pos[cols, rows] = pos[rows, cols]
        cached = (rows, cols, pos)
        _TRIU_CACHE[d] = cached
    return cached


def _packed_len(d: int) -> int:
    return d * (d + 1) // 2


class Jet2:
    """Value + gradient + packed symmetric Hessian over ``d`` variables."""

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value: float, grad: np.ndarray, hess: np.ndarray | None):
        self.value = float(value)
        self.grad = grad
        self.hess = hess

    @property
    def dim(self) -> int:
        return self.grad.shape[0]

    def hess_matrix(self) -> np.ndarray:
        """Expand the packed Hessian to a full (symmetric) matrix."""
        if self.hess is None:
            raise ValueError("second derivatives unavailable for this jet")
        d = self.dim
        rows, cols, _ = _triu(d)
        full = np.zeros((d, d))
        full[rows, cols] = self.hess
        full[cols, rows] = self.hess
        return full

    def hess_row(self, i: int) -> np.ndarray:
        if self.hess is None:
            raise ValueError("second derivatives unavailable for this jet")
        _, _, pos = _triu(self.dim)
        return self.hess[pos[i]]

    # -- arithmetic -------------------------------------------------------

    def _coerce(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            if other.dim != self.dim:
                raise ValueError(
                    f"jet dimension mismatch: {self.dim} vs {other.dim}"
                )
            return other
        return constant(float(other), self.dim)

    def __add__(self, other) -> "Jet2":
        o = self._coerce(other)
        hess = None
        if self.hess is not None and o.hess is not None:
            hess = self.hess + o.hess
        return Jet2(self.value + o.value, self.grad + o.grad, hess)

    __radd__ = __add__

    def __neg__(self) -> "Jet2":
        hess = None if self.hess is None else -self.hess
        return Jet2(-self.value, -self.grad, hess)

    def __sub__(self, other) -> "Jet2":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Jet2":
        return (-self) + self._coerce(other)

    def __mul__(self, other) -> "Jet2":
        o = self._coerce(other)
        value = self.value * o.value
        grad = self.value * o.grad + o.value * self.grad
        hess = None
        if self.hess is not None and o.hess is not None:
            rows, cols, _ = _triu(self.dim)
            cross = self.grad[rows] * o.grad[cols] + self.grad[cols] * o.grad[rows]
            hess = o.value * self.hess + self.value * o.hess + cross
        return Jet2(value, grad, hess)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet2":
        v = self.value
        if v == 0.0:
            raise ZeroDivisionError("division by zero in jet arithmetic")
        inv = 1.0 / v
        value = inv
        grad = -(inv * inv) * self.grad
        hess = None
        if self.hess is not None:
            rows, cols, _ = _triu(self.dim)
            outer = self.grad[rows] * self.grad[cols]
            hess = -(inv * inv) * self.hess + 2.0 * inv**3 * outer
        return Jet2(value, grad, hess)

    def __truediv__(self, other) -> "Jet2":
        return self * self._coerce(other).reciprocal()

    def __rtruediv__(self, other) -> "Jet2":
        return self._coerce(other) * self.reciprocal()

    def __pow__(self, k: int) -> "Jet2":
        return int_pow(self, k)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Jet2(value={self.value!r}, grad={self.grad!r})"


def constant(value: float, d: int) -> Jet2:
    return Jet2(value, np.zeros(d), np.zeros(_packed_len(d)))


def seed(values) -> list[Jet2]:
    """Seed the d independent variables: unit gradients, zero Hessians."""
    values = np.asarray(values, dtype=float)
    d = values.shape[0]
    jets = []
    for i, v in enumerate(values):
        grad = np.zeros(d)
        grad[i] = 1.0
        jets.append(Jet2(v, grad, np.zeros(_packed_len(d))))
    return jets


def partial_jet(jet: Jet2, i: int) -> Jet2:
    """First-order jet of the i-th partial derivative of ``jet``.

    The result's gradient is the i-th Hessian row; its own Hessian would
    need third derivatives, so it is ``None``.
    """
    return Jet2(jet.grad[i], jet.hess_row(i).copy(), None)


def int_pow(jet: Jet2, k: int) -> Jet2:
    """Integer power, valid for any base sign (base nonzero when k < 0)."""
    if k == 0:
        return constant(1.0, jet.dim)
    if k < 0:
        return int_pow(jet.reciprocal(), -k)
    if k == 1:
        return Jet2(jet.value, jet.grad.copy(), None if jet.hess is None else jet.hess.copy())
    v = jet.value
    f0 = v**k
    f1 = k * v ** (k - 1)
    f2 = k * (k - 1) * v ** (k - 2)
    return _chain(jet, f0, f1, f2)


def _chain(jet: Jet2, f0: float, f1: float, f2: float) -> Jet2:
    grad = f1 * jet.grad
    hess = None
    if jet.hess is not None:
        rows, cols, _ = _triu(jet.dim)
        outer = jet.grad[rows] * jet.grad[cols]
        hess = f1 * jet.hess + f2 * outer
    return Jet2(f0, grad, hess)


def _sqrt(v: float):
    if v <= 0.0:
        raise JetDomainError(f"sqrt of non-positive value {v}")
    s = math.sqrt(v)
    return s, 0.5 / s, -0.25 / (s * v)


def _cbrt(v: float):
    if v == 0.0:
        raise JetDomainError("cbrt is not differentiable at 0")
    c = math.copysign(abs(v) ** (1.0 / 3.0), v)
    c2 = c * c
    return c, 1.0 / (3.0 * c2), -2.0 / (9.0 * c2 * c2 * c)


def _log(v: float):
    if v <= 0.0:
        raise JetDomainError(f"log of non-positive value {v}")
    return math.log(v), 1.0 / v, -1.0 / (v * v)


def _abs(v: float):
    if v == 0.0:
        raise JetDomainError("abs is not differentiable at 0")
    s = math.copysign(1.0, v)
    return abs(v), s, 0.0


def _tan(v: float):
    t = math.tan(v)
    sec2 = 1.0 + t * t
    return t, sec2, 2.0 * t * sec2


def _atan(v: float):
    den = 1.0 + v * v
    return math.atan(v), 1.0 / den, -2.0 * v / (den * den)


FUNCTION_TABLE = {
    "sqrt": _sqrt,
    "cbrt": _cbrt,
    "sin": lambda v: (math.sin(v), math.cos(v), -math.sin(v)),
    "cos": lambda v: (math.cos(v), -math.sin(v), -math.cos(v)),
    "tan": _tan,
    "exp": lambda v: (math.exp(v),) * 3,
    "log": _log,
    "abs": _abs,
    "atan": _atan,
}


def apply_function(name: str, jet: Jet2) -> Jet2:
    f0, f1, f2 = FUNCTION_TABLE[name](jet.value)
    return _chain(jet, f0, f1, f2)


def general_pow(base: Jet2, exponent: Jet2) -> Jet2:
    """a^b for non-integer exponents: requires a strictly positive base."""
    if base.value <= 0.0:
        raise JetDomainError(
            f"power with non-integer exponent needs positive base, got {base.value}"
        )
    return apply_function("exp", exponent * apply_function("log", base))
