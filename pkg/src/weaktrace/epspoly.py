"""Truncated power series in the coupling strength epsilon.

Amplitudes in the trace model are polynomials in a single small real
parameter. Each polynomial carries its own truncation degree; products
discard every power above it, so arithmetic closes under truncation.

>>> eta = EpsPolynomial.eta(2)
>>> eta.coefficients.real.tolist()
[1.0, 0.0, -0.5]
>>> (EpsPolynomial.monomial(1, 2) * eta).leading_order()
1
"""

from __future__ import annotations

from functools import lru_cache
from typing import Union

import numpy as np

MAX_SUPPORTED_ORDER = 4
ZERO_TOL = 1e-12

Number = Union[int, float, complex]


@lru_cache(maxsize=None)
def _eta_coefficients(max_order: int) -> tuple[float, ...]:
    # sqrt(1 - x) = sum_n binom(1/2, n) (-x)^n, with x = eps^2
    coeffs = [0.0] * (max_order + 1)
    term = 1.0
    for n in range(max_order // 2 + 1):
        if n > 0:
            term *= (0.5 - (n - 1)) / n
        coeffs[2 * n] = term * (-1) ** n
    return tuple(coeffs)


class EpsPolynomial:
    """Complex polynomial in epsilon truncated at ``max_order``."""

    __slots__ = ("coefficients", "max_order")

    def __init__(self, coefficients, max_order: int = 2):
        if not 0 <= max_order <= MAX_SUPPORTED_ORDER:
            raise ValueError(
                f"max_order must be in [0, {MAX_SUPPORTED_ORDER}], got {max_order}"
            )
        c = np.zeros(max_order + 1, dtype=complex)
        src = np.asarray(coefficients, dtype=complex).ravel()
        n = min(len(src), max_order + 1)
        c[:n] = src[:n]
        self.coefficients = c
        self.max_order = max_order

    @classmethod
    def constant(cls, value: Number, max_order: int = 2) -> EpsPolynomial:
        return cls([value], max_order)

    @classmethod
    def zero(cls, max_order: int = 2) -> EpsPolynomial:
        return cls([], max_order)

    @classmethod
    def monomial(cls, degree: int, max_order: int = 2, coefficient: Number = 1.0):
        c = np.zeros(max_order + 1, dtype=complex)
        if degree <= max_order:
            c[degree] = coefficient
        return cls(c, max_order)

    @classmethod
    def eta(cls, max_order: int = 2) -> EpsPolynomial:
        """Series of sqrt(1 - eps**2) truncated at ``max_order``."""
        return cls(_eta_coefficients(max_order), max_order)

    @classmethod
    def _wrap(cls, arr: np.ndarray, max_order: int) -> EpsPolynomial:
        out = object.__new__(cls)
        out.coefficients = arr
        out.max_order = max_order
        return out

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, EpsPolynomial):
            if other.max_order != self.max_order:
                raise ValueError("cannot mix polynomials of different max_order")
            return other.coefficients
        c = np.zeros(self.max_order + 1, dtype=complex)
        c[0] = other
        return c

    def __add__(self, other) -> EpsPolynomial:
        return self._wrap(self.coefficients + self._coerce(other), self.max_order)

    __radd__ = __add__

    def __sub__(self, other) -> EpsPolynomial:
        return self._wrap(self.coefficients - self._coerce(other), self.max_order)

    def __rsub__(self, other) -> EpsPolynomial:
        return self._wrap(self._coerce(other) - self.coefficients, self.max_order)

    def __neg__(self) -> EpsPolynomial:
        return self._wrap(-self.coefficients, self.max_order)

    def __mul__(self, other) -> EpsPolynomial:
        if isinstance(other, EpsPolynomial):
            if other.max_order != self.max_order:
                raise ValueError("cannot mix polynomials of different max_order")
            n = self.max_order + 1
            prod = np.convolve(self.coefficients, other.coefficients)[:n]
            return self._wrap(prod, self.max_order)
        return self._wrap(self.coefficients * other, self.max_order)

    __rmul__ = __mul__

    def shift(self, k: int = 1) -> EpsPolynomial:
        """Multiply by ``eps**k``, dropping powers above ``max_order``."""
        c = np.zeros_like(self.coefficients)
        if k <= self.max_order:
            c[k:] = self.coefficients[: self.max_order + 1 - k]
        return self._wrap(c, self.max_order)

    def conj(self) -> EpsPolynomial:
        # eps is real, so conjugation acts on coefficients only
        return self._wrap(self.coefficients.conj(), self.max_order)

    def abs2(self) -> EpsPolynomial:
        return self * self.conj()

    def __call__(self, eps: float) -> complex:
        return complex(np.polynomial.polynomial.polyval(eps, self.coefficients))

    evaluate = __call__

    def __getitem__(self, degree: int) -> complex:
        if degree > self.max_order:
            return 0j
        return complex(self.coefficients[degree])

    def leading_order(self, tol: float = ZERO_TOL) -> int | None:
        nz = np.flatnonzero(np.abs(self.coefficients) > tol)
        return int(nz[0]) if nz.size else None

    def is_zero(self, tol: float = ZERO_TOL) -> bool:
        return self.leading_order(tol) is None

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.coefficients, self._coerce(other), rtol=0, atol=atol))

    def __eq__(self, other) -> bool:
        try:
            return bool(np.array_equal(self.coefficients, self._coerce(other)))
        except ValueError:
            return False

    __hash__ = None  # mutable-array backed

    def to_list(self) -> list[list[float]]:
        return [[float(c.real), float(c.imag)] for c in self.coefficients]

    def __repr__(self) -> str:
        terms = [
            f"({c.real:+.6g}{c.imag:+.6g}j)*eps^{k}"
            for k, c in enumerate(self.coefficients)
            if abs(c) > ZERO_TOL
        ]
        return f"EpsPolynomial({' + '.join(terms) or '0'}, max_order={self.max_order})"
