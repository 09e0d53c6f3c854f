"""Finite Fourier series in the smooth noncommutative 2-torus.

Elements are stored as maps from lattice modes ``(n1, n2)`` to complex
coefficients of the X-first monomials ``X**n1 * Y**n2``. The generators obey
``X Y = exp(2*pi*i*theta) Y X``, which forces the monomial product

    (m1, m2) * (n1, n2) = exp(-2*pi*i*theta*m2*n1) (m1 + n1, m2 + n2).

All operations are pure and return new elements in canonical form (exact
zeros dropped, nothing else pruned).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from numbers import Number
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from .exceptions import ThetaMismatchError, ValidationError
from .utils import validate_direction

Mode = Tuple[int, int]


def _canonical(coeffs: Mapping[Mode, complex]) -> Dict[Mode, complex]:
    return {
        (int(n[0]), int(n[1])): complex(c) for n, c in sorted(coeffs.items()) if c != 0
    }


@dataclass(frozen=True)
class TorusElement:
    """A finite Fourier series ``sum a_n X**n1 Y**n2`` at deformation ``theta``."""

    theta: float
    coeffs: Dict[Mode, complex] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= float(self.theta) < 1.0:
            raise ValidationError(f"theta must lie in [0, 1), got {self.theta!r}.")
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "coeffs", _canonical(self.coeffs))

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, theta: float) -> "TorusElement":
        return cls(theta, {})

    @classmethod
    def monomial(cls, theta: float, n1: int, n2: int, coeff: complex = 1.0) -> "TorusElement":
        return cls(theta, {(n1, n2): coeff})

    @classmethod
    def identity(cls, theta: float) -> "TorusElement":
        return cls.monomial(theta, 0, 0)

    @classmethod
    def x(cls, theta: float) -> "TorusElement":
        return cls.monomial(theta, 1, 0)

    @classmethod
    def y(cls, theta: float) -> "TorusElement":
        return cls.monomial(theta, 0, 1)

    # -- queries ------------------------------------------------------------

    @property
    def support(self) -> Tuple[Mode, ...]:
        return tuple(self.coeffs)

    def coefficient(self, n1: int, n2: int) -> complex:
        return self.coeffs.get((n1, n2), 0j)

    def max_mode(self) -> int:
        """Largest sup-norm ``max(|n1|, |n2|)`` over the support (0 when empty)."""
        return max((max(abs(n[0]), abs(n[1])) for n in self.coeffs), default=0)

    def is_zero(self) -> bool:
        return not self.coeffs

    # -- arithmetic ---------------------------------------------------------

    def _check_theta(self, other: "TorusElement") -> None:
        if self.theta != other.theta:
            raise ThetaMismatchError(
                f"theta mismatch: {self.theta!r} != {other.theta!r}"
            )

    def __add__(self, other: Any) -> "TorusElement":
        if isinstance(other, Number):
            other = TorusElement.monomial(self.theta, 0, 0, complex(other))
        if not isinstance(other, TorusElement):
            return NotImplemented
        self._check_theta(other)
        out = dict(self.coeffs)
        for n, c in other.coeffs.items():
            out[n] = out.get(n, 0j) + c
        return TorusElement(self.theta, out)

    __radd__ = __add__

    def __neg__(self) -> "TorusElement":
        return TorusElement(self.theta, {n: -c for n, c in self.coeffs.items()})

    def __sub__(self, other: Any) -> "TorusElement":
        if isinstance(other, Number):
            return self + (-complex(other))
        if not isinstance(other, TorusElement):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other: Any) -> "TorusElement":
        return (-self) + other

    def __mul__(self, other: Any) -> "TorusElement":
        if isinstance(other, TorusElement):
            return weyl_mul(self, other)
        if isinstance(other, Number):
            scale = complex(other)
            return TorusElement(self.theta, {n: scale * c for n, c in self.coeffs.items()})
        return NotImplemented

    def __rmul__(self, other: Any) -> "TorusElement":
        if isinstance(other, Number):
            return self * other
        return NotImplemented

    @property
    def star(self) -> "TorusElement":
        return adjoint(self)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta,
            "coeffs": [[n[0], n[1], c.real, c.imag] for n, c in sorted(self.coeffs.items())],
        }

    @classmethod
    def from_json_dict(cls, payload: Mapping[str, Any]) -> "TorusElement":
        try:
            theta = float(payload["theta"])
            rows = payload.get("coeffs", [])
        except (KeyError, TypeError) as exc:
            raise ValidationError("torus element JSON needs 'theta' and 'coeffs'.") from exc
        coeffs: Dict[Mode, complex] = {}
        for row in rows:
            if len(row) != 4:
                raise ValidationError(f"coefficient row must be [n1, n2, re, im], got {row!r}.")
            n1, n2, re, im = row
            if int(n1) != n1 or int(n2) != n2:
                raise ValidationError(f"modes must be integers, got {row!r}.")
            key = (int(n1), int(n2))
            coeffs[key] = coeffs.get(key, 0j) + complex(float(re), float(im))
        return cls(theta, coeffs)


def monomial_phase(theta: float, m: Mode, n: Mode) -> complex:
    """Phase picked up when the monomial ``m`` multiplies ``n`` from the left."""
    if m[1] == 0 or n[0] == 0:
        return 1.0 + 0j
    return cmath.exp(-2j * math.pi * theta * m[1] * n[0])


def weyl_mul(a: TorusElement, b: TorusElement) -> TorusElement:
    """Twisted product of two elements."""
    a._check_theta(b)
    out: Dict[Mode, complex] = {}
    for m, ca in a.coeffs.items():
        for n, cb in b.coeffs.items():
            key = (m[0] + n[0], m[1] + n[1])
            out[key] = out.get(key, 0j) + ca * cb * monomial_phase(a.theta, m, n)
    return TorusElement(a.theta, out)


def adjoint(a: TorusElement) -> TorusElement:
    """Involution: ``(X**n1 Y**n2)* = exp(-2*pi*i*theta*n1*n2) X**-n1 Y**-n2``."""
    out: Dict[Mode, complex] = {}
    for (n1, n2), c in a.coeffs.items():
        phase = cmath.exp(-2j * math.pi * a.theta * n1 * n2) if n1 and n2 else 1.0
        out[(-n1, -n2)] = c.conjugate() * phase
    return TorusElement(a.theta, out)


def trace_phi(a: TorusElement) -> complex:
    """Faithful trace: the (0, 0) coefficient."""
    return a.coeffs.get((0, 0), 0j)


def inner_product(u: TorusElement, v: TorusElement) -> complex:
    """GNS inner product ``<u, v> = phi(v* u)``."""
    u._check_theta(v)
    return trace_phi(weyl_mul(adjoint(v), u))


def canonical_derivation(j: int, a: TorusElement) -> TorusElement:
    """``d_j`` scales the monomial ``(n1, n2)`` by ``n_j``."""
    j = validate_direction(j)
    return TorusElement(a.theta, {n: n[j - 1] * c for n, c in a.coeffs.items()})


def inner_derivation(r: TorusElement, a: TorusElement) -> TorusElement:
    """``d_r(a) = r a - a r``."""
    r._check_theta(a)
    return weyl_mul(r, a) - weyl_mul(a, r)


def perturbed_derivation(j: int, r_j: TorusElement, a: TorusElement) -> TorusElement:
    """``delta_j = d_j + d_{r_j}``."""
    return canonical_derivation(j, a) + inner_derivation(r_j, a)


def is_self_adjoint(a: TorusElement, tol: float = 1e-12) -> bool:
    return max_abs_difference(a, adjoint(a)) <= tol


def max_abs_difference(a: TorusElement, b: TorusElement) -> float:
    """Largest coefficient-wise deviation between two elements."""
    a._check_theta(b)
    modes = set(a.coeffs) | set(b.coeffs)
    return max((abs(a.coefficient(*n) - b.coefficient(*n)) for n in modes), default=0.0)


def random_element(
    rng: np.random.Generator,
    theta: float,
    terms: int = 5,
    max_mode: int = 3,
    scale: float = 1.0,
) -> TorusElement:
    """Random element with ``terms`` distinct modes in ``[-max_mode, max_mode]^2``."""
    side = 2 * max_mode + 1
    if terms > side * side:
        raise ValidationError("terms exceeds the number of available modes.")
    flat = rng.choice(side * side, size=terms, replace=False)
    coeffs: Dict[Mode, complex] = {}
    for index in sorted(int(i) for i in flat):
        n = (index // side - max_mode, index % side - max_mode)
        coeffs[n] = scale * complex(rng.normal(), rng.normal())
    return TorusElement(theta, coeffs)


def random_self_adjoint(
    rng: np.random.Generator,
    theta: float,
    terms: int = 3,
    max_mode: int = 2,
    scale: float = 0.1,
) -> TorusElement:
    """Random ``(a + a*) / 2``; its support radius never exceeds ``max_mode``."""
    a = random_element(rng, theta, terms=terms, max_mode=max_mode, scale=scale)
    return 0.5 * (a + adjoint(a))
