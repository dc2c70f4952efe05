"""Averaged dynamics of the spherical-pendulum / limited-power-motor system.

The slow-time phase vector is y = (y1, y2, y3, y4, y5).  With the shared
subexpressions

    G(y) = y3 + (y1^2 + y2^2 + y4^2 + y5^2) / 8
    M(y) = y1*y5 - y2*y4

the full vector field reads

    y1' = C*y1 - G*y2 - (3/4)*M*y4 + 2*y2
    y2' = C*y2 + G*y1 - (3/4)*M*y5 + 2*y1
    y3' = D*(y1*y2 + y4*y5) + E*y3 + F
    y4' = C*y4 - G*y5 + (3/4)*M*y1 + 2*y5
    y5' = C*y5 + G*y4 + (3/4)*M*y2 + 2*y4

The planes {y4 = K*y1, y5 = K*y2} are invariant; on them the dynamics close
into the three-dimensional reduced system

    z1' = C*z1 - [z3 + (1/8)(1+K^2)(z1^2+z2^2)]*z2 + 2*z2
    z2' = C*z2 + [z3 + (1/8)(1+K^2)(z1^2+z2^2)]*z1 + 2*z1
    z3' = D*(1+K^2)*z1*z2 + E*z3 + F

All four constants C, D, E, F are dimensionless; C < 0 is the dissipative
regime.  G and M are evaluated once per call so that components share bitwise
identical subexpressions (several identity checks compare them at round-off
level).  States are plain float64 numpy vectors; non-finite input raises
InvalidStateError everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateParametersError, InvalidStateError

__all__ = [
    "Params",
    "KRatio",
    "DynamicalSystem",
    "full_vector_field",
    "full_jacobian",
    "reduced_vector_field",
    "reduced_jacobian",
    "equilibrium",
    "lift",
    "full_system",
    "reduced_system",
]


@dataclass(frozen=True)
class Params:
    """Model constants: damping C, coupling D, motor slope E, torque term F."""

    C: float
    D: float
    E: float
    F: float

    def __post_init__(self):
        for name in ("C", "D", "E", "F"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidStateError(f"parameter {name} is not finite: {v!r}")


@dataclass(frozen=True)
class KRatio:
    """Proportionality constant between the (y1,y2) and (y4,y5) pairs.

    kind "standard":  y4 = value*y1, y5 = value*y2.
    kind "swapped":   y1 = value*y4, y2 = value*y5 (used when the first pair
                      vanishes but the second does not).
    kind "zero-pair": both pairs vanish; any ratio is valid and callers
                      conventionally use 0.
    """

    kind: str
    value: float = 0.0

    _KINDS = ("standard", "swapped", "zero-pair")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown KRatio kind {self.kind!r}")
        if not math.isfinite(self.value):
            raise InvalidStateError(f"KRatio value is not finite: {self.value!r}")

    @classmethod
    def standard(cls, value: float) -> "KRatio":
        return cls("standard", float(value))

    @classmethod
    def swapped(cls, value: float) -> "KRatio":
        return cls("swapped", float(value))

    @classmethod
    def zero_pair(cls) -> "KRatio":
        return cls("zero-pair", 0.0)


def _as_state(y, dim: int) -> list:
    """Unpack a state vector to Python floats, enforcing shape and finiteness."""
    vals = y.tolist() if isinstance(y, np.ndarray) else [float(v) for v in y]
    if len(vals) != dim:
        raise InvalidStateError(f"expected a {dim}-vector, got length {len(vals)}")
    for v in vals:
        if not math.isfinite(v):
            raise InvalidStateError(f"non-finite state component: {vals!r}")
    return vals


def full_vector_field(y, p: Params) -> np.ndarray:
    """Right-hand side of the full five-dimensional system."""
    y1, y2, y3, y4, y5 = _as_state(y, 5)
    G = y3 + 0.125 * (y1 * y1 + y2 * y2 + y4 * y4 + y5 * y5)
    M = y1 * y5 - y2 * y4
    return np.array(
        [
            p.C * y1 - G * y2 - 0.75 * M * y4 + 2.0 * y2,
            p.C * y2 + G * y1 - 0.75 * M * y5 + 2.0 * y1,
            p.D * (y1 * y2 + y4 * y5) + p.E * y3 + p.F,
            p.C * y4 - G * y5 + 0.75 * M * y1 + 2.0 * y5,
            p.C * y5 + G * y4 + 0.75 * M * y2 + 2.0 * y4,
        ]
    )


def full_jacobian(y, p: Params) -> np.ndarray:
    """Analytic 5x5 partial-derivative matrix of full_vector_field."""
    y1, y2, y3, y4, y5 = _as_state(y, 5)
    C = p.C
    G = y3 + 0.125 * (y1 * y1 + y2 * y2 + y4 * y4 + y5 * y5)
    M = y1 * y5 - y2 * y4
    return np.array(
        [
            [
                C - 0.25 * y1 * y2 - 0.75 * y4 * y5,
                -G - 0.25 * y2 * y2 + 0.75 * y4 * y4 + 2.0,
                -y2,
                0.5 * y2 * y4 - 0.75 * M,
                -0.25 * y2 * y5 - 0.75 * y1 * y4,
            ],
            [
                G + 0.25 * y1 * y1 - 0.75 * y5 * y5 + 2.0,
                C + 0.25 * y1 * y2 + 0.75 * y4 * y5,
                y1,
                0.25 * y1 * y4 + 0.75 * y2 * y5,
                -0.5 * y1 * y5 - 0.75 * M,
            ],
            [p.D * y2, p.D * y1, p.E, p.D * y5, p.D * y4],
            [
                0.5 * y1 * y5 + 0.75 * M,
                -0.25 * y2 * y5 - 0.75 * y1 * y4,
                -y5,
                C - 0.25 * y4 * y5 - 0.75 * y1 * y2,
                -G - 0.25 * y5 * y5 + 0.75 * y1 * y1 + 2.0,
            ],
            [
                0.25 * y1 * y4 + 0.75 * y2 * y5,
                -0.5 * y2 * y4 + 0.75 * M,
                y4,
                G + 0.25 * y4 * y4 - 0.75 * y2 * y2 + 2.0,
                C + 0.25 * y4 * y5 + 0.75 * y1 * y2,
            ],
        ]
    )


def reduced_vector_field(z, K: float, p: Params) -> np.ndarray:
    """Right-hand side of the reduced third-order system on a K-plane."""
    z1, z2, z3 = _as_state(z, 3)
    if not math.isfinite(K):
        raise InvalidStateError(f"K is not finite: {K!r}")
    q = 1.0 + K * K
    Gk = z3 + 0.125 * q * (z1 * z1 + z2 * z2)
    return np.array(
        [
            p.C * z1 - Gk * z2 + 2.0 * z2,
            p.C * z2 + Gk * z1 + 2.0 * z1,
            p.D * q * z1 * z2 + p.E * z3 + p.F,
        ]
    )


def reduced_jacobian(z, K: float, p: Params) -> np.ndarray:
    """Analytic 3x3 partial-derivative matrix of reduced_vector_field."""
    z1, z2, z3 = _as_state(z, 3)
    if not math.isfinite(K):
        raise InvalidStateError(f"K is not finite: {K!r}")
    q = 1.0 + K * K
    Gk = z3 + 0.125 * q * (z1 * z1 + z2 * z2)
    kq = 0.25 * q
    return np.array(
        [
            [p.C - kq * z1 * z2, -Gk - kq * z2 * z2 + 2.0, -z2],
            [Gk + kq * z1 * z1 + 2.0, p.C + kq * z1 * z2, z1],
            [p.D * q * z2, p.D * q * z1, p.E],
        ]
    )


def equilibrium(p: Params) -> np.ndarray:
    """The fixed point (0, 0, -F/E, 0, 0); requires E != 0."""
    if p.E == 0.0:
        raise DegenerateParametersError("equilibrium is undefined for E = 0")
    return np.array([0.0, 0.0, -p.F / p.E, 0.0, 0.0])


def lift(z, K) -> np.ndarray:
    """Embed a reduced state into the full space via the K-plane.

    Accepts a KRatio (any kind) or a bare float, treated as a standard ratio.
    Standard: (z1, z2, z3, K*z1, K*z2).  Swapped: the reduced coordinates play
    the (y4, y5) roles and (y1, y2) = K'*(z1, z2).  Zero-pair lifts with K = 0.
    """
    z1, z2, z3 = _as_state(z, 3)
    if isinstance(K, KRatio):
        if K.kind == "swapped":
            kp = K.value
            return np.array([kp * z1, kp * z2, z3, z1, z2])
        k = K.value  # standard and zero-pair both lift proportionally
    else:
        k = float(K)
        if not math.isfinite(k):
            raise InvalidStateError(f"K is not finite: {K!r}")
    return np.array([z1, z2, z3, k * z1, k * z2])


@dataclass(frozen=True)
class DynamicalSystem:
    """A vector field with its Jacobian in integrator signature f(t, y)."""

    field: Callable[[float, np.ndarray], np.ndarray]
    jacobian: Callable[[float, np.ndarray], np.ndarray]
    dim: int


def full_system(p: Params) -> DynamicalSystem:
    """The full 5-D system packaged for the integrator."""
    return DynamicalSystem(
        field=lambda t, y: full_vector_field(y, p),
        jacobian=lambda t, y: full_jacobian(y, p),
        dim=5,
    )


def reduced_system(p: Params, K: float) -> DynamicalSystem:
    """The reduced 3-D system on the K-plane, packaged for the integrator."""
    return DynamicalSystem(
        field=lambda t, z: reduced_vector_field(z, K, p),
        jacobian=lambda t, z: reduced_jacobian(z, K, p),
        dim=3,
    )
