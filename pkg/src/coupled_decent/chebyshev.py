"""Chebyshev acceleration of the gossip and constraint operators.

For a matrix ``M`` with nonzero spectrum of ``M'M`` inside ``[mu, L]`` the
scaled polynomial

    P(t) = 1 - T_n((L + mu - 2t) / (L - mu)) / T_n((L + mu) / (L - mu)),
    n = ceil(sqrt(L / mu)),

vanishes at 0 and maps ``[mu, L]`` into ``[11/15, 19/15]``.  The iteration
below applies ``P(M'M)`` to ``v - v0`` (``M v0 = r``) using only products with
``M'M`` and never forms the polynomial.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvariantViolation
from .spectral import DerivedConstants, chebyshev_degree

SUM_TOL = 1e-8


@dataclass(frozen=True)
class ChebyshevSchedule:
    L_M: float
    mu_M: float
    degree: int
    rho: float
    nu: float

    @classmethod
    def from_bounds(cls, L_M: float, mu_M: float) -> "ChebyshevSchedule":
        if not L_M >= mu_M > 0:
            raise ValueError(f"need L_M >= mu_M > 0, got {L_M}, {mu_M}")
        return cls(
            L_M=L_M,
            mu_M=mu_M,
            degree=chebyshev_degree(L_M / mu_M),
            rho=(L_M - mu_M) ** 2 / 16.0,
            nu=(L_M + mu_M) / 2.0,
        )

    @classmethod
    def for_gossip(cls, gossip) -> "ChebyshevSchedule":
        # M = sqrt(W): the spectrum of M'M = W is [lambda_min+, lambda_max].
        return cls.from_bounds(gossip.lambda_max, gossip.lambda_min_plus)

    @classmethod
    def for_constraints(cls, dc: DerivedConstants) -> "ChebyshevSchedule":
        return cls.from_bounds(dc.L_B, dc.mu_B)


def _chebyshev_t(n: int, s):
    """``T_n(s)``: three-term recurrence on ``[-1, 1]``, cosh form outside."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    inside = np.abs(s) <= 1.0
    if inside.any():
        si = s[inside]
        prev, cur = np.ones_like(si), si.copy()
        if n == 0:
            cur = prev
        for _ in range(n - 1):
            prev, cur = cur, 2.0 * si * cur - prev
        out[inside] = cur
    outside = ~inside
    if outside.any():
        so = s[outside]
        sign = np.where(so < 0, (-1.0) ** n, 1.0)
        out[outside] = sign * np.cosh(n * np.arccosh(np.abs(so)))
    return out


def eval_scaled_chebyshev(t, sched: ChebyshevSchedule):
    """Evaluate the scaled polynomial ``P`` at ``t`` (scalar or array)."""
    L, mu = sched.L_M, sched.mu_M
    t_arr = np.asarray(t, dtype=float)
    if L == mu:
        value = t_arr / L
    else:
        s = (L + mu - 2.0 * t_arr.reshape(-1)) / (L - mu)
        s0 = (L + mu) / (L - mu)
        value = (1.0 - _chebyshev_t(sched.degree, s) / _chebyshev_t(sched.degree, np.array([s0]))[0])
        value = value.reshape(t_arr.shape)
    return float(value) if np.ndim(t) == 0 else value


def chebyshev_iteration(v, normal_residual: Callable, sched: ChebyshevSchedule):
    """Run ``sched.degree`` Chebyshev steps on ``M'(M v - r)`` from ``v``.

    ``normal_residual(v)`` must return ``M'(M v - r)``.  The result ``v_n``
    satisfies ``v - v_n = P(M'M)(v - v0)`` for any ``v0`` with ``M v0 = r``.
    """
    rho, nu = sched.rho, sched.nu
    delta = -nu / 2.0
    p = normal_residual(v) * (-1.0 / nu)
    vi = v + p
    for _ in range(sched.degree - 1):
        beta = rho / delta
        delta = -(nu + beta)
        p = (normal_residual(vi) + p * beta) * (1.0 / delta)
        vi = vi + p
    return vi


class LiftedVector:
    """Stacked ``u = (x, y)``: ``x`` concatenates the per-node ``x_i``, ``y`` is
    the ``(n, m)`` array of per-node ``y_i``."""

    __slots__ = ("x", "y")

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.x = x
        self.y = y

    @classmethod
    def zeros(cls, d: int, n: int, m: int) -> "LiftedVector":
        return cls(np.zeros(d), np.zeros((n, m)))

    def copy(self) -> "LiftedVector":
        return LiftedVector(self.x.copy(), self.y.copy())

    def __add__(self, other: "LiftedVector") -> "LiftedVector":
        return LiftedVector(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "LiftedVector") -> "LiftedVector":
        return LiftedVector(self.x - other.x, self.y - other.y)

    def __mul__(self, scalar: float) -> "LiftedVector":
        return LiftedVector(self.x * scalar, self.y * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "LiftedVector":
        return LiftedVector(-self.x, -self.y)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x, self.y.reshape(-1)])

    @classmethod
    def from_flat(cls, data: np.ndarray, d: int, n: int, m: int) -> "LiftedVector":
        return cls(data[:d].copy(), data[d:].reshape(n, m).copy())

    def norm(self) -> float:
        return math.sqrt(float(self.x @ self.x) + float(np.sum(self.y * self.y)))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.x).all() and np.isfinite(self.y).all())


def block_sum_defect(y: np.ndarray, scale: float = 0.0) -> float:
    """``||sum_i y_i|| / max(||y||, scale)`` (0 when both vanish).

    ``scale`` lets callers measure against the largest norm seen so far, so
    rounding residue does not look large once ``y`` itself converges to 0.
    """
    norm = max(float(np.linalg.norm(y)), scale)
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(y.sum(axis=0)) / norm)


def check_block_sum(y: np.ndarray, what: str, tol: float = SUM_TOL, scale: float = 0.0) -> None:
    defect = block_sum_defect(y, scale)
    if defect > tol:
        raise InvariantViolation(f"{what}: block sum defect {defect:.3e} exceeds {tol:.1e}")


def mul_wprime(y: np.ndarray, net, sched: ChebyshevSchedule | None = None) -> np.ndarray:
    """Multiply per-node blocks ``y`` (an ``(n, k)`` array) by ``W' = P(W)``.

    Uses exactly ``ceil(sqrt(kappa_W))`` communication rounds on ``net``.
    """
    if sched is None:
        sched = ChebyshevSchedule.for_gossip(net.gossip_matrix)
    return y - chebyshev_iteration(y, net.gossip, sched)


class LiftedOperators:
    """Binds an instance, its constants and a network for the lifted products.

    ``k_chebyshev(u)`` returns ``K'(K u - b')`` with ``K = sqrt(P_B(B'B))``
    and ``B = [A, gamma W']``, without forming ``K`` or ``b'``.
    """

    def __init__(self, inst, dc: DerivedConstants, net):
        self.inst = inst
        self.dc = dc
        self.net = net
        self.sched_W = ChebyshevSchedule.for_gossip(net.gossip_matrix)
        self.sched_B = ChebyshevSchedule.for_constraints(dc)
        self.b = inst.b_stacked

    def wprime(self, y: np.ndarray) -> np.ndarray:
        return mul_wprime(y, self.net, self.sched_W)

    def constraint_residual(self, u: LiftedVector) -> np.ndarray:
        """``A x + gamma W' y - b`` as per-node blocks."""
        return self.net.apply_A(u.x) + self.dc.gamma * self.wprime(u.y) - self.b

    def B_transpose(self, q: np.ndarray) -> LiftedVector:
        return LiftedVector(self.net.apply_At(q), self.dc.gamma * self.wprime(q))

    def normal_residual(self, u: LiftedVector) -> LiftedVector:
        return self.B_transpose(self.constraint_residual(u))

    def k_chebyshev(self, u: LiftedVector) -> LiftedVector:
        return u - chebyshev_iteration(u, self.normal_residual, self.sched_B)

    def rounds_per_k_chebyshev(self) -> tuple[int, int]:
        """(matmul rounds, communication rounds) consumed by one ``k_chebyshev``."""
        steps = self.sched_B.degree
        return 2 * steps, 2 * steps * self.sched_W.degree


def k_chebyshev(u: LiftedVector, inst, dc: DerivedConstants, net) -> LiftedVector:
    return LiftedOperators(inst, dc, net).k_chebyshev(u)
