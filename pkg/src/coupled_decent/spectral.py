"""Spectral constants of the constraint blocks and of the lifted problem.

Everything here is computed once at setup from dense eigen/singular value
decompositions, so it is meant for desk-scale instances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundViolated, DegenerateConstraints, InvalidParam

# Images of the Chebyshev-compressed spectra: eigenvalues of the preconditioned
# operators land in [11/15, 19/15].
CHEB_LOW = 11.0 / 15.0
CHEB_HIGH = 19.0 / 15.0
L_WP = CHEB_HIGH**2
MU_WP = CHEB_LOW**2


def chebyshev_degree(ratio: float) -> int:
    """``ceil(sqrt(ratio))``, treating ratios equal to 1 up to rounding as 1."""
    return max(1, math.ceil(math.sqrt(ratio) - 1e-9))


def bound_tol(magnitude: float) -> float:
    return 1e-8 * (1.0 + abs(magnitude))


@dataclass(frozen=True)
class ConstraintSpectrum:
    L_A: float
    mu_A: float
    kappa_A: float
    S: np.ndarray


def constraint_spectrum(A_blocks) -> ConstraintSpectrum:
    """Tight ``L_A = max_i sigma_max(A_i)^2`` and ``mu_A = lambda_min+(S)``
    with ``S = (1/n) sum_i A_i A_i'``."""
    A_blocks = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A_blocks]
    if not A_blocks:
        raise InvalidParam("no constraint blocks")
    m = A_blocks[0].shape[0]
    if m < 1 or any(a.shape[0] != m for a in A_blocks):
        raise InvalidParam("constraint blocks must share a positive row count")
    grams = [a @ a.T for a in A_blocks]
    L_A = max(float(np.linalg.eigvalsh(g)[-1]) for g in grams)
    S = sum(grams) / len(grams)
    eig = np.linalg.eigvalsh(S)
    if L_A <= 0.0 or eig[-1] <= 0.0:
        raise DegenerateConstraints("all constraint blocks are zero")
    positive = eig[eig > 1e-9 * eig[-1]]
    mu_A = float(positive[0])
    return ConstraintSpectrum(L_A=L_A, mu_A=mu_A, kappa_A=L_A / mu_A, S=S)


@dataclass(frozen=True)
class DerivedConstants:
    """Constants of the lifted, preconditioned reformulation.

    ``r`` and ``gamma`` weight the augmented term; ``mu_G``/``L_G`` are the
    strong convexity and smoothness of the lifted objective on
    ``R^d x (block-sum-zero)``; ``mu_B``/``L_B`` bound the squared nonzero
    singular values of ``B = [A, gamma W']``; ``mu_K``/``L_K`` bound the
    spectrum of ``K'K`` after Chebyshev compression.
    """

    L_f: float
    mu_f: float
    L_A: float
    mu_A: float
    r: float
    gamma: float
    L_Wp: float
    mu_Wp: float
    mu_G: float
    L_G: float
    kappa_G_bound: float
    mu_B: float
    L_B: float
    kappa_B: float
    L_K: float
    mu_K: float
    kappa_K: float

    @property
    def kappa_f(self) -> float:
        return self.L_f / self.mu_f

    @property
    def kappa_A(self) -> float:
        return self.L_A / self.mu_A

    @property
    def degree_B(self) -> int:
        return chebyshev_degree(self.kappa_B)


def derived_constants(L_f: float, mu_f: float, cs: ConstraintSpectrum) -> DerivedConstants:
    if not L_f >= mu_f > 0:
        raise InvalidParam(f"need L_f >= mu_f > 0, got L_f={L_f}, mu_f={mu_f}")
    L_A, mu_A = cs.L_A, cs.mu_A
    r = mu_f / (2.0 * L_A)
    gamma = math.sqrt((mu_A + L_A) / MU_WP)
    mu_G = mu_f * min(0.5, (mu_A + L_A) / (4.0 * L_A))
    L_G = max(L_f + mu_f, mu_f * ((mu_A + L_A) / L_A) * (L_WP / MU_WP))
    mu_B = mu_A / 2.0
    L_B = L_A + (L_A + mu_A) * L_WP / MU_WP
    return DerivedConstants(
        L_f=L_f,
        mu_f=mu_f,
        L_A=L_A,
        mu_A=mu_A,
        r=r,
        gamma=gamma,
        L_Wp=L_WP,
        mu_Wp=MU_WP,
        mu_G=mu_G,
        L_G=L_G,
        kappa_G_bound=L_G / mu_G,
        mu_B=mu_B,
        L_B=L_B,
        kappa_B=L_B / mu_B,
        L_K=CHEB_HIGH,
        mu_K=CHEB_LOW,
        kappa_K=CHEB_HIGH / CHEB_LOW,
    )


def constants_for(inst) -> DerivedConstants:
    """Derived constants of a problem instance with tight spectral bounds."""
    return derived_constants(inst.L_f, inst.mu_f, constraint_spectrum(inst.A))


@dataclass(frozen=True)
class BoundReport:
    name: str
    lower_bound: float
    observed_min: float
    observed_max: float
    upper_bound: float

    @property
    def passed(self) -> bool:
        return (self.observed_min >= self.lower_bound - bound_tol(self.lower_bound)
                and self.observed_max <= self.upper_bound + bound_tol(self.upper_bound))

    def raise_if_failed(self) -> "BoundReport":
        if self.observed_min < self.lower_bound - bound_tol(self.lower_bound):
            raise BoundViolated(f"{self.name} min", self.observed_min, self.lower_bound)
        if self.observed_max > self.upper_bound + bound_tol(self.upper_bound):
            raise BoundViolated(f"{self.name} max", self.observed_max, self.upper_bound)
        return self


def consensus_complement_basis(n: int, m: int) -> np.ndarray:
    """Orthonormal basis of the stacked ``(R^m)^n`` vectors whose blocks sum to 0."""
    # Columns of the centering matrix span 1-perp; an SVD gives an orthonormal basis.
    centering = np.eye(n) - np.full((n, n), 1.0 / n)
    U, s, _ = np.linalg.svd(centering)
    U = U[:, : n - 1]
    return np.kron(U, np.eye(m))


def lifted_hessian(inst, dc: DerivedConstants, W_prime: np.ndarray) -> np.ndarray:
    """Dense Hessian of ``F(x) + r/2 ||Ax + gamma W' y - b||^2``."""
    A = inst.A_blockdiag()
    Wp = np.kron(W_prime, np.eye(inst.m))
    B = np.hstack([A, dc.gamma * Wp])
    H = dc.r * B.T @ B
    d = inst.d
    H[:d, :d] += inst.Q_blockdiag()
    return H


def verify_lifted_objective_bounds(inst, dc: DerivedConstants, gossip) -> BoundReport:
    """Check the strong convexity / smoothness constants of the lifted objective.

    The Hessian is restricted to ``R^d x (block-sum-zero)`` where the bounds
    are claimed to hold; outside that subspace the lifted objective is flat
    in ``y``.
    """
    from .oracle import dense_wprime

    if not inst.is_quadratic:
        raise InvalidParam("Hessian check needs quadratic objectives")
    H = lifted_hessian(inst, dc, dense_wprime(gossip))
    P = np.zeros((H.shape[0], inst.d + inst.m * (inst.n - 1)))
    P[: inst.d, : inst.d] = np.eye(inst.d)
    P[inst.d:, inst.d:] = consensus_complement_basis(inst.n, inst.m)
    eig = np.linalg.eigvalsh(P.T @ H @ P)
    return BoundReport("lifted objective", dc.mu_G, float(eig[0]), float(eig[-1]), dc.L_G)


def verify_B_bounds(inst, dc: DerivedConstants, gossip) -> BoundReport:
    """Squared nonzero singular values of ``B = [A, gamma W']`` against
    ``[mu_B, L_B]``."""
    from .oracle import dense_wprime

    A = inst.A_blockdiag()
    Wp = np.kron(dense_wprime(gossip), np.eye(inst.m))
    B = np.hstack([A, dc.gamma * Wp])
    sv = np.linalg.svd(B, compute_uv=False)
    sq = sv**2
    nonzero = sq[sq > 1e-10 * sq[0]]
    return BoundReport("B singular values^2", dc.mu_B, float(nonzero[-1]), float(nonzero[0]), dc.L_B)


def kappa_B_ceiling(kappa_A: float) -> float:
    return 10.0 * kappa_A + 8.0


def kappa_G_ceiling(kappa_f: float) -> float:
    return 4.0 * max(1.0 + kappa_f, 8.0)
