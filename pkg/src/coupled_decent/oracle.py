"""Dense reference computations used to check the decentralized path."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .chebyshev import ChebyshevSchedule, eval_scaled_chebyshev
from .errors import DimensionTooLarge, InvalidParam, SingularKKT
from .spectral import DerivedConstants

MAX_KKT_DIM = 5000
MAX_LIFTED_DIM = 2000


@dataclass
class ReferenceSolution:
    x_star: list[np.ndarray]
    multiplier: np.ndarray
    kkt_residual: float

    @property
    def x_flat(self) -> np.ndarray:
        return np.concatenate(self.x_star)


def kkt_oracle(inst) -> ReferenceSolution:
    """Solve the saddle system ``[Q, A'; A, 0] [x; lam] = [-c; sum_i b_i]``.

    ``Q`` is block diagonal over nodes and ``A = [A_1 ... A_n]``.  A dense
    symmetric indefinite (Bunch-Kaufman) factorization is used.
    """
    if not inst.is_quadratic:
        raise InvalidParam("KKT oracle needs quadratic objectives")
    d, m = inst.d, inst.m
    if d + m > MAX_KKT_DIM:
        raise DimensionTooLarge(f"KKT system of size {d + m} exceeds {MAX_KKT_DIM}")
    Q = inst.Q_blockdiag()
    A = inst.A_row
    # The constraint matrix may be row-rank deficient; that leaves the
    # multiplier non-unique but x unique, so drop dependent rows first.
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > 1e-12 * max(s[0], 1e-300))) if s.size else 0
    if rank == 0:
        raise SingularKKT("constraint matrix is zero")
    P = U[:, :rank].T
    Ar = P @ A
    br = P @ inst.b_total
    K = np.block([[Q, Ar.T], [Ar, np.zeros((rank, rank))]])
    rhs = np.concatenate([-inst.c_stacked(), br])
    try:
        sol = scipy.linalg.solve(K, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularKKT(str(exc)) from exc
    if not np.isfinite(sol).all():
        raise SingularKKT("non-finite KKT solution")
    x = sol[:d]
    lam = P.T @ sol[d:]
    residual = float(np.linalg.norm(np.concatenate([
        Q @ x + inst.c_stacked() + A.T @ lam,
        A @ x - inst.b_total,
    ])))
    scale = 1.0 + np.abs(K).max() * (1.0 + np.abs(sol).max()) + np.abs(rhs).max()
    if residual > 1e-9 * scale:
        raise SingularKKT(f"KKT residual {residual:.3e} too large")
    return ReferenceSolution(inst.split(x), lam, residual)


def dense_scaled_polynomial(gram: np.ndarray, sched: ChebyshevSchedule) -> np.ndarray:
    """``P(gram)`` by eigendecomposition and scalar evaluation of ``P``."""
    eig, V = np.linalg.eigh(gram)
    eig = np.clip(eig, 0.0, None)
    vals = eval_scaled_chebyshev(eig, sched)
    return (V * vals) @ V.T


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    eig, V = np.linalg.eigh(0.5 * (M + M.T))
    return (V * np.sqrt(np.clip(eig, 0.0, None))) @ V.T


def dense_wprime(gossip) -> np.ndarray:
    """``n x n`` matrix ``W' = P(W)`` (acts blockwise on ``(R^m)^n``)."""
    return dense_scaled_polynomial(gossip.W, ChebyshevSchedule.for_gossip(gossip))


def dense_lifted_operators(inst, dc: DerivedConstants, gossip) -> dict[str, np.ndarray]:
    """Dense ``W'`` (``n x n``), ``B = [A, gamma W']``, ``P_B(B'B)`` and its root ``K``."""
    total = inst.d + inst.n * inst.m
    if total > MAX_LIFTED_DIM:
        raise DimensionTooLarge(f"lifted dimension {total} exceeds {MAX_LIFTED_DIM}")
    Wp = dense_wprime(gossip)
    B = np.hstack([inst.A_blockdiag(), dc.gamma * np.kron(Wp, np.eye(inst.m))])
    P_B = dense_scaled_polynomial(B.T @ B, ChebyshevSchedule.for_constraints(dc))
    return {"W_prime": Wp, "B": B, "P_B_of_BtB": P_B, "K": psd_sqrt(P_B)}


def dense_k_chebyshev(inst, dc: DerivedConstants, gossip, u_flat: np.ndarray,
                      ops: dict | None = None) -> np.ndarray:
    """``P_B(B'B)(u - u0)`` with ``u0`` a least-squares solution of ``B u0 = b``."""
    ops = ops or dense_lifted_operators(inst, dc, gossip)
    b = inst.b_stacked.reshape(-1)
    u0, *_ = np.linalg.lstsq(ops["B"], b, rcond=None)
    return ops["P_B_of_BtB"] @ (u_flat - u0)


def lifted_objective(inst, dc: DerivedConstants, gossip, u_flat: np.ndarray,
                     W_prime: np.ndarray | None = None) -> float:
    """``F(x) + r/2 ||A x + gamma W' y - b||^2`` evaluated densely."""
    Wp = dense_wprime(gossip) if W_prime is None else W_prime
    d, n, m = inst.d, inst.n, inst.m
    x = u_flat[:d]
    Y = u_flat[d:].reshape(n, m)
    res = inst.A_blockdiag() @ x + dc.gamma * (Wp @ Y).reshape(-1) - inst.b_stacked.reshape(-1)
    return inst.objective(x) + 0.5 * dc.r * float(res @ res)


def finite_diff_grad(fn, x: np.ndarray, h: float) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    if h <= 0:
        raise InvalidParam("step must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    e = np.zeros_like(x)
    for k in range(x.size):
        e[k] = h
        g[k] = (fn(x + e) - fn(x - e)) / (2.0 * h)
        e[k] = 0.0
    return g


def dual_minimizer(inst) -> np.ndarray:
    """Minimizer of ``sum_i f_i*(A_i' w) - <w, sum_i b_i>`` for quadratic ``f_i``."""
    if not inst.is_quadratic:
        raise InvalidParam("dual minimizer needs quadratic objectives")
    H = np.zeros((inst.m, inst.m))
    g = inst.b_total.copy()
    for f, a in zip(inst.objectives, inst.A):
        QiA = np.linalg.solve(f.Q, a.T)
        H += a @ QiA
        g += QiA.T @ f.c
    return np.linalg.solve(H, g)
