"""Problem data model and instance generators.

An instance is ``min sum_i f_i(x_i)  s.t.  sum_i (A_i x_i - b_i) = 0`` over a
communication graph, where node ``i`` privately holds ``f_i``, ``A_i`` and
``b_i``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import InfeasibleInstance, InvalidParam, ShapeMismatch, SplitMismatch
from .graphs import Graph, make_graph
from .libsvm import SparseExamples

TOL_FEAS = 1e-10


@dataclass
class ObjectiveBlock:
    """A local objective ``f_i``.

    Quadratic blocks are ``0.5 x'Qx + c'x + offset``; oracle blocks wrap a
    user-supplied gradient callback together with declared smoothness and
    strong-convexity constants.
    """

    kind: str
    L_f_local: float
    mu_f_local: float
    Q: np.ndarray | None = None
    c: np.ndarray | None = None
    offset: float = 0.0
    grad_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    value_fn: Callable[[np.ndarray], float] | None = field(default=None, repr=False)
    dim: int = 0

    @classmethod
    def quadratic(cls, Q, c, offset: float = 0.0) -> "ObjectiveBlock":
        Q = np.asarray(Q, dtype=float)
        c = np.asarray(c, dtype=float).reshape(-1)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] != c.size:
            raise ShapeMismatch(f"Q shape {Q.shape} incompatible with c of size {c.size}")
        if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise InvalidParam("Q is not symmetric")
        Q = 0.5 * (Q + Q.T)
        eig = np.linalg.eigvalsh(Q)
        if eig[0] <= 0.0:
            raise InvalidParam(f"Q is not positive definite (min eigenvalue {eig[0]:.3e})")
        return cls(
            kind="quadratic",
            L_f_local=float(eig[-1]),
            mu_f_local=float(eig[0]),
            Q=Q,
            c=c,
            offset=float(offset),
            dim=c.size,
        )

    @classmethod
    def oracle(cls, grad_fn, dim: int, L: float, mu: float, value_fn=None) -> "ObjectiveBlock":
        if not L >= mu > 0:
            raise InvalidParam(f"need L >= mu > 0, got L={L}, mu={mu}")
        return cls(kind="oracle", L_f_local=float(L), mu_f_local=float(mu),
                   grad_fn=grad_fn, value_fn=value_fn, dim=int(dim))

    def grad(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "quadratic":
            return self.Q @ x + self.c
        return np.asarray(self.grad_fn(x), dtype=float)

    def value(self, x: np.ndarray) -> float:
        if self.kind == "quadratic":
            return float(0.5 * x @ (self.Q @ x) + self.c @ x + self.offset)
        if self.value_fn is None:
            return math.nan
        return float(self.value_fn(x))


@dataclass
class ProblemInstance:
    """Graph plus per-node ``(f_i, A_i, b_i)``.

    Construction checks shapes and that the coupled constraint admits a
    solution (least-squares residual of the stacked system).
    """

    graph: Graph
    objectives: list[ObjectiveBlock]
    A: list[np.ndarray]
    b: list[np.ndarray]
    tol_feas: float = TOL_FEAS

    def __post_init__(self):
        n = self.graph.n
        if not (len(self.objectives) == len(self.A) == len(self.b) == n):
            raise ShapeMismatch(
                f"expected {n} blocks, got {len(self.objectives)} objectives, "
                f"{len(self.A)} A blocks, {len(self.b)} b blocks"
            )
        self.A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A]
        self.b = [np.asarray(v, dtype=float).reshape(-1) for v in self.b]
        m = self.A[0].shape[0]
        if m < 1:
            raise InvalidParam("constraint dimension must be at least 1")
        for i, (f, a, v) in enumerate(zip(self.objectives, self.A, self.b)):
            if a.shape[0] != m or v.size != m:
                raise ShapeMismatch(f"node {i}: A has {a.shape[0]} rows, b has {v.size}, expected {m}")
            if a.shape[1] != f.dim:
                raise ShapeMismatch(f"node {i}: A has {a.shape[1]} columns but f_{i} has dim {f.dim}")
        residual = self.feasibility_residual()
        if residual > self.tol_feas * (1.0 + np.linalg.norm(self.b_total)):
            raise InfeasibleInstance(f"coupled constraint infeasible (lstsq residual {residual:.3e})")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def m(self) -> int:
        return self.A[0].shape[0]

    @cached_property
    def dims(self) -> tuple[int, ...]:
        return tuple(a.shape[1] for a in self.A)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)])

    @property
    def d(self) -> int:
        return int(self.offsets[-1])

    @property
    def L_f(self) -> float:
        return max(f.L_f_local for f in self.objectives)

    @property
    def mu_f(self) -> float:
        return min(f.mu_f_local for f in self.objectives)

    @property
    def kappa_f(self) -> float:
        return self.L_f / self.mu_f

    @property
    def is_quadratic(self) -> bool:
        return all(f.kind == "quadratic" for f in self.objectives)

    @cached_property
    def b_total(self) -> np.ndarray:
        return np.sum(self.b, axis=0)

    @cached_property
    def b_stacked(self) -> np.ndarray:
        """``b`` as an ``(n, m)`` array, row ``i`` held by node ``i``."""
        return np.vstack(self.b)

    @cached_property
    def A_row(self) -> np.ndarray:
        """``[A_1 ... A_n]``, the ``m x d`` matrix of the coupled constraint."""
        return np.hstack(self.A)

    def A_blockdiag(self) -> np.ndarray:
        out = np.zeros((self.n * self.m, self.d))
        for i, a in enumerate(self.A):
            out[i * self.m:(i + 1) * self.m, self.offsets[i]:self.offsets[i + 1]] = a
        return out

    def Q_blockdiag(self) -> np.ndarray:
        if not self.is_quadratic:
            raise InvalidParam("instance has non-quadratic blocks")
        out = np.zeros((self.d, self.d))
        for i, f in enumerate(self.objectives):
            sl = slice(self.offsets[i], self.offsets[i + 1])
            out[sl, sl] = f.Q
        return out

    def c_stacked(self) -> np.ndarray:
        return np.concatenate([f.c for f in self.objectives])

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[self.offsets[i]:self.offsets[i + 1]] for i in range(self.n)]

    def feasibility_residual(self) -> float:
        sol, *_ = np.linalg.lstsq(self.A_row, self.b_total, rcond=None)
        return float(np.linalg.norm(self.A_row @ sol - self.b_total))

    def constraint_residual(self, x: np.ndarray) -> float:
        """``|| sum_i (A_i x_i - b_i) ||`` for a stacked ``x``."""
        return float(np.linalg.norm(self.A_row @ x - self.b_total))

    def objective(self, x: np.ndarray) -> float:
        return float(sum(f.value(xi) for f, xi in zip(self.objectives, self.split(x))))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate([f.grad(xi) for f, xi in zip(self.objectives, self.split(x))])

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        blocks = []
        for f, a, v in zip(self.objectives, self.A, self.b):
            if f.kind == "quadratic":
                blk = {"Q": _encode_matrix(f.Q), "c": f.c.tolist(), "offset": f.offset}
            else:
                blk = {"oracle": True, "dim": f.dim, "L_f": f.L_f_local, "mu_f": f.mu_f_local}
            blk["A"] = _encode_matrix(a)
            blk["b"] = v.tolist()
            blocks.append(blk)
        return {
            "n": self.n,
            "m": self.m,
            "dims": list(self.dims),
            "graph": self.graph.to_dict(),
            "blocks": blocks,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemInstance":
        graph = Graph.from_dict(data["graph"])
        objectives, A, b = [], [], []
        for i, blk in enumerate(data["blocks"]):
            if blk.get("oracle"):
                raise InvalidParam(f"block {i}: oracle objectives cannot be restored from a file")
            objectives.append(ObjectiveBlock.quadratic(_decode_matrix(blk["Q"]), blk["c"],
                                                       blk.get("offset", 0.0)))
            A.append(_decode_matrix(blk["A"]))
            b.append(np.asarray(blk["b"], dtype=float))
        inst = cls(graph, objectives, A, b)
        if int(data.get("n", inst.n)) != inst.n or int(data.get("m", inst.m)) != inst.m:
            raise ShapeMismatch("header n/m disagree with block data")
        if "dims" in data and tuple(data["dims"]) != inst.dims:
            raise ShapeMismatch("header dims disagree with block data")
        return inst

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ProblemInstance":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _encode_matrix(M: np.ndarray):
    M = np.asarray(M, dtype=float)
    nnz = np.count_nonzero(M)
    if M.size >= 64 and nnz <= 0.25 * M.size:
        rows, cols = np.nonzero(M)
        return {
            "shape": list(M.shape),
            "rows": rows.tolist(),
            "cols": cols.tolist(),
            "values": M[rows, cols].tolist(),
        }
    return M.tolist()


def _decode_matrix(obj) -> np.ndarray:
    if isinstance(obj, dict):
        M = np.zeros(tuple(obj["shape"]))
        M[np.asarray(obj["rows"], dtype=int), np.asarray(obj["cols"], dtype=int)] = obj["values"]
        return M
    return np.atleast_2d(np.asarray(obj, dtype=float))


def _check_graph(graph: Graph, n: int):
    if graph.n != n:
        raise InvalidParam(f"graph has {graph.n} nodes, expected {n}")
    if not graph.connected:
        raise InvalidParam("graph is not connected")


def _make_feasible(A: Sequence[np.ndarray], b: list[np.ndarray]) -> list[np.ndarray]:
    # Spread the projection correction of sum(b) onto range([A_1 ... A_n]) equally.
    A_row = np.hstack(A)
    total = np.sum(b, axis=0)
    sol, *_ = np.linalg.lstsq(A_row, total, rcond=None)
    correction = (A_row @ sol - total) / len(b)
    if np.linalg.norm(correction) == 0.0:
        return b
    return [v + correction for v in b]


def gen_synthetic_regression(n: int, d_i: int, m: int, theta: float, graph: Graph,
                             seed: int = 0, design_scale: float = 1.0) -> ProblemInstance:
    """Ridge-regularized least squares with a random coupled constraint.

    ``f_i(x) = 0.5 ||C_i x - d_i||^2 + 0.5 theta ||x||^2`` with ``C_i``,
    ``A_i``, ``d_i``, ``b_i`` standard normal.  ``design_scale`` multiplies
    every ``C_i`` (``0`` gives ``Q = theta I``).
    """
    if theta <= 0:
        raise InvalidParam(f"theta must be positive, got {theta}")
    if min(n, d_i, m) < 1:
        raise InvalidParam("n, d_i and m must be positive")
    _check_graph(graph, n)
    rng = np.random.default_rng(seed)
    objectives, A, b = [], [], []
    for _ in range(n):
        C = design_scale * rng.standard_normal((d_i, d_i))
        a = rng.standard_normal((m, d_i))
        target = rng.standard_normal(d_i)
        bi = rng.standard_normal(m)
        Q = C.T @ C + theta * np.eye(d_i)
        objectives.append(ObjectiveBlock.quadratic(Q, -C.T @ target, 0.5 * target @ target))
        A.append(a)
        b.append(bi)
    return ProblemInstance(graph, objectives, A, _make_feasible(A, b))


def gen_resource_allocation(n: int, d: int, centers, budget, graph: Graph) -> ProblemInstance:
    """``f_i = 0.5 ||x_i - c_i||^2`` subject to ``sum_i x_i = budget``."""
    centers = np.asarray(centers, dtype=float)
    if centers.size != n * d:
        raise InvalidParam(f"need {n} centers of dimension {d}")
    centers = centers.reshape(n, d)
    budget = np.asarray(budget, dtype=float).reshape(-1)
    if budget.size != d:
        raise InvalidParam(f"budget must have dimension {d}")
    _check_graph(graph, n)
    objectives = [ObjectiveBlock.quadratic(np.eye(d), -c, 0.5 * c @ c) for c in centers]
    return ProblemInstance(graph, objectives, [np.eye(d) for _ in range(n)],
                           [budget / n for _ in range(n)])


def gen_conditioned_quadratic(graph: Graph, d: int, m: int, kappa_f: float, seed: int = 0,
                              constraint: str = "random", kappa_A: float = 1.0) -> ProblemInstance:
    """Quadratic instance with prescribed objective conditioning.

    Every ``Q_i`` has eigenvalues spread log-uniformly over ``[1, kappa_f]``
    (both ends attained), so ``mu_f = 1`` and ``L_f = kappa_f``.  With
    ``constraint="identity"`` every ``A_i = I`` (``kappa_A = 1``) and
    ``m`` must equal ``d``; with ``constraint="diagonal"`` every node shares
    ``A_i = [diag(s), 0]`` with ``s`` log-spaced over ``[1, sqrt(kappa_A)]``
    (``m <= d``), which makes the constraint condition number exactly
    ``kappa_A``.  Otherwise ``A_i`` is standard normal drawn from a generator
    seeded independently of ``kappa_f``.
    """
    if kappa_f < 1:
        raise InvalidParam("kappa_f must be >= 1")
    if kappa_A < 1:
        raise InvalidParam("kappa_A must be >= 1")
    n = graph.n
    _check_graph(graph, n)
    rng_q = np.random.default_rng([seed, 1])
    rng_a = np.random.default_rng([seed, 2])
    spectrum = np.geomspace(1.0, kappa_f, d) if d > 1 else np.array([1.0])
    objectives, A, b = [], [], []
    for _ in range(n):
        basis, _ = np.linalg.qr(rng_q.standard_normal((d, d)))
        Q = (basis * spectrum) @ basis.T
        objectives.append(ObjectiveBlock.quadratic(Q, rng_q.standard_normal(d)))
        if constraint == "identity":
            if m != d:
                raise InvalidParam("identity constraints need m == d")
            A.append(np.eye(d))
        elif constraint == "diagonal":
            if m > d:
                raise InvalidParam("diagonal constraints need m <= d")
            a = np.zeros((m, d))
            a[:, :m] = np.diag(np.geomspace(1.0, math.sqrt(kappa_A), m) if m > 1 else [1.0])
            A.append(a)
        elif constraint == "random":
            A.append(rng_a.standard_normal((m, d)))
        else:
            raise InvalidParam(f"unknown constraint kind {constraint!r}")
        b.append(rng_a.standard_normal(m))
    return ProblemInstance(graph, objectives, A, _make_feasible(A, b))


def gen_vfl(features: SparseExamples, lam: float, graph: Graph,
            column_split: Sequence[int]) -> ProblemInstance:
    """Vertical federated ridge regression.

    Node 0 holds ``(w_0, z)`` with objective ``0.5||z - l||^2 + lam||w_0||^2``
    and constraint block ``[F_0, -I]``; node ``i > 0`` holds ``w_i`` with
    objective ``lam||w_i||^2`` and block ``F_i``.  Every ``b_i`` is zero, so
    the coupled constraint reads ``sum_i F_i w_i = z``.
    """
    if lam <= 0:
        raise InvalidParam(f"lambda must be positive, got {lam}")
    column_split = [int(s) for s in column_split]
    if any(s < 1 for s in column_split) or sum(column_split) != features.num_features:
        raise SplitMismatch(
            f"split {column_split} does not partition {features.num_features} features"
        )
    if graph.n != len(column_split):
        raise SplitMismatch(f"graph has {graph.n} nodes but split has {len(column_split)} parts")
    _check_graph(graph, graph.n)
    F = features.to_dense()
    labels = features.labels
    m = F.shape[0]
    if m < 1:
        raise InvalidParam("no samples")
    bounds = np.concatenate([[0], np.cumsum(column_split)])
    objectives, A = [], []
    for i in range(graph.n):
        Fi = F[:, bounds[i]:bounds[i + 1]]
        k = Fi.shape[1]
        if i == 0:
            Q = np.diag(np.concatenate([np.full(k, 2.0 * lam), np.ones(m)]))
            c = np.concatenate([np.zeros(k), -labels])
            objectives.append(ObjectiveBlock.quadratic(Q, c, 0.5 * labels @ labels))
            A.append(np.hstack([Fi, -np.eye(m)]))
        else:
            objectives.append(ObjectiveBlock.quadratic(2.0 * lam * np.eye(k), np.zeros(k)))
            A.append(Fi)
    return ProblemInstance(graph, objectives, A, [np.zeros(m) for _ in range(graph.n)])


# -- worst-case instance on a path -------------------------------------------


def _pair_chain(dim: int, m: int, first: int) -> np.ndarray:
    # Rows first, first+2, ... carry (+1, -1) on columns (r, r+1); the chain
    # lives on the first `dim` columns and incomplete trailing pairs are dropped.
    E = np.zeros((dim, m))
    for r in range(first, dim - 1, 2):
        E[r, r] = 1.0
        E[r, r + 1] = -1.0
    return E


@dataclass(frozen=True)
class LowerBoundMeta:
    L_f: float
    mu_f: float
    L_A: float
    mu_A: float
    L_hat: float
    mu_hat: float
    dim: int
    groups: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]


def gen_lower_bound_instance(n: int, L_f: float, mu_f: float, L_A: float, mu_A: float,
                             dim: int) -> tuple[ProblemInstance, LowerBoundMeta]:
    """Worst-case instance on a path graph split into three node groups.

    Node variables are ``(p, t)`` with ``p`` of size ``dim`` and ``t`` of
    size ``m = dim + 1``.  Every node has
    ``f(p, t) = mu_f/2 ||p - sqrt(L_hat)/(2 mu_f) e_1||^2 + L_f/2 ||t||^2``
    and the three groups use ``[sqrt(L_hat) E_1', sqrt(mu_hat) I]``,
    ``[sqrt(L_hat) e_1 e_1', 0]`` and ``[sqrt(L_hat) E_2', sqrt(mu_hat) I]``
    with ``L_hat = L_A/2 - 3 mu_A/4`` and ``mu_hat = 3 mu_A/2``.

    The last constraint coordinate is not touched by the difference chains,
    which makes the smallest eigenvalue of the constraint Gram matrix exactly
    ``2 mu_hat / 3 = mu_A`` at finite size.
    """
    if n < 3 or n % 3:
        raise InvalidParam(f"n must be a positive multiple of 3, got {n}")
    if not L_f > mu_f > 0:
        raise InvalidParam(f"need L_f > mu_f > 0, got L_f={L_f}, mu_f={mu_f}")
    if mu_A <= 0:
        raise InvalidParam("mu_A must be positive")
    L_hat = 0.5 * L_A - 0.75 * mu_A
    if L_hat < 0:
        raise InvalidParam(f"need L_A >= 1.5 mu_A, got L_A={L_A}, mu_A={mu_A}")
    if dim < 3:
        raise InvalidParam("dim must be at least 3")
    mu_hat = 1.5 * mu_A
    m = dim + 1
    E1 = _pair_chain(dim, m, 0)
    E2 = _pair_chain(dim, m, 1)
    e11 = np.zeros((m, dim))
    e11[0, 0] = 1.0
    sl, sm = math.sqrt(L_hat), math.sqrt(mu_hat)
    blocks = (
        np.hstack([sl * E1.T, sm * np.eye(m)]),
        np.hstack([sl * e11, np.zeros((m, m))]),
        np.hstack([sl * E2.T, sm * np.eye(m)]),
    )
    k = n // 3
    groups = tuple(tuple(range(g * k, (g + 1) * k)) for g in range(3))
    Q = np.diag(np.concatenate([np.full(dim, mu_f), np.full(m, L_f)]))
    shift = np.zeros(dim + m)
    shift[0] = sl / (2.0 * mu_f)
    objectives = [ObjectiveBlock.quadratic(Q, -Q @ shift, 0.5 * shift @ Q @ shift)
                  for _ in range(n)]
    A = [blocks[i // k].copy() for i in range(n)]
    inst = ProblemInstance(make_graph("path", n), objectives, A, [np.zeros(m) for _ in range(n)])
    meta = LowerBoundMeta(L_f, mu_f, L_A, mu_A, L_hat, mu_hat, dim, groups)
    return inst, meta


def nominal_decay_ratio(mu_A: float, mu_f: float, L_A: float, L_f: float) -> float:
    """Closed-form geometric ratio ``(1 - sqrt(a)) / (1 + sqrt(a))`` with
    ``a = mu_A mu_f / (mu_A mu_f + 2 L_A L_f)``."""
    s = math.sqrt(mu_A * mu_f / (mu_A * mu_f + 2.0 * L_A * L_f))
    return (1.0 - s) / (1.0 + s)


def chain_decay_ratio(meta: LowerBoundMeta) -> float:
    """Interior decay ratio implied by the constructed blocks.

    The dual Hessian restricted to the chain is proportional to
    ``M + 2 X I`` with ``M`` the tridiagonal ``(-1, 2, -1)`` matrix and
    ``X = mu_hat mu_f / (L_hat L_f)``; its homogeneous solutions decay with
    the root of ``q + 1/q = 2 + 2X`` inside the unit interval.
    """
    if meta.L_hat == 0:
        return 0.0
    X = meta.mu_hat * meta.mu_f / (meta.L_hat * meta.L_f)
    return (1.0 + X) - math.sqrt((1.0 + X) ** 2 - 1.0)
