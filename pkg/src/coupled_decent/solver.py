"""Accelerated primal-dual solver for the lifted, preconditioned problem.

Each outer iteration evaluates the lifted gradient once (one gradient round)
and applies the Chebyshev-preconditioned constraint operator once; the only
cross-node operations are multiplications by the gossip matrix.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .chebyshev import (ChebyshevSchedule, LiftedOperators, LiftedVector, check_block_sum,
                        mul_wprime)
from .errors import InvalidParam, NonFiniteIterate, ShapeMismatch
from .graphs import laplacian_gossip
from .simnet import SimNet
from .spectral import DerivedConstants, constants_for

TRACE_COLUMNS = ("iter", "grad_calls", "matmul_rounds", "comm_rounds", "objective",
                 "feas_residual", "dist_to_opt")


@dataclass(frozen=True)
class SolverParams:
    tau: float
    eta: float
    theta: float
    alpha: float
    r: float
    gamma: float
    max_iters: int = 20000
    tol_x: float = 1e-10
    tol_feas: float = 1e-8

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise InvalidParam(f"tau must lie in (0, 1], got {self.tau}")
        for name in ("eta", "theta", "alpha", "r", "gamma"):
            if not getattr(self, name) > 0:
                raise InvalidParam(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_iters < 0:
            raise InvalidParam("max_iters must be non-negative")

    def with_(self, **changes) -> "SolverParams":
        return replace(self, **changes)


def default_params(L_f: float, mu_f: float, dc: DerivedConstants, max_iters: int = 20000,
                   tol_x: float = 1e-10, tol_feas: float = 1e-8) -> SolverParams:
    """Default step sizes, expressed through ``kappa_f`` alone.

    ``tau = min(1, 0.5 sqrt(19 / (60 max(1 + kappa_f, 8))))``,
    ``eta = 1 / (4 tau max(L_f + mu_f, 8 mu_f))``, ``theta = 15 / (19 eta)``,
    ``alpha = mu_f / 4``.
    """
    if not L_f >= mu_f > 0:
        raise InvalidParam(f"need L_f >= mu_f > 0, got L_f={L_f}, mu_f={mu_f}")
    kappa_f = L_f / mu_f
    tau = min(1.0, 0.5 * math.sqrt(19.0 / (60.0 * max(1.0 + kappa_f, 8.0))))
    eta = 1.0 / (4.0 * tau * max(L_f + mu_f, 8.0 * mu_f))
    return SolverParams(
        tau=tau,
        eta=eta,
        theta=15.0 / (19.0 * eta),
        alpha=mu_f / 4.0,
        r=dc.r,
        gamma=dc.gamma,
        max_iters=max_iters,
        tol_x=tol_x,
        tol_feas=tol_feas,
    )


def exact_params(dc: DerivedConstants, max_iters: int = 20000, tol_x: float = 1e-10,
                 tol_feas: float = 1e-8) -> SolverParams:
    """Step sizes from the exact lifted constants ``mu_G, L_G, L_K, mu_K``."""
    kappa_G = dc.L_G / dc.mu_G
    tau = min(1.0, 0.5 * math.sqrt(dc.kappa_K / kappa_G))
    eta = 1.0 / (4.0 * tau * dc.L_G)
    return SolverParams(
        tau=tau,
        eta=eta,
        theta=1.0 / (eta * dc.L_K),
        alpha=dc.mu_G,
        r=dc.r,
        gamma=dc.gamma,
        max_iters=max_iters,
        tol_x=tol_x,
        tol_feas=tol_feas,
    )


def rate_factor(dc: DerivedConstants) -> float:
    """Guaranteed per-iteration contraction ``(1 + min(1/sqrt(kG kK), 1/kK) / 4)^-1``
    of the squared Lyapunov distance under :func:`exact_params`."""
    kappa_G = dc.L_G / dc.mu_G
    return 1.0 / (1.0 + 0.25 * min(1.0 / math.sqrt(kappa_G * dc.kappa_K), 1.0 / dc.kappa_K))


def grad_G(u: LiftedVector, inst, p: SolverParams, net: SimNet, wprime=None) -> LiftedVector:
    """Gradient of ``F(x) + r/2 ||A x + gamma W' y - b||^2``.

    One gradient round, two matmul rounds and two ``W'`` products.
    ``wprime`` may be passed to reuse a precomputed gossip schedule.
    """
    if u.x.shape != (inst.d,) or u.y.shape != (inst.n, inst.m):
        raise ShapeMismatch(f"lifted vector shapes {u.x.shape}, {u.y.shape} do not match the instance")
    if wprime is None:
        sched = ChebyshevSchedule.for_gossip(net.gossip_matrix)
        wprime = lambda y: mul_wprime(y, net, sched)  # noqa: E731
    z = (net.apply_A(u.x) + p.gamma * wprime(u.y) - inst.b_stacked) * p.r
    return LiftedVector(net.gradient(u.x) + net.apply_At(z), p.gamma * wprime(z))


def rounds_per_iteration(ops: LiftedOperators) -> tuple[int, int, int]:
    """Exact ``(grad_calls, matmul_rounds, comm_rounds)`` of one outer iteration."""
    n_W = ops.sched_W.degree
    mm, comm = ops.rounds_per_k_chebyshev()
    return 1, 2 + mm, 2 * n_W + comm


@dataclass
class SolverState:
    u: LiftedVector
    u_f: LiftedVector
    z: LiftedVector
    iter: int = 0


@dataclass
class ConvergenceTrace:
    iter: list[int] = field(default_factory=list)
    grad_calls: list[int] = field(default_factory=list)
    matmul_rounds: list[int] = field(default_factory=list)
    comm_rounds: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    feas_residual: list[float] = field(default_factory=list)
    dist_to_opt: list[float] | None = None

    def record(self, k, counters, objective, feas, dist=None):
        self.iter.append(k)
        self.grad_calls.append(counters.grad_calls)
        self.matmul_rounds.append(counters.matmul_rounds)
        self.comm_rounds.append(counters.comm_rounds)
        self.objective.append(objective)
        self.feas_residual.append(feas)
        if dist is not None:
            if self.dist_to_opt is None:
                self.dist_to_opt = []
            self.dist_to_opt.append(dist)

    def __len__(self):
        return len(self.iter)

    @property
    def columns(self) -> tuple[str, ...]:
        return TRACE_COLUMNS if self.dist_to_opt is not None else TRACE_COLUMNS[:-1]

    def relative_error(self) -> np.ndarray:
        if self.dist_to_opt is None:
            raise InvalidParam("trace has no reference distances")
        d = np.asarray(self.dist_to_opt)
        return d / d[0] if d[0] > 0 else d

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        cols = self.columns
        w.writerow(cols)
        for row in zip(*(getattr(self, c) for c in cols)):
            w.writerow([v if isinstance(v, int) else f"{v:.17g}" for v in row])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceTrace":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) not in (TRACE_COLUMNS, TRACE_COLUMNS[:-1]):
            raise InvalidParam(f"unexpected trace header {header}")
        trace = cls(dist_to_opt=[] if len(header) == len(TRACE_COLUMNS) else None)
        for row in reader:
            for name, val in zip(header, row):
                getattr(trace, name).append(int(val) if name in TRACE_COLUMNS[:4] else float(val))
        return trace


@dataclass
class SolveResult:
    x: list[np.ndarray]
    trace: ConvergenceTrace
    state: SolverState
    stop_reason: str
    elapsed: float

    @property
    def iterations(self) -> int:
        return self.state.iter

    @property
    def converged(self) -> bool:
        return self.stop_reason in ("tolerance", "target")


def solve(inst, p: SolverParams, net: SimNet | None = None, reference=None,
          x0: np.ndarray | None = None, dc: DerivedConstants | None = None,
          target_rel_error: float | None = None, check_invariants: bool = True) -> SolveResult:
    """Run the accelerated primal-dual iteration.

    Parameters
    ----------
    inst : ProblemInstance
    p : SolverParams
    net : SimNet, optional
        Defaults to a fresh network with the Laplacian gossip matrix.
    reference : array or list of blocks, optional
        Known solution ``x*``; enables the ``dist_to_opt`` column.
    x0 : array, optional
        Stacked starting point (zeros by default).
    dc : DerivedConstants, optional
        Computed from ``inst`` when omitted.
    target_rel_error : float, optional
        With a reference, also stop once ``||x - x*|| <= target * ||x0 - x*||``.
    check_invariants : bool
        Assert the block-sum-zero property of every ``y`` part each iteration.

    Returns
    -------
    SolveResult
        ``stop_reason`` is ``"tolerance"``, ``"target"`` or ``"max_iters"``.

    Raises
    ------
    NonFiniteIterate
        When an iterate stops being finite, which signals step sizes that are
        inconsistent with the instance constants.
    """
    start = time.perf_counter()
    if net is None:
        net = SimNet(inst.graph, laplacian_gossip(inst.graph), inst)
    if dc is None:
        dc = constants_for(inst)
    ops = LiftedOperators(inst, dc, net)
    x_star = None
    if reference is not None:
        x_star = np.concatenate(reference) if isinstance(reference, (list, tuple)) else np.asarray(reference)
    if target_rel_error is not None and x_star is None:
        raise InvalidParam("target_rel_error needs a reference solution")

    d, n, m = inst.d, inst.n, inst.m
    x_init = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
    u = LiftedVector(x_init, np.zeros((n, m)))
    state = SolverState(u=u, u_f=u.copy(), z=LiftedVector.zeros(d, n, m))
    trace = ConvergenceTrace()
    A_row, b_total = inst.A_row, inst.b_total

    def record(k):
        x = state.u.x
        feas = float(np.linalg.norm(A_row @ x - b_total))
        dist = float(np.linalg.norm(x - x_star)) if x_star is not None else None
        trace.record(k, net.counters, inst.objective(x), feas, dist)
        return feas, dist

    _, dist0 = record(0)
    # Divergence is reported through NonFiniteIterate, not numpy warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        stop_reason = _iterate(inst, p, ops, net, state, record, check_invariants,
                               target_rel_error, dist0)
    return SolveResult(
        x=inst.split(state.u.x.copy()),
        trace=trace,
        state=state,
        stop_reason=stop_reason,
        elapsed=time.perf_counter() - start,
    )


def _iterate(inst, p, ops, net, state, record, check_invariants, target_rel_error, dist0) -> str:
    shrink = 1.0 / (1.0 + p.eta * p.alpha)
    lift = 2.0 * p.tau / (2.0 - p.tau)
    peaks = {"u.y": 0.0, "u_f.y": 0.0, "z.y": 0.0}
    for k in range(1, p.max_iters + 1):
        u, u_f, z = state.u, state.u_f, state.z
        u_g = p.tau * u + (1.0 - p.tau) * u_f
        g = grad_G(u_g, inst, p, net, ops.wprime) - p.alpha * u_g
        u_half = (u - p.eta * (g + z)) * shrink
        z = z + p.theta * ops.k_chebyshev(u_half)
        u_next = (u - p.eta * (g + z)) * shrink
        u_f = u_g + lift * (u_next - u)
        state.u, state.u_f, state.z, state.iter = u_next, u_f, z, k

        if not (u_next.is_finite() and u_f.is_finite() and z.is_finite()):
            raise NonFiniteIterate(f"non-finite iterate at iteration {k}")
        if check_invariants:
            for name, y in (("u.y", u_next.y), ("u_f.y", u_f.y), ("z.y", z.y)):
                peaks[name] = max(peaks[name], float(np.linalg.norm(y)))
                check_block_sum(y, f"{name} at iteration {k}", scale=peaks[name])

        feas, dist = record(k)
        if target_rel_error is not None and dist <= target_rel_error * dist0:
            return "target"
        step = float(np.linalg.norm(u_next.x - u.x))
        if step <= p.tol_x * (1.0 + float(np.linalg.norm(u_next.x))) and feas <= p.tol_feas:
            return "tolerance"
    return "max_iters"
