"""Invariant suite behind the ``verify`` subcommand.

Every check compares the decentralized path against a dense computation or a
closed-form bound and yields one :class:`CheckResult`.  Faults can be planted
to confirm that the suite actually detects them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chebyshev import (ChebyshevSchedule, LiftedOperators, LiftedVector, eval_scaled_chebyshev,
                        mul_wprime)
from .errors import CoupledError, InvariantViolation, NonFiniteIterate
from .graphs import gossip_from_matrix, laplacian_gossip, make_graph
from .oracle import (dense_k_chebyshev, dense_lifted_operators, finite_diff_grad, kkt_oracle,
                     lifted_objective)
from .problems import gen_lower_bound_instance, gen_resource_allocation, gen_synthetic_regression
from .simnet import SimNet
from .solver import default_params, grad_G, rate_factor, rounds_per_iteration, solve
from .spectral import (CHEB_HIGH, CHEB_LOW, constants_for, verify_B_bounds,
                       verify_lifted_objective_bounds)

FAULTS = ("asymmetric_W", "theta_x10")
SPECTRUM_TOL = 1e-8
OPERATOR_TOL = 1e-8
GRAD_TOL = 1e-5
TARGET = 1e-6
# Measured tail rate exponent must reach this fraction of the guaranteed one.
RATE_SLACK = 0.95


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<34s} {self.detail}"


def default_instances(seed: int = 0):
    """Small instances covering a random design, a path worst case and a closed form."""
    rng = np.random.default_rng([seed, 99])
    ring = make_graph("ring", 5)
    return [
        ("synthetic ring5", gen_synthetic_regression(5, 2, 3, 1e-1, ring, seed=seed)),
        ("lowerbound path6", gen_lower_bound_instance(6, 2.0, 1.0, 2.0, 1.0, 5)[0]),
        ("resource star4", gen_resource_allocation(4, 2, rng.standard_normal(8), [1.0, -1.0],
                                                   make_graph("star", 4))),
    ]


def _gossip_check(inst, fault):
    W = laplacian_gossip(inst.graph).W.copy()
    if fault == "asymmetric_W":
        W[0, 1] += 0.1
        W[0, 0] -= 0.1
    try:
        gm = gossip_from_matrix(W)
    except CoupledError as exc:
        return None, CheckResult("gossip matrix", False, str(exc))
    return gm, CheckResult("gossip matrix", True, f"kappa_W={gm.kappa_W:.4g}")


def _interval_detail(lo, hi):
    return f"spectrum [{lo:.6f}, {hi:.6f}] vs [{CHEB_LOW:.6f}, {CHEB_HIGH:.6f}]"


def _spectrum_checks(inst, dc, gm, ops):
    out = []
    sub = gm.eigenvalues[gm.eigenvalues > 1e-9 * gm.lambda_max]
    vals = eval_scaled_chebyshev(sub, ChebyshevSchedule.for_gossip(gm))
    ok = vals.min() >= CHEB_LOW - SPECTRUM_TOL and vals.max() <= CHEB_HIGH + SPECTRUM_TOL
    out.append(CheckResult("W' spectrum on range W", bool(ok), _interval_detail(vals.min(), vals.max())))
    # Range of B' is spanned by eigenvectors of B'B with nonzero eigenvalue.
    gram = ops["B"].T @ ops["B"]
    eig, V = np.linalg.eigh(gram)
    keep = eig > 1e-9 * eig[-1]
    Vr = V[:, keep]
    pv = np.linalg.eigvalsh(Vr.T @ ops["P_B_of_BtB"] @ Vr)
    ok = pv.min() >= CHEB_LOW - SPECTRUM_TOL and pv.max() <= CHEB_HIGH + SPECTRUM_TOL
    out.append(CheckResult("P_B(B'B) spectrum on range B'", bool(ok), _interval_detail(pv.min(), pv.max())))
    return out


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _operator_checks(inst, dc, gm, ops, rng, probes):
    net = SimNet(inst.graph, gm, inst)
    lo = LiftedOperators(inst, dc, net)
    worst_w = worst_k = 0.0
    for _ in range(probes):
        Y = rng.standard_normal((inst.n, inst.m))
        worst_w = max(worst_w, _rel(mul_wprime(Y, net), ops["W_prime"] @ Y))
        u = LiftedVector(rng.standard_normal(inst.d), rng.standard_normal((inst.n, inst.m)))
        worst_k = max(worst_k, _rel(lo.k_chebyshev(u).flat(),
                                    dense_k_chebyshev(inst, dc, gm, u.flat(), ops)))
    return [
        CheckResult("mul_wprime vs dense", worst_w <= OPERATOR_TOL, f"max rel err {worst_w:.2e}"),
        CheckResult("k_chebyshev vs dense", worst_k <= OPERATOR_TOL, f"max rel err {worst_k:.2e}"),
    ]


def _gradient_check(inst, dc, gm, ops, rng, probes):
    p = default_params(inst.L_f, inst.mu_f, dc)
    net = SimNet(inst.graph, gm, inst)
    d, n, m = inst.d, inst.n, inst.m
    fn = lambda v: lifted_objective(inst, dc, gm, v, ops["W_prime"])  # noqa: E731
    worst = 0.0
    for _ in range(probes):
        u = rng.standard_normal(d + n * m)
        g = grad_G(LiftedVector.from_flat(u, d, n, m), inst, p, net).flat()
        fd = finite_diff_grad(fn, u, 1e-6 * (1.0 + np.linalg.norm(u)))
        worst = max(worst, _rel(g, fd))
    return CheckResult("grad_G vs finite differences", worst <= GRAD_TOL, f"max rel err {worst:.2e}")


def _gossip_round_check(inst, gm, rng):
    net = SimNet(inst.graph, gm)
    Y = rng.standard_normal((inst.n, 3))
    net.put("v", list(Y))
    net.gossip_round("v", "w")
    err = _rel(np.array(net.get("w")), gm.W @ Y)
    return CheckResult("gossip_round vs dense W", err <= 1e-12, f"rel err {err:.2e}")


def tail_rate(rel_err: np.ndarray) -> float:
    """Per-iteration contraction of the squared error fitted over the second half."""
    e = np.asarray(rel_err, dtype=float)
    k = np.arange(e.size // 2, e.size)
    k = k[e[k] > 0]
    if k.size < 2:
        return 0.0
    return float(np.exp(np.polyfit(k, 2.0 * np.log(e[k]), 1)[0]))


def _solver_checks(inst, dc, gm, fault, max_iters):
    ref = kkt_oracle(inst)
    p = default_params(inst.L_f, inst.mu_f, dc, max_iters=max_iters)
    if fault == "theta_x10":
        p = p.with_(theta=10.0 * p.theta)
    net = SimNet(inst.graph, gm, inst)
    try:
        res = solve(inst, p, net=net, reference=ref.x_star, dc=dc, target_rel_error=TARGET)
    except (NonFiniteIterate, InvariantViolation) as exc:
        return [CheckResult("solver run", False, f"{type(exc).__name__}: {exc}")]
    out = []
    err = float(res.trace.relative_error()[-1])
    out.append(CheckResult("solver reaches target", res.converged,
                           f"rel err {err:.2e} after {res.iterations} iterations"))
    per = rounds_per_iteration(LiftedOperators(inst, dc, net))
    expected = tuple(res.iterations * c for c in per)
    out.append(CheckResult("counter audit", net.counters.snapshot() == expected,
                           f"{net.counters.snapshot()} vs {expected}"))
    feas = res.trace.feas_residual[-1]
    bound = 1e-6 * (1.0 + float(np.linalg.norm(inst.b_stacked)))
    out.append(CheckResult("final feasibility", bool(feas <= bound), f"{feas:.2e} <= {bound:.2e}"))
    measured, guaranteed = tail_rate(res.trace.relative_error()), rate_factor(dc)
    ok = res.converged and (measured == 0.0 or math.log(measured) <= RATE_SLACK * math.log(guaranteed))
    out.append(CheckResult("linear rate vs guarantee", bool(ok),
                           f"squared contraction {measured:.4f} vs {guaranteed:.4f}"))
    return out


def run_suite(fault: str | None = None, seed: int = 0, probes: int = 10,
              max_iters: int = 5000) -> list[CheckResult]:
    """Run every check on :func:`default_instances`; names are prefixed by instance."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    rng = np.random.default_rng(seed)
    results = []
    for label, inst in default_instances(seed):
        gm, gcheck = _gossip_check(inst, fault)
        checks = [gcheck]
        if gm is not None:
            dc = constants_for(inst)
            ops = dense_lifted_operators(inst, dc, gm)
            checks.append(_gossip_round_check(inst, gm, rng))
            checks.append(verify_lifted_objective_bounds(inst, dc, gm))
            checks.append(verify_B_bounds(inst, dc, gm))
            checks.extend(_spectrum_checks(inst, dc, gm, ops))
            checks.extend(_operator_checks(inst, dc, gm, ops, rng, probes))
            checks.append(_gradient_check(inst, dc, gm, ops, rng, max(1, probes // 2)))
            checks.extend(_solver_checks(inst, dc, gm, fault, max_iters))
        for c in checks:
            if not isinstance(c, CheckResult):
                c = CheckResult(c.name, c.passed,
                                f"[{c.observed_min:.6g}, {c.observed_max:.6g}] within "
                                f"[{c.lower_bound:.6g}, {c.upper_bound:.6g}]")
            results.append(CheckResult(f"{label}: {c.name}", c.passed, c.detail))
    return results
