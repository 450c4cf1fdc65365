"""Command-line harness: ``generate``, ``solve``, ``verify`` and ``bench``.

A run is described by a JSON config::

    {
      "instance": "inst.json"  or  {"kind": "synthetic", "params": {...}, "graph": {...}},
      "solver": {"use_default_params": true, "tau": ..., "max_iters": 20000, ...},
      "seed": 0,
      "output": "trace.csv",
      "reference": "kkt"
    }

Exit codes: 0 on success, 1 when verification fails or the iteration
diverges, 2 on usage, configuration or I/O errors.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CoupledError, NonFiniteIterate
from .graphs import laplacian_gossip, make_graph
from .libsvm import read_libsvm
from .oracle import kkt_oracle
from .problems import (ProblemInstance, gen_conditioned_quadratic, gen_lower_bound_instance,
                       gen_resource_allocation, gen_synthetic_regression, gen_vfl)
from .simnet import SimNet
from .solver import default_params, exact_params, solve
from .spectral import constants_for

log = logging.getLogger("coupled_decent")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
GENERATOR_KINDS = ("synthetic", "resource", "vfl", "lowerbound", "conditioned")
PARAM_OVERRIDES = ("tau", "eta", "theta", "alpha")
LIMIT_KEYS = ("max_iters", "tol_x", "tol_feas")
SWEEP_KEYS = ("kappa_f", "kappa_A", "kappa_W", "path_n")
BENCH_COLUMNS = ("swept", "value", "kappa_f", "kappa_A", "kappa_W", "iters", "grad_calls",
                 "matmul_rounds", "comm_rounds")
THREADS_ENV = "COUPLED_DECENT_THREADS"


class UsageError(Exception):
    """Bad configuration or unreadable input; maps to exit code 2."""


@dataclass
class RunConfig:
    instance: str | dict | None = None
    solver: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None
    reference: str = "kkt"
    sweep: dict | None = None
    base: dict = field(default_factory=dict)
    target: float = 1e-6
    fault: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        if cfg.reference not in ("kkt", "none"):
            raise UsageError(f"reference must be 'kkt' or 'none', got {cfg.reference!r}")
        if cfg.instance is not None and not isinstance(cfg.instance, (str, dict)):
            raise UsageError("instance must be a file path or a generator spec")
        bad = set(cfg.solver) - {"use_default_params", *PARAM_OVERRIDES, *LIMIT_KEYS}
        if bad:
            raise UsageError(f"unknown solver keys: {sorted(bad)}")
        return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return RunConfig.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    except TypeError as exc:
        raise UsageError(f"bad config {path}: {exc}") from exc


def _graph_from_spec(spec: dict | None, n: int, seed: int, default: str):
    spec = dict(spec or {})
    topology = spec.pop("topology", default)
    edge_prob = spec.pop("edge_prob", 0.3 if topology == "erdos_renyi" else None)
    gseed = spec.pop("seed", seed)
    if spec:
        raise UsageError(f"unknown graph keys: {sorted(spec)}")
    return make_graph(topology, n, edge_prob, seed=gseed)


def build_instance(spec: dict, seed: int) -> ProblemInstance:
    """Instantiate a generator spec ``{kind, params, graph}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    params = dict(spec.pop("params", {}))
    graph_spec = spec.pop("graph", None)
    if spec:
        raise UsageError(f"unknown instance keys: {sorted(spec)}")
    if kind not in GENERATOR_KINDS:
        raise UsageError(f"instance kind must be one of {GENERATOR_KINDS}, got {kind!r}")
    try:
        if kind == "synthetic":
            n = int(params.pop("n"))
            g = _graph_from_spec(graph_spec, n, seed, "erdos_renyi")
            return gen_synthetic_regression(n, int(params.pop("d_i")), int(params.pop("m")),
                                            float(params.pop("theta")), g, seed=seed, **params)
        if kind == "resource":
            n, d = int(params.pop("n")), int(params.pop("d"))
            centers = params.pop("centers", None)
            if centers is None:
                centers = np.random.default_rng(seed).standard_normal((n, d))
            g = _graph_from_spec(graph_spec, n, seed, "ring")
            return gen_resource_allocation(n, d, centers, params.pop("budget"), g, **params)
        if kind == "vfl":
            examples = read_libsvm(params.pop("libsvm"), max_rows=params.pop("rows", None))
            split = params.pop("column_split", None)
            if split is None:
                parts = int(params.pop("n"))
                split = [len(c) for c in np.array_split(np.arange(examples.num_features), parts)]
            g = _graph_from_spec(graph_spec, len(split), seed, "ring")
            return gen_vfl(examples, float(params.pop("lam")), g, split, **params)
        if kind == "lowerbound":
            if graph_spec is not None:
                raise UsageError("the lowerbound instance always lives on a path graph")
            return gen_lower_bound_instance(
                int(params.pop("n")), float(params.pop("L_f")), float(params.pop("mu_f")),
                float(params.pop("L_A")), float(params.pop("mu_A")), int(params.pop("dim")),
                **params)[0]
        n = int(params.pop("n"))
        g = _graph_from_spec(graph_spec, n, seed, "ring")
        return gen_conditioned_quadratic(g, int(params.pop("d")), int(params.pop("m")),
                                         float(params.pop("kappa_f")), seed=seed, **params)
    except KeyError as exc:
        raise UsageError(f"{kind} instance is missing parameter {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise UsageError(f"bad {kind} parameters: {exc}") from exc


def resolve_instance(cfg: RunConfig) -> ProblemInstance:
    if cfg.instance is None:
        raise UsageError("config has no instance")
    if isinstance(cfg.instance, str):
        try:
            return ProblemInstance.load(cfg.instance)
        except OSError as exc:
            raise UsageError(f"cannot read instance {cfg.instance}: {exc.strerror}") from exc
        except (json.JSONDecodeError, KeyError) as exc:
            raise UsageError(f"malformed instance file {cfg.instance}: {exc}") from exc
    return build_instance(cfg.instance, cfg.seed)


def solver_params(inst: ProblemInstance, solver_cfg: dict, dc=None):
    dc = dc or constants_for(inst)
    limits = {k: solver_cfg[k] for k in LIMIT_KEYS if k in solver_cfg}
    if solver_cfg.get("use_default_params", True):
        p = default_params(inst.L_f, inst.mu_f, dc, **limits)
    else:
        p = exact_params(dc, **limits)
    overrides = {k: float(solver_cfg[k]) for k in PARAM_OVERRIDES if k in solver_cfg}
    return p.with_(**overrides) if overrides else p


def spectral_summary(inst: ProblemInstance) -> str:
    dc = constants_for(inst)
    kw = laplacian_gossip(inst.graph).kappa_W
    return (f"n={inst.n} d={inst.d} m={inst.m} L_f={inst.L_f:.6g} mu_f={inst.mu_f:.6g} "
            f"kappa_f={inst.kappa_f:.6g} L_A={dc.L_A:.6g} mu_A={dc.mu_A:.6g} "
            f"kappa_A={dc.kappa_A:.6g} kappa_W={kw:.6g}")


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from exc


def cmd_generate(cfg: RunConfig, out: str | None, say) -> int:
    if not isinstance(cfg.instance, dict):
        raise UsageError("generate needs an inline generator spec under 'instance'")
    inst = build_instance(cfg.instance, cfg.seed)
    if out is None:
        raise UsageError("generate needs --out")
    _write_text(out, json.dumps(inst.to_dict()))
    say(spectral_summary(inst))
    return EXIT_OK


def cmd_solve(cfg: RunConfig, out: str | None, say) -> int:
    inst = resolve_instance(cfg)
    dc = constants_for(inst)
    p = solver_params(inst, cfg.solver, dc)
    reference = None
    if cfg.reference == "kkt":
        if not inst.is_quadratic:
            raise UsageError("the kkt reference needs quadratic objectives")
        reference = kkt_oracle(inst).x_star
    net = SimNet(inst.graph, laplacian_gossip(inst.graph), inst)
    try:
        res = solve(inst, p, net=net, reference=reference, dc=dc)
    except NonFiniteIterate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    path = out or cfg.output
    if path is not None:
        _write_text(path, res.trace.to_csv())
    t = res.trace
    dist = f"{t.dist_to_opt[-1]:.6e}" if t.dist_to_opt is not None else "n/a"
    say(f"stop={res.stop_reason} iters={res.iterations} grad_calls={t.grad_calls[-1]} "
        f"matmul_rounds={t.matmul_rounds[-1]} comm_rounds={t.comm_rounds[-1]} "
        f"feas_residual={t.feas_residual[-1]:.6e} dist_to_opt={dist}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: str | None, say) -> int:
    from .verify import FAULTS, run_suite

    if cfg.fault is not None and cfg.fault not in FAULTS:
        raise UsageError(f"fault must be one of {FAULTS}")
    results = run_suite(fault=cfg.fault, seed=cfg.seed)
    for r in results:
        say(r.line())
    failed = sum(not r.passed for r in results)
    say(f"{len(results) - failed}/{len(results)} checks passed")
    if out is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("check", "passed", "detail"))
        w.writerows((r.name, int(r.passed), r.detail) for r in results)
        _write_text(out, buf.getvalue())
    return EXIT_OK if failed == 0 else EXIT_FAIL


def path_length_for_kappa_W(target: float, n_max: int = 2000) -> int:
    """Shortest path graph whose Laplacian condition number reaches ``target``.

    The path Laplacian has ``kappa_W = cot^2(pi / (2n))``.
    """
    if not target >= 1:
        raise UsageError(f"kappa_W values must be >= 1, got {target}")
    for n in range(2, n_max + 1):
        if 1.0 / np.tan(np.pi / (2 * n)) ** 2 >= target * (1 - 1e-12):
            return n
    raise UsageError(f"kappa_W={target} needs a path longer than {n_max} nodes")


def sweep_instance(key: str, value, base: dict, seed: int) -> ProblemInstance:
    """Instance for one bench point; the other condition numbers stay at ``base``."""
    d, m = int(base.get("d", 4)), int(base.get("m", 3))
    n = int(base.get("n", 6))
    kappa_f = float(base.get("kappa_f", 10.0))
    kappa_A = float(base.get("kappa_A", 4.0))
    topology = base.get("topology", "ring")
    if key == "kappa_f":
        kappa_f = float(value)
    elif key == "kappa_A":
        kappa_A = float(value)
    elif key == "kappa_W":
        n, topology = path_length_for_kappa_W(float(value)), "path"
    else:
        n, topology = int(value), "path"
    g = make_graph(topology, n)
    return gen_conditioned_quadratic(g, d, m, kappa_f, seed=seed, constraint="diagonal",
                                     kappa_A=kappa_A)


def run_bench(cfg: RunConfig) -> list[tuple]:
    if not cfg.sweep or len(cfg.sweep) != 1:
        raise UsageError(f"bench needs 'sweep' with exactly one of {SWEEP_KEYS}")
    (key, values), = cfg.sweep.items()
    if key not in SWEEP_KEYS:
        raise UsageError(f"sweep key must be one of {SWEEP_KEYS}, got {key!r}")
    if not isinstance(values, list) or not values:
        raise UsageError("sweep values must be a non-empty list")
    rows = []
    for value in values:
        inst = sweep_instance(key, value, cfg.base, cfg.seed)
        dc = constants_for(inst)
        gm = laplacian_gossip(inst.graph)
        net = SimNet(inst.graph, gm, inst)
        p = solver_params(inst, {"max_iters": 200000, **cfg.solver}, dc)
        res = solve(inst, p, net=net, reference=kkt_oracle(inst).x_star, dc=dc,
                    target_rel_error=cfg.target)
        t = res.trace
        rows.append((key, value, inst.kappa_f, dc.kappa_A, gm.kappa_W, res.iterations,
                     t.grad_calls[-1], t.matmul_rounds[-1], t.comm_rounds[-1]))
    return rows


def bench_csv(rows: list[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for row in rows:
        w.writerow([v if isinstance(v, (int, str)) else f"{v:.17g}" for v in row])
    return buf.getvalue()


def cmd_bench(cfg: RunConfig, out: str | None, say) -> int:
    try:
        text = bench_csv(run_bench(cfg))
    except NonFiniteIterate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if out or cfg.output:
        _write_text(out or cfg.output, text)
    say(text.rstrip("\n"))
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "verify": cmd_verify, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coupled-decent", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output path (instance JSON or CSV)")
        sp.add_argument("--quiet", action="store_true", help="suppress stdout summaries")
        if name == "verify":
            sp.add_argument("--fault", help="plant a fault: asymmetric_W or theta_x10")
    return parser


def thread_limit() -> int | None:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        value = int(raw)
    except ValueError as exc:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if value < 0:
        raise UsageError(f"{THREADS_ENV} must be >= 0")
    return value or None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    say = (lambda s: None) if args.quiet else print
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if getattr(args, "fault", None):
            cfg.fault = args.fault
        limit = thread_limit()
        ctx = contextlib.nullcontext()
        if limit is not None:
            from threadpoolctl import threadpool_limits
            ctx = threadpool_limits(limits=limit)
        with ctx:
            return COMMANDS[args.command](cfg, args.out, say)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CoupledError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
