"""Synchronous simulated network.

Three kinds of rounds are counted, one counter each:

* communication round: every node replaces a vector block by the
  ``W``-weighted combination of its own and its neighbors' blocks;
* matmul round: every node applies its ``A_i`` (or ``A_i'``) locally;
* gradient round: every node evaluates its ``grad f_i`` locally.

Node ``i``'s shared blocks are rows of ``(n, k)`` arrays.  The array-level
methods (``gossip``, ``apply_A``, ``apply_At``, ``gradient``) are the hot
path used by the solver; the named-block methods operate on the per-node
store one node at a time and go through ``read`` for every neighbor access.
"""
from __future__ import annotations

import logging
from dataclasses import astuple, dataclass

import numpy as np

from .errors import InvalidParam, LocalityViolation, ShapeMismatch
from .graphs import Graph, GossipMatrix

log = logging.getLogger(__name__)

LOCALITY_MODES = ("enforce", "audit_only")


@dataclass
class Counters:
    grad_calls: int = 0
    matmul_rounds: int = 0
    comm_rounds: int = 0

    def snapshot(self) -> tuple[int, int, int]:
        return astuple(self)


class SimNet:
    """Per-node storage plus locality-checked round primitives."""

    def __init__(self, graph: Graph, gossip: GossipMatrix, instance=None,
                 locality: str = "enforce"):
        if locality not in LOCALITY_MODES:
            raise InvalidParam(f"unknown locality mode {locality!r}")
        if gossip.n != graph.n:
            raise ShapeMismatch(f"gossip matrix is {gossip.n}x{gossip.n}, graph has {graph.n} nodes")
        if instance is not None and instance.graph != graph:
            raise InvalidParam("instance lives on a different graph")
        self.graph = graph
        self.gossip_matrix = gossip
        self.instance = instance
        self.locality = locality
        self.counters = Counters()
        self.violations: list[tuple[int, int]] = []
        self.node_store: list[dict[str, np.ndarray]] = [{} for _ in range(graph.n)]

        pattern = graph.adjacency().astype(bool) | np.eye(graph.n, dtype=bool)
        off = np.argwhere((gossip.W != 0) & ~pattern)
        if off.size:
            pairs = [tuple(map(int, p)) for p in off]
            if locality == "enforce":
                raise LocalityViolation(
                    f"gossip matrix couples non-neighbors, e.g. nodes {pairs[0]}"
                )
            self.violations.extend(pairs)
            log.warning("gossip matrix couples %d non-neighbor pairs", len(pairs))
        self._W = np.array(gossip.W, dtype=float)
        self._row_support = [tuple(int(j) for j in np.flatnonzero(self._W[i])) for i in range(graph.n)]

        if instance is not None:
            self._A = instance.A_blockdiag()
            self._At = np.ascontiguousarray(self._A.T)
            self._quadratic = instance.is_quadratic
            if self._quadratic:
                self._Q = instance.Q_blockdiag()
                self._c = instance.c_stacked()

    @property
    def n(self) -> int:
        return self.graph.n

    def reset_counters(self) -> None:
        self.counters = Counters()

    # -- array-level rounds ----------------------------------------------------

    def gossip(self, Y: np.ndarray) -> np.ndarray:
        """One communication round: returns ``W @ Y`` for an ``(n, k)`` array."""
        if Y.ndim != 2 or Y.shape[0] != self.n:
            raise ShapeMismatch(f"expected ({self.n}, k) blocks, got shape {Y.shape}")
        self.counters.comm_rounds += 1
        return self._W @ Y

    def apply_A(self, x: np.ndarray) -> np.ndarray:
        """One matmul round: stacked ``A_i x_i`` as an ``(n, m)`` array."""
        inst = self._require_instance()
        if x.shape != (inst.d,):
            raise ShapeMismatch(f"expected stacked x of size {inst.d}, got shape {x.shape}")
        self.counters.matmul_rounds += 1
        return (self._A @ x).reshape(inst.n, inst.m)

    def apply_At(self, Y: np.ndarray) -> np.ndarray:
        """One matmul round: stacked ``A_i' y_i``."""
        inst = self._require_instance()
        if Y.shape != (inst.n, inst.m):
            raise ShapeMismatch(f"expected ({inst.n}, {inst.m}) blocks, got shape {Y.shape}")
        self.counters.matmul_rounds += 1
        return self._At @ Y.reshape(-1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """One gradient round: stacked ``grad f_i(x_i)``."""
        inst = self._require_instance()
        if x.shape != (inst.d,):
            raise ShapeMismatch(f"expected stacked x of size {inst.d}, got shape {x.shape}")
        self.counters.grad_calls += 1
        if self._quadratic:
            return self._Q @ x + self._c
        return inst.gradient(x)

    def _require_instance(self):
        if self.instance is None:
            raise InvalidParam("this network has no problem instance attached")
        return self.instance

    # -- per-node store ----------------------------------------------------------

    def put(self, name: str, blocks) -> None:
        if len(blocks) != self.n:
            raise ShapeMismatch(f"expected {self.n} blocks for {name!r}, got {len(blocks)}")
        for store, block in zip(self.node_store, blocks):
            store[name] = np.array(block, dtype=float).reshape(-1)

    def get(self, name: str) -> list[np.ndarray]:
        return [store[name] for store in self.node_store]

    def read(self, i: int, j: int, name: str) -> np.ndarray:
        """Node ``i`` reads block ``name`` of node ``j``."""
        if i != j and j not in self.graph.neighbors[i]:
            if self.locality == "enforce":
                raise LocalityViolation(f"node {i} read {name!r} from non-neighbor {j}")
            self.violations.append((i, j))
        return self.node_store[j][name]

    def gossip_round(self, name_in: str, name_out: str) -> None:
        widths = {store[name_in].size for store in self.node_store}
        if len(widths) != 1:
            raise ShapeMismatch(f"block {name_in!r} has unequal widths {sorted(widths)}")
        width = widths.pop()
        # Compute every output before writing any: the round is a barrier.
        outputs = []
        for i in range(self.n):
            acc = np.zeros(width)
            for j in self._row_support[i]:
                acc += self._W[i, j] * self.read(i, j, name_in)
            outputs.append(acc)
        for store, out in zip(self.node_store, outputs):
            store[name_out] = out
        self.counters.comm_rounds += 1

    def matmul_round(self, direction: str, name_in: str, name_out: str) -> None:
        inst = self._require_instance()
        if direction not in ("A", "A_transpose"):
            raise InvalidParam(f"unknown direction {direction!r}")
        outputs = []
        for i, store in enumerate(self.node_store):
            a = inst.A[i]
            v = store[name_in]
            if direction == "A":
                if v.size != a.shape[1]:
                    raise ShapeMismatch(f"node {i}: block of size {v.size}, A_i has {a.shape[1]} columns")
                outputs.append(a @ v)
            else:
                if v.size != a.shape[0]:
                    raise ShapeMismatch(f"node {i}: block of size {v.size}, A_i has {a.shape[0]} rows")
                outputs.append(a.T @ v)
        for store, out in zip(self.node_store, outputs):
            store[name_out] = out
        self.counters.matmul_rounds += 1

    def grad_round(self, name_in: str, name_out: str) -> None:
        inst = self._require_instance()
        outputs = []
        for i, store in enumerate(self.node_store):
            v = store[name_in]
            if v.size != inst.dims[i]:
                raise ShapeMismatch(f"node {i}: block of size {v.size}, expected {inst.dims[i]}")
            outputs.append(inst.objectives[i].grad(v))
        for store, out in zip(self.node_store, outputs):
            store[name_out] = out
        self.counters.grad_calls += 1
