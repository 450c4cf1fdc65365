"""Communication graphs and gossip matrices.

Nodes are indexed from 0.  Edges are stored as sorted ``(i, j)`` pairs with
``i < j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidParam, NotConnected, UnconnectableGraph

TOPOLOGIES = ("path", "ring", "star", "complete", "erdos_renyi")
TOL_PSD = 1e-9
MAX_ER_RETRIES = 1000


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParam(f"node count must be positive, got {self.n}")
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidParam(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise InvalidParam(f"edge ({i}, {j}) out of range for n={self.n}")
            e = (min(i, j), max(i, j))
            if e in normalized:
                raise InvalidParam(f"duplicate edge {e}")
            normalized.add(e)
        object.__setattr__(self, "edges", tuple(sorted(normalized)))

    @cached_property
    def connected(self) -> bool:
        if self.n == 1:
            return True
        if not self.edges:
            return False
        rows, cols = zip(*self.edges)
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp == 1

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        """Ascending neighbor lists, one per node."""
        nbrs = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(v)) for v in nbrs)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n))
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = 1.0
        return adj

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, data: dict) -> "Graph":
        return cls(int(data["n"]), tuple(tuple(e) for e in data["edges"]))


def _erdos_renyi_edges(n, p, rng):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return tuple(zip(iu[keep].tolist(), ju[keep].tolist()))


def make_graph(topology: str, n: int, edge_prob: float | None = None, seed: int = 0) -> Graph:
    """Build a connected communication graph.

    Parameters
    ----------
    topology : {"path", "ring", "star", "complete", "erdos_renyi"}
    n : int
        Number of nodes, at least 2.
    edge_prob : float, optional
        Edge probability in (0, 1]; required for ``erdos_renyi`` only.
    seed : int
        Seed for the Erdős–Rényi sampler.  Attempt ``t`` draws from
        ``default_rng([seed, t])`` so the retry chain is deterministic.

    Returns
    -------
    Graph
    """
    if topology not in TOPOLOGIES:
        raise InvalidParam(f"unknown topology {topology!r}")
    if n < 2:
        raise InvalidParam(f"need n >= 2, got {n}")
    if (edge_prob is not None) != (topology == "erdos_renyi"):
        raise InvalidParam("edge_prob is required for erdos_renyi and only for it")

    if topology == "path":
        return Graph(n, tuple((i, i + 1) for i in range(n - 1)))
    if topology == "ring":
        edges = [(i, i + 1) for i in range(n - 1)]
        if n > 2:
            edges.append((0, n - 1))
        return Graph(n, tuple(edges))
    if topology == "star":
        return Graph(n, tuple((0, i) for i in range(1, n)))
    if topology == "complete":
        return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))

    if not 0.0 < edge_prob <= 1.0:
        raise InvalidParam(f"edge_prob must lie in (0, 1], got {edge_prob}")
    for attempt in range(MAX_ER_RETRIES):
        rng = np.random.default_rng([seed, attempt])
        g = Graph(n, _erdos_renyi_edges(n, edge_prob, rng))
        if g.connected:
            return g
    raise UnconnectableGraph(
        f"no connected G({n}, {edge_prob}) sample in {MAX_ER_RETRIES} attempts (seed={seed})"
    )


@dataclass(frozen=True)
class GossipMatrix:
    """Symmetric PSD matrix supported on the graph, with tight spectral constants.

    ``L_W`` and ``mu_W`` bound the *squared* extreme eigenvalues, so
    ``kappa_W = lambda_max / lambda_min_plus = sqrt(L_W / mu_W)``.
    """

    W: np.ndarray
    lambda_max: float
    lambda_min_plus: float
    L_W: float
    mu_W: float
    kappa_W: float
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.W.shape[0]


def gossip_from_matrix(W: np.ndarray, tol_psd: float = TOL_PSD) -> GossipMatrix:
    """Certify an arbitrary symmetric PSD matrix as a gossip matrix.

    Only symmetry, positive semidefiniteness and a one-dimensional kernel are
    checked here; the sparsity pattern is checked against a graph by the
    network layer.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise InvalidParam(f"gossip matrix must be square, got shape {W.shape}")
    if not np.allclose(W, W.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(W).max())):
        raise InvalidParam("gossip matrix is not symmetric")
    if np.linalg.norm(W.sum(axis=1)) > 1e-12 * max(np.linalg.norm(W), 1e-300):
        raise InvalidParam("consensus vector is not in the kernel of the gossip matrix")
    eig = np.linalg.eigvalsh(W)
    lam_max = float(eig[-1])
    cutoff = tol_psd * max(lam_max, 1e-300)
    if eig[0] < -cutoff:
        raise InvalidParam(f"gossip matrix has negative eigenvalue {eig[0]:.3e}")
    positive = eig[eig > cutoff]
    if eig.size - positive.size != 1:
        raise NotConnected(
            f"kernel dimension {eig.size - positive.size} != 1 (tol {cutoff:.1e})"
        )
    lam_min = float(positive[0])
    return GossipMatrix(
        W=W,
        lambda_max=lam_max,
        lambda_min_plus=lam_min,
        L_W=lam_max**2,
        mu_W=lam_min**2,
        kappa_W=lam_max / lam_min,
        eigenvalues=eig,
    )


def laplacian_gossip(g: Graph) -> GossipMatrix:
    """Unnormalized Laplacian ``D - Adj`` of a connected graph."""
    if not g.connected:
        raise NotConnected(f"graph with n={g.n} is not connected")
    adj = g.adjacency()
    W = np.diag(adj.sum(axis=1)) - adj
    return gossip_from_matrix(W)

