"""Graph topologies and doubly stochastic mixing matrices."""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DiagnosticError, ValidationError

ER_MAX_RETRIES = 1000


@dataclass(frozen=True)
class Topology:
    M: int
    edges: frozenset = field(repr=False)

    def __post_init__(self):
        for i, j in self.edges:
            if i == j:
                raise ValidationError(f"self-loop at node {i}")
            if not (0 <= i < self.M and 0 <= j < self.M):
                raise ValidationError(f"edge ({i}, {j}) out of range for M={self.M}")

    @classmethod
    def from_edges(cls, M, pairs):
        return cls(M=int(M), edges=frozenset((min(i, j), max(i, j)) for i, j in pairs))

    @property
    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.M, self.M), dtype=bool)
        for i, j in self.edges:
            A[i, j] = A[j, i] = True
        return A

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def neighbors(self, i):
        return sorted({b if a == i else a for a, b in self.edges if i in (a, b)})

    def is_connected(self) -> bool:
        if self.M <= 1:
            return True
        A = self.adjacency
        seen = np.zeros(self.M, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in np.flatnonzero(A[i] & ~seen):
                seen[j] = True
                queue.append(j)
        return bool(seen.all())

    def to_edgelist(self) -> str:
        lines = [str(self.M)] + [f"{i} {j}" for i, j in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text):
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or len(rows[0]) != 1:
            raise ValidationError("edge list must start with the node count on its own line")
        try:
            M = int(rows[0][0])
            pairs = [(int(a), int(b)) for a, b in rows[1:]]
        except ValueError as exc:
            raise ValidationError(f"malformed edge list: {exc}") from exc
        return cls.from_edges(M, pairs)


@dataclass(frozen=True)
class MixingMatrix:
    W: np.ndarray = field(repr=False)
    beta: float

    @property
    def M(self) -> int:
        return self.W.shape[0]

    @property
    def lazy(self) -> np.ndarray:
        """(I + W) / 2, the combination used by the gradient-tracking updates."""
        return 0.5 * (np.eye(self.M) + self.W)


def erdos_renyi(M, p, seed) -> Topology:
    """G(M, p) conditioned on connectivity by whole-graph resampling.

    Each retry draws from a fresh stream derived from ``(seed, attempt)``.
    """
    if M < 1:
        raise ValidationError(f"need M >= 1, got {M}")
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"p must lie in [0, 1], got {p}")
    if M == 1:
        return Topology(M=1, edges=frozenset())
    if p == 0:
        raise ValidationError("p = 0 cannot produce a connected graph with M > 1")
    iu, ju = np.triu_indices(M, k=1)
    for attempt in range(ER_MAX_RETRIES):
        rng = np.random.default_rng([int(seed), attempt])
        keep = rng.random(iu.size) < p
        topo = Topology.from_edges(M, zip(iu[keep].tolist(), ju[keep].tolist()))
        if topo.is_connected():
            return topo
    raise DiagnosticError(
        f"no connected G({M}, {p}) after {ER_MAX_RETRIES} draws; increase p"
    )


def cycle(M) -> Topology:
    if M < 3:
        raise ValidationError(f"cycle needs M >= 3, got {M}")
    return Topology.from_edges(M, [(i, (i + 1) % M) for i in range(M)])


def complete(M) -> Topology:
    if M < 1:
        raise ValidationError(f"need M >= 1, got {M}")
    return Topology.from_edges(M, [(i, j) for i in range(M) for j in range(i + 1, M)])


def star(M) -> Topology:
    """Node 0 is the hub."""
    if M < 1:
        raise ValidationError(f"need M >= 1, got {M}")
    return Topology.from_edges(M, [(0, j) for j in range(1, M)])


def path(M) -> Topology:
    if M < 1:
        raise ValidationError(f"need M >= 1, got {M}")
    return Topology.from_edges(M, [(i, i + 1) for i in range(M - 1)])


def beta_of(W) -> float:
    """Second-largest eigenvalue magnitude, max(|lambda_2|, |lambda_M|)."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValidationError(f"W must be square, got shape {W.shape}")
    if not np.allclose(W, W.T, rtol=0, atol=1e-12):
        raise ValidationError("W must be symmetric")
    if W.shape[0] == 1:
        return 0.0
    w = np.sort(np.linalg.eigvalsh(0.5 * (W + W.T)))[::-1]
    return float(min(max(abs(w[1]), abs(w[-1])), 1.0))


def metropolis_weights(topology: Topology) -> MixingMatrix:
    """Metropolis-Hastings weights w_ij = 1 / (1 + max(deg_i, deg_j))."""
    if not topology.is_connected():
        raise ValidationError("metropolis_weights requires a connected topology")
    M = topology.M
    deg = topology.degrees
    W = np.zeros((M, M))
    for i, j in topology.edges:
        W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    W[np.diag_indices(M)] = 1.0 - W.sum(axis=1)
    return MixingMatrix(W=W, beta=beta_of(W))


def build_topology(kind, M, p=0.5, seed=0) -> Topology:
    kind = kind.lower().replace("-", "_")
    if kind in ("erdos_renyi", "er"):
        return erdos_renyi(M, p, seed)
    if kind == "cycle":
        return cycle(M)
    if kind == "complete":
        return complete(M)
    if kind == "star":
        return star(M)
    if kind == "path":
        return path(M)
    raise ValidationError(f"unknown topology kind {kind!r}")
