"""Distributed and centralized PCA iterations.

Node-indexed quantities are stacked along axis 0: ``X[i]`` is the ``d x K``
estimate held by node ``i``.  One call to a ``*_step`` function is one
synchronous round: every node reads its neighbours' round-t values and
writes round-t+1 values.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DiagnosticError, ValidationError
from .network import MixingMatrix
from .spectra import random_orthonormal

NORM_FLOOR = 1e-30

ACCOUNTING_MODES = ("paper", "payload")


@dataclass(frozen=True)
class NodeState:
    X: np.ndarray
    S: Optional[np.ndarray] = None


@dataclass(frozen=True)
class NetworkState:
    """Full state of a distributed run.

    ``H`` caches the local pseudo-gradients at ``X`` so the tracker update
    does not recompute them; it is ``None`` for methods without a tracker.
    """

    X: np.ndarray
    S: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    iteration: int = 0
    comm_units: int = 0

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def nodes(self):
        S = self.S if self.S is not None else [None] * self.M
        return [NodeState(X=x, S=s) for x, s in zip(self.X, S)]

    def flipped(self) -> "NetworkState":
        """The mirrored state -X, -S (the dynamics are odd in X)."""
        neg = lambda a: None if a is None else -a  # noqa: E731
        return replace(self, X=-self.X, S=neg(self.S), H=neg(self.H))


@dataclass(frozen=True)
class AlgoConfig:
    alpha: float
    K: int
    t_consensus: int = 50
    max_iters: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")
        if self.K < 1:
            raise ValidationError(f"K must be >= 1, got {self.K}")
        if self.t_consensus < 1:
            raise ValidationError(f"t_consensus must be >= 1, got {self.t_consensus}")


def covariance_stack(shards) -> np.ndarray:
    """Local covariances as an ``(M, d, d)`` array; arrays pass through."""
    if isinstance(shards, np.ndarray):
        return shards
    return np.stack([s.local_cov for s in shards])


def _weights(W):
    return W.W if isinstance(W, MixingMatrix) else np.asarray(W, dtype=np.float64)


def _mix(W, A):
    # (M, M) x (M, d, K) -> (M, d, K)
    return np.tensordot(W, A, axes=(1, 0))


def _check_columns(X, what="X"):
    norms = np.linalg.norm(X, axis=-2)
    bad = np.argwhere(norms < NORM_FLOOR)
    if bad.size:
        loc = tuple(int(v) for v in bad[0])
        raise ValidationError(f"column {loc[-1]} of {what} is zero" + (f" at node {loc[0]}" if len(loc) > 1 else ""))
    return norms


def pseudo_gradient(C, X) -> np.ndarray:
    """Generalized Krasulina direction with Gram-Schmidt style deflation.

    Column k is ``C x_k - (x_k'C x_k / |x_k|^2) x_k - sum_{p<k} (x_p'C x_k / |x_p|^2) x_p``.
    Works on a single ``(d, K)`` matrix or a node stack ``(M, d, K)`` with
    matching ``(M, d, d)`` covariances.
    """
    C = np.asarray(C, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    norms = _check_columns(X)
    n2 = norms**2
    CX = C @ X
    G = np.swapaxes(X, -1, -2) @ CX  # G[..., p, k] = x_p' C x_k
    rayleigh = np.diagonal(G, axis1=-2, axis2=-1) / n2
    U = np.triu(G, k=1) / n2[..., :, None]
    return CX - X * rayleigh[..., None, :] - X @ U


def _guard(X, t):
    norms = np.linalg.norm(X, axis=-2)
    if np.any(norms < NORM_FLOOR) or not np.all(np.isfinite(norms)):
        i, k = np.argwhere((norms < NORM_FLOOR) | ~np.isfinite(norms))[0]
        raise DiagnosticError(
            f"degenerate trajectory: column {k} at node {i} has norm {norms[i, k]:.3e} at iteration {t}"
        )


def fastpca_init(shards, d, K, seed) -> NetworkState:
    """Every node starts from the same seeded orthonormal X_init with S_i = h_i(X_init)."""
    if not 1 <= K <= d:
        raise ValidationError(f"need 1 <= K <= d, got K={K}, d={d}")
    Cs = covariance_stack(shards)
    if Cs.shape[0] < 1:
        raise ValidationError("no shards given")
    X0 = random_orthonormal(d, K, np.random.default_rng(seed))
    X = np.repeat(X0[None], Cs.shape[0], axis=0)
    H = pseudo_gradient(Cs, X)
    return NetworkState(X=X, S=H.copy(), H=H, iteration=0, comm_units=0)


def fastpca_step(state: NetworkState, W, alpha, shards, accounting="paper") -> NetworkState:
    """One FAST-PCA round.

    X_i <- (X_i + sum_j w_ij X_j) / 2 + alpha S_i
    S_i <- (S_i + sum_j w_ij S_j) / 2 + h_i(X_i^{t+1}) - h_i(X_i^t)
    """
    if accounting not in ACCOUNTING_MODES:
        raise ValidationError(f"unknown accounting mode {accounting!r}")
    Cs = covariance_stack(shards)
    lazy = 0.5 * (np.eye(state.M) + _weights(W))
    X_new = _mix(lazy, state.X) + alpha * state.S
    _guard(X_new, state.iteration + 1)
    H_new = pseudo_gradient(Cs, X_new)
    S_new = _mix(lazy, state.S) + H_new - state.H
    cost = 2 if accounting == "payload" else 1
    return NetworkState(
        X=X_new, S=S_new, H=H_new,
        iteration=state.iteration + 1,
        comm_units=state.comm_units + cost,
    )


def gha_direction(C, X) -> np.ndarray:
    """Generalized Hebbian (Sanger) direction C X - X triu(X' C X)."""
    CX = C @ X
    return CX - X @ np.triu(np.swapaxes(X, -1, -2) @ CX)


def dsa_init(shards, d, K, seed) -> NetworkState:
    Cs = covariance_stack(shards)
    X0 = random_orthonormal(d, K, np.random.default_rng(seed))
    return NetworkState(X=np.repeat(X0[None], Cs.shape[0], axis=0))


def dsa_step(state: NetworkState, W, alpha, shards) -> NetworkState:
    """Combine-and-adapt distributed Sanger step: X_i <- sum_j w_ij X_j + alpha H_i(X_i).

    Reconstructed baseline; it has no tracker and stalls in a neighbourhood
    of the solution under a constant step size.
    """
    Cs = covariance_stack(shards)
    X_new = _mix(_weights(W), state.X) + alpha * gha_direction(Cs, state.X)
    _guard(X_new, state.iteration + 1)
    return NetworkState(X=X_new, iteration=state.iteration + 1, comm_units=state.comm_units + 1)


def seq_dist_pm_iter(shards, W, K, t_consensus, outer_iters, X_init):
    """Sequential distributed power method, yielding after every outer power step.

    Components are estimated one after another.  Each power step forms
    local products with the node's deflated covariance, averages them with
    ``t_consensus`` rounds of W-mixing and normalizes.  Yields
    ``(X, comm_units)`` where ``X`` is ``(M, d, K)``; components not yet
    started hold their initial column.
    """
    if t_consensus < 1:
        raise ValidationError(f"t_consensus must be >= 1, got {t_consensus}")
    if outer_iters < 0:
        raise ValidationError("outer_iters must be non-negative")
    Cs = covariance_stack(shards)
    Wm = _weights(W)
    M, d, _ = Cs.shape
    X = np.repeat(np.asarray(X_init, dtype=np.float64)[None, :, :K], M, axis=0).copy()
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    lam = np.zeros((M, K))
    comm = 0
    for k in range(K):
        Qp = X[:, :, :k]
        for _ in range(outer_iters):
            x = X[:, :, k]
            v = np.einsum("mij,mj->mi", Cs, x)
            if k:
                coef = np.einsum("mdp,md->mp", Qp, x) * lam[:, :k]
                v -= np.einsum("mdp,mp->md", Qp, coef)
            for _ in range(t_consensus):
                v = Wm @ v
            comm += t_consensus
            nv = np.linalg.norm(v, axis=1)
            if np.any(nv < NORM_FLOOR):
                raise DiagnosticError(f"power iterate vanished for component {k}")
            lam[:, k] = np.einsum("md,md->m", x, v)
            X[:, :, k] = v / nv[:, None]
            yield X.copy(), comm


def seq_dist_pm(shards, W, K, t_consensus, outer_iters, X_init=None, seed=0):
    """Run :func:`seq_dist_pm_iter` to completion; returns ``(X, comm_units)``."""
    Cs = covariance_stack(shards)
    d = Cs.shape[1]
    if X_init is None:
        X_init = random_orthonormal(d, K, np.random.default_rng(seed))
    X, comm = None, 0
    for X, comm in seq_dist_pm_iter(Cs, W, K, t_consensus, outer_iters, X_init):
        pass
    return X, comm


def orthonormalize(Z) -> np.ndarray:
    """Thin QR with the diagonal of R made non-negative."""
    Q, R = np.linalg.qr(Z)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s


def centralized_oi_iter(C, K, iters, Q0):
    Q = np.array(Q0, dtype=np.float64)
    yield Q
    for _ in range(iters):
        Q = orthonormalize(C @ Q)
        yield Q


def centralized_oi(C, K, iters, seed) -> np.ndarray:
    """Orthogonal iteration Q <- orth(C Q) from a seeded orthonormal start.

    Converges to the top-K subspace; individual columns only line up with
    eigenvectors when the top eigenvalues are distinct.
    """
    C = np.asarray(C, dtype=np.float64)
    if not 1 <= K <= C.shape[0]:
        raise ValidationError(f"need 1 <= K <= d, got K={K}")
    Q0 = random_orthonormal(C.shape[0], K, np.random.default_rng(seed))
    for Q in centralized_oi_iter(C, K, iters, Q0):
        pass
    return Q


def oracle_krasulina_step(C, prefix, x, alpha) -> np.ndarray:
    """Centralized deflated Krasulina step that knows the true leading eigenvectors.

    x <- x + alpha (C x - (x'Cx / |x|^2) x - Q_p Q_p' C x), with ``prefix``
    the ``d x (k-1)`` matrix of true eigenvectors q_1 .. q_{k-1}.  Only
    useful as a reference in tests and theory checks.
    """
    x = np.asarray(x, dtype=np.float64)
    nx2 = x @ x
    if not nx2 > NORM_FLOOR**2:
        raise ValidationError("x must be non-zero")
    Cx = C @ x
    step = Cx - (x @ Cx / nx2) * x
    prefix = np.asarray(prefix, dtype=np.float64).reshape(x.size, -1)
    if prefix.shape[1]:
        step -= prefix @ (prefix.T @ Cx)
    return x + alpha * step


def streaming_krasulina_step(y, x, alpha_t) -> np.ndarray:
    """Krasulina's single-sample update with C_t = y y'."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx2 = x @ x
    if not nx2 > NORM_FLOOR**2:
        raise ValidationError("x must be non-zero")
    yx = y @ x
    return x + alpha_t * (yx * y - (yx * yx / nx2) * x)


def normalize_columns(X) -> np.ndarray:
    """Unit-length columns; the final pass applied when results are emitted."""
    return X / np.linalg.norm(X, axis=-2, keepdims=True)
