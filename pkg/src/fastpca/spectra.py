"""Ground-truth spectra, synthetic Gaussian data and per-node covariances.

Everything here is a pure function of its arguments and seeds.  The
eigendecomposition is only ever used as a reference for error metrics,
never inside a distributed iteration.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DiagnosticError, ValidationError

SYMMETRY_RTOL = 1e-10

# tail eigenvalues beyond lambda_{K+1} decay geometrically with this ratio
TAIL_RATIO = 0.9
# upper limit on the per-step ratio among the top-K distinct eigenvalues
DISTINCT_SPACING = 0.9


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (descending) and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def d(self) -> int:
        return self.eigenvalues.shape[0]

    def top(self, K: int) -> np.ndarray:
        """The leading ``K`` eigenvectors as a ``d x K`` matrix."""
        return self.eigenvectors[:, :K]


@dataclass(frozen=True)
class SyntheticSpec:
    d: int
    K: int
    gap_ratio: float
    mode: str = "distinct"
    top_value: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gap_ratio < 1.0:
            raise ValidationError(f"gap_ratio must lie in (0, 1), got {self.gap_ratio}")
        if not 1 <= self.K < self.d:
            raise ValidationError(f"need 1 <= K < d, got K={self.K}, d={self.d}")
        if self.mode not in ("distinct", "repeated"):
            raise ValidationError(f"mode must be 'distinct' or 'repeated', got {self.mode!r}")
        if self.top_value <= 0:
            raise ValidationError("top_value must be positive")


@dataclass(frozen=True)
class DataShard:
    node_id: int
    samples: np.ndarray = field(repr=False)
    local_cov: np.ndarray = field(repr=False)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


def _fix_signs(Q):
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[idx, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs


def check_symmetric(C, rtol=SYMMETRY_RTOL, name="matrix"):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {C.shape}")
    scale = max(np.linalg.norm(C), np.finfo(float).tiny)
    asym = np.linalg.norm(C - C.T)
    if asym > rtol * scale:
        raise ValidationError(f"{name} is not symmetric (relative asymmetry {asym / scale:.3e})")
    return C


def eig_sym(C) -> Spectrum:
    """Dense symmetric eigendecomposition sorted by descending eigenvalue.

    Eigenvector signs are fixed so the largest-magnitude entry of every
    column is positive, which makes the result reproducible across calls.
    """
    C = check_symmetric(C)
    C = 0.5 * (C + C.T)
    if not np.all(np.isfinite(C)):
        raise ValidationError("matrix contains non-finite entries")
    try:
        w, V = np.linalg.eigh(C)
    except np.linalg.LinAlgError as exc:
        raise DiagnosticError(f"symmetric eigensolver failed: {exc}") from exc
    order = np.argsort(w)[::-1]
    return Spectrum(eigenvalues=w[order], eigenvectors=_fix_signs(V[:, order]))


def make_spectrum(spec: SyntheticSpec) -> np.ndarray:
    """Eigenvalues with lambda_{K+1} / lambda_K equal to ``spec.gap_ratio``.

    ``distinct`` spaces the top K geometrically with ratio
    ``max(gap_ratio, 0.9)``; ``repeated`` makes them all equal.  The tail
    below lambda_{K+1} decays geometrically.
    """
    K, d, top = spec.K, spec.d, float(spec.top_value)
    if spec.mode == "distinct":
        r = max(spec.gap_ratio, DISTINCT_SPACING)
        head = top * r ** np.arange(K)
    else:
        head = np.full(K, top)
    nxt = head[-1] * spec.gap_ratio
    tail = nxt * TAIL_RATIO ** np.arange(d - K)
    return np.concatenate([head, tail])


def random_orthonormal(d, K, rng) -> np.ndarray:
    """Gaussian ``d x K`` matrix orthonormalized by QR (Haar distributed)."""
    Z = rng.standard_normal((d, K))
    Q, R = np.linalg.qr(Z)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s


def synth_gaussian(eigenvalues, rotation_seed, N, sample_seed) -> np.ndarray:
    """Draw ``N`` zero-mean Gaussian samples (as columns) with covariance Q diag(lam) Q^T.

    Q is a Haar-random rotation fixed by ``rotation_seed``; the draws are
    fixed by ``sample_seed``.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.size == 0:
        raise ValidationError("eigenvalues must be a non-empty 1-D sequence")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValidationError("eigenvalues must be finite and non-negative")
    if N < 1:
        raise ValidationError(f"need N >= 1 samples, got {N}")
    d = lam.size
    Q = random_orthonormal(d, d, np.random.default_rng(rotation_seed))
    Z = np.random.default_rng(sample_seed).standard_normal((d, int(N)))
    return Q @ (np.sqrt(lam)[:, None] * Z)


def covariance_shards(Y, partition, normalization="mean") -> list:
    """Center ``Y`` by its global mean and build one :class:`DataShard` per block.

    Parameters
    ----------
    Y : ndarray, shape (d, N)
        Samples as columns.
    partition : sequence of (start, stop) or sequence of index arrays
        Column blocks, one per node; together they must cover every column
        exactly once.
    normalization : {"mean", "sum"}
        ``"sum"`` gives C_i = Y_i Y_i^T / N so that sum_i C_i = C.
        ``"mean"`` gives C_i = M Y_i Y_i^T / N so that the network average
        of the C_i equals C; for equal blocks this is Y_i Y_i^T / N_i.
        The eigenvectors are the same either way, but the step size of
        the distributed iterations is calibrated to the ``"mean"`` scale.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValidationError("Y must be a d x N matrix")
    if normalization not in ("mean", "sum"):
        raise ValidationError(f"normalization must be 'mean' or 'sum', got {normalization!r}")
    N = Y.shape[1]
    blocks = []
    for part in partition:
        if isinstance(part, tuple) and len(part) == 2:
            idx = np.arange(part[0], part[1])
        else:
            idx = np.asarray(part, dtype=np.intp)
        if idx.size == 0:
            raise ValidationError(f"partition element {len(blocks)} is empty")
        blocks.append(idx)
    if not blocks:
        raise ValidationError("partition is empty")
    covered = np.sort(np.concatenate(blocks))
    if covered.size != N or np.any(covered != np.arange(N)):
        raise ValidationError("partition must cover all columns exactly once")

    Yc = Y - Y.mean(axis=1, keepdims=True)
    M = len(blocks)
    factor = (M if normalization == "mean" else 1.0) / N
    shards = []
    for i, idx in enumerate(blocks):
        Yi = Yc[:, idx]
        Ci = factor * (Yi @ Yi.T)
        Ci = 0.5 * (Ci + Ci.T)
        shards.append(DataShard(node_id=i, samples=Yi, local_cov=Ci))
    return shards


def even_partition(N, M) -> list:
    """Split ``range(N)`` into ``M`` contiguous near-equal blocks."""
    if M < 1 or M > N:
        raise ValidationError(f"cannot split {N} samples over {M} nodes")
    edges = np.linspace(0, N, M + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def sample_covariance(shards) -> np.ndarray:
    """Global sample covariance (1/N) sum_i Y_i Y_i^T, the ground-truth matrix."""
    N = sum(s.n_samples for s in shards)
    d = shards[0].samples.shape[0]
    C = np.zeros((d, d))
    for s in shards:
        C += s.samples @ s.samples.T
    C /= N
    return 0.5 * (C + C.T)


def mean_local_covariance(shards) -> np.ndarray:
    """Network average of the local covariances, the matrix the iterations see."""
    return sum(s.local_cov for s in shards) / len(shards)
