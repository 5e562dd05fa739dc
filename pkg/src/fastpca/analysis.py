"""Error metrics, convergence-rate fits and numerical checks of the theory.

Component indices ``k`` in the theory helpers (coefficient decay, step-size
bound, P-matrix, Lipschitz probe) are 1-based, matching the usual
numbering of eigenvectors; array axes stay 0-based.
"""

import io
from dataclasses import dataclass, field
from typing import Optional

import mpmath
import numpy as np

from .consensus_pca import covariance_stack, pseudo_gradient
from .errors import ValidationError
from .spectra import Spectrum

NOISE_FLOOR = 1e-12
DECAY_FLOOR = 1e-24
CSV_HEADER = "t,comm_units,angle_error,consensus_err,tracker_resid,dist_opt"


def _as_stack(X):
    X = np.asarray(X, dtype=np.float64)
    return X[None] if X.ndim == 2 else X


# ---------------------------------------------------------------- metrics

def angle_error(X, spectrum: Spectrum, K=None) -> float:
    """Mean over nodes and components of 1 - cos^2(x_{i,k}, q_k)."""
    X = _as_stack(X)
    K = X.shape[2] if K is None else K
    norms = np.linalg.norm(X[:, :, :K], axis=1)
    if np.any(norms == 0):
        raise ValidationError("angle_error needs non-zero columns")
    cos = np.einsum("mdk,dk->mk", X[:, :, :K], spectrum.top(K)) / norms
    return float(np.clip(np.mean(1.0 - cos**2), 0.0, 1.0))


def consensus_error(X) -> np.ndarray:
    """Per-component sum_i |x_{i,k} - xbar_k|^2.  Sum it for the Frobenius aggregate."""
    X = _as_stack(X)
    dev = X - X.mean(axis=0, keepdims=True)
    return np.sum(dev**2, axis=(0, 1))


def tracker_residual(state, shards) -> np.ndarray:
    """Per-component |sbar_k - g_k| with g_k the network-mean pseudo-gradient.

    The pseudo-gradients are recomputed from ``state.X`` rather than taken
    from the state's cache, so a corrupted tracker shows up here.
    """
    H = pseudo_gradient(covariance_stack(shards), state.X)
    g = H.mean(axis=0)
    sbar = state.S.mean(axis=0)
    return np.linalg.norm(sbar - g, axis=0)


def mean_pseudo_gradient_norm(state, shards) -> np.ndarray:
    H = pseudo_gradient(covariance_stack(shards), state.X)
    return np.linalg.norm(H.mean(axis=0), axis=0)


def distance_to_optimum(X, spectrum: Spectrum, K=None) -> np.ndarray:
    """Per-component distance from xbar_k to the nearest multiple of q_k.

    The limit point is c_k q_k with c_k unknown, so the closest point on
    span{q_k} is used.
    """
    X = _as_stack(X)
    K = X.shape[2] if K is None else K
    xbar = X[:, :, :K].mean(axis=0)
    Q = spectrum.top(K)
    resid = xbar - Q * np.sum(Q * xbar, axis=0)
    return np.linalg.norm(resid, axis=0)


def eigen_coefficients(x, spectrum: Spectrum) -> np.ndarray:
    """Coefficients of x / |x| in the eigenbasis."""
    x = np.asarray(x, dtype=np.float64)
    n = np.linalg.norm(x)
    if n == 0:
        raise ValidationError("eigen_coefficients needs a non-zero vector")
    return spectrum.eigenvectors.T @ (x / n)


# ---------------------------------------------------------------- traces

@dataclass
class TraceRow:
    t: int
    comm_units: int
    angle_error: float
    consensus_err: np.ndarray
    tracker_resid: Optional[np.ndarray]
    dist_opt: np.ndarray

    def csv_values(self):
        tr = float(np.max(self.tracker_resid)) if self.tracker_resid is not None else float("nan")
        return (
            self.t,
            self.comm_units,
            self.angle_error,
            float(np.sum(self.consensus_err)),
            tr,
            float(np.sqrt(np.sum(self.dist_opt**2))),
        )


@dataclass
class Trace:
    algorithm: str = ""
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, row: TraceRow):
        if self.rows and row.comm_units < self.rows[-1].comm_units:
            raise ValidationError("comm_units must be non-decreasing")
        self.rows.append(row)

    def column(self, name) -> np.ndarray:
        idx = CSV_HEADER.split(",").index(name)
        return np.array([r.csv_values()[idx] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        return format_csv([r.csv_values() for r in self.rows])


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def format_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def parse_csv(text) -> np.ndarray:
    lines = text.strip().splitlines()
    if lines[0].strip() != CSV_HEADER:
        raise ValidationError("unexpected trace header")
    return np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


# ---------------------------------------------------------------- rate fits

@dataclass(frozen=True)
class RateReport:
    rho: float
    r_squared: float
    window: tuple


def rate_fit(errors, floor=NOISE_FLOOR, min_length=20) -> RateReport:
    """Least-squares fit of log(error) against t.

    The series is cut at the first value below ``floor``; the fit uses the
    10%..90% portion of what remains.  ``rho = exp(slope)``.
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.ndim != 1 or np.any(~np.isfinite(e)) or np.any(e < 0):
        raise ValidationError("rate_fit needs a finite non-negative 1-D series")
    below = np.flatnonzero(e < floor)
    n = int(below[0]) if below.size else e.size
    if n < min_length:
        raise ValidationError(f"only {n} points above the noise floor, need {min_length}")
    lo, hi = int(np.floor(0.1 * n)), int(np.ceil(0.9 * n))
    t = np.arange(lo, hi, dtype=float)
    y = np.log(e[lo:hi])
    slope, intercept = np.polyfit(t, y, 1)
    ss_res = np.sum((y - (slope * t + intercept)) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else float(1.0 - ss_res / ss_tot)
    return RateReport(rho=float(np.exp(slope)), r_squared=r2, window=(lo, hi))


# ---------------------------------------------------------------- theory checks

@dataclass(frozen=True)
class DecayReport:
    lower_ok: bool
    upper_ok: bool
    worst_ratios: tuple  # (worst lower ratio / gamma_k, worst upper ratio / rho_k)
    gamma: float
    rho: float


def coefficient_decay_check(z_series, k, alpha, eigenvalues, tol=0.05, floor=DECAY_FLOOR) -> DecayReport:
    """Per-step decay of the coefficients of the centralized deflated iterate.

    ``z_series[t]`` holds the eigenbasis coefficients of x^(t) / |x^(t)|.
    With u_l = (z_l / z_k)^2 the lower sum sum_{l<k} u_l must shrink by at
    least gamma_k = (1 / (1 + alpha lam_k))^2 per step and the upper sum
    sum_{l>k} u_l by rho_k = ((1 + alpha lam_{k+1}) / (1 + alpha lam_k))^2.
    Steps whose previous sum is below ``floor`` are skipped.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    z = np.asarray(z_series, dtype=np.float64)
    if not 1 <= k < lam.size:
        raise ValidationError(f"k must lie in [1, d-1], got {k}")
    if not 0 < alpha < 1.0 / lam[0]:
        raise ValidationError(f"need 0 < alpha < 1/lambda_1 = {1 / lam[0]:.6g}, got {alpha}")
    if z[0, k - 1] == 0:
        raise ValidationError("z_kk at t=0 is zero; the decay bounds do not apply")
    gamma = (1.0 / (1.0 + alpha * lam[k - 1])) ** 2
    rho = ((1.0 + alpha * lam[k]) / (1.0 + alpha * lam[k - 1])) ** 2
    u = (z / z[:, k - 1 : k]) ** 2
    lower = u[:, : k - 1].sum(axis=1)
    upper = u[:, k:].sum(axis=1)

    def worst(series, bound):
        prev, nxt = series[:-1], series[1:]
        keep = prev > floor
        if not np.any(keep):
            return 0.0
        return float(np.max(nxt[keep] / prev[keep]) / bound)

    wl, wu = worst(lower, gamma), worst(upper, rho)
    return DecayReport(
        lower_ok=wl <= 1.0 + tol,
        upper_ok=wu <= 1.0 + tol,
        worst_ratios=(wl, wu),
        gamma=gamma,
        rho=rho,
    )


def step_size_bound(eigenvalues, K, beta) -> float:
    """min_k (lam_k - lam_{k+1}) / ((K+5)(K+6)) * ((1 - beta) / (9 lam_1))^2."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.size < K + 1:
        raise ValidationError(f"need at least K+1 = {K + 1} eigenvalues")
    if not lam[0] > 0:
        raise ValidationError("lambda_1 must be positive")
    if not 0 <= beta < 1:
        raise ValidationError(f"beta must lie in [0, 1), got {beta}")
    gaps = lam[:K] - lam[1 : K + 1]
    if np.any(gaps <= 0):
        k = int(np.argmax(gaps <= 0)) + 1
        raise ValidationError(f"zero eigengap between lambda_{k} and lambda_{k + 1}")
    return float(gaps.min() / ((K + 5) * (K + 6)) * ((1.0 - beta) / (9.0 * lam[0])) ** 2)


def p_matrix(alpha, k, lambda_k, lambda_k1, lambda_1, beta) -> np.ndarray:
    """3x3 comparison matrix bounding tracker, consensus and optimality errors."""
    L = (k + 5) * lambda_1
    delta = (1 + alpha * lambda_k1) / (1 + alpha * lambda_k)
    b = (1 + beta) / 2
    return np.array([
        [b + alpha * L, L * (2 + alpha * L), alpha * L * L],
        [alpha, b, 0.0],
        [0.0, alpha * L, delta],
    ])


def _p_radius_mp(alpha, k, lambda_k, lambda_k1, lambda_1, beta, dps):
    with mpmath.workdps(dps):
        a, lk, lk1, l1, bt = (mpmath.mpf(v) for v in (alpha, lambda_k, lambda_k1, lambda_1, beta))
        L = (k + 5) * l1
        b = (1 + bt) / 2
        delta = (1 + a * lk1) / (1 + a * lk)
        P = mpmath.matrix([
            [b + a * L, L * (2 + a * L), a * L * L],
            [a, b, 0],
            [0, a * L, delta],
        ])
        ev = mpmath.eig(P, left=False, right=False)
        rho = max(abs(v) for v in ev)
        return rho, 1 - rho


def p_spectral_gap(alpha, k, lambda_k, lambda_k1, lambda_1, beta, dps=60) -> float:
    """1 - spectral radius of the P-matrix, computed in extended precision.

    Near the admissible step sizes the radius sits within ~1e-15 of 1, so
    the gap is the quantity to compare against zero.
    """
    _check_p_args(alpha, k, lambda_k, lambda_k1, lambda_1, beta)
    return float(_p_radius_mp(alpha, k, lambda_k, lambda_k1, lambda_1, beta, dps)[1])


def p_spectral_radius(alpha, k, lambda_k, lambda_k1, lambda_1, beta, dps=60) -> float:
    _check_p_args(alpha, k, lambda_k, lambda_k1, lambda_1, beta)
    return float(_p_radius_mp(alpha, k, lambda_k, lambda_k1, lambda_1, beta, dps)[0])


def _check_p_args(alpha, k, lambda_k, lambda_k1, lambda_1, beta):
    if alpha < 0 or k < 1 or lambda_1 <= 0 or lambda_k <= 0 or lambda_k1 < 0:
        raise ValidationError("p-matrix parameters must be positive")
    if not 0 <= beta < 1:
        raise ValidationError(f"beta must lie in [0, 1), got {beta}")


def fixed_prefix_pseudo_gradient(C, prefix, v) -> np.ndarray:
    """h(v) = C v - (v'Cv / |v|^2) v - sum_p x_p x_p' C v / |x_p|^2 for a frozen prefix.

    ``v`` may be a single vector or an ``(n, d)`` batch.
    """
    v = np.atleast_2d(v)
    Cv = v @ C  # C symmetric
    out = Cv - (np.sum(v * Cv, axis=1) / np.sum(v * v, axis=1))[:, None] * v
    if prefix is not None and prefix.shape[1]:
        P = prefix / np.linalg.norm(prefix, axis=0)
        out -= (Cv @ P) @ P.T
    return out


def lipschitz_probe(C, k, X_prefix=None, n_trials=10_000, seed=0) -> float:
    """Largest observed |h(v1) - h(v2)| / |v1 - v2| over random probe pairs.

    Half the pairs are independent draws with norms in [0.1, 10]; the rest
    are close pairs that probe the local derivative.  Zero probes are
    redrawn.
    """
    C = np.asarray(C, dtype=np.float64)
    d = C.shape[0]
    if X_prefix is None:
        X_prefix = np.zeros((d, 0))
    X_prefix = np.asarray(X_prefix, dtype=np.float64).reshape(d, -1)[:, : k - 1]
    if X_prefix.shape[1] != k - 1:
        raise ValidationError(f"component {k} needs a prefix of {k - 1} columns")
    rng = np.random.default_rng(seed)

    def draw(n):
        v = rng.standard_normal((n, d))
        nv = np.linalg.norm(v, axis=1)
        while np.any(nv == 0):
            bad = nv == 0
            v[bad] = rng.standard_normal((int(bad.sum()), d))
            nv = np.linalg.norm(v, axis=1)
        return v / nv[:, None] * rng.uniform(0.1, 10.0, size=(n, 1))

    n_far = n_trials // 2
    v1 = draw(n_trials)
    v2 = np.empty_like(v1)
    v2[:n_far] = draw(n_far)
    eps = 10.0 ** rng.uniform(-6, -1, size=(n_trials - n_far, 1))
    v2[n_far:] = v1[n_far:] + eps * np.linalg.norm(v1[n_far:], axis=1, keepdims=True) * draw(n_trials - n_far) / 10.0
    diff = np.linalg.norm(v1 - v2, axis=1)
    keep = diff > 0
    num = np.linalg.norm(
        fixed_prefix_pseudo_gradient(C, X_prefix, v1[keep]) - fixed_prefix_pseudo_gradient(C, X_prefix, v2[keep]),
        axis=1,
    )
    return float(np.max(num / diff[keep])) if np.any(keep) else 0.0
