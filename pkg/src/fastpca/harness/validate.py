"""Fixed-seed property checks for the identities and bounds the iterations rely on."""

import time
from dataclasses import dataclass

import numpy as np

from .. import analysis, consensus_pca as cp, network, spectra


@dataclass
class Check:
    name: str
    passed: bool
    observed: str
    bound: str
    warning: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        s = f"[{status}] {self.name}: observed {self.observed} (bound {self.bound})"
        if self.warning:
            s += f"\n[WARN] {self.name}: {self.warning}"
        return s


def _random_problem(M, d, K, seed, gap=0.6, p=0.5):
    rng = np.random.default_rng(seed)
    lam = spectra.make_spectrum(spectra.SyntheticSpec(d=d, K=K, gap_ratio=gap))
    Y = spectra.synth_gaussian(lam, int(rng.integers(2**32)), 400 * M, int(rng.integers(2**32)))
    shards = spectra.covariance_shards(Y, spectra.even_partition(Y.shape[1], M))
    mix = network.metropolis_weights(network.erdos_renyi(M, p, int(rng.integers(2**32))))
    covs = cp.covariance_stack(shards)
    spec = spectra.eig_sym(covs.mean(axis=0))
    return covs, mix, spec


def check_tracker(corrupt=False):
    covs, mix, _ = _random_problem(10, 10, 3, seed=11)
    st = cp.fastpca_init(covs, 10, 3, seed=5)
    worst = 0.0
    for t in range(200):
        st = cp.fastpca_step(st, mix, 0.5, covs)
        if corrupt and t == 100:
            S = st.S.copy()
            S[3] += 1e-3
            st = cp.NetworkState(X=st.X, S=S, H=st.H, iteration=st.iteration, comm_units=st.comm_units)
        r = analysis.tracker_residual(st, covs)
        g = analysis.mean_pseudo_gradient_norm(st, covs)
        worst = max(worst, float(np.max(r / (1 + g))))
    return Check("tracker identity (mean tracker = mean pseudo-gradient)", worst <= 1e-10, f"{worst:.2e}", "1e-10")


def check_average_dynamics():
    covs, mix, _ = _random_problem(8, 8, 2, seed=12)
    st = cp.fastpca_init(covs, 8, 2, seed=6)
    worst = 0.0
    for _ in range(100):
        nxt = cp.fastpca_step(st, mix, 0.5, covs)
        pred = st.X.mean(axis=0) + 0.5 * st.S.mean(axis=0)
        worst = max(worst, float(np.max(np.abs(nxt.X.mean(axis=0) - pred))))
        st = nxt
    return Check("average dynamics xbar' = xbar + alpha sbar", worst <= 1e-10, f"{worst:.2e}", "1e-10")


def check_single_node():
    covs, _, _ = _random_problem(1, 6, 3, seed=13)
    st = cp.fastpca_init(covs, 6, 3, seed=7)
    x = st.X[0].copy()
    worst = 0.0
    for _ in range(100):
        st = cp.fastpca_step(st, np.ones((1, 1)), 0.3, covs)
        x = x + 0.3 * cp.pseudo_gradient(covs[0], x)
        worst = max(worst, float(np.max(np.abs(st.X[0] - x))))
    return Check("single-node reduction to x + alpha h(x)", worst <= 1e-12, f"{worst:.2e}", "1e-12")


def check_sign_symmetry():
    covs, mix, _ = _random_problem(6, 6, 2, seed=14)
    a = cp.fastpca_init(covs, 6, 2, seed=8)
    b = a.flipped()
    for _ in range(50):
        a = cp.fastpca_step(a, mix, 0.5, covs)
        b = cp.fastpca_step(b, mix, 0.5, covs)
    dev = float(np.max(np.abs(a.X + b.X)))
    return Check("sign symmetry X_init -> -X_init mirrors trajectory", dev == 0.0, f"{dev:.2e}", "0 (exact)")


def check_coefficient_decay(draws=20):
    rng = np.random.default_rng(15)
    worst = (0.0, 0.0)
    ok = True
    for _ in range(draws):
        d = int(rng.integers(4, 9))
        lam = np.sort(rng.uniform(0.05, 5.0, d))[::-1]
        k = int(rng.integers(1, min(4, d - 1) + 1))
        alpha = rng.uniform(0.05, 0.95) / lam[0]
        rep = _decay_run(lam, k, alpha, rng)
        ok &= rep.lower_ok and rep.upper_ok
        worst = tuple(max(a, b) for a, b in zip(worst, rep.worst_ratios))
    return Check("coefficient decay per step (lower <= gamma_k, upper <= rho_k)", bool(ok),
                 f"max ratio/bound lower {worst[0]:.4f}, upper {worst[1]:.4f}", "1.05")


def _decay_run(lam, k, alpha, rng, steps=300):
    d = lam.size
    spec = spectra.Spectrum(eigenvalues=lam, eigenvectors=np.eye(d))
    C = np.diag(lam)
    x = rng.standard_normal(d)
    x /= np.linalg.norm(x)
    zs = [analysis.eigen_coefficients(x, spec)]
    for _ in range(steps):
        x = cp.oracle_krasulina_step(C, np.eye(d)[:, : k - 1], x, alpha)
        zs.append(analysis.eigen_coefficients(x, spec))
    return analysis.coefficient_decay_check(np.array(zs), k, alpha, lam)


def check_lipschitz(n_cov=5, probes=2000):
    rng = np.random.default_rng(16)
    worst = 0.0
    for _ in range(n_cov):
        d = 6
        A = rng.standard_normal((d, 3 * d))
        C = A @ A.T / (3 * d)
        lam1 = np.linalg.eigvalsh(C)[-1]
        for k in (1, 2, 3):
            prefix = spectra.random_orthonormal(d, k - 1, rng) if k > 1 else None
            r = analysis.lipschitz_probe(C, k, prefix, probes, int(rng.integers(2**32)))
            worst = max(worst, r / ((k + 5) * lam1))
    return Check("Lipschitz ratio / ((k+5) lambda_1)", worst <= 1.0, f"{worst:.4f}", "1")


def check_p_radius(draws=50):
    rng = np.random.default_rng(17)
    min_gap = np.inf
    for _ in range(draws):
        lam, beta, K, k = random_admissible(rng)
        a = 0.9 * analysis.step_size_bound(lam, K, beta)
        min_gap = min(min_gap, analysis.p_spectral_gap(a, k, lam[k - 1], lam[k], lam[0], beta))
    at0 = analysis.p_spectral_radius(0.0, 1, 1.0, 0.5, 1.0, 0.3)
    return Check("P_k(alpha) spectral radius < 1 at 0.9 x step bound; = 1 at alpha = 0",
                 bool(min_gap > 0 and at0 == 1.0), f"min(1 - rho) {min_gap:.3e}, rho(0) {at0!r}", "> 0, == 1")


def random_admissible(rng, d=8):
    lam = np.sort(rng.uniform(0.0, 1.0, d))[::-1] * rng.uniform(0.5, 10.0)
    K = int(rng.integers(1, 5))
    beta = float(rng.uniform(0.0, 0.95))
    k = int(rng.integers(1, K + 1))
    return lam, beta, K, k


def check_fastpca_convergence(alpha=0.5, strict_alpha=False):
    covs, mix, spec = _random_problem(10, 10, 3, seed=18, gap=0.6)
    st = cp.fastpca_init(covs, 10, 3, seed=9)
    errs = []
    for _ in range(1500):
        st = cp.fastpca_step(st, mix, alpha, covs)
        errs.append(analysis.angle_error(st.X, spec, 3))
    fit = analysis.rate_fit(np.array(errs))
    ok = errs[-1] < 1e-8 and fit.rho < 1 and fit.r_squared >= 0.95
    warn = ""
    if strict_alpha:
        bound = analysis.step_size_bound(spec.eigenvalues, 3, mix.beta)
        if alpha >= bound:
            warn = f"alpha {alpha:g} exceeds the step-size bound {bound:.3e}"
    return Check("FAST-PCA exact linear convergence (M=10, d=10, K=3)", bool(ok),
                 f"E={errs[-1]:.2e}, rho_hat={fit.rho:.4f}, R2={fit.r_squared:.4f}", "E<1e-8, R2>=0.95", warn)


def check_mixing():
    worst = 0.0
    beta_max = 0.0
    for topo in (network.cycle(20), network.star(7), network.complete(5),
                 network.erdos_renyi(20, 0.5, 3), network.path(6)):
        mix = network.metropolis_weights(topo)
        W = mix.W
        worst = max(worst, np.abs(W.sum(0) - 1).max(), np.abs(W.sum(1) - 1).max())
        beta_max = max(beta_max, mix.beta)
    return Check("Metropolis W doubly stochastic and beta < 1", bool(worst <= 1e-12 and beta_max < 1),
                 f"row/col err {worst:.1e}, max beta {beta_max:.4f}", "1e-12, < 1")


def check_eig_oracle():
    s = spectra.eig_sym(np.array([[2.0, 1.0], [1.0, 2.0]]))
    q = s.eigenvectors[:, 0]
    err = max(abs(s.eigenvalues[0] - 3), abs(s.eigenvalues[1] - 1), abs(abs(q[0]) - 2**-0.5))
    return Check("eigensolver against 2x2 hand oracle", err < 1e-12, f"{err:.1e}", "1e-12")


def validate(alpha=0.5, strict_alpha=False, corrupt_tracker=False):
    """Run all checks; returns ``(ok, lines, seconds)``."""
    t0 = time.perf_counter()
    checks = [
        check_eig_oracle(),
        check_mixing(),
        check_tracker(corrupt=corrupt_tracker),
        check_average_dynamics(),
        check_single_node(),
        check_sign_symmetry(),
        check_coefficient_decay(),
        check_lipschitz(),
        check_p_radius(),
        check_fastpca_convergence(alpha, strict_alpha),
    ]
    lines = [c.line() for c in checks]
    return all(c.passed for c in checks), lines, time.perf_counter() - t0
