import numpy as np
import pytest

from fastpca import network, spectra


def make_problem(M, d, K, seed, gap=0.6, per_node=400, p=0.5, normalization="mean"):
    rng = np.random.default_rng(seed)
    lam = spectra.make_spectrum(spectra.SyntheticSpec(d=d, K=K, gap_ratio=gap))
    Y = spectra.synth_gaussian(lam, int(rng.integers(2**32)), per_node * M, int(rng.integers(2**32)))
    shards = spectra.covariance_shards(Y, spectra.even_partition(Y.shape[1], M), normalization)
    if M == 1:
        mix = network.MixingMatrix(W=np.ones((1, 1)), beta=0.0)
    else:
        mix = network.metropolis_weights(network.erdos_renyi(M, p, int(rng.integers(2**32))))
    covs = np.stack([s.local_cov for s in shards])
    truth = spectra.eig_sym(covs.mean(axis=0))
    return covs, mix, truth


@pytest.fixture
def small_problem():
    return make_problem(6, 8, 3, seed=42)


ACCEPTANCE = {}


def record(number, title, ok, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    print(ACCEPTANCE[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
