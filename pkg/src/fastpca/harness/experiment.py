"""Monte-Carlo experiment runner: data, topology, algorithms, traces and sweeps."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import analysis, consensus_pca as cp, ingest, network, spectra
from ..errors import FastPCAError, ValidationError
from .config import AlgorithmSpec, ExperimentConfig

log = logging.getLogger(__name__)

SAFE_ALPHA_FRACTION = 0.9
TARGET_ERROR = 1e-6


class TrialError(FastPCAError):
    """A module error annotated with the trial index and stage."""


@dataclass(frozen=True)
class TrialSeeds:
    rotation: int
    samples: int
    topology: int
    init: int
    shuffle: int


@dataclass
class TrialSetup:
    index: int
    seeds: TrialSeeds
    covs: np.ndarray  # (M, d, d)
    spectrum: spectra.Spectrum
    topology: network.Topology
    mixing: network.MixingMatrix
    n_samples: int

    @property
    def eigenvalues(self):
        return self.spectrum.eigenvalues


def trial_seeds(master, n) -> list:
    out = []
    for child in np.random.SeedSequence(int(master)).spawn(n):
        out.append(TrialSeeds(*(int(v) for v in child.generate_state(5, dtype=np.uint64))))
    return out


@lru_cache(maxsize=4)
def _load(paths):
    return ingest.load_dataset(list(paths))


def build_trial(cfg: ExperimentConfig, index, seeds: TrialSeeds) -> TrialSetup:
    stage = "data"
    try:
        if cfg.source == "synthetic":
            spec = spectra.SyntheticSpec(d=cfg.d, K=cfg.K, gap_ratio=cfg.gap, mode=cfg.mode,
                                         top_value=cfg.top_value, seed=seeds.rotation)
            lam = spectra.make_spectrum(spec)
            N = cfg.M * cfg.samples_per_node
            Y = spectra.synth_gaussian(lam, seeds.rotation, N, seeds.samples)
            shards = spectra.covariance_shards(Y, spectra.even_partition(N, cfg.M), cfg.normalization)
        else:
            ds = _load(tuple(cfg.data_path))
            shards = ingest.shard(ds, cfg.M, cfg.strategy, seeds.shuffle, cfg.normalization)
            N = ds.N
        stage = "ground truth"
        spectrum = spectra.eig_sym(spectra.mean_local_covariance(shards))
        stage = "topology"
        topo = network.build_topology(cfg.topology, cfg.M, cfg.p, seeds.topology)
        mixing = network.metropolis_weights(topo)
    except FastPCAError as exc:
        raise TrialError(f"trial {index}, stage {stage}: {exc}") from exc
    return TrialSetup(index=index, seeds=seeds, covs=cp.covariance_stack(shards), spectrum=spectrum,
                      topology=topo, mixing=mixing, n_samples=N)


def theory_bound(setup: TrialSetup, K) -> float:
    try:
        return analysis.step_size_bound(setup.eigenvalues, K, setup.mixing.beta)
    except ValidationError:
        return float("nan")


def _row(t, comm, X, spectrum, K, tracker=None):
    return analysis.TraceRow(
        t=t,
        comm_units=comm,
        angle_error=analysis.angle_error(X, spectrum, K),
        consensus_err=analysis.consensus_error(X),
        tracker_resid=tracker,
        dist_opt=analysis.distance_to_optimum(X, spectrum, K),
    )


def run_fastpca(setup: TrialSetup, K, alpha, budget, accounting="paper", corrupt_at=None) -> analysis.Trace:
    d = setup.covs.shape[1]
    state = cp.fastpca_init(setup.covs, d, K, setup.seeds.init)
    trace = analysis.Trace("fastpca", meta={"alpha": alpha})

    def record(st):
        resid = np.linalg.norm(st.S.mean(axis=0) - st.H.mean(axis=0), axis=0)
        trace.append(_row(st.iteration, st.comm_units, st.X, setup.spectrum, K, resid))

    record(state)
    while True:
        step = 2 if accounting == "payload" else 1
        if state.comm_units + step > budget:
            break
        state = cp.fastpca_step(state, setup.mixing, alpha, setup.covs, accounting)
        if corrupt_at is not None and state.iteration == corrupt_at:
            S = state.S.copy()
            S[0] += 1e-3
            state = replace(state, S=S)
        record(state)
    trace.meta["final_X"] = cp.normalize_columns(state.X)
    return trace


def run_dsa(setup: TrialSetup, K, alpha, budget) -> analysis.Trace:
    d = setup.covs.shape[1]
    state = cp.dsa_init(setup.covs, d, K, setup.seeds.init)
    trace = analysis.Trace("dsa", meta={"alpha": alpha})
    trace.append(_row(0, 0, state.X, setup.spectrum, K))
    while state.comm_units + 1 <= budget:
        state = cp.dsa_step(state, setup.mixing, alpha, setup.covs)
        trace.append(_row(state.iteration, state.comm_units, state.X, setup.spectrum, K))
    return trace


def run_seqdistpm(setup: TrialSetup, K, t_consensus, budget, outer_iters=None) -> analysis.Trace:
    """Sequential distributed power method; by default the budget is split evenly over components."""
    d = setup.covs.shape[1]
    if outer_iters is None:
        outer_iters = max(1, budget // (t_consensus * K))
    X0 = spectra.random_orthonormal(d, K, np.random.default_rng(setup.seeds.init))
    trace = analysis.Trace("seqdistpm", meta={"t_consensus": t_consensus, "outer_iters": outer_iters})
    trace.append(_row(0, 0, np.repeat(X0[None], setup.covs.shape[0], axis=0), setup.spectrum, K))
    for t, (X, comm) in enumerate(cp.seq_dist_pm_iter(setup.covs, setup.mixing, K, t_consensus, outer_iters, X0), 1):
        if comm > budget:
            break
        trace.append(_row(t, comm, X, setup.spectrum, K))
    return trace


def run_oi(setup: TrialSetup, K, budget) -> analysis.Trace:
    """Centralized orthogonal iteration on the pooled covariance; one unit per iteration."""
    d = setup.covs.shape[1]
    C = setup.covs.mean(axis=0)
    Q0 = spectra.random_orthonormal(d, K, np.random.default_rng(setup.seeds.init))
    trace = analysis.Trace("oi", meta={
        "caveat": "OI converges to a rotated basis; per-vector angles are only meaningful for distinct eigenvalues",
    })
    for t, Q in enumerate(cp.centralized_oi_iter(C, K, budget, Q0)):
        trace.append(_row(t, t, Q, setup.spectrum, K))
    return trace


def run_algorithm(spec: AlgorithmSpec, setup: TrialSetup, cfg: ExperimentConfig, alpha=None, corrupt_at=None):
    try:
        if spec.name == "fastpca":
            a = alpha if alpha is not None else _alpha(cfg, setup, "fastpca")
            return run_fastpca(setup, cfg.K, a, cfg.budget, cfg.accounting, corrupt_at)
        if spec.name == "dsa":
            a = alpha if alpha is not None else _alpha(cfg, setup, "dsa")
            return run_dsa(setup, cfg.K, a, cfg.budget)
        if spec.name == "seqdistpm":
            return run_seqdistpm(setup, cfg.K, spec.t_consensus, cfg.budget, spec.outer_iters)
        if spec.name == "oi":
            return run_oi(setup, cfg.K, cfg.budget)
    except FastPCAError as exc:
        raise TrialError(f"trial {setup.index}, stage {spec.name}: {exc}") from exc
    raise ValidationError(f"unknown algorithm {spec.name!r}")


def _alpha(cfg, setup, name):
    if cfg.safe_alpha and name == "fastpca":
        bound = theory_bound(setup, cfg.K)
        if not np.isfinite(bound):
            raise ValidationError("--safe-alpha needs distinct top-K eigenvalues")
        return SAFE_ALPHA_FRACTION * bound
    return cfg.alpha_for(name)


def align(trace: analysis.Trace, budget) -> np.ndarray:
    """Sample a trace on the comm-unit grid 0..budget, holding the last value."""
    vals = np.array([r.csv_values() for r in trace.rows], dtype=float)
    comm = vals[:, 1]
    grid = np.arange(budget + 1)
    idx = np.searchsorted(comm, grid, side="right") - 1
    out = vals[np.clip(idx, 0, None)].copy()
    out[idx < 0, 2:] = np.nan
    out[:, 0] = grid
    out[:, 1] = grid
    return out


def mean_trace(traces, budget) -> np.ndarray:
    stacked = np.stack([align(t, budget) for t in traces])
    return stacked.mean(axis=0)


def _write(path: Path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _meta_text(items) -> str:
    lines = []
    for k, v in items:
        if isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            v = repr(float(v))
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def run_trials(cfg: ExperimentConfig, jobs=1):
    """Run every trial and algorithm; returns ``(setups, {algo: [Trace, ...]})``."""
    seeds = trial_seeds(cfg.seed, cfg.trials)

    def one(i):
        setup = build_trial(cfg, i, seeds[i])
        return setup, {a.name: run_algorithm(a, setup, cfg) for a in cfg.algorithms}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, range(cfg.trials)))
    else:
        results = [one(i) for i in range(cfg.trials)]
    setups = [r[0] for r in results]
    traces = {a.name: [r[1][a.name] for r in results] for a in cfg.algorithms}
    return setups, traces


def run(cfg: ExperimentConfig, jobs=1, strict_alpha=False) -> dict:
    """Run the experiment and write per-trial CSVs, mean CSVs and ``metadata.txt``.

    Returns a summary dict with output paths and warnings.
    """
    out = Path(cfg.out)
    setups, traces = run_trials(cfg, jobs)
    written = []
    for name, tr_list in traces.items():
        for setup, tr in zip(setups, tr_list):
            p = out / f"trial{setup.index:03d}_{name}.csv"
            _write(p, tr.to_csv())
            written.append(p)
        p = out / f"mean_{name}.csv"
        _write(p, analysis.format_csv(mean_trace(tr_list, cfg.budget)))
        written.append(p)

    warnings = []
    meta = [(f"config.{k}", v) for k, v in cfg.echo().items()]
    for s in setups:
        bound = theory_bound(s, cfg.K)
        meta += [
            (f"trial{s.index}.seeds", " ".join(str(v) for v in vars(s.seeds).values())),
            (f"trial{s.index}.beta", s.mixing.beta),
            (f"trial{s.index}.edges", len(s.topology.edges)),
            (f"trial{s.index}.n_samples", s.n_samples),
            (f"trial{s.index}.eigenvalues", s.eigenvalues[: min(len(s.eigenvalues), cfg.K + 5)]),
            (f"trial{s.index}.alpha_bound", bound),
        ]
        if "fastpca" in traces:
            a = traces["fastpca"][s.index].meta["alpha"]
            meta.append((f"trial{s.index}.fastpca_alpha", float(a)))
            if np.isfinite(bound) and a >= bound:
                msg = f"trial {s.index}: fastpca alpha {a:g} is above the step-size bound {bound:.3e}"
                meta.append((f"trial{s.index}.alpha_warning", msg))
                if strict_alpha:
                    warnings.append(msg)
    if "oi" in traces:
        meta.append(("oi.caveat", traces["oi"][0].meta["caveat"]))
    p = out / "metadata.txt"
    _write(p, _meta_text(meta))
    written.append(p)
    for w in warnings:
        log.warning(w)
    return {"files": written, "warnings": warnings, "setups": setups, "traces": traces}


def first_crossing(values, comm, target):
    hit = np.flatnonzero(np.asarray(values) < target)
    return int(comm[hit[0]]) if hit.size else None


def sweep(cfg: ExperimentConfig, axis, values, jobs=1) -> str:
    """Vary one factor for FAST-PCA and summarize each setting in a CSV row.

    ``alpha`` sets the step size, ``gap`` the eigengap ratio and ``beta``
    the mixing parameter, reached by making the Metropolis matrix lazier
    (W_c = (1 - c) I + c W), so targets must be >= the base graph's beta.
    """
    if axis not in ("alpha", "beta", "gap"):
        raise ValidationError(f"unknown sweep axis {axis!r}")
    values = list(values)
    if not values:
        raise ValidationError("sweep needs at least one value")
    seeds = trial_seeds(cfg.seed, cfg.trials)
    base_fast = cfg.algorithm("fastpca") or AlgorithmSpec("fastpca")
    lines = ["value,final_angle_error,rho_hat,r_squared,comm_to_1e-6"]
    for v in values:
        run_cfg = cfg
        if axis == "gap":
            run_cfg = replace(cfg, gap=float(v))
        alpha = float(v) if axis == "alpha" else None
        traces = []
        for i in range(cfg.trials):
            setup = build_trial(run_cfg, i, seeds[i])
            if axis == "beta":
                setup.mixing = lazy_mixing(setup.mixing, float(v))
            traces.append(run_algorithm(base_fast, setup, run_cfg, alpha=alpha))
        mean = mean_trace(traces, cfg.budget)
        err = mean[:, 2]
        try:
            fit = analysis.rate_fit(err)
            rho, r2 = fit.rho, fit.r_squared
        except ValidationError:
            rho = r2 = float("nan")
        hit = first_crossing(err, mean[:, 1], TARGET_ERROR)
        lines.append(",".join([f"{float(v):.17g}", f"{err[-1]:.17g}", f"{rho:.17g}", f"{r2:.17g}",
                               "" if hit is None else str(hit)]))
    return "\n".join(lines) + "\n"


def lazy_mixing(mixing: network.MixingMatrix, target_beta) -> network.MixingMatrix:
    """(1 - c) I + c W with c chosen so that beta equals ``target_beta``."""
    if not mixing.beta <= target_beta < 1:
        raise ValidationError(f"target beta {target_beta} must lie in [{mixing.beta:.6g}, 1)")
    M = mixing.M
    if M == 1:
        return mixing
    lam2 = np.sort(np.linalg.eigvalsh(mixing.W))[::-1][1]
    c = (1 - target_beta) / (1 - lam2)
    W = (1 - c) * np.eye(M) + c * mixing.W
    return network.MixingMatrix(W=W, beta=network.beta_of(W))
