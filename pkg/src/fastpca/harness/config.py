"""Experiment configuration: an INI file with one section per algorithm.

Example::

    [experiment]
    seed = 7
    trials = 10
    budget = 3000
    K = 5
    accounting = paper
    out = runs/er_gap08

    [data]
    source = synthetic
    d = 20
    gap = 0.8
    mode = distinct
    samples_per_node = 5000

    [topology]
    kind = erdos_renyi
    M = 20
    p = 0.5

    [fastpca]
    alpha = 0.7

    [dsa]
    alpha = 0.7

    [seqdistpm]
    t_consensus = 50

    [oi]

Keys in ``[experiment]`` can be overridden from the command line.
"""

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from ..errors import ValidationError

ALGORITHMS = ("fastpca", "dsa", "seqdistpm", "oi")
DEFAULT_ALPHA = {"erdos_renyi": 0.7, "cycle": 0.1}


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    alpha: Optional[float] = None
    t_consensus: int = 50
    outer_iters: Optional[int] = None  # per component, seqdistpm only


@dataclass(frozen=True)
class ExperimentConfig:
    # data
    source: str = "synthetic"
    d: int = 20
    gap: float = 0.8
    mode: str = "distinct"
    top_value: float = 1.0
    samples_per_node: int = 5000
    data_path: tuple = ()
    strategy: str = "uniform"
    normalization: str = "mean"
    # topology
    topology: str = "erdos_renyi"
    M: int = 20
    p: float = 0.5
    # run
    K: int = 5
    algorithms: tuple = field(default_factory=lambda: (AlgorithmSpec("fastpca"),))
    budget: int = 3000
    trials: int = 1
    seed: int = 0
    accounting: str = "paper"
    safe_alpha: bool = False
    out: str = "runs/out"

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError(f"trials must be >= 1, got {self.trials}")
        if self.budget <= 0:
            raise ValidationError(f"comm budget must be positive, got {self.budget}")
        if self.accounting not in ("paper", "payload"):
            raise ValidationError(f"accounting must be 'paper' or 'payload', got {self.accounting!r}")
        if not self.algorithms:
            raise ValidationError("no algorithms configured")
        for a in self.algorithms:
            if a.name not in ALGORITHMS:
                raise ValidationError(f"unknown algorithm {a.name!r}")
            if a.alpha is not None and not a.alpha > 0:
                raise ValidationError(f"alpha for {a.name} must be positive")
            if a.t_consensus < 1:
                raise ValidationError(f"t_consensus for {a.name} must be >= 1")
        if self.source != "synthetic" and not self.data_path:
            raise ValidationError("dataset source needs a data path")

    def alpha_for(self, name) -> float:
        for a in self.algorithms:
            if a.name == name and a.alpha is not None:
                return a.alpha
        return DEFAULT_ALPHA.get(self.topology, 0.1)

    def algorithm(self, name) -> Optional[AlgorithmSpec]:
        return next((a for a in self.algorithms if a.name == name), None)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "out":
                continue  # keeps metadata identical wherever the run is written
            if f.name == "algorithms":
                for a in v:
                    out[f"algo.{a.name}.alpha"] = self.alpha_for(a.name) if a.name in ("fastpca", "dsa") else ""
                    if a.name == "seqdistpm":
                        out[f"algo.{a.name}.t_consensus"] = a.t_consensus
                        out[f"algo.{a.name}.outer_iters"] = "" if a.outer_iters is None else a.outer_iters
            elif isinstance(v, tuple):
                out[f.name] = ";".join(str(x) for x in v)
            else:
                out[f.name] = v
        return out


def apply_settings(cfg: ExperimentConfig, settings) -> ExperimentConfig:
    """Apply ``key=value`` overrides; ``algo.key=value`` targets an algorithm section."""
    kw, algos = {}, {a.name: a for a in cfg.algorithms}
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}
    for item in settings or ():
        key, sep, raw = item.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ValidationError(f"override {item!r} is not key=value")
        try:
            if "." in key:
                name, attr = key.split(".", 1)
                if name not in ALGORITHMS or attr not in ("alpha", "t_consensus", "outer_iters"):
                    raise ValidationError(f"unknown override {key!r}")
                conv = float if attr == "alpha" else int
                algos[name] = replace(algos.get(name, AlgorithmSpec(name)), **{attr: conv(raw)})
            elif key in types and key != "algorithms":
                t = types[key]
                if t is bool:
                    kw[key] = _flag(raw)
                elif t is tuple:
                    kw[key] = tuple(p.strip() for p in raw.split(","))
                else:
                    kw[key] = t(raw)
            else:
                raise ValidationError(f"unknown override {key!r}")
        except ValidationError:
            raise
        except ValueError as exc:
            raise ValidationError(f"override {key} = {raw!r}: {exc}") from exc
    order = [a for a in ALGORITHMS if a in algos]
    return replace(cfg, algorithms=tuple(algos[a] for a in order), **kw)


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    raw = sec[key].strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ValidationError(f"[{sec.name}] {key} = {raw!r}: {exc}") from exc


def _flag(raw):
    return raw.lower() in ("1", "true", "yes", "on")


def parse_config(text, base_dir=".") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep K and M case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"cannot parse config: {exc}") from exc
    exp = cp["experiment"] if cp.has_section("experiment") else None
    data = cp["data"] if cp.has_section("data") else None
    topo = cp["topology"] if cp.has_section("topology") else None

    algos = []
    for name in ALGORITHMS:
        if cp.has_section(name):
            sec = cp[name]
            algos.append(AlgorithmSpec(
                name=name,
                alpha=_get(sec, "alpha", float, None),
                t_consensus=_get(sec, "t_consensus", int, 50),
                outer_iters=_get(sec, "outer_iters", int, None),
            ))
    d = ExperimentConfig()
    source = _get(data, "source", str, d.source)
    paths = ()
    if source != "synthetic":
        paths = tuple(str((Path(base_dir) / p.strip()).resolve()) if not Path(p.strip()).is_absolute() else p.strip()
                      for p in source.split(","))
        source = "dataset"
    return ExperimentConfig(
        source=source,
        data_path=paths,
        d=_get(data, "d", int, d.d),
        gap=_get(data, "gap", float, d.gap),
        mode=_get(data, "mode", str, d.mode),
        top_value=_get(data, "top_value", float, d.top_value),
        samples_per_node=_get(data, "samples_per_node", int, d.samples_per_node),
        strategy=_get(data, "strategy", str, d.strategy),
        normalization=_get(data, "normalization", str, d.normalization),
        topology=_get(topo, "kind", str, d.topology).lower().replace("-", "_"),
        M=_get(topo, "M", int, d.M),
        p=_get(topo, "p", float, d.p),
        K=_get(exp, "K", int, d.K),
        algorithms=tuple(algos) if algos else d.algorithms,
        budget=_get(exp, "budget", int, d.budget),
        trials=_get(exp, "trials", int, d.trials),
        seed=_get(exp, "seed", int, d.seed),
        accounting=_get(exp, "accounting", str, d.accounting),
        safe_alpha=_get(exp, "safe_alpha", _flag, d.safe_alpha),
        out=_get(exp, "out", str, d.out),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)
