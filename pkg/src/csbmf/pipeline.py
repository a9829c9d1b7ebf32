"""End-to-end recovery: signal to labels, dictionary, representation and activations."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np
import yaml

from . import clustering, decomposer, metrics, regcost, resync, spectral, synthgen
from .io import ingest, read_matrix_csv

__all__ = [
    "InputConfig",
    "StftSection",
    "ClusteringConfig",
    "DeltaConfig",
    "DecompositionConfig",
    "OutputConfig",
    "PipelineConfig",
    "PipelineError",
    "RunResult",
    "STAGES",
    "load_config",
    "save_config",
    "run_pipeline",
    "sweep_tau",
]

log = logging.getLogger(__name__)

# stage name -> process exit code used by the command line
STAGES = {
    "config": 2,
    "ingest": 10,
    "stft": 11,
    "clustering": 12,
    "delta_stft": 13,
    "standby": 14,
    "residual_matrix": 15,
    "decomposition": 16,
    "activation": 17,
    "scoring": 18,
    "report": 19,
}


@dataclass
class InputConfig:
    path: str | None = None  # recorded signal (CSV or WAV)
    format: str | None = None
    channel: str | int | None = None
    fs: float | None = None  # overrides the inferred sampling frequency
    scenario: str | None = None  # synthetic scenario file, used when no path is given
    truth: str | None = None  # per-sample truth CSV for scoring a recorded signal


@dataclass
class StftSection:
    window_size: int | None = None  # required, no silent default
    hop: int | None = None  # required
    window_function: str = "hann"


@dataclass
class ClusteringConfig:
    k: int | None = None  # None: estimated by silhouette over k_range
    k_range: list = field(default_factory=lambda: [2, 12])
    seed: int = 0
    n_init: int = 1
    feature: str = "stft_magnitude"


@dataclass
class DeltaConfig:
    strategy: str = "max_amplitude"
    min_run: int = 2
    unwrap: bool = True
    edge_trim: int = 1
    standby_ratio: float = 0.5


@dataclass
class DecompositionConfig:
    tau: float = 1e4
    base: int = 2
    merge: bool = True


@dataclass
class OutputConfig:
    dir: str = "csbmf_out"


@dataclass
class PipelineConfig:
    input: InputConfig = field(default_factory=InputConfig)
    stft: StftSection = field(default_factory=StftSection)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    delta: DeltaConfig = field(default_factory=DeltaConfig)
    resync: resync.ResyncConfig = field(default_factory=resync.ResyncConfig)
    decomposition: DecompositionConfig = field(default_factory=DecompositionConfig)
    regularization: regcost.RegParams = field(default_factory=lambda: regcost.REFERENCE_PARAMS)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _build(cls, d or {}, "config")

    def updated(self, overrides):
        """Copy with ``{"section.key": value}`` overrides applied."""
        d = self.to_dict()
        for key, value in overrides.items():
            section, _, name = key.partition(".")
            if section not in d or name not in d[section]:
                raise ValueError(f"unknown setting {key!r}")
            d[section][name] = value
        return PipelineConfig.from_dict(d)


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ValueError(f"{where}: expected a mapping, got {type(d).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(d) - set(known)
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in d.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}")
        else:
            kwargs[name] = _coerce(known[name].type, value, f"{where}.{name}")
    return cls(**kwargs)


def _coerce(annotation, value, where):
    # YAML 1.1 reads "1.0e4" as a string; numbers are normalized by declared type
    kinds = {t.strip() for t in str(annotation).split("|")}
    if value is None or isinstance(value, bool):
        return value
    try:
        if "float" in kinds and "str" not in kinds:
            return float(value)
        if "int" in kinds and "str" not in kinds:
            if float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
    except (TypeError, ValueError):
        raise ValueError(f"{where}: cannot interpret {value!r} as {annotation}") from None
    return value


def load_config(path) -> PipelineConfig:
    """Read a YAML or JSON config; relative input paths resolve against its folder."""
    path = Path(path)
    with open(path) as fh:
        d = json.load(fh) if path.suffix == ".json" else yaml.safe_load(fh)
    cfg = PipelineConfig.from_dict(d)
    for name in ("path", "scenario", "truth"):
        value = getattr(cfg.input, name)
        if value and not Path(value).is_absolute():
            value = str((path.parent / value).resolve())
            setattr(cfg.input, name, value)
        if value and not Path(value).exists():
            raise ValueError(f"input.{name}: {value} does not exist")
    return cfg


def save_config(cfg: PipelineConfig, path):
    path = Path(path)
    with open(path, "w") as fh:
        if path.suffix == ".json":
            json.dump(cfg.to_dict(), fh, indent=2)
            fh.write("\n")
        else:
            yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


class PipelineError(RuntimeError):
    def __init__(self, stage, cause, artifacts=()):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.artifacts = list(artifacts)

    @property
    def exit_code(self):
        return STAGES.get(self.stage, 1)


@dataclass
class RunResult:
    report: dict
    artifacts: dict  # name -> path
    representation: decomposer.Representation | None = None
    catalog: decomposer.SourceCatalog | None = None
    activations: np.ndarray | None = None
    centroids: spectral.CentroidSet | None = None
    residuals: resync.ResidualMatrix | None = None


class _Run:
    """Stage bookkeeping: names the failing stage and records written files."""

    def __init__(self, out):
        self.out = out
        self.artifacts = {}
        self.stage = None

    def path(self, name):
        p = self.out / name
        self.artifacts[name] = str(p)
        return p


def _load_signal(cfg: PipelineConfig):
    if cfg.input.path:
        x = ingest(cfg.input.path, cfg.input.format, cfg.input.channel, cfg.input.fs)
        truth = None
        if cfg.input.truth:
            _, truth = read_matrix_csv(cfg.input.truth)
            truth = truth.astype(int)
        return x, truth, None
    if cfg.input.scenario:
        sc = synthgen.load_scenario(cfg.input.scenario)
        x, truth = sc.generate()
        return x, truth, sc
    raise ValueError("no input: set input.path or input.scenario")


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> RunResult:
    """Run every stage and write the artifacts into the output directory.

    Artifacts: ``labels.csv``, ``residual_matrix.csv``, ``lambda.csv``,
    ``activations.csv``, ``catalog.csv`` and ``report.json``. On failure a
    report marking the failed stage and the partial artifacts is written and
    :class:`PipelineError` is raised.
    """
    return _guarded(cfg, out_dir, _execute)


def sweep_tau(cfg: PipelineConfig, taus, out_dir=None):
    """Greedy selection for every threshold on one residual matrix.

    Writes ``tau_sweep.csv`` (tau, number of sources, mean accepted residual)
    next to the labels and residual matrix, and returns the table rows.
    """
    def body(cfg, run, report):
        front = _front(cfg, run, report)
        run.stage = "decomposition"
        rows = decomposer.tau_sweep(front["R"], taus)
        with open(run.path("tau_sweep.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "n_sources", "mean_residual"])
            for tau, S, mean in rows:
                w.writerow([repr(tau), S, repr(mean)])
        report["tau_sweep"] = [list(r) for r in rows]
        run.stage = "report"
        report["artifacts"] = sorted(run.artifacts)
        _write_report(run.path("sweep_report.json"), report)
        return rows

    return _guarded(cfg, out_dir, body, "sweep_report.json")


def _guarded(cfg, out_dir, body, report_name="report.json"):
    out = Path(out_dir or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(out)
    report = {"status": "ok", "config": cfg.to_dict()}
    try:
        return body(cfg, run, report)
    except Exception as exc:  # noqa: BLE001 - every failure is attributed to its stage
        stage = run.stage or "config"
        report.update(status="failed", failed_stage=stage, error=f"{type(exc).__name__}: {exc}",
                      partial_artifacts=sorted(run.artifacts))
        _write_report(out / report_name, report)
        raise PipelineError(stage, exc, run.artifacts) from exc


def _front(cfg: PipelineConfig, run: _Run, report: dict):
    """Stages up to the residual matrix, shared by full runs and tau sweeps."""
    run.stage = "ingest"
    x, truth, _ = _load_signal(cfg)
    report["signal"] = {"samples": int(x.samples.size), "fs": float(x.fs)}

    run.stage = "stft"
    if cfg.stft.window_size is None or cfg.stft.hop is None:
        raise ValueError("stft.window_size and stft.hop must be set")
    scfg = spectral.StftConfig(cfg.stft.window_size, cfg.stft.hop, cfg.stft.window_function, x.fs)
    Z = spectral.stft(x, scfg)
    report["n_frames"] = int(Z.n_frames)

    run.stage = "clustering"
    F = clustering.extract_features(Z, cfg.clustering.feature)
    k = cfg.clustering.k
    if k is None:
        lo, hi = cfg.clustering.k_range
        k = clustering.estimate_num_operations(F, (lo, min(hi, Z.n_frames - 1)),
                                               seed=cfg.clustering.seed, n_init=cfg.clustering.n_init)
    cr = clustering.kmeans(F, int(k), seed=cfg.clustering.seed, n_init=cfg.clustering.n_init)
    report["clustering"] = {"k": int(k), "inertia": cr.inertia, "iterations": cr.n_iter}

    run.stage = "delta_stft"
    _, C, lifted = spectral.delta_stft(x, cr.labels, scfg, cfg.delta.min_run, cfg.delta.strategy,
                                       cfg.delta.unwrap, cfg.delta.edge_trim)
    sub = np.full(Z.n_frames, -1)
    for g, (a, b) in enumerate(lifted.runs):
        sub[a:b + 1] = g
    clustering.write_labels_csv(cr.vector, run.path("labels.csv"), {"sub_operation": sub})

    run.stage = "standby"
    C2, removed = spectral.remove_standby(C, cfg.delta.standby_ratio)
    report["centroids"] = {
        "sub_operations": int(C.N),
        "standby_removed": [int(i) for i in removed],
        "kept": [int(i) for i in C2.ids],
        "energy": [float(e) for e in C2.energy],
        "period": [None if not np.isfinite(p) else float(p) for p in C2.period],
        "flagged": [int(i) for i in C2.ids[C2.flagged]],
    }

    run.stage = "residual_matrix"
    R = resync.build_residual_matrix(C2, cfg.decomposition.base, cfg.decomposition.tau, cfg.resync)
    R.to_csv(run.path("residual_matrix.csv"))
    report["residual_matrix"] = {
        "shape": list(R.values.shape),
        "status_counts": {s.value: int(np.sum(R.status == s)) for s in resync.CellStatus},
        "warnings": list(R.warnings),
    }
    return {"x": x, "truth": truth, "scfg": scfg, "Z": Z, "lifted": lifted, "C2": C2, "R": R}


def _execute(cfg: PipelineConfig, run: _Run, report: dict) -> RunResult:
    front = _front(cfg, run, report)
    x, truth, scfg, Z = front["x"], front["truth"], front["scfg"], front["Z"]
    lifted, C2, R = front["lifted"], front["C2"], front["R"]

    run.stage = "decomposition"
    rep = decomposer.greedy_select(R, cfg.decomposition.tau)
    if cfg.decomposition.merge:
        cat = decomposer.merge_configurations(rep, C2, cfg.decomposition.tau, cfg.resync)
    else:
        cat = decomposer.unmerged_catalog(rep)
    decomposer.write_matrix_csv(rep.lam, run.path("lambda.csv"), "atom", "operation")
    _write_catalog(run.path("catalog.csv"), rep, cat, C2)
    report["decomposition"] = {
        "tau": float(cfg.decomposition.tau),
        "base": int(rep.base),
        "n_sources": int(cat.n_sources),
        "irreducible": [int(i) for i in rep.irreducible],
        "groups": [[int(i) for i in g] for g in cat.groups],
        "merges": [[int(i), int(j), float(r)] for i, j, r in cat.merges],
        "chosen_combination": [int(g) for g in rep.chosen],
        "residual": [float(r) for r in rep.residual],
        "processing_order": [int(c) for c in rep.order],
    }
    if C2.N >= 2:
        report["inequalities"] = regcost.check_inequalities(
            cfg.regularization, C2, [(rep.shifts, rep.combo)])
    else:
        report["inequalities"] = None

    run.stage = "activation"
    L = lifted.labels[C2.ids].astype(int)
    act = decomposer.recover_activations(rep, L, cat)
    decomposer.write_activations_csv(act, run.path("activations.csv"), Z.starts)

    run.stage = "scoring"
    if truth is not None:
        ft = metrics.align_frames(truth, x.fs, scfg)
        ev = metrics.score(act, ft.labels, ft.mask)
        report["score"] = ev.to_dict()
    else:
        report["score"] = None

    run.stage = "report"
    report["artifacts"] = sorted(run.artifacts)
    _write_report(run.path("report.json"), report)
    return RunResult(report, dict(run.artifacts), rep, cat, act, C2, R)


def _write_catalog(path, rep, cat, C):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["operation", "atom_id", "cluster", "energy", "period", "irreducible",
                    "sources", "residual"])
        for c in range(rep.N):
            srcs = ";".join(f"{s}x{m}" if m > 1 else str(s) for s, m in sorted(cat.mapping[c].items()))
            per = C.period[c]
            w.writerow([c, int(C.ids[c]), int(C.parent[c]), repr(float(C.energy[c])),
                        repr(float(per)) if np.isfinite(per) else "", int(c in rep.irreducible),
                        srcs, repr(float(rep.residual[c]))])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _write_report(path, report):
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
