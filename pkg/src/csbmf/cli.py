"""Command line: ``csbmf {synth,run,sweep-tau,landscape,score}``.

Settings come from the built-in defaults, then the ``--config`` file, then
explicit flags, each overriding the previous one.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, metrics, regcost, synthgen
from .io import read_matrix_csv
from .pipeline import PipelineConfig, PipelineError, load_config, run_pipeline, sweep_tau
from .spectral import StftConfig

__all__ = ["main", "build_parser"]

# flag destination -> config key
_FLAG_KEYS = {
    "input": "input.path",
    "format": "input.format",
    "channel": "input.channel",
    "fs": "input.fs",
    "scenario": "input.scenario",
    "truth": "input.truth",
    "window_size": "stft.window_size",
    "hop": "stft.hop",
    "window": "stft.window_function",
    "k": "clustering.k",
    "seed": "clustering.seed",
    "n_init": "clustering.n_init",
    "feature": "clustering.feature",
    "strategy": "delta.strategy",
    "min_run": "delta.min_run",
    "edge_trim": "delta.edge_trim",
    "standby_ratio": "delta.standby_ratio",
    "gamma": "resync.gamma",
    "starts": "resync.starts_per_atom",
    "max_starts": "resync.max_starts",
    "tau": "decomposition.tau",
    "base": "decomposition.base",
    "out": "output.dir",
}


def _add_pipeline_flags(p):
    p.add_argument("--config", help="YAML or JSON pipeline configuration")
    g = p.add_argument_group("input")
    g.add_argument("--input", help="recorded signal (CSV or WAV)")
    g.add_argument("--format", choices=["csv", "wav"])
    g.add_argument("--channel", help="value column (index or name) of a multi-channel file")
    g.add_argument("--fs", type=float, help="sampling frequency, overrides the inferred one")
    g.add_argument("--scenario", help="synthetic scenario file, used when no input is given")
    g.add_argument("--truth", help="per-sample truth CSV used for scoring")
    g = p.add_argument_group("analysis")
    g.add_argument("--window-size", type=int)
    g.add_argument("--hop", type=int)
    g.add_argument("--window", choices=["hann", "hamming", "rectangular"])
    g.add_argument("--k", type=int, help="number of operations (estimated when unset)")
    g.add_argument("--seed", type=int)
    g.add_argument("--n-init", type=int)
    g.add_argument("--feature", choices=["stft_magnitude", "log_magnitude"])
    g.add_argument("--strategy", choices=["max_amplitude", "dominant_ls"])
    g.add_argument("--min-run", type=int)
    g.add_argument("--edge-trim", type=int)
    g.add_argument("--standby-ratio", type=float)
    g.add_argument("--gamma", type=float, help="Tikhonov weight on shifts")
    g.add_argument("--starts", type=int, help="multi-start points per atom")
    g.add_argument("--max-starts", type=int)
    g.add_argument("--tau", type=float, help="residual acceptance threshold")
    g.add_argument("--base", type=int, help="multiplicity base (2 = binary)")
    g.add_argument("--no-merge", action="store_true", help="keep phase configurations apart")
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="csbmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a scenario to signal and truth CSV files")
    p.add_argument("--scenario", help="scenario file (default: the built-in three-source example)")
    p.add_argument("--sigma", type=float, help="override the noise level")
    p.add_argument("--seed", type=int, help="override the noise seed")
    p.add_argument("--out", default="synth_out")

    p = sub.add_parser("run", help="recover source activations from a signal")
    _add_pipeline_flags(p)

    p = sub.add_parser("sweep-tau", help="number of sources over a log grid of thresholds")
    _add_pipeline_flags(p)
    p.add_argument("--tau-min", type=float, default=1e2)
    p.add_argument("--tau-max", type=float, default=1e6)
    p.add_argument("--num", type=int, default=9)

    p = sub.add_parser("landscape", help="regularized cost over a coefficient grid on the toy")
    p.add_argument("--family", choices=sorted(regcost.FAMILIES), default="A2")
    p.add_argument("--resolution", type=int, default=41)
    p.add_argument("--c1-range", type=float, nargs=2, default=(-0.5, 1.5))
    p.add_argument("--c2-range", type=float, nargs=2, default=(-0.5, 1.5))
    p.add_argument("--without", action="append", default=[],
                   choices=["lambda_col", "triangle_weight", "binary_weight", "tikhonov",
                            "row_weight"], help="drop a regularization term (repeatable)")
    p.add_argument("--window-size", type=int, default=32, help="toy period in samples")
    p.add_argument("--out", default="landscape.csv")

    p = sub.add_parser("score", help="compare activations with a per-sample truth")
    p.add_argument("--recovered", required=True, help="activations CSV written by 'run'")
    p.add_argument("--truth", required=True, help="truth CSV written by 'synth'")
    p.add_argument("--config", help="pipeline configuration giving the frame layout")
    p.add_argument("--window-size", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--out", help="write the report as JSON")
    return parser


def _pipeline_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {key: getattr(args, dest) for dest, key in _FLAG_KEYS.items()
                 if getattr(args, dest, None) is not None}
    if getattr(args, "no_merge", False):
        overrides["decomposition.merge"] = False
    return cfg.updated(overrides) if overrides else cfg


def _cmd_synth(args):
    sc = synthgen.load_scenario(args.scenario) if args.scenario else synthgen.three_source_scenario()
    if args.sigma is not None:
        sc.schedule.noise_sigma = args.sigma
    if args.seed is not None:
        sc.seed = args.seed
    x, truth = sc.generate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    synthgen.write_signal_csv(x, out / "signal.csv")
    names = [s.name or f"source_{i}" for i, s in enumerate(sc.sources)]
    synthgen.write_truth_csv(truth, x.fs, out / "truth.csv", names)
    synthgen.save_scenario(sc, out / "scenario.yaml")
    print(f"{x.samples.size} samples at {x.fs:g} Hz written to {out}")
    return 0


def _cmd_run(args):
    res = run_pipeline(_pipeline_config(args))
    rep = res.report
    print(f"sources: {rep['decomposition']['n_sources']}")
    for c, m in sorted(res.catalog.mapping.items()):
        print(f"  operation {c}: sources {sorted(m)}")
    if rep.get("score"):
        acc = ", ".join(f"{v:.3f}" for v in rep["score"]["balanced_accuracy"])
        print(f"balanced accuracy: {acc}")
    print(f"artifacts in {Path(res.artifacts['report.json']).parent}")
    return 0


def _cmd_sweep(args):
    if not 0 < args.tau_min <= args.tau_max or args.num < 1:
        raise ValueError("need 0 < tau-min <= tau-max and num >= 1")
    taus = np.geomspace(args.tau_min, args.tau_max, args.num)
    rows = sweep_tau(_pipeline_config(args), taus)
    print(f"{'tau':>12} {'sources':>8} {'mean residual':>14}")
    for tau, S, mean in rows:
        print(f"{tau:12.4g} {S:8d} {mean:14.4g}")
    return 0


def _cmd_landscape(args):
    C = regcost.regularization_toy(args.window_size)
    params = regcost.REFERENCE_PARAMS.without(*args.without) if args.without else regcost.REFERENCE_PARAMS
    land = regcost.landscape_grid(args.family, C, params, tuple(args.c1_range), tuple(args.c2_range),
                                  args.resolution)
    land.to_csv(args.out)
    c1, c2 = land.argmin
    print(f"family {args.family}: minimum {land.minimum:.6g} at c1={c1:g}, c2={c2:g}")
    print(f"grid written to {args.out}")
    return 0


def _cmd_score(args):
    if args.config:
        cfg = load_config(args.config)
        W, H = cfg.stft.window_size, cfg.stft.hop
    else:
        W, H = None, None
    W = args.window_size or W
    H = args.hop or H
    if W is None or H is None:
        raise ValueError("frame layout unknown: pass --window-size and --hop or --config")
    names, truth = read_matrix_csv(args.truth, skip_columns=1)
    with open(args.truth) as fh:
        next(fh)
        t0, t1 = (float(next(fh).split(",")[0]) for _ in range(2))
    fs = 1.0 / (t1 - t0)
    ft = metrics.align_frames(truth.astype(int), fs, StftConfig(W, H, "rectangular", fs))
    header, act = read_matrix_csv(args.recovered, skip_columns=1)
    if header and header[0] == "start_sample":
        act = act[1:]
    T = min(act.shape[1], ft.labels.shape[1])
    ev = metrics.score(act[:, :T].astype(int), ft.labels[:, :T], ft.mask[:T])
    text = ev.to_json(args.out)
    print(text)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "run": _cmd_run,
    "sweep-tau": _cmd_sweep,
    "landscape": _cmd_landscape,
    "score": _cmd_score,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except PipelineError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
