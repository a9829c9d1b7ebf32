"""
Recover the activations of three actuators from their summed signal.

A square wave (a), a triangle wave (b) and a sine (c) are switched on in
every non-empty combination, one after the other, with idle gaps between.
Only the mixture is observed. The script clusters the frames, builds a
dictionary of phase-aligned spectra and decomposes every operation as a
time-shifted sum of the others.

    python demos/recover_three_sources.py [output-dir]
"""
import sys
from pathlib import Path

import numpy as np

from csbmf.pipeline import load_config, run_pipeline

ROOT = Path(__file__).resolve().parents[1]


def main(out_dir="demo_out/three_sources"):
    cfg = load_config(ROOT / "scenarios" / "three_sources_run.yaml")
    res = run_pipeline(cfg, out_dir)
    rep, cat = res.representation, res.catalog

    print(f"{res.centroids.N} operations after stand-by removal, {cat.n_sources} sources found")
    print("\nLambda (rows: irreducible atoms, columns: operations)")
    print(rep.lam[rep.irreducible])

    print("\noperation  energy      sources   residual")
    for c in range(rep.N):
        srcs = "+".join(str(s) for s in sorted(cat.mapping[c]))
        print(f"{c:9d}  {res.centroids.energy[c]:10.4g}  {srcs:8s}  {rep.residual[c]:.3g}")

    score = res.report["score"]
    print("\nbalanced accuracy per source:", np.round(score["balanced_accuracy"], 4))
    print(f"{score['mask_size']} transition frames excluded; artifacts in {out_dir}")


if __name__ == "__main__":
    main(*sys.argv[1:])
