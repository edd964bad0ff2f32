"""One-sample coverage and mean band width for every mean surface, mesh and lattice size.

Desk scale by default (50 replicates, quadratic mean, 40x40 lattice). ``--full``
runs 1000 replicates over all four means, all three meshes and both lattices.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from imagescc.experiments import run_coverage
from imagescc.parallel import default_threads
from imagescc.simulation import MEANS, named_design

ONE_SAMPLE_MEANS = [m for m in MEANS if m != "bump"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--means", nargs="+", default=None, choices=ONE_SAMPLE_MEANS)
    ap.add_argument("--n", type=int, nargs="+", default=[200])
    ap.add_argument("--grids", type=int, nargs="+", default=None)
    ap.add_argument("--meshes", nargs="+", default=None)
    ap.add_argument("--reps", type=int, default=None)
    ap.add_argument("--B", type=int, default=1000)
    ap.add_argument("--variant", default="adjusted", choices=["basic", "adjusted"])
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--threads", type=int, default=default_threads())
    ap.add_argument("--out", type=Path, default=Path("results/coverage"))
    args = ap.parse_args(argv)

    means = args.means or (ONE_SAMPLE_MEANS if args.full else ["quadratic"])
    grids = args.grids or ([40, 79] if args.full else [40])
    meshes = args.meshes or (["brain_d1", "brain_d2", "brain_d3"] if args.full else ["brain_d1"])
    reps = args.reps or (1000 if args.full else 50)
    args.out.mkdir(parents=True, exist_ok=True)
    for mean in means:
        for n in args.n:
            for grid in grids:
                design = named_design("one_sample", mean_id=mean, n=n, grid=grid, seed=args.seed)
                table = run_coverage(design, meshes, reps=reps, B=args.B, variant=args.variant, threads=args.threads)
                stem = f"coverage_{mean}_n{n}_g{grid}"
                (args.out / f"{stem}.csv").write_text(table.to_csv())
                (args.out / f"{stem}.txt").write_text(table.to_text())
                print(table.to_text(), flush=True)


if __name__ == "__main__":
    main()
