"""Sphere-projection point clouds of a frontal pool before and after FA augmentation.

Writes ``<out>/original_<axis>.csv`` and ``<out>/fa_<axis>.csv`` for external
plotting and prints the per-coordinate ranges.

    python3 scripts/sphere_coverage.py --n 2000 --out sphere
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from fullrange_hpe import geo, so3, synth


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--axis", choices=("x", "y", "z"), default="y")
    p.add_argument("--out", type=Path, default=Path("sphere"))
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    poses = so3.euler_to_rotation(synth.sample_frontal_poses(rng, args.n))
    augs = geo.variant_augmentations(args.n, "fa", rng)
    fa = np.stack([geo.transform_pose(R, a) for R, a in zip(poses, augs)])
    args.out.mkdir(parents=True, exist_ok=True)
    for name, P in (("original", poses), ("fa", fa)):
        pts = so3.sphere_project(P, args.axis)
        np.savetxt(args.out / f"{name}_{args.axis}.csv", pts, delimiter=",", header="x,y,z", comments="")
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        print(f"{name:<8} " + "  ".join(f"{c}: [{a:+.2f}, {b:+.2f}]" for c, a, b in zip("xyz", lo, hi)))


if __name__ == "__main__":
    main()
