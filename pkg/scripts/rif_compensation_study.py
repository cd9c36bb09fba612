"""Near/far restoration and reconstruction PSNR for each fixed compensation exponent.

Two diffuse (z=4) points at 0.5 m and 2.0 m. The reference intensity is the
reconstruction of the same scene rendered without fall-off, i.e. perfect
compensation.

    python scripts/rif_compensation_study.py [--out table.csv]
"""
import argparse

import numpy as np

from phasor_nlos import io
from phasor_nlos.forward import Scene, ScenePoint, render_transient
from phasor_nlos.geometry import ApertureGrid, ReconGeometry, distance_grid, distance_to_bin, scan_positions
from phasor_nlos.lpc import EXPONENTS, compensation_weights, fixed_compensation
from phasor_nlos.metrics import psnr
from phasor_nlos.phasor import render_views
from phasor_nlos.pipeline import PipelineConfig, reconstruct


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--bin-ps", type=float, default=33.0)
    ap.add_argument("--nt", type=int, default=512)
    ap.add_argument("--albedo-far", type=float, default=0.5)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    grid = ApertureGrid(args.n, args.n, 1.0)
    dt = args.bin_ps * 1e-12
    scan = scan_positions(grid).reshape(grid.ny, grid.nx, 3)
    near = ScenePoint((*scan[args.n * 2 // 3, args.n // 4, :2], 0.5), 1.0, 4)
    far = ScenePoint((*scan[args.n // 4, args.n * 2 // 3, :2], 2.0), args.albedo_far, 4)
    scene = Scene([near, far], "near_far")
    data = render_transient(scene, grid, args.nt, dt).data
    ref_data = render_transient(scene, grid, args.nt, dt, falloff=False).data

    cfg = PipelineConfig(grid, ReconGeometry.matching(grid, 32), args.nt, dt)
    reference = render_views(reconstruct(ref_data, cfg)).intensity
    w = compensation_weights(distance_grid(args.nt, dt))
    split = int(distance_to_bin(1.25, dt))
    near_part, far_part = data.copy(), data.copy()
    near_part[..., split:] = 0
    far_part[..., :split] = 0
    i_near = np.unravel_index(np.argmax(near_part), data.shape)
    i_far = np.unravel_index(np.argmax(far_part), data.shape)

    rows = []
    print(f"{'z':>3} {'near/far (albedo-normalized)':>30} {'psnr dB':>9}")
    for z in EXPONENTS:
        comp = fixed_compensation(data, w, z)
        ratio = comp[i_near] / comp[i_far] / (near.albedo / far.albedo)
        score = psnr(reference, render_views(reconstruct(data, cfg, z)).intensity)
        rows.append([z, repr(float(ratio)), repr(score)])
        print(f"{z:>3} {ratio:>30.4f} {score:>9.2f}")
    if args.out:
        io.atomic_write(args.out, io.csv_bytes(["exponent", "near_far_ratio", "psnr_db"], rows, {"args": vars(args)}))


if __name__ == "__main__":
    main()
