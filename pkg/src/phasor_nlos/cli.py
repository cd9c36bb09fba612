"""Command-line interface: ``nlos render|reconstruct|train|eval|sweep``.

Failures print one line ``error: <Category>: <message>`` on stderr and exit
with 2 (usage) or 1 (domain). Outputs carry a provenance record with the
full argument echo, seed and format versions; nothing time-dependent is
written, so identical invocations produce identical files.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .apf import apf_sigma
from .errors import NlosError, ShapeMismatch, UsageError
from .forward import NoiseConfig, add_spad_noise, ground_truth_views, render_transient
from .geometry import ApertureGrid, ReconGeometry
from .lpc import EXPONENTS
from .metrics import PSNR_CAP_DB, capped, center_crop, evaluate, psnr, ssim
from .optim import LossWeights, TrainConfig, train
from .phasor import render_views
from .pipeline import PipelineConfig, reconstruct


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _provenance(command: str, args: argparse.Namespace) -> dict:
    echo = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}
    return {"command": command, "config": echo, "seed": getattr(args, "seed", None), "versions": io.format_versions()}


def _ps(value: float) -> float:
    return value * 1e-12


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _config(tv, args) -> PipelineConfig:
    if tv.kind == "complex_phasor":
        raise UsageError("reconstruction needs a real transient volume, got complex data")
    geom = ReconGeometry.matching(tv.aperture, args.nvz, args.zmin, args.zmax)
    return PipelineConfig(
        tv.aperture, geom, tv.nt, tv.bin_width_s, args.lambda_c, args.band_threshold, 0.05
    )


def _compensation(spec: str | None, cfg: PipelineConfig):
    if spec is None or spec.lower() == "none":
        return None
    if spec in {str(e) for e in EXPONENTS}:
        return int(spec)
    lpc, _ = io.read_params(spec)
    if lpc.logits.shape != (3, cfg.grid.nx, cfg.grid.ny):
        raise ShapeMismatch(f"params logits {lpc.logits.shape} do not fit a {cfg.grid.nx}x{cfg.grid.ny} aperture")
    return lpc


def _views(tv, cfg, compensation, sigma_s, oracle=False):
    vol = reconstruct(tv.data.astype(float), cfg, compensation, sigma_s, oracle)
    return render_views(vol, "hard")


def cmd_render(args) -> int:
    scene = io.read_scene(args.scene)
    grid = ApertureGrid(args.nx, args.ny, args.extent)
    tv = render_transient(scene, grid, args.nt, _ps(args.bin_ps), falloff=not args.no_falloff)
    if args.snr_db is not None:
        tv = add_spad_noise(tv, NoiseConfig(args.snr_db, args.seed))
    io.write_ntv(args.out, tv)
    meta = {**tv.meta, "falloff": not args.no_falloff}
    if args.gt_intensity or args.gt_depth:
        geom = ReconGeometry.matching(grid, args.nvz, args.zmin, args.zmax)
        gt = ground_truth_views(scene, grid, geom)
        if args.gt_intensity:
            io.write_image(args.gt_intensity, gt.intensity)
        if args.gt_depth:
            io.write_image(args.gt_depth, gt.depth, (args.zmin, args.zmax))
    io.write_json(f"{args.out}.json", {"meta": meta, "points": len(scene.points), "provenance": _provenance("render", args)})
    return 0


def cmd_reconstruct(args) -> int:
    tv = io.read_ntv(args.in_path)
    cfg = _config(tv, args)
    comp = _compensation(args.comp_exp, cfg)
    sigma = _ps(args.sigma_ps) if args.sigma_ps is not None else cfg.default_sigma
    views = _views(tv, cfg, comp, sigma, args.oracle)
    io.write_image(args.out_intensity, views.intensity)
    io.write_image(args.out_depth, views.depth, (args.zmin, args.zmax))
    io.write_json(
        f"{args.out_intensity}.json",
        {"sigma_s": sigma, "wavelength_m": cfg.wavelength, "provenance": _provenance("reconstruct", args)},
    )
    return 0


def cmd_train(args) -> int:
    folder = Path(args.scenes)
    if not folder.is_dir():
        raise UsageError(f"{folder} is not a directory")
    files = sorted(p for p in folder.iterdir() if p.suffix in (".yaml", ".yml"))
    if not files:
        raise UsageError(f"no scene files (*.yaml) in {folder}")
    scenes = [io.read_scene(p) for p in files]
    grid = ApertureGrid(args.nx, args.ny, args.extent)
    geom = ReconGeometry.matching(grid, args.nvz, args.zmin, args.zmax)
    cfg = PipelineConfig(grid, geom, args.nt, _ps(args.bin_ps), args.lambda_c, args.band_threshold, args.tau)
    config = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        optimizer=args.optimizer,
        snr_db=args.snr_db,
        seed=args.seed,
        loss=LossWeights(args.lam),
    )
    result = train(scenes, config, cfg)
    prov = _provenance("train", args)
    prov["scenes"] = [p.name for p in files]
    prov["history"] = result.history
    prov["best_epoch"] = result.best_epoch
    prov["sigma_s"] = [apf_sigma(a) for a in result.apf]
    io.write_params(args.out, result.lpc, result.apf, prov)
    return 0


def _read_pair(pred, gt, depth=False):
    a, _ = io.read_image(pred)
    b, _ = io.read_image(gt)
    if a.shape != b.shape:
        kind = "depth" if depth else "intensity"
        raise ShapeMismatch(f"{kind} images differ in size: {a.shape} vs {b.shape}")
    return a, b


def cmd_eval(args) -> int:
    pi, gi = _read_pair(args.pred_i, args.gt_i)
    pd, gd = _read_pair(args.pred_d, args.gt_d, depth=True)
    if pi.shape != pd.shape:
        raise ShapeMismatch(f"intensity {pi.shape} and depth {pd.shape} images differ in size")
    scores = evaluate(pi, gi, pd, gd, args.crop)
    scores["psnr"] = capped(scores["psnr"])
    rows = [[k, repr(float(scores[k]))] for k in ("psnr", "ssim", "rmse", "mad")]
    prov = _provenance("eval", args)
    prov["psnr_cap_db"] = PSNR_CAP_DB
    io.atomic_write(args.out, io.csv_bytes(["metric", "value"], rows, prov))
    return 0


def cmd_sweep(args) -> int:
    tv = io.read_ntv(args.in_path)
    cfg = _config(tv, args)
    gt, _ = io.read_image(args.gt_i)
    if gt.shape != (cfg.grid.nx, cfg.grid.ny):
        raise ShapeMismatch(f"ground truth {gt.shape} vs reconstruction {(cfg.grid.nx, cfg.grid.ny)}")
    score = {"psnr": lambda a, b: capped(psnr(a, b)), "ssim": ssim}[args.metric]
    gt = center_crop(gt, args.crop)
    rows = []
    for value in _floats(args.values):
        if args.param == "sigma":
            comp, sigma = _compensation(args.comp_exp, cfg), _ps(value)
        else:
            if value not in EXPONENTS:
                raise UsageError(f"compensation exponent must be one of {EXPONENTS}, got {value:g}")
            comp = int(value)
            sigma = _ps(args.sigma_ps) if args.sigma_ps is not None else cfg.default_sigma
        views = _views(tv, cfg, comp, sigma)
        rows.append([args.param, f"{value:g}", args.metric, repr(float(score(gt, center_crop(views.intensity, args.crop))))])
    io.atomic_write(args.out, io.csv_bytes(["param", "value", "metric", "score"], rows, _provenance("sweep", args)))
    return 0


def _recon_flags(p: argparse.ArgumentParser):
    p.add_argument("--lambda-c", type=float, default=None, help="carrier wavelength in meters (default 4x scan spacing)")
    p.add_argument("--zmin", type=float, default=0.25)
    p.add_argument("--zmax", type=float, default=2.25)
    p.add_argument("--nvz", type=int, default=32)
    p.add_argument("--band-threshold", type=float, default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlos", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("render", help="simulate a confocal transient measurement")
    p.add_argument("--scene", required=True)
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--ny", type=int, required=True)
    p.add_argument("--nt", type=int, required=True)
    p.add_argument("--bin-ps", type=float, required=True)
    p.add_argument("--extent", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-falloff", action="store_true", help="drop the 1/r**z loss (perfect-compensation reference)")
    p.add_argument("--gt-intensity", default=None)
    p.add_argument("--gt-depth", default=None)
    p.add_argument("--zmin", type=float, default=0.25)
    p.add_argument("--zmax", type=float, default=2.25)
    p.add_argument("--nvz", type=int, default=32)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("reconstruct", help="phasor-field reconstruction to intensity/depth images")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--sigma-ps", type=float, default=None)
    p.add_argument("--comp-exp", default=None, help="1, 2, 4, none or a params file")
    p.add_argument("--out-intensity", required=True)
    p.add_argument("--out-depth", required=True)
    p.add_argument("--oracle", action="store_true", help="use the direct summation propagator")
    _recon_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", help="fit LPC logits and APF widths on a folder of scenes")
    p.add_argument("--scenes", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=6e-5)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--nx", type=int, default=16)
    p.add_argument("--ny", type=int, default=16)
    p.add_argument("--nt", type=int, default=256)
    p.add_argument("--bin-ps", type=float, default=66.0)
    p.add_argument("--extent", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=1.0, help="depth loss weight")
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--optimizer", choices=["adaptive_moment", "plain_gd"], default="adaptive_moment")
    _recon_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM/RMSE/MAD report")
    p.add_argument("--pred-i", required=True)
    p.add_argument("--gt-i", required=True)
    p.add_argument("--pred-d", required=True)
    p.add_argument("--gt-d", required=True)
    p.add_argument("--crop", type=float, default=0.75)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="score reconstructions over one parameter")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--param", choices=["sigma", "comp-exp"], required=True)
    p.add_argument("--values", required=True, help="comma-separated; sigma values in ps")
    p.add_argument("--metric", choices=["psnr", "ssim"], default="psnr")
    p.add_argument("--gt-i", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--crop", type=float, default=1.0)
    p.add_argument("--sigma-ps", type=float, default=None)
    p.add_argument("--comp-exp", default=None)
    _recon_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def _fail(category: str, message: str, code: int) -> int:
    text = " ".join(str(message).split())
    print(f"error: {category}: {text}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return int(args.func(args) or 0)
    except NlosError as exc:
        return _fail(exc.category, exc, exc.exit_code)
    except OSError as exc:
        return _fail("IoError", exc, 1)
    except ValueError as exc:
        return _fail("InvalidValue", exc, 1)


if __name__ == "__main__":
    sys.exit(main())
