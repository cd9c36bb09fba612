import csv
from importlib.resources import files
from pathlib import Path

import numpy as np
import pytest

from phasor_nlos import io
from phasor_nlos.cli import main

BUNDLED = str(files("phasor_nlos") / "data" / "point_target.yaml")
SMALL = ["--nx", "16", "--ny", "16", "--nt", "256", "--bin-ps", "66", "--extent", "1"]
VOLUME = ["--zmin", "0.3", "--zmax", "1.5", "--nvz", "16"]

NEAR_FAR = """\
name: near_far
points:
  - position: [-0.2, 0.0, 0.5]
    falloff_exponent: 4
  - position: [0.2, 0.1, 2.0]
    falloff_exponent: 4
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err
    return code, err


def rows(path):
    return [r for r in csv.reader(Path(path).read_text().splitlines()) if r and not r[0].startswith("#")]


def test_render_then_oracle_reconstruct(tmp_path, capsys):
    m, i, d = tmp_path / "m.ntv", tmp_path / "i.pgm", tmp_path / "d.pgm"
    assert run(capsys, "render", "--scene", BUNDLED, *SMALL, "--out", m) == (0, "")
    assert run(capsys, "reconstruct", "--in", m, "--oracle", "--out-intensity", i, "--out-depth", d, *VOLUME) == (0, "")
    intensity, _ = io.read_image(i)
    depth, zr = io.read_image(d)
    assert zr == (0.3, 1.5)
    ix, iy = np.unravel_index(np.argmax(intensity), intensity.shape)
    scene = io.read_scene(BUNDLED).points[0].position_m
    xs = -0.5 + np.arange(16) / 15
    assert abs(xs[ix] - scene[0]) <= 1 / 15 and abs(xs[iy] - scene[1]) <= 1 / 15
    assert abs(depth[ix, iy] - scene[2]) <= 1.2 / 16


def test_eval_size_mismatch(tmp_path, capsys):
    io.write_image(tmp_path / "a.pgm", np.zeros((16, 16)))
    io.write_image(tmp_path / "b.pgm", np.zeros((12, 16)))
    code, err = run(capsys, "eval", "--pred-i", tmp_path / "a.pgm", "--gt-i", tmp_path / "b.pgm",
                    "--pred-d", tmp_path / "a.pgm", "--gt-d", tmp_path / "a.pgm", "--out", tmp_path / "r.csv")
    assert code == 1 and err.startswith("error: ShapeMismatch:") and err.count("\n") == 1
    assert not (tmp_path / "r.csv").exists()


def test_eval_report(tmp_path, capsys):
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(16, 16))
    io.write_image(tmp_path / "i.pgm", img)
    io.write_image(tmp_path / "d.pgm", rng.uniform(0.3, 1.5, (16, 16)), (0.3, 1.5))
    args = ["--pred-i", tmp_path / "i.pgm", "--gt-i", tmp_path / "i.pgm", "--pred-d", tmp_path / "d.pgm",
            "--gt-d", tmp_path / "d.pgm", "--out", tmp_path / "r.csv"]
    assert run(capsys, "eval", *args)[0] == 0
    table = dict(rows(tmp_path / "r.csv")[1:])
    assert float(table["psnr"]) == 99.0 and float(table["ssim"]) == 1.0 and float(table["rmse"]) == 0.0
    footer = (tmp_path / "r.csv").read_text()
    assert "# versions:" in footer and "# config:" in footer and "# psnr_cap_db: 99.0" in footer


def test_comp_exp_sweep_prefers_exponent_four(tmp_path, capsys):
    scene = tmp_path / "near_far.yaml"
    scene.write_text(NEAR_FAR)
    vol = ["--nvz", "16"]
    assert run(capsys, "render", "--scene", scene, *SMALL, "--out", tmp_path / "m.ntv")[0] == 0
    assert run(capsys, "render", "--scene", scene, *SMALL, "--no-falloff", "--out", tmp_path / "ref.ntv")[0] == 0
    assert run(capsys, "reconstruct", "--in", tmp_path / "ref.ntv", "--out-intensity", tmp_path / "ref.pgm",
               "--out-depth", tmp_path / "refd.pgm", *vol)[0] == 0
    assert run(capsys, "sweep", "--in", tmp_path / "m.ntv", "--param", "comp-exp", "--values", "1,2,4",
               "--metric", "psnr", "--gt-i", tmp_path / "ref.pgm", "--out", tmp_path / "s.csv", *vol)[0] == 0
    table = rows(tmp_path / "s.csv")
    assert table[0] == ["param", "value", "metric", "score"]
    scores = {r[1]: float(r[3]) for r in table[1:]}
    assert max(scores, key=scores.get) == "4"


def test_sigma_sweep(tmp_path, capsys):
    m = tmp_path / "m.ntv"
    assert run(capsys, "render", "--scene", BUNDLED, *SMALL, "--out", m, "--gt-intensity", tmp_path / "g.pgm", *VOLUME)[0] == 0
    assert run(capsys, "sweep", "--in", m, "--param", "sigma", "--values", "150,300", "--gt-i", tmp_path / "g.pgm",
               "--out", tmp_path / "s.csv", *VOLUME)[0] == 0
    assert [r[1] for r in rows(tmp_path / "s.csv")[1:]] == ["150", "300"]


def full_session(folder: Path, capsys):
    scenes = folder / "scenes"
    scenes.mkdir()
    (scenes / "a.yaml").write_text("name: a\npoints:\n  - position: [0.05, -0.1, 0.7]\n")
    tiny = SMALL
    vol = ["--zmin", "0.3", "--zmax", "1.1", "--nvz", "8"]
    steps = [
        ["render", "--scene", "scenes/a.yaml", *tiny, "--out", "m.ntv", "--snr-db", "5", "--seed", "7",
         "--gt-intensity", "gi.pgm", "--gt-depth", "gd.pgm", *vol],
        ["reconstruct", "--in", "m.ntv", "--comp-exp", "2", "--out-intensity", "i.pgm", "--out-depth", "d.pgm", *vol],
        ["eval", "--pred-i", "i.pgm", "--gt-i", "gi.pgm", "--pred-d", "d.pgm", "--gt-d", "gd.pgm", "--out", "r.csv"],
        ["sweep", "--in", "m.ntv", "--param", "comp-exp", "--values", "1,2", "--gt-i", "gi.pgm", "--out", "s.csv", *vol],
        ["train", "--scenes", "scenes", "--epochs", "2", "--lr", "0.05", "--snr-db", "5", "--seed", "3", "--out", "p.json", *tiny, *vol],
        ["reconstruct", "--in", "m.ntv", "--comp-exp", "p.json", "--out-intensity", "li.pgm", "--out-depth", "ld.pgm", *vol],
    ]
    for argv in steps:
        code, err = run(capsys, *argv)
        assert (code, err) == (0, ""), argv
    return {p.name: p.read_bytes() for p in sorted(folder.iterdir()) if p.is_file()}


def test_same_arguments_same_bytes(tmp_path, capsys, monkeypatch):
    outputs = []
    for name in ("one", "two"):
        folder = tmp_path / name
        folder.mkdir()
        monkeypatch.chdir(folder)
        outputs.append(full_session(folder, capsys))
    assert outputs[0].keys() == outputs[1].keys()
    assert len(outputs[0]) >= 12
    for key in outputs[0]:
        assert outputs[0][key] == outputs[1][key], key


def test_seed_changes_noise(tmp_path, capsys):
    base = ["render", "--scene", BUNDLED, *SMALL, "--snr-db", "5"]
    run(capsys, *base, "--seed", "1", "--out", tmp_path / "a.ntv")
    run(capsys, *base, "--seed", "2", "--out", tmp_path / "b.ntv")
    assert not np.array_equal(io.read_ntv(tmp_path / "a.ntv").data, io.read_ntv(tmp_path / "b.ntv").data)


def corrupt(tmp_path, capsys, edit):
    m = tmp_path / "m.ntv"
    run(capsys, "render", "--scene", BUNDLED, *SMALL, "--out", m)
    m.write_bytes(edit(m.read_bytes()))
    return run(capsys, "reconstruct", "--in", m, "--out-intensity", tmp_path / "i.pgm", "--out-depth", tmp_path / "d.pgm")


@pytest.mark.parametrize(
    "edit,category",
    [
        (lambda b: b"XXXX" + b[4:], "BadMagic"),
        (lambda b: b[:-1], "TruncatedFile"),
        (lambda b: b[:4] + (9).to_bytes(4, "little") + b[8:], "VersionUnsupported"),
    ],
)
def test_corrupt_inputs(tmp_path, capsys, edit, category):
    code, err = corrupt(tmp_path, capsys, edit)
    assert code == 1 and err.startswith(f"error: {category}:") and err.count("\n") == 1


@pytest.mark.parametrize(
    "argv,code,category",
    [
        ([], 2, "UsageError"),
        (["frobnicate"], 2, "UsageError"),
        (["render", "--scene", BUNDLED], 2, "UsageError"),
        (["render", "--scene", BUNDLED, *SMALL, "--out", "x.ntv", "--nx", "many"], 2, "UsageError"),
        (["render", "--scene", "missing.yaml", *SMALL, "--out", "x.ntv"], 1, "IoError"),
        (["render", "--scene", BUNDLED, "--nx", "16", "--ny", "16", "--nt", "64", "--bin-ps", "66", "--extent", "1",
          "--out", "x.ntv"], 1, "OutOfRange"),
        (["render", "--scene", BUNDLED, *SMALL, "--snr-db", "nan", "--out", "x.ntv"], 1, "InvalidSnr"),
        (["render", "--scene", BUNDLED, "--nx", "1", "--ny", "16", "--nt", "256", "--bin-ps", "66", "--extent", "1",
          "--out", "x.ntv"], 1, "InvalidValue"),
        (["train", "--scenes", "nowhere", "--out", "p.json"], 2, "UsageError"),
        (["eval", "--pred-i", "a.pgm", "--gt-i", "a.pgm", "--pred-d", "a.pgm", "--gt-d", "a.pgm", "--out", "r.csv"], 1, "IoError"),
    ],
)
def test_error_exits(tmp_path, capsys, monkeypatch, argv, code, category):
    monkeypatch.chdir(tmp_path)
    got, err = run(capsys, *argv)
    assert got == code
    assert err.startswith(f"error: {category}:") and err.count("\n") == 1


def test_scene_error_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: x\npoints:\n  - position: [0, 0, 1]\n    colour: red\n")
    code, err = run(capsys, "render", "--scene", bad, *SMALL, "--out", tmp_path / "m.ntv")
    assert code == 1 and err.startswith("error: SceneError:") and "line 4" in err


def test_sweep_rejects_unknown_exponent(tmp_path, capsys):
    m = tmp_path / "m.ntv"
    run(capsys, "render", "--scene", BUNDLED, *SMALL, "--out", m, "--gt-intensity", tmp_path / "g.pgm", *VOLUME)
    code, err = run(capsys, "sweep", "--in", m, "--param", "comp-exp", "--values", "3", "--gt-i", tmp_path / "g.pgm",
                    "--out", tmp_path / "s.csv", *VOLUME)
    assert code == 2 and err.startswith("error: UsageError:")
    code, err = run(capsys, "sweep", "--in", m, "--param", "sigma", "--values", "1,x", "--gt-i", tmp_path / "g.pgm",
                    "--out", tmp_path / "s.csv", *VOLUME)
    assert code == 2 and err.startswith("error: UsageError:")


def test_params_must_fit_aperture(tmp_path, capsys):
    from phasor_nlos.apf import ApfParams
    from phasor_nlos.lpc import LpcParams

    io.write_params(tmp_path / "p.json", LpcParams.zeros(4, 4), [ApfParams()])
    m = tmp_path / "m.ntv"
    run(capsys, "render", "--scene", BUNDLED, *SMALL, "--out", m)
    code, err = run(capsys, "reconstruct", "--in", m, "--comp-exp", tmp_path / "p.json",
                    "--out-intensity", tmp_path / "i.pgm", "--out-depth", tmp_path / "d.pgm")
    assert code == 1 and err.startswith("error: ShapeMismatch:")
