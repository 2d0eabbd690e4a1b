import json
from pathlib import Path

import numpy as np
import pytest

from faceedit import bundle as bio
from faceedit.cli import main
from faceedit.edits import relight
from faceedit.lighting import LightRig


@pytest.fixture(scope="session")
def workdir(tmp_path_factory, model, portraits):
    """Sample data, config, and recovered bundles shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["sample-data", "--out", str(root / "data"), "--count", "2"]) == 0
    cfg = root / "identity.cfg"
    cfg.write_text("background_mix = 1.0\nhair_bright_bias = 1.0\n")
    for i in range(2):
        rc = main([
            "recover",
            str(root / "data" / f"portrait{i}.png"),
            str(root / "data" / f"portrait{i}.landmarks.txt"),
            "--model", str(root / "data" / "sample_model.fmm"),
            "--out", str(root / f"bundle{i}"),
            "--config", str(cfg),
        ])
        assert rc == 0
    return root


def test_cli_relight_identity(workdir):
    out = workdir / "identity.png"
    rc = main([
        "relight", str(workdir / "bundle0"),
        "--rig", str(workdir / "bundle0" / "recovered_rig.json"),
        "--out", str(out),
    ])
    assert rc == 0
    original = bio.load_image(workdir / "data" / "portrait0.png")
    relit = bio.load_image(out)
    diff = np.abs(relit - original)
    assert (diff <= 1 / 255 + 1e-9).all(axis=2).mean() >= 0.999


def test_cli_relight_matches_library(workdir):
    out = workdir / "lib_equiv.png"
    assert main(["relight", str(workdir / "bundle0"), "--out", str(out)]) == 0
    rep = bio.load_representation(workdir / "bundle0")
    from faceedit.cli import _edit_options
    result = relight(rep, rep.recovered_rig(), _edit_options(rep.config), rep.config)
    assert out.read_bytes() == bio.image_to_png_bytes(result.image)


def test_cli_makeup_self_transfer(workdir):
    out = workdir / "makeup_self.png"
    rc = main(["makeup", str(workdir / "bundle0"), str(workdir / "bundle0"), "--out", str(out)])
    assert rc == 0
    original = bio.load_image(workdir / "data" / "portrait0.png")
    rep = bio.load_representation(workdir / "bundle0")
    face = rep.face_mask()
    result = bio.load_image(out)
    assert (np.abs(result - original).max(axis=2)[face] <= 1 / 255 + 1e-9).all()


def test_cli_detail_transfer_runs(workdir):
    out = workdir / "detail.png"
    rc = main([
        "detail", str(workdir / "bundle0"), str(workdir / "bundle1"),
        "--regions", "nose,mouth", "--out", str(out),
    ])
    assert rc == 0
    assert out.exists()


def test_cli_baseline_flags(workdir):
    rc = main(["relight", str(workdir / "bundle0"), "--multiplicative",
               "--out", str(workdir / "mult.png")])
    assert rc == 0
    original = bio.load_image(workdir / "data" / "portrait0.png")
    mult = bio.load_image(workdir / "mult.png")
    np.testing.assert_array_equal(mult, original)  # identity rig: ratio is one
    rc = main(["relight", str(workdir / "bundle0"), "--no-detail",
               "--out", str(workdir / "nodetail.png")])
    assert rc == 0


def test_cli_study_pairs_deterministic(workdir):
    edited = workdir / "edited"
    orig = workdir / "orig"
    edited.mkdir(exist_ok=True)
    orig.mkdir(exist_ok=True)
    rng = np.random.default_rng(0)
    for i in range(6):
        img = rng.uniform(size=(16, 16, 3))
        bio.save_image(orig / f"s{i}.png", img)
        bio.save_image(edited / f"s{i}.png", np.clip(img + 0.05, 0, 1))
    # one masked item: the original must receive the same mask
    mask = np.zeros((16, 16), bool)
    mask[:8] = True
    bio.save_mask(edited / "s0_mask.png", mask)

    for run in ("pairsA", "pairsB"):
        rc = main(["study-pairs", "--edited", str(edited), "--orig", str(orig),
                   "--seed", "7", "--out", str(workdir / run)])
        assert rc == 0
    a = (workdir / "pairsA" / "manifest.json").read_bytes()
    b = (workdir / "pairsB" / "manifest.json").read_bytes()
    assert a == b

    manifest = json.loads(a)
    row = next(r for r in manifest["pairs"] if r["name"] == "s0.png")
    assert row["masked"]
    left = bio.load_image(workdir / "pairsA" / row["left"])
    right = bio.load_image(workdir / "pairsA" / row["right"])
    # both sides blacked out below the mask, including the unedited one
    assert left[8:].max() == 0.0 and right[8:].max() == 0.0


def test_cli_exit_codes(workdir, capsys):
    # unknown flag: argparse exits 2
    with pytest.raises(SystemExit) as exc:
        main(["relight", str(workdir / "bundle0"), "--bogus-flag", "--out", "x.png"])
    assert exc.value.code == 2
    # missing bundle: I/O error
    assert main(["relight", str(workdir / "missing"), "--out", str(workdir / "x.png")]) == 3
    # validation error inside the pipeline: bad region name
    rc = main(["detail", str(workdir / "bundle0"), str(workdir / "bundle1"),
               "--regions", "nostril", "--out", str(workdir / "x.png")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "nostril" in err or "region" in err


def test_cli_json_progress(workdir, capsys):
    rc = main(["relight", str(workdir / "bundle0"), "--out", str(workdir / "j.png"), "--json"])
    assert rc == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()]
    assert any(l["stage"] == "relight" for l in lines)


def test_cli_avgface_baseline(workdir):
    rc = main([
        "recover",
        str(workdir / "data" / "portrait0.png"),
        str(workdir / "data" / "portrait0.landmarks.txt"),
        "--model", str(workdir / "data" / "sample_model.fmm"),
        "--out", str(workdir / "bundle_avg"),
        "--baseline-avgface",
    ])
    assert rc == 0
    rep = bio.load_representation(workdir / "bundle_avg")
    assert np.all(rep.fit.omega_i == 0.0) and np.all(rep.fit.omega_e == 0.0)
    assert rep.fit.scale > 0
