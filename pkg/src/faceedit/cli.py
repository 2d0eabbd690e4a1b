"""Command-line driver: recovery, the three edits, ablation baselines, and
study-pair bundling. Exit codes: 0 success, 2 validation error, 3 I/O error."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bundle as bio
from .config import Config
from .edits import (
    EditOptions,
    StageError,
    StudyItem,
    detail_transfer,
    makeup_transfer,
    multiplicative_baseline,
    no_detail_baseline,
    recover,
    relight,
    study_pairs,
)
from .geometry import make_sample_model
from .lighting import LightRig

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3


class _Progress:
    def __init__(self, as_json: bool):
        self.as_json = as_json

    def emit(self, stage: str, **fields) -> None:
        if self.as_json:
            print(json.dumps({"stage": stage, **fields}))
        else:
            extras = " ".join(f"{k}={v}" for k, v in fields.items())
            print(f"[{stage}] {extras}".rstrip())


def _load_config(path: str | None) -> Config:
    return Config.from_file(path) if path else Config()


def _edit_options(config: Config, detail_mode: str = "keep") -> EditOptions:
    return EditOptions(
        detail_mode=detail_mode,
        scattering_sigma=config.scattering_sigma,
        hair_bright_bias=config.hair_bright_bias,
        background_mix=config.background_mix,
    )


def _cmd_recover(args) -> int:
    progress = _Progress(args.json)
    config = _load_config(args.config)
    if args.baseline_avgface:
        config.average_face = True
    image = bio.load_image(Path(args.image))
    landmarks = bio.load_landmarks(Path(args.landmarks))
    model = bio.load_model(Path(args.model), prior_scale=config.prior_scale)
    t0 = time.perf_counter()
    rep = recover(image, landmarks, model, config)
    progress.emit("recover", seconds=round(time.perf_counter() - t0, 3),
                  theta=[round(float(t), 6) for t in rep.theta])
    bio.save_representation(rep, Path(args.out))
    bio.save_rig(Path(args.out) / "recovered_rig.json", rep.recovered_rig())
    progress.emit("save", bundle=str(args.out))
    return EXIT_OK


def _cmd_relight(args) -> int:
    progress = _Progress(args.json)
    rep = bio.load_representation(Path(args.bundle))
    config = _load_config(args.config) if args.config else rep.config
    rig = bio.load_rig(Path(args.rig)) if args.rig else rep.recovered_rig()
    opts = _edit_options(config, "none" if args.no_detail else "keep")
    if args.multiplicative:
        result = multiplicative_baseline(rep, rig, opts, config)
    elif args.no_detail:
        result = no_detail_baseline(rep, rig, opts, config)
    else:
        result = relight(rep, rig, opts, config)
    bio.save_image(Path(args.out), result.image)
    progress.emit("relight", out=str(args.out), clamped=result.clamp_count,
                  seconds=round(result.render_seconds, 3))
    return EXIT_OK


def _cmd_makeup(args) -> int:
    progress = _Progress(args.json)
    rep_in = bio.load_representation(Path(args.input_bundle))
    rep_ref = bio.load_representation(Path(args.ref_bundle))
    config = _load_config(args.config) if args.config else rep_in.config
    rig = bio.load_rig(Path(args.rig)) if args.rig else None
    result = makeup_transfer(rep_in, rep_ref, rig, _edit_options(config), config)
    bio.save_image(Path(args.out), result.image)
    progress.emit("makeup", out=str(args.out), clamped=result.clamp_count,
                  flow_refinement_failed=result.notes.get("refinement_failed", False))
    return EXIT_OK


def _cmd_detail(args) -> int:
    progress = _Progress(args.json)
    rep_in = bio.load_representation(Path(args.input_bundle))
    rep_ref = bio.load_representation(Path(args.ref_bundle))
    config = _load_config(args.config) if args.config else rep_in.config
    rig = bio.load_rig(Path(args.rig)) if args.rig else None
    regions = tuple(r.strip() for r in args.regions.split(",") if r.strip())
    result = detail_transfer(rep_in, rep_ref, regions, rig, _edit_options(config), config)
    bio.save_image(Path(args.out), result.image)
    progress.emit("detail", out=str(args.out), regions=list(regions), clamped=result.clamp_count)
    return EXIT_OK


def _cmd_study_pairs(args) -> int:
    progress = _Progress(args.json)
    edited_dir = Path(args.edited)
    orig_dir = Path(args.orig)
    names = sorted(p.name for p in edited_dir.iterdir()
                   if p.suffix.lower() == ".png" and not p.stem.endswith("_mask"))
    if not names:
        raise FileNotFoundError(f"no edited images in {edited_dir}")
    items = []
    for name in names:
        orig_path = orig_dir / name
        if not orig_path.exists():
            raise FileNotFoundError(f"missing original for {name}")
        mask_path = edited_dir / f"{Path(name).stem}_mask.png"
        mask = bio.load_mask(mask_path).astype(float) if mask_path.exists() else None
        items.append(StudyItem(
            name=name,
            edited=bio.load_image(edited_dir / name),
            original=bio.load_image(orig_path),
            mask=mask,
        ))
    pairs = study_pairs(items, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, pair in enumerate(pairs):
        left_name = f"pair{i:03d}_left.png"
        right_name = f"pair{i:03d}_right.png"
        bio.save_image(out / left_name, pair.left)
        bio.save_image(out / right_name, pair.right)
        rows.append({
            "name": pair.name,
            "left": left_name,
            "right": right_name,
            "edited_side": pair.edited_side,
            "masked": pair.masked,
        })
    manifest = {"seed": args.seed, "pairs": rows}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    progress.emit("study-pairs", out=str(out), count=len(rows))
    return EXIT_OK


def _cmd_sample_data(args) -> int:
    from .sampledata import make_portrait

    progress = _Progress(args.json)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = make_sample_model()
    bio.save_model(out / "sample_model.fmm", model)
    for seed in range(args.count):
        p = make_portrait(model, seed=seed)
        bio.save_image(out / f"{p.name}.png", p.image)
        bio.save_landmarks(out / f"{p.name}.landmarks.txt", p.landmarks)
    progress.emit("sample-data", out=str(out), portraits=args.count)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    config = _load_config(args.config)
    app = create_app(model_path=args.model, config=config)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faceedit",
                                     description="Face representation recovery and editing")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file overriding defaults")
        p.add_argument("--json", action="store_true", help="machine-readable progress output")

    p = sub.add_parser("recover", help="recover a representation bundle from an image")
    p.add_argument("image")
    p.add_argument("landmarks")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline-avgface", action="store_true",
                   help="register the average face (morph coefficients pinned to zero)")
    common(p)
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("relight", help="relight a recovered bundle")
    p.add_argument("bundle")
    p.add_argument("--rig", help="light rig JSON (default: the recovered rig)")
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--no-detail", action="store_true", help="drop the detail layer (ablation)")
    group.add_argument("--multiplicative", action="store_true", help="ratio-image ablation")
    common(p)
    p.set_defaults(func=_cmd_relight)

    p = sub.add_parser("makeup", help="transfer makeup between two bundles")
    p.add_argument("input_bundle")
    p.add_argument("ref_bundle")
    p.add_argument("--rig")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=_cmd_makeup)

    p = sub.add_parser("detail", help="transfer detail regions between two bundles")
    p.add_argument("input_bundle")
    p.add_argument("ref_bundle")
    p.add_argument("--regions", required=True, help="comma-separated region names")
    p.add_argument("--rig")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=_cmd_detail)

    p = sub.add_parser("study-pairs", help="bundle edited/original pairs for a study")
    p.add_argument("--edited", required=True)
    p.add_argument("--orig", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=_cmd_study_pairs)

    p = sub.add_parser("sample-data", help="write the sample model and synthetic portraits")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=5)
    common(p)
    p.set_defaults(func=_cmd_sample_data)

    p = sub.add_parser("serve", help="run the interactive relighting service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--model", help="model file for sessions opened from raw images")
    common(p)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, KeyError) as exc:
        print(f"error [validation]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, IOError) as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
