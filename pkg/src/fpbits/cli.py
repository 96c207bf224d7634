"""Command-line interface.

Subcommands cover the whole pipeline lifecycle:

* ``synth``     generate a synthetic dataset (templates + images)
* ``train``     fit a pipeline model on a dataset
* ``encode``    turn every impression into a bit-string file
* ``enroll``    train per-finger masks and enrolled references
* ``match``     score explicit pairs (fused-vector, plain, or masked bits)
* ``evaluate``  run a verification protocol and report EER
* ``compress``  EER across fold-compressed lengths
* ``inspect``   print artifact statistics

Every deliberate failure surfaces as a one-line ``error:`` message and a
nonzero exit code.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import pipeline
from .codebook import BitString
from .config import PipelineConfig, load_config, parse_config, serialize_config
from .errors import FpbitsError, ModelMissing
from .matching import fold_compress, intersection_score, lgs_score, masked_score
from .model_store import (
    load_bitstring,
    load_finger,
    load_model_file,
    save_bitstring,
    save_finger,
    save_model,
    write_file_atomic,
)
from .synth import SynthParams, synth_dataset
from .template_io import (
    GrayImage,
    MinutiaTemplate,
    parse_text_template,
    read_pgm,
    serialize_text_template,
    write_pgm,
)

TEMPLATE_DIR = "templates"
IMAGE_DIR = "images"


# ---------------------------------------------------------------------------
# dataset directory layout
# ---------------------------------------------------------------------------

def save_dataset(items: pipeline.DatasetDict, out_dir: str) -> None:
    tdir = os.path.join(out_dir, TEMPLATE_DIR)
    idir = os.path.join(out_dir, IMAGE_DIR)
    os.makedirs(tdir, exist_ok=True)
    os.makedirs(idir, exist_ok=True)
    for (sid, iid), (template, image) in sorted(items.items()):
        stem = f"{sid}_{iid}"
        write_file_atomic(
            os.path.join(tdir, stem + ".fpt"),
            serialize_text_template(template).encode("ascii"),
        )
        write_file_atomic(os.path.join(idir, stem + ".pgm"), write_pgm(image))


def load_dataset(root: str) -> pipeline.DatasetDict:
    tdir = os.path.join(root, TEMPLATE_DIR)
    idir = os.path.join(root, IMAGE_DIR)
    if not os.path.isdir(tdir) or not os.path.isdir(idir):
        raise ModelMissing(
            f"dataset {root!r} must contain {TEMPLATE_DIR}/ and {IMAGE_DIR}/"
        )
    items: pipeline.DatasetDict = {}
    for name in sorted(os.listdir(tdir)):
        if not name.endswith(".fpt"):
            continue
        stem = name[: -len(".fpt")]
        sid, _, iid = stem.rpartition("_")
        if not sid or not iid:
            raise ModelMissing(f"template filename {name!r} is not <subject>_<impression>.fpt")
        image_path = os.path.join(idir, stem + ".pgm")
        if not os.path.exists(image_path):
            raise ModelMissing(f"image {image_path!r} missing for template {name!r}")
        with open(os.path.join(tdir, name), "r", encoding="utf-8") as fh:
            template = parse_text_template(fh.read(), subject_id=sid, impression_id=iid)
        with open(image_path, "rb") as fh:
            image = read_pgm(fh.read())
        items[(sid, iid)] = (template, image)
    if not items:
        raise ModelMissing(f"dataset {root!r} holds no templates")
    return items


def _resolve_config(args) -> PipelineConfig:
    config = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = getattr(args, "set", None) or []
    if overrides:
        text = "\n".join(kv.replace("=", " = ", 1) for kv in overrides)
        config = parse_config(text, base=config)
    return config


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    params = SynthParams(
        n_subjects=args.subjects,
        n_impressions=args.impressions,
        width=args.width,
        height=args.height,
        n_minutiae=args.minutiae,
        rotation_deg=args.rotation,
        translation_px=args.translation,
        dropout=args.dropout,
        insertion=args.insertion,
        noise_std=args.noise_std,
        seed=args.seed,
    )
    items = synth_dataset(params)
    save_dataset(items, args.out)
    print(f"wrote {len(items)} impressions under {args.out}")
    return 0


def cmd_train(args) -> int:
    config = _resolve_config(args)
    items = load_dataset(args.dataset)
    model = pipeline.train_model(items, config, verbose=not args.quiet)
    write_file_atomic(args.out, save_model(model))
    print(
        f"model: K={model.codebook.k} n_p={config.n_p} "
        f"n_m={model.geometry.n_m} n_t={model.geometry.n_t} -> {args.out}"
    )
    return 0


def cmd_encode(args) -> int:
    model = load_model_file(args.model)
    items = load_dataset(args.dataset)
    os.makedirs(args.out_dir, exist_ok=True)
    encoded = pipeline.encode_dataset(items, model)
    for (sid, iid), enc in sorted(encoded.items()):
        path = os.path.join(args.out_dir, f"{sid}_{iid}.fpbs")
        write_file_atomic(path, save_bitstring(enc.bits))
    print(f"wrote {len(encoded)} bit-strings under {args.out_dir}")
    return 0


def cmd_enroll(args) -> int:
    model = load_model_file(args.model)
    if args.enroll_size is not None:
        model.config.enroll_size = args.enroll_size
    items = load_dataset(args.dataset)
    encoded = pipeline.encode_dataset(items, model)

    by_subject: Dict[str, List[Tuple[str, str]]] = {}
    for key in sorted(encoded.keys()):
        by_subject.setdefault(key[0], []).append(key)

    os.makedirs(args.out_dir, exist_ok=True)
    for sid, keys in sorted(by_subject.items()):
        enroll_keys = keys[: model.config.enroll_size]
        finger, reference = pipeline.enroll_subject(
            [encoded[k] for k in enroll_keys], model
        )
        path = os.path.join(args.out_dir, f"{sid}.fpfm")
        write_file_atomic(path, save_finger(finger, reference))
    print(f"enrolled {len(by_subject)} fingers under {args.out_dir}")
    return 0


def _read_pairs(path: str) -> List[Tuple[str, str, str, str]]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ModelMissing(
                    f"pairs file line {lineno}: expected 4 fields, got {len(parts)}"
                )
            pairs.append((parts[0], parts[1], parts[2], parts[3]))
    return pairs


def _load_bits_dir(path: str) -> Dict[Tuple[str, str], BitString]:
    out: Dict[Tuple[str, str], BitString] = {}
    if not os.path.isdir(path):
        raise ModelMissing(f"bit-string directory {path!r} does not exist")
    for name in sorted(os.listdir(path)):
        if not name.endswith(".fpbs"):
            continue
        stem = name[: -len(".fpbs")]
        sid, _, iid = stem.rpartition("_")
        with open(os.path.join(path, name), "rb") as fh:
            out[(sid, iid)] = load_bitstring(fh.read())
    return out


def cmd_match(args) -> int:
    pairs = _read_pairs(args.pairs)
    lines = []
    if args.kind == "lgs":
        model = load_model_file(args.model)
        items = load_dataset(args.dataset)
        cache = {}

        def vectors(sid, iid):
            if (sid, iid) not in cache:
                if (sid, iid) not in items:
                    raise ModelMissing(f"impression {sid}/{iid} not in dataset")
                template, image = items[(sid, iid)]
                cache[(sid, iid)] = pipeline.fused_vectors(template, image, model)
            return cache[(sid, iid)]

        for sa, ia, sb, ib in pairs:
            cfg = model.config
            score = lgs_score(
                vectors(sa, ia),
                vectors(sb, ib),
                min_pairs=cfg.min_nL,
                max_pairs=cfg.max_nL,
                midpoint=cfg.mu_P,
                steepness=cfg.tau_P,
            )
            lines.append(_score_line(sa, ia, sb, ib, score))
    elif args.kind == "bits":
        bits = _load_bits_dir(args.bits_dir)
        for sa, ia, sb, ib in pairs:
            score = intersection_score(_get(bits, sa, ia), _get(bits, sb, ib))
            lines.append(_score_line(sa, ia, sb, ib, score))
    else:  # masked: side a names the enrolled finger, side b the query string
        bits = _load_bits_dir(args.bits_dir)
        for sa, ia, sb, ib in pairs:
            fpath = os.path.join(args.fingers_dir, f"{sa}.fpfm")
            if not os.path.exists(fpath):
                raise ModelMissing(f"finger model {fpath!r} does not exist")
            with open(fpath, "rb") as fh:
                finger, reference = load_finger(fh.read())
            score = masked_score(
                _get(bits, sb, ib), reference, finger, mask_both=not args.mask_enrolled_only
            )
            lines.append(_score_line(sa, ia, sb, ib, score))

    text = "\n".join(lines) + "\n"
    if args.out:
        write_file_atomic(args.out, text.encode("ascii"))
        print(f"wrote {len(lines)} scores to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _get(bits: Dict[Tuple[str, str], BitString], sid: str, iid: str) -> BitString:
    if (sid, iid) not in bits:
        raise ModelMissing(f"bit-string for {sid}/{iid} not found")
    return bits[(sid, iid)]


def _score_line(sa, ia, sb, ib, score) -> str:
    short = " short" if getattr(score, "short", False) else ""
    return f"{sa} {ia} {sb} {ib} {score.kind} {score.value:.6f}{short}"


def cmd_evaluate(args) -> int:
    model = load_model_file(args.model)
    items = load_dataset(args.dataset)
    subjects = sorted({k[0] for k in items})
    impressions = sorted({k[1] for k in items})
    os.makedirs(args.out_dir, exist_ok=True)

    lines = [
        f"matcher: {args.matcher}",
        f"subjects: {len(subjects)}",
        f"impressions per subject: {len(impressions)}",
    ]
    if args.matcher == "lgs":
        report = pipeline.evaluate_fvc_lgs(items, model)
        lines += _fvc_count_lines(len(subjects), len(impressions))
        lines.append(f"eer: {report.eer:.6f}")
        _write_roc(os.path.join(args.out_dir, "roc.csv"), report)
    elif args.matcher == "bits":
        encoded = pipeline.encode_dataset(items, model)
        report = pipeline.evaluate_fvc_bits(encoded, fold_to=args.fold)
        lines += _fvc_count_lines(len(subjects), len(impressions))
        if args.fold:
            lines.append(f"fold length: {args.fold}")
        lines.append(f"eer: {report.eer:.6f}")
        _write_roc(os.path.join(args.out_dir, "roc.csv"), report)
    else:  # split
        encoded = pipeline.encode_dataset(items, model)
        result = pipeline.evaluate_split(encoded, model)
        lines += [
            f"enroll size: {model.config.enroll_size}",
            "enrolled reference: OR of enrollment bit-strings",
            "impostor pairing: each enrolled finger vs every other subject's "
            "first test impression",
            f"mask applied to: {'both strings' if model.config.mask_both else 'enrolled only'}",
            f"genuine attempts: {result.n_genuine}",
            f"impostor attempts: {result.n_impostor}",
            f"eer trained: {result.trained.eer:.6f}",
            f"eer untrained: {result.untrained.eer:.6f}",
        ]
        _write_roc(os.path.join(args.out_dir, "roc_trained.csv"), result.trained)
        _write_roc(os.path.join(args.out_dir, "roc_untrained.csv"), result.untrained)

    summary = "\n".join(lines) + "\n"
    write_file_atomic(os.path.join(args.out_dir, "summary.txt"), summary.encode("ascii"))
    sys.stdout.write(summary)
    return 0


def _fvc_count_lines(n_subjects: int, n_impressions: int) -> List[str]:
    n_gen = n_subjects * n_impressions * (n_impressions - 1) // 2
    n_imp = n_subjects * (n_subjects - 1) // 2
    return [f"genuine attempts: {n_gen}", f"impostor attempts: {n_imp}"]


def _write_roc(path: str, report) -> None:
    rows = ["far,frr,threshold"]
    rows += [f"{far:.9f},{frr:.9f},{th:.9f}" for far, frr, th in report.roc]
    write_file_atomic(path, ("\n".join(rows) + "\n").encode("ascii"))


def cmd_compress(args) -> int:
    model = load_model_file(args.model)
    items = load_dataset(args.dataset)
    encoded = pipeline.encode_dataset(items, model)
    lengths = [int(tok) for tok in args.lengths.split(",") if tok.strip()]
    sweep = pipeline.compression_sweep(encoded, lengths)
    rows = ["length,eer"] + [f"{length},{eer:.6f}" for length, eer in sweep]
    text = "\n".join(rows) + "\n"
    if args.out:
        write_file_atomic(args.out, text.encode("ascii"))
        print(f"wrote {len(sweep)} rows to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_inspect(args) -> int:
    if args.model:
        model = load_model_file(args.model)
        cb = model.codebook
        print(f"model: {args.model}")
        print(f"  clusters K: {cb.k}")
        print(f"  fused dimension: {cb.dim}")
        print(f"  lattice sizes: n_m={model.geometry.n_m} n_t={model.geometry.n_t}")
        print(f"  boundary radii: min={cb.radii.min():.4f} "
              f"mean={cb.radii.mean():.4f} max={cb.radii.max():.4f}")
        print(f"  cardinalities: min={cb.cardinalities.min()} "
              f"max={cb.cardinalities.max()}")
        print(f"  population mean: {'present' if cb.global_mean is not None else 'absent'}")
        print("  config:")
        for line in serialize_config(model.config).strip().splitlines():
            print(f"    {line}")
    if args.bits:
        with open(args.bits, "rb") as fh:
            bs = load_bitstring(fh.read())
        print(f"bit-string: {args.bits}")
        print(f"  length: {len(bs)} (template length {bs.template_length})")
        print(f"  set bits: {bs.ones}")
    if args.finger:
        with open(args.finger, "rb") as fh:
            finger, reference = load_finger(fh.read())
        print(f"finger model: {args.finger}")
        print(f"  finger id: {finger.finger_id}")
        print(f"  mask keeps: {int(finger.mask.sum())} of {finger.k}")
        print(f"  mean minutia count: {finger.n_mean:.2f}")
        print(f"  enrolled set bits: {reference.ones}")
    if not (args.model or args.bits or args.finger):
        print("nothing to inspect; pass --model, --bits, or --finger")
        return 2
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpbits",
        description="fixed-length binary fingerprint representations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=10)
    p.add_argument("--impressions", type=int, default=4)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--minutiae", type=int, default=40)
    p.add_argument("--rotation", type=float, default=15.0, help="max rotation, degrees")
    p.add_argument("--translation", type=float, default=20.0, help="max translation, px")
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--insertion", type=float, default=0.05)
    p.add_argument("--noise-std", type=float, default=6.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a pipeline model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="bit-strings for every impression")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("enroll", help="train per-finger masks")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--enroll-size", type=int)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("match", help="score explicit pairs")
    p.add_argument("--kind", choices=["lgs", "bits", "masked"], required=True)
    p.add_argument("--pairs", required=True,
                   help="file of 'subj_a imp_a subj_b imp_b' lines")
    p.add_argument("--model")
    p.add_argument("--dataset")
    p.add_argument("--bits-dir")
    p.add_argument("--fingers-dir")
    p.add_argument("--mask-enrolled-only", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("evaluate", help="verification protocol and EER")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--matcher", choices=["lgs", "bits", "split"], default="bits")
    p.add_argument("--fold", type=int, help="fold bit-strings to this length first")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compress", help="EER over folded lengths")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--lengths", required=True, help="comma-separated fold lengths")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("inspect", help="print artifact statistics")
    p.add_argument("--model")
    p.add_argument("--bits")
    p.add_argument("--finger")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "match":
        if args.kind == "lgs" and not (args.model and args.dataset):
            parser.error("match --kind lgs needs --model and --dataset")
        if args.kind in ("bits", "masked") and not args.bits_dir:
            parser.error(f"match --kind {args.kind} needs --bits-dir")
        if args.kind == "masked" and not args.fingers_dir:
            parser.error("match --kind masked needs --fingers-dir")

    try:
        return args.func(args)
    except FpbitsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
