"""Command-line entry point: ``smallseg <subcommand> [--config C] [--seed S] [--out DIR]``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_run_config
from .io import atomic_write_text, read_dataset, read_volume, write_dataset, write_volume
from .metrics import dose_stats
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.gradcheck import gradient_check, toy_problem
from .nn.network import build_unet
from .organs import organ_name
from .phantom import generate_dataset, generate_dose_grid, generate_phantom, lens_sparing_beams, phantom_geometry, split_indices
from .pipeline.evaluation import evaluate_cases
from .pipeline.inference import SegmentationModel, segment
from .pipeline.sweep import sweep
from .pipeline.training import prepare_samples, train
from .seeding import derive_seed


def _load_cfg(args):
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def _dataset(cfg, data_dir):
    """(train, val, test) case lists, read from ``data_dir`` or generated from the config."""
    if data_dir is not None:
        cases, split, _ = read_dataset(data_dir)
    else:
        cases = generate_dataset(cfg.n_cases, cfg.phantom, cfg.data_seed)
        tr, va, te = split_indices(len(cases), cfg.split)
        split = {"train": tr, "val": va, "test": te}
    pick = lambda key: [cases[i] for i in split.get(key, [])]  # noqa: E731
    return pick("train"), pick("val"), pick("test")


def cmd_phantom(args, cfg):
    cases = generate_dataset(cfg.n_cases, cfg.phantom, cfg.data_seed)
    tr, va, te = split_indices(len(cases), cfg.split)
    meta = {"seed": cfg.seed, "phantom_preset": cfg.phantom_preset, "phantom": cfg.phantom.to_dict()}
    write_dataset(cfg.out_dir, cases, {"train": tr, "val": va, "test": te}, meta)
    print(f"wrote {len(cases)} cases to {cfg.out_dir} (train {len(tr)}, val {len(va)}, test {len(te)})")


def cmd_train(args, cfg):
    train_cases, val_cases, _ = _dataset(cfg, args.data)
    if not train_cases:
        raise ValueError("training split is empty")
    tcfg = cfg.train_config()
    net = build_unet(cfg.network_config())
    samples = prepare_samples(train_cases, tcfg.window, cfg.organs)
    val = prepare_samples(val_cases, tcfg.window, cfg.organs) if val_cases else None
    _, history = train(samples, net, tcfg, val_samples=val)
    out = Path(cfg.out_dir)
    meta = {
        "organs": list(cfg.organs),
        "window": tcfg.window,
        "threshold": cfg.threshold,
        "input_dims": list(train_cases[0][0].dims),
        "converged_at": history.converged_at,
    }
    save_checkpoint(out / "model.json", net, meta)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss"])
    for i, loss in enumerate(history.train):
        w.writerow([i + 1, repr(loss), repr(history.val[i]) if history.val else ""])
    atomic_write_text(out / "loss.csv", buf.getvalue())
    print(f"trained {len(history.train)} epochs, final loss {history.train[-1]:.6f}, "
          f"converged at {history.converged_at}; wrote {out / 'model.json'}")


def _model(path, window=None, threshold=None):
    net, meta = load_checkpoint(path)
    try:
        organs = tuple(meta["organs"])
    except KeyError:
        raise ValueError(f"{path}: checkpoint has no organ list") from None
    return SegmentationModel(
        net, organs,
        input_dims=tuple(meta["input_dims"]) if meta.get("input_dims") else None,
        window=float(meta.get("window", 100.0)) if window is None else window,
        threshold=float(meta.get("threshold", 0.8)) if threshold is None else threshold,
    )


def cmd_segment(args, cfg):
    model = _model(args.model, args.window, args.threshold)
    out = Path(cfg.out_dir)
    for path in args.inputs:
        vol = read_volume(path, "intensity")
        labels = segment(vol, model)
        target = out / (Path(path).name.replace(".vvol", "") + "_seg.vvol")
        write_volume(target, labels)
        print(f"{path} -> {target}")


def cmd_evaluate(args, cfg):
    if len(args.pred) != len(args.truth):
        raise ValueError("--pred and --truth need the same number of files")
    preds = [read_volume(p, "label") for p in args.pred]
    truths = [read_volume(t, "label") for t in args.truth]
    report = evaluate_cases(preds, truths, cfg.organs, cfg.hd_method)
    out = Path(cfg.out_dir)
    atomic_write_text(out / "report.json", report.to_json())
    atomic_write_text(out / "report.csv", report.to_csv())
    for s in report.organs:
        hd = "n/a" if s.hd_mean_mm is None else f"{s.hd_mean_mm:.3f} mm"
        print(f"{organ_name(s.organ)}: dice {s.dice_mean:.4f}, hd {hd}")


def cmd_sweep(args, cfg):
    train_cases, _, test_cases = _dataset(cfg, args.data)
    report = sweep(train_cases, test_cases, cfg.sweep, cfg.train_config(), cfg.network_config(),
                   cfg.organs, cfg.target, cfg.hd_method)
    out = Path(cfg.out_dir)
    atomic_write_text(out / "sweep.json", report.to_json())
    for organ in cfg.organs:
        atomic_write_text(out / f"heatmap_dice_{organ}.csv", report.heatmap_csv("dice", organ))
        atomic_write_text(out / f"heatmap_hd_{organ}.csv", report.heatmap_csv("hd", organ))
    print(f"best by dice: window {report.best_dice[0]}, threshold {report.best_dice[1]}")
    if report.best_hd is not None:
        print(f"best by hd: window {report.best_hd[0]}, threshold {report.best_hd[1]}")


def cmd_dose_stats(args, cfg):
    if args.dose is not None or args.labels is not None:
        if args.dose is None or args.labels is None:
            raise ValueError("--dose and --labels must be given together")
        dose = read_volume(args.dose, "intensity")
        labels = read_volume(args.labels, "label")
    else:
        case_seed = derive_seed(cfg.data_seed, "dose")
        _, labels = generate_phantom(cfg.phantom, case_seed)
        geo = phantom_geometry(cfg.phantom, case_seed)
        dose = generate_dose_grid(cfg.phantom, lens_sparing_beams(geo, cfg.phantom), geo.spacing)
    rows = []
    for organ in sorted(int(o) for o in set(labels.data.ravel().tolist()) if o):
        mx, mean = dose_stats(dose, labels.data == organ)
        rows.append((organ, mx, mean))
        print(f"{organ_name(organ)}: max {mx:.4f} Gy, mean {mean:.4f} Gy")
    if args.out is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["organ", "name", "max_gy", "mean_gy"])
        for organ, mx, mean in rows:
            w.writerow([organ, organ_name(organ), repr(mx), repr(mean)])
        atomic_write_text(Path(cfg.out_dir) / "dose_stats.csv", buf.getvalue())


def cmd_gradcheck(args, cfg):
    net, x, target = toy_problem(seed=cfg.seed & 0xFFFFFFFF)
    result = gradient_check(net, x, target, max_params=args.max_params)
    print(f"max relative error {result.max_rel_error:.3e} at {result.worst} "
          f"({result.checked}/{result.total} parameters, {result.kink_retries} kink retries)")
    if args.out is not None:
        atomic_write_text(Path(cfg.out_dir) / "gradcheck.json",
                          json.dumps(result.__dict__, indent=2, sort_keys=True) + "\n")
    if not result.max_rel_error < args.tol:
        print(f"error: gradient check failed, {result.max_rel_error:.3e} >= {args.tol:g}", file=sys.stderr)
        return 1
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="smallseg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("phantom", parents=[common], help="generate a phantom dataset")
    s = sub.add_parser("train", parents=[common], help="train a network, write checkpoint and loss CSV")
    s.add_argument("--data", help="dataset directory (default: generate from the config)")
    s = sub.add_parser("segment", parents=[common], help="segment volumes with a checkpoint")
    s.add_argument("--model", required=True, help="checkpoint manifest (model.json)")
    s.add_argument("--window", type=float)
    s.add_argument("--threshold", type=float)
    s.add_argument("inputs", nargs="+", help="VVOL1 intensity volumes")
    s = sub.add_parser("evaluate", parents=[common], help="score label maps against ground truth")
    s.add_argument("--pred", nargs="+", required=True)
    s.add_argument("--truth", nargs="+", required=True)
    s = sub.add_parser("sweep", parents=[common], help="window x threshold grid sweep")
    s.add_argument("--data", help="dataset directory (default: generate from the config)")
    s = sub.add_parser("dose-stats", parents=[common], help="max / mean dose per structure")
    s.add_argument("--dose", help="dose grid (VVOL1 intensity)")
    s.add_argument("--labels", help="label map (VVOL1 label)")
    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check on the toy net")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-params", type=int, default=1_000_000)
    return p


COMMANDS = {
    "phantom": cmd_phantom,
    "train": cmd_train,
    "segment": cmd_segment,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "dose-stats": cmd_dose_stats,
    "gradcheck": cmd_gradcheck,
}


def cli(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed its message
        return int(exc.code or 0)
    try:
        cfg = _load_cfg(args)
        return COMMANDS[args.command](args, cfg) or 0
    except (ConfigError, ValueError, OSError, FloatingPointError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
