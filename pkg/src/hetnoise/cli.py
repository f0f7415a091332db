"""Command-line front end: generate | train | sweep | evaluate.

Every command resolves its flags, runs one pipeline stage on files, and
appends a manifest entry describing exactly how to reproduce the stage.
Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (
    NoiseProfile,
    corrupt,
    load_dataset,
    make_clean_task,
    save_dataset,
    split,
)
from .errors import HetnoiseError, InvalidConfig, InvalidInput
from .evaluation import (
    DiscardCurve,
    DensitySummary,
    GroupDensity,
    build_report,
    default_fractions,
    densities_csv,
    discard_csv,
)
from .network import (
    DETERMINISTIC,
    TrainConfig,
    fit,
    init_model,
    load_model,
    predict_dataset,
    save_model,
)
from .probhead import MCConfig, MULTICLASS
from .sweep import default_grid, normalize_grid, run_sweep


class _UsageError(Exception):
    pass


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _append_manifest(out_dir: Path, command: str, config: dict, seeds: dict, inputs, outputs, t0: float) -> None:
    entry = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "toolkit_version": __version__,
        "duration_seconds": time.time() - t0,
    }
    with open(out_dir / "manifest.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise _UsageError(f"{flag} expects a comma-separated list of numbers, got {text!r}")


def _resolve_dataset_path(path: str, split_name: str) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / f"{split_name}.jsonl"
    return p


def _load_split(path: str, split_name: str):
    p = _resolve_dataset_path(path, split_name)
    if not p.exists():
        raise FileNotFoundError(f"dataset file not found: {p}")
    return load_dataset(p)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    t0 = time.time()
    fracs = _parse_floats(args.splits, "--splits")
    if len(fracs) != 3 or any(f <= 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
        raise _UsageError(f"--splits needs three positive fractions summing to 1, got {args.splits}")
    if args.base_scale < 0:
        raise _UsageError("--base-scale must be >= 0")
    if args.n < 1 or args.dim < 1 or args.classes < 2:
        raise _UsageError("--n and --dim must be >= 1 and --classes >= 2")

    params = {}
    if args.profile == "region_ambiguity":
        params["margin"] = args.margin
    elif args.profile == "boundary_misalignment":
        params["width"] = args.width
    elif args.profile == "stochastic_event":
        params["class_index"] = args.event_class
    try:
        profile = NoiseProfile(kind=args.profile, base_scale=args.base_scale, params=params)
    except InvalidConfig as exc:
        raise _UsageError(str(exc))

    out = _out_dir(args)
    gen = make_clean_task(args.n, args.dim, args.classes, args.seed, separation=args.separation)
    full = corrupt(gen.features, gen.clean_labels, gen.task, profile, args.seed)
    parts = split(full, tuple(fracs), seed=args.seed)

    outputs = []
    for part in parts:
        path = out / f"{part.split_tag}.jsonl"
        save_dataset(part, path)
        outputs.append(path)
        print(f"wrote {path} ({len(part)} samples)")

    _append_manifest(
        out,
        "generate",
        config={
            "n": args.n,
            "dim": args.dim,
            "classes": args.classes,
            "profile": profile.to_dict(),
            "separation": args.separation,
            "splits": fracs,
        },
        seeds={"seed": args.seed},
        inputs=[],
        outputs=outputs,
        t0=t0,
    )
    return 0


def cmd_train(args) -> int:
    t0 = time.time()
    if args.head == "det" and args.tau is not None:
        raise _UsageError("--tau is meaningless for the deterministic head")
    if args.head == "het" and args.tau is not None and args.tau != 1.0:
        raise _UsageError("the het head is the tau=1 model; drop --tau or pass 1")
    tau = 1.0 if args.head in ("het", "det") else (args.tau if args.tau is not None else 1.0)
    if tau <= 0:
        raise _UsageError(f"--tau must be positive, got {tau}")
    hidden = [int(h) for h in _parse_floats(args.hidden, "--hidden")]
    if any(h < 1 for h in hidden):
        raise _UsageError(f"--hidden needs positive layer widths, got {args.hidden}")

    data = _load_split(args.data, "train")
    k = data.num_classes
    head_mode = DETERMINISTIC if args.head == "det" else data.head_mode
    out_width = k if args.head == "det" else 2 * k
    dims = [data.features.shape[1]] + hidden + [out_width]

    model = init_model(
        dims,
        head_mode,
        activation=args.activation,
        mc_config=MCConfig(temperature=tau, num_samples=args.mc_samples, seed=args.seed),
        seed=args.seed,
    )
    cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        train_mc_samples=args.train_mc_samples,
    )
    trained, log = fit(model, data, cfg)

    out = _out_dir(args)
    model_path = out / "model.json"
    save_model(trained, model_path)
    log_path = out / "training_log.csv"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for row in log:
            fh.write(f"{row['epoch']},{row['train_loss']!r}\n")
            print(f"epoch {row['epoch']}: loss {row['train_loss']:.6f}")

    _append_manifest(
        out,
        "train",
        config={
            "data": str(args.data),
            "head": args.head,
            "tau": tau,
            "mc_samples": args.mc_samples,
            "train_mc_samples": args.train_mc_samples,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch": args.batch,
            "hidden": hidden,
            "activation": args.activation,
        },
        seeds={"seed": args.seed},
        inputs=[_resolve_dataset_path(args.data, "train")],
        outputs=[model_path, log_path],
        t0=t0,
    )
    return 0


def cmd_sweep(args) -> int:
    t0 = time.time()
    if args.grid == "default":
        grid = default_grid()
    else:
        grid = _parse_floats(args.grid, "--grid")
        if not grid or any(t <= 0 or not np.isfinite(t) for t in grid):
            raise _UsageError(f"--grid needs positive temperatures, got {args.grid}")
    grid = normalize_grid(grid)
    hidden = [int(h) for h in _parse_floats(args.hidden, "--hidden")]

    train_set = _load_split(args.data, "train")
    val_set = _load_split(args.data, "val")
    k = train_set.num_classes
    dims = [train_set.features.shape[1]] + hidden + [2 * k]
    template = init_model(
        dims,
        train_set.head_mode,
        activation=args.activation,
        mc_config=MCConfig(temperature=1.0, num_samples=args.mc_samples, seed=args.seed),
        seed=args.seed,
    )
    cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        train_mc_samples=args.train_mc_samples,
    )
    result = run_sweep(
        train_set,
        val_set,
        template,
        cfg,
        grid=grid,
        selection_metric=args.metric,
        eval_seed=args.seed,
    )

    out = _out_dir(args)
    sweep_path = out / "sweep.json"
    _write_json(sweep_path, result.to_dict())
    print(result.tau_star)

    _append_manifest(
        out,
        "sweep",
        config={
            "data": str(args.data),
            "grid": grid,
            "metric": args.metric,
            "mc_samples": args.mc_samples,
            "train_mc_samples": args.train_mc_samples,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch": args.batch,
            "hidden": hidden,
            "activation": args.activation,
        },
        seeds={"seed": args.seed},
        inputs=[_resolve_dataset_path(args.data, s) for s in ("train", "val")],
        outputs=[sweep_path],
        t0=t0,
    )
    return 0


def cmd_evaluate(args) -> int:
    t0 = time.time()
    if args.fractions == "default":
        fractions = default_fractions()
    else:
        fractions = _parse_floats(args.fractions, "--fractions")
        if len(fractions) < 2 or any(q < 0 or q >= 1 for q in fractions) or np.any(np.diff(fractions) <= 0):
            raise _UsageError(
                f"--fractions needs an increasing list within [0, 1), got {args.fractions}"
            )
    if args.against not in ("noisy", "clean"):
        raise _UsageError(f"--against must be noisy or clean, got {args.against}")

    model_path = Path(args.model)
    if not model_path.exists():
        raise FileNotFoundError(f"model file not found: {model_path}")
    model = load_model(model_path)
    data = _load_split(args.data, "test")
    if args.against == "clean" and data.clean_labels is None:
        raise InvalidInput(
            "this dataset carries no clean labels; --against clean needs the synthetic oracle"
        )

    cfg = model.mc_config
    if args.mc_samples is not None or args.seed is not None:
        cfg = MCConfig(
            temperature=cfg.temperature,
            num_samples=args.mc_samples if args.mc_samples is not None else cfg.num_samples,
            seed=args.seed if args.seed is not None else cfg.seed,
        )
    preds = predict_dataset(model, data, cfg=cfg, against=args.against)
    report = build_report(preds, dataset=data, fractions=fractions)

    out = _out_dir(args)
    report_path = out / "report.json"
    _write_json(report_path, report)

    curve = DiscardCurve(
        fractions=report["discard"]["fractions"],
        errors=report["discard"]["errors"],
        mf=report["discard"]["mf"],
        di=report["discard"]["di"],
    )
    discard_path = out / "discard.csv"
    discard_path.write_text(discard_csv(curve), encoding="utf-8")
    summary = DensitySummary(
        scopes={
            scope: {
                group: GroupDensity(
                    values=np.empty(0),
                    count=gd["count"],
                    median=gd["median"],
                    bin_edges=np.asarray(gd["histogram"]["bin_edges"]),
                    counts=np.asarray(gd["histogram"]["counts"]),
                )
                for group, gd in groups.items()
            }
            for scope, groups in report["densities"].items()
        }
    )
    densities_path = out / "densities.csv"
    densities_path.write_text(densities_csv(summary), encoding="utf-8")

    from .plots import plot_densities, plot_discard_curve

    discard_png = out / "discard.png"
    densities_png = out / "densities.png"
    plot_discard_curve(report["discard"], discard_png, title=f"Discard test ({args.against} labels)")
    plot_densities(report["densities"], densities_png)

    m = report["metrics"]
    print(
        f"f1={m['f1']:.4f} auprc={m['auprc']:.4f} "
        f"mf={report['discard']['mf']:.4f} di={report['discard']['di']:.6f}"
    )

    _append_manifest(
        out,
        "evaluate",
        config={
            "model": str(args.model),
            "data": str(args.data),
            "against": args.against,
            "fractions": fractions,
            "mc_samples": cfg.num_samples,
        },
        seeds={"seed": cfg.seed},
        inputs=[model_path, _resolve_dataset_path(args.data, "test")],
        outputs=[report_path, discard_path, densities_path, discard_png, densities_png],
        t0=t0,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetnoise",
        description="Heteroscedastic label-noise modeling and uncertainty evaluation",
    )
    parser.add_argument("--version", action="version", version=f"hetnoise {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a noisy dataset with a noise oracle")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument(
        "--profile",
        default="uniform_flip",
        choices=["uniform_flip", "region_ambiguity", "stochastic_event", "boundary_misalignment"],
    )
    g.add_argument("--base-scale", type=float, default=1.0)
    g.add_argument("--separation", type=float, default=4.0)
    g.add_argument("--margin", type=float, default=1.0, help="region_ambiguity logit margin")
    g.add_argument("--width", type=float, default=1.0, help="boundary_misalignment decay width")
    g.add_argument("--event-class", type=int, default=0, help="stochastic_event noisy class")
    g.add_argument("--splits", default="0.7,0.2,0.1")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model on a dataset split")
    t.add_argument("--data", required=True, help="dataset file or directory with train.jsonl")
    t.add_argument("--head", required=True, choices=["prob", "het", "det"])
    t.add_argument("--tau", type=float, default=None)
    t.add_argument("--mc-samples", type=int, default=1000)
    t.add_argument("--train-mc-samples", type=int, default=None)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--hidden", default="32")
    t.add_argument("--activation", default="relu", choices=["relu", "tanh"])
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="select the temperature on the validation split")
    s.add_argument("--data", required=True, help="directory with train.jsonl and val.jsonl")
    s.add_argument("--grid", default="default", help='"default" or comma list of temperatures')
    s.add_argument("--metric", default="auprc", choices=["f1", "auprc", "val_loss"])
    s.add_argument("--mc-samples", type=int, default=1000)
    s.add_argument("--train-mc-samples", type=int, default=None)
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch", type=int, default=64)
    s.add_argument("--hidden", default="32")
    s.add_argument("--activation", default="relu", choices=["relu", "tanh"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("evaluate", help="full evaluation report for a trained model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True, help="dataset file or directory with test.jsonl")
    e.add_argument("--against", default="noisy", choices=["noisy", "clean"])
    e.add_argument("--fractions", default="default")
    e.add_argument("--mc-samples", type=int, default=None)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HetnoiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
