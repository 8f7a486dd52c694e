"""Command-line entry point: ``pita generate | train | eval``.

Every command resolves its configuration from built-in defaults, an
optional ``--config`` JSON file, ``--preset`` names and finally explicit
flags (later wins), and writes the resolved configuration to
``<out>/config.json``.  Running a command again with ``--config`` pointing
at that echo reproduces its outputs.

Exit codes: 0 success, 2 configuration/input errors, 3 I/O errors,
4 numerical failures.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from pita.data import SyntheticSpec, generate_synthetic, ingest_csv, preprocess_all, split, write_csv
from pita.errors import ConfigError, ContractError, NumericalError, SchemaError
from pita.evaluation import UkfConfig, evaluate_models
from pita.evaluation.plots import plot_report
from pita.loss import PRESETS as LOSS_PRESETS
from pita.loss import LossConfig, PhysicalLossWeights
from pita.model import (
    VARIANTS,
    Checkpoint,
    ModelConfig,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("pita")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4

DESK_MODEL = {"T": 50, "latent_dim": 32, "depth": 4, "activation": "tanh", "dt": 0.04}
DESK_TRAIN = asdict(TrainConfig(epochs=1000, batch_size=64, lr=1e-3))

PRESETS = {
    "desk": {"model": dict(DESK_MODEL), "train": dict(DESK_TRAIN)},
    "paper-scale": {"model": {"T": 350, "latent_dim": 320, "depth": 12}},
    **{name: {"loss": dict(values)} for name, values in LOSS_PRESETS.items()},
}

DEFAULTS = {
    "generate": {
        "synthetic": SyntheticSpec().to_dict(),
    },
    "train": {
        "data": None,
        "variant": "pita",
        "model": dict(DESK_MODEL),
        "loss": {k: v for k, v in asdict(LossConfig()).items()},
        "train": dict(DESK_TRAIN),
        "split": {"val_fraction": 0.1, "seed": 0},
        "sample_rate": 25.0,
        "resume": None,
    },
    "eval": {
        "data": None,
        "checkpoints": [],
        "names": None,
        "ukf": {k: v for k, v in UkfConfig().to_dict().items() if k != "sigma_points"},
        "split": {"val_fraction": 0.1, "seed": 0},
        "sample_rate": 25.0,
        "trim": 1,
    },
}


def merge(base: dict, override: dict, where: str = "") -> dict:
    """Recursively overlay ``override`` on ``base``; unknown keys are errors."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ConfigError(f"unknown config key {where + key!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = merge(out[key], value, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve(command: str, args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        cfg = merge(cfg, loaded)
    for name in args.preset or []:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
        preset = {k: v for k, v in PRESETS[name].items() if k in cfg}
        if not preset:
            raise ConfigError(f"preset {name!r} does not apply to {command}")
        cfg = merge(cfg, preset)
    return cfg


def write_echo(out: Path, cfg: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


# --- generate -----------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = resolve("generate", args)
    syn = cfg["synthetic"]
    for key in ("count", "steps", "noise_std"):
        if getattr(args, key) is not None:
            syn[key] = getattr(args, key)
    if args.seed is not None:
        syn["seed"] = args.seed
    spec = SyntheticSpec(**syn)
    out = Path(args.out)
    write_echo(out, cfg)
    trajectories = generate_synthetic(spec)
    write_csv(out / "dataset.csv", trajectories)
    manifest = {"format": "rounD tracks (trackId, frame, xCenter, yCenter)", "synthetic": spec.to_dict(),
                "seed": spec.seed, "tracks": len(trajectories)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("wrote %d trajectories to %s", len(trajectories), out / "dataset.csv")
    return EXIT_OK


# --- train --------------------------------------------------------------------


def load_dataset(path, T: int, sample_rate: float):
    if not path:
        raise ConfigError("no dataset given (use --data or set 'data' in the config)")
    tracks = ingest_csv(path, sample_rate=sample_rate)
    kept, rejected = preprocess_all(tracks, T)
    if rejected:
        log.info("%s: %d track(s) rejected during preprocessing", path, len(rejected))
    return kept


def model_config(variant: str, m: dict) -> ModelConfig:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return ModelConfig.build(variant, T=m["T"], latent_dim=m["latent_dim"], depth=m["depth"],
                             activation=m["activation"], dt=m["dt"])


def loss_config(loss: dict) -> LossConfig:
    loss = dict(loss)
    loss["weights"] = PhysicalLossWeights(**loss.get("weights", {}))
    return LossConfig(**loss)


def cmd_train(args) -> int:
    cfg = resolve("train", args)
    if args.data:
        cfg["data"] = args.data
    if args.variant:
        cfg["variant"] = args.variant
    if args.epochs is not None:
        cfg["train"]["epochs"] = args.epochs
    if args.seed is not None:
        cfg["train"]["seed"] = args.seed
    if args.resume:
        cfg["resume"] = args.resume
    config = model_config(cfg["variant"], cfg["model"])
    lc = loss_config(cfg["loss"])
    tc = TrainConfig(**cfg["train"])
    resume = load_checkpoint(cfg["resume"]) if cfg["resume"] else None

    trajectories = load_dataset(cfg["data"], config.T, cfg["sample_rate"])
    train_set, val_set = split(trajectories, cfg["split"]["val_fraction"], cfg["split"]["seed"])
    out = Path(args.out)
    write_echo(out, cfg)
    result = train(train_set, val_set, config, lc, tc, resume=resume)
    save_checkpoint(out / "model.ckpt", Checkpoint(result.model, result.step, result.loss_config, result.adam))
    with (out / "train_log.jsonl").open("w") as fh:
        for rec in result.log.records():
            fh.write(json.dumps(rec) + "\n")
    last = result.log.epochs[-1] if result.log.epochs else {}
    log.info("trained %s for %d steps; last epoch %s", config.variant, result.step, last)
    return EXIT_OK


# --- eval ---------------------------------------------------------------------


def checkpoint_name(path: Path) -> str:
    return path.parent.name if path.name == "model.ckpt" and path.parent.name else path.stem


def cmd_eval(args) -> int:
    cfg = resolve("eval", args)
    if args.data:
        cfg["data"] = args.data
    if args.checkpoint:
        cfg["checkpoints"] = list(args.checkpoint)
    if args.seed is not None:
        cfg["split"]["seed"] = args.seed
    if not cfg["checkpoints"]:
        raise ConfigError("at least one checkpoint is required")
    paths = [Path(p) for p in cfg["checkpoints"]]
    names = cfg["names"] or [checkpoint_name(p) for p in paths]
    if len(names) != len(paths) or len(set(names)) != len(names):
        raise ConfigError(f"model names must be unique, one per checkpoint: {names}")
    models = {name: load_checkpoint(p).model for name, p in zip(names, paths)}
    Ts = {m.config.T for m in models.values()}
    if len(Ts) != 1:
        raise ConfigError(f"checkpoints disagree on trajectory length: {sorted(Ts)}")
    trajectories = load_dataset(cfg["data"], Ts.pop(), cfg["sample_rate"])
    _, val_set = split(trajectories, cfg["split"]["val_fraction"], cfg["split"]["seed"])
    ukf = UkfConfig(**cfg["ukf"])
    report = evaluate_models(models, val_set, ukf, trim=cfg["trim"])
    out = Path(args.out)
    write_echo(out, cfg)
    (out / "report.json").write_text(report.to_json())
    plot_report(report, out)
    for name, row in report.models.items():
        log.info("%s: median rmse %.4f m", name, row["rmse"]["median"])
    return EXIT_OK


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pita", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--preset", action="append", help=f"one of {sorted(PRESETS)}; repeatable")
        p.add_argument("--out", required=True, help="output directory")

    g = sub.add_parser("generate", help="write a synthetic dataset CSV")
    common(g)
    g.add_argument("--count", type=int)
    g.add_argument("--steps", type=int)
    g.add_argument("--noise-std", dest="noise_std", type=float)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one autoencoder variant")
    common(t)
    t.add_argument("--data")
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--epochs", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate checkpoints on the validation split")
    common(e)
    e.add_argument("--data")
    e.add_argument("--checkpoint", action="append")
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ContractError, SchemaError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
