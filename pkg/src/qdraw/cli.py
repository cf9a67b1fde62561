"""``qdraw`` command line: data, train, report, gradcheck.

Settings resolve in order: built-in defaults, then ``--config`` (a flat
``key = value`` file, or a run's manifest.json), then ``--set key=value``,
then the dedicated flags.  Exit status is 0 on success, 1 on a runtime or
check failure and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, gradcheck, harness, qsim
from .models import ModelConfig, ModelKind
from .sketchdata import quickdraw
from .sketchdata.dataset import TRAIN, VAL, encode_dataset, save_dataset
from .sketchdata.synthetic import synthetic_drawings

log = logging.getLogger("qdraw")


class UsageError(Exception):
    pass


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def _str_list(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


# key -> (parser, default)
SCHEMA = {
    "out": (str, None),
    "workers": (int, os.cpu_count() or 1),
    "seed": (int, 0),
    "model.kind": (str, "qd"),
    "model.hidden_size": (int, 128),
    "model.n_qubits": (int, 5),
    "model.n_classes": (int, 3),
    "model.angle_squash": (_bool, True),
    "model.hea_layers": (int, 1),
    "train.epochs": (int, 100),
    "train.batch_size": (int, 32),
    "train.lr": (float, 1e-3),
    "train.seeds": (str, "10"),
    "train.dataset": (str, "data/dataset.qdd"),
    "train.curves": (_bool, True),
    "data.categories": (_str_list, list(quickdraw.CATEGORIES)),
    "data.cache_dir": (str, None),
    "data.cap": (int, 500),
    "data.tol": (float, 0.02),
    "data.split": (float, 0.8),
    "data.max_segments": (int, 64),
    "data.synthetic": (int, 0),
    "data.name": (str, "dataset.qdd"),
}


def coerce(key: str, value):
    if key not in SCHEMA:
        raise UsageError(f"unknown setting {key!r}")
    if value is None:
        return None
    try:
        return SCHEMA[key][0](value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad value for {key}: {value!r} ({exc})") from exc


def read_config(path) -> dict:
    """Flat ``key = value`` lines (``[section]`` headers prefix later keys), or a data or run manifest."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        manifest = json.loads(text)
        if manifest.get("command") == "data":
            return {k: coerce(k, v) for k, v in manifest["config"].items()}
        tc = manifest["config"]
        out = {f"model.{k}": v for k, v in tc["model"].items() if k != "seed"}
        for k in ("epochs", "batch_size", "lr", "dataset", "curves"):
            out[f"train.{k}"] = tc[k]
        out["train.seeds"] = ",".join(map(str, tc["seeds"])) + ","  # always a list, never a count
        out["out"] = tc["out_dir"]
        out["workers"] = tc["workers"]
        return {k: coerce(k, v) for k, v in out.items()}
    out, section = {}, ""
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if section and "." not in key:
            key = f"{section}.{key}"
        out[key] = coerce(key, value)
    return out


def resolve(args, flag_map: dict) -> dict:
    cfg = {k: default for k, (_, default) in SCHEMA.items()}
    if getattr(args, "config", None):
        try:
            cfg.update(read_config(args.config))
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        cfg[k] = coerce(k, v)
    for attr, key in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            cfg[key] = coerce(key, v)
    return cfg


def parse_seeds(text: str, base: int) -> tuple[int, ...]:
    """``"5"`` means five seeds starting at ``base``; ``"3,8"`` lists them."""
    text = str(text).strip()
    try:
        if "," in text:
            return tuple(_int_list(text))
        n = int(text)
    except ValueError as exc:
        raise UsageError(f"bad seed list {text!r}") from exc
    if n < 1:
        raise UsageError("--seeds needs a positive count or a comma-separated list")
    return tuple(range(base, base + n))


# -- subcommands ------------------------------------------------------------------------------


def cmd_data(args) -> int:
    cfg = resolve(
        args,
        {"out": "out", "workers": "workers", "seed": "seed", "categories": "data.categories", "cache_dir": "data.cache_dir",
         "tol": "data.tol", "split": "data.split", "cap": "data.cap", "max_segments": "data.max_segments",
         "synthetic": "data.synthetic", "name": "data.name"},
    )
    cats = cfg["data.categories"]
    if not cats:
        raise UsageError("need at least one category")
    for c in cats:
        if c not in quickdraw.CLASS_INDEX:
            raise UsageError(f"unknown category {c!r}; supported: {', '.join(quickdraw.CATEGORIES)}")
    out_dir = Path(cfg["out"] or "data")
    sources = {}
    if cfg["data.synthetic"]:
        n = min(cfg["data.synthetic"], cfg["data.cap"])
        drawings, rejected = synthetic_drawings(n, seed=cfg["seed"], categories=tuple(cats)), 0
    else:
        drawings, rejected = [], 0
        for c in cats:
            path = quickdraw.fetch_category(c, cfg["data.cache_dir"])
            got, bad = quickdraw.read_drawings(path, limit=cfg["data.cap"], category=c)
            drawings += got
            rejected += bad
            sources[c] = harness.sha256_file(path)
    ds = encode_dataset(
        drawings,
        tol=cfg["data.tol"],
        split=cfg["data.split"],
        seed=cfg["seed"],
        max_segments=cfg["data.max_segments"],
        workers=max(1, cfg["workers"]),
    )
    ds.meta["rejected_lines"] = rejected
    ds.meta["source"] = "synthetic" if cfg["data.synthetic"] else "quickdraw"
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / cfg["data.name"]
    save_dataset(target, ds)
    manifest = {
        "version": __version__,
        "command": "data",
        "config": {k: v for k, v in cfg.items() if k.startswith("data.") or k == "seed"},
        "N": ds.n_rows,
        "counts": {"train": ds.class_counts(TRAIN), "val": ds.class_counts(VAL)},
        "dropped": ds.meta["dropped"],
        "rejected_lines": rejected,
        "source_sha256": sources,
        "dataset_sha256": harness.sha256_file(target),
    }
    (out_dir / (target.stem + ".manifest.json")).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"wrote {target}")
    print(f"N = {ds.n_rows} segments per sample, {len(ds.samples)} samples")
    for c in ds.classes:
        if c in cats:
            print(f"  {c:<11} train {ds.class_counts(TRAIN)[c]:>4}  val {ds.class_counts(VAL)[c]:>4}")
    print(f"dropped {ds.meta['dropped']} sketches, rejected {rejected} source lines")
    return 0


def build_train_config(cfg: dict) -> harness.TrainConfig:
    try:
        model = ModelConfig(
            kind=ModelKind.parse(cfg["model.kind"]),
            hidden_size=cfg["model.hidden_size"],
            n_qubits=cfg["model.n_qubits"],
            n_classes=cfg["model.n_classes"],
            angle_squash=cfg["model.angle_squash"],
            hea_layers=cfg["model.hea_layers"],
        )
        return harness.TrainConfig(
            model=model,
            epochs=cfg["train.epochs"],
            batch_size=cfg["train.batch_size"],
            lr=cfg["train.lr"],
            seeds=parse_seeds(cfg["train.seeds"], cfg["seed"]),
            dataset=cfg["train.dataset"],
            out_dir=cfg["out"] or "runs",
            workers=max(1, cfg["workers"]),
            curves=cfg["train.curves"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(args) -> int:
    cfg = resolve(
        args,
        {"out": "out", "workers": "workers", "seed": "seed", "model": "model.kind", "dataset": "train.dataset",
         "epochs": "train.epochs", "seeds": "train.seeds", "batch_size": "train.batch_size", "lr": "train.lr",
         "hidden_size": "model.hidden_size", "curves": "train.curves"},
    )
    tc = build_train_config(cfg)
    result = harness.run_suite(tc)
    for r in result.records:
        print(
            f"{r.kind} seed {r.seed}: final train acc {r.final('train_acc'):.4f} loss {r.final('train_loss'):.4f}, "
            f"val acc {r.final('val_acc'):.4f} loss {r.final('val_loss'):.4f} ({r.wall_seconds:.1f}s)"
        )
    if result.summary.rows:
        print(result.summary.to_text(), end="")
    if result.partial:
        for k, v in sorted(result.summary.failed.items()):
            print(f"FAILED {k}: {v}", file=sys.stderr)
        return 1
    return 0


def cmd_report(args) -> int:
    cfg = resolve(args, {"out": "out"})
    records_dir = args.records_dir or cfg["out"] or "runs"
    summary = harness.report(records_dir, cfg["out"] or records_dir)
    print(summary.to_text(), end="")
    return 1 if summary.partial else 0


def cmd_gradcheck(args) -> int:
    cfg = resolve(args, {"seed": "seed"})
    seed = cfg["seed"]
    if args.scope == "qsim":
        shift = qsim.SHIFT if args.corrupt_shift is None else args.corrupt_shift
        reports = [gradcheck.check_qsim(seed, shift=shift)]
    elif args.scope == "autograd":
        reports = [gradcheck.check_autograd(seed)]
    else:
        reports = [gradcheck.check_model(seed, kind=k.value, hidden_size=args.hidden_size) for k in ModelKind]
    ok = True
    for rep in reports:
        name, dev = rep.worst
        status = "PASS" if rep.ok else "FAIL"
        print(f"{status} {rep.scope}: max {rep.kind} deviation {dev:.3e} at {name} (tolerance {rep.tolerance:g}, {len(rep.deviations)} entries)")
        ok &= rep.ok
    if not ok:
        worst = max((r for r in reports if not r.ok), key=lambda r: r.worst[1])
        print(f"gradient check failed; worst offender {worst.worst[0]}", file=sys.stderr)
        return 1
    return 0


# -- parser -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="key = value settings file (or a run manifest.json)")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="worker processes (default: all cores)")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base seed")
    g.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE", help="override one setting")
    g.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="qdraw", description="Hybrid LSTM + variational-circuit sketch classifiers.", parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("data", parents=[common], help="fetch, encode and save a dataset")
    d.add_argument("--categories", help="comma-separated (default: calculator,camera,cellphone)")
    d.add_argument("--cache-dir", dest="cache_dir", help=f"download cache (default: ${quickdraw.CACHE_ENV} or ~/.cache/qdraw)")
    d.add_argument("--tol", type=float, help="Bezier residual tolerance, fraction of the sketch diagonal")
    d.add_argument("--split", type=float, help="training fraction per class")
    d.add_argument("--cap", type=int, help="samples per class")
    d.add_argument("--max-segments", dest="max_segments", type=int, help="drop sketches with more segments")
    d.add_argument("--synthetic", type=int, metavar="N", help="use N procedural sketches per class instead of QuickDraw")
    d.add_argument("--name", help="dataset file name inside --out")
    d.set_defaults(func=cmd_data)

    t = sub.add_parser("train", parents=[common], help="train one model kind over several seeds")
    t.add_argument("--model", choices=[k.value for k in ModelKind])
    t.add_argument("--dataset")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seeds", help="a count (starting at --seed) or a comma-separated list")
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--hidden-size", dest="hidden_size", type=int)
    t.add_argument("--no-curves", dest="curves", action="store_const", const="false", help="skip the SVG curves")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("report", parents=[common], help="summarize finished runs")
    r.add_argument("records_dir", nargs="?", help="directory holding <kind>/seed_<s> runs (default: --out or runs)")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    c.add_argument("scope", choices=["qsim", "autograd", "model"])
    c.add_argument("--hidden-size", dest="hidden_size", type=int, default=16)
    c.add_argument("--corrupt-shift", dest="corrupt_shift", type=float, default=None, help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(getattr(args, "verbose", 0), logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qdraw: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"qdraw: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
