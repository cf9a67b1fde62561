"""Training loop, evaluation, multi-seed suites and summary tables.

Layout of an output directory::

    <out>/<kind>/seed_<s>/metrics.csv     per-epoch metrics (canonical artifact)
                          record.json     the ExperimentRecord
                          model.ckpt      final weights
                          manifest.json   config echo, seed, artifact hashes
                          curves.svg      learning curves (derived from the CSV)
                          FAILED.txt      only for aborted runs
    <out>/<kind>/summary.csv / summary.txt
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import autograd as ag
from .models import ModelConfig, ModelKind, build_model, hybrid_backward, save_model
from .sketchdata.dataset import EncodedDataset, load_dataset

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("train_loss", "val_loss", "train_acc", "val_acc")
KIND_ORDER = (ModelKind.QD, ModelKind.QD_FROZEN, ModelKind.QD_SEP, ModelKind.BASELINE)
EVAL_BATCH = 256


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch, self.value = epoch, batch, value


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    seeds: tuple[int, ...] = tuple(range(10))
    dataset: str = "data/dataset.qdd"
    out_dir: str = "runs"
    workers: int = 1
    curves: bool = True

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"seeds must be distinct, got {list(self.seeds)}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        d["seeds"] = tuple(d["seeds"])
        return cls(**d)


@dataclass
class ExperimentRecord:
    kind: str
    seed: int
    train_loss: list[float]
    val_loss: list[float]
    train_acc: list[float]
    val_acc: list[float]
    wall_seconds: float = field(default=0.0, compare=False)

    def __post_init__(self):
        n = len(self.train_loss)
        if any(len(getattr(self, c)) != n for c in METRIC_COLUMNS):
            raise ValueError("metric arrays differ in length")
        for c in METRIC_COLUMNS:
            a = np.asarray(getattr(self, c), dtype=float)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{c} holds a non-finite value")
            if c.endswith("acc") and np.any((a < 0) | (a > 1)):
                raise ValueError(f"{c} outside [0, 1]")
            if c.endswith("loss") and np.any(a < 0):
                raise ValueError(f"{c} is negative")

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def final(self, column: str) -> float:
        return getattr(self, column)[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        return cls(**d)

    def metrics_csv(self) -> str:
        lines = ["epoch," + ",".join(METRIC_COLUMNS)]
        for i in range(self.epochs):
            lines.append(",".join([str(i + 1)] + [repr(float(getattr(self, c)[i])) for c in METRIC_COLUMNS]))
        return "\n".join(lines) + "\n"


# -- evaluation and training --------------------------------------------------------------


def evaluate(model, x: np.ndarray, y: np.ndarray, batch_size: int = EVAL_BATCH) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over a split, without touching the model."""
    if len(x) == 0:
        raise ValueError("cannot evaluate on an empty split")
    total, correct = [], 0
    with ag.no_grad():
        for start in range(0, len(x), batch_size):
            logits = model(x[start : start + batch_size]).data
            lab = y[start : start + batch_size]
            logp = ag.log_softmax_np(logits)
            total.extend(-logp[np.arange(len(lab)), lab])
            correct += int(np.sum(np.argmax(logits, axis=1) == lab))
    return math.fsum(total) / len(x), correct / len(x)


def shuffle_rng(seed: int) -> np.random.Generator:
    # a stream separate from the weight initialization of the same seed
    return np.random.default_rng([seed, 1])


def run_dir(cfg: TrainConfig, seed: int) -> Path:
    return Path(cfg.out_dir) / cfg.model.kind.value / f"seed_{seed}"


def train(cfg: TrainConfig, seed: int, dataset: EncodedDataset | None = None, persist: bool = True) -> ExperimentRecord:
    """One seeded run; writes its artifacts under :func:`run_dir` unless ``persist`` is off."""
    ds = dataset if dataset is not None else load_dataset(cfg.dataset)
    xtr, ytr = ds.train()
    xva, yva = ds.val()
    if len(xtr) == 0 or len(xva) == 0:
        raise ValueError(f"dataset needs both splits, got {len(xtr)} train / {len(xva)} val samples")
    out = run_dir(cfg, seed)
    if persist:
        out.mkdir(parents=True, exist_ok=True)
        (out / "FAILED.txt").unlink(missing_ok=True)
    model = build_model(replace(cfg.model, seed=seed))
    state = ag.AdamState(lr=cfg.lr)
    rng = shuffle_rng(seed)
    hist = {c: [] for c in METRIC_COLUMNS}
    t0 = time.perf_counter()
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(xtr))
            for b, start in enumerate(range(0, len(order), cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                loss = ag.softmax_cross_entropy(model(xtr[idx]), ytr[idx])
                if not np.isfinite(loss.data):
                    raise TrainingDiverged(epoch, b, float(loss.data))
                hybrid_backward(model, loss)
                ag.adam_step(model.parameters(), state)
            tl, ta = evaluate(model, xtr, ytr)
            vl, va = evaluate(model, xva, yva)
            if not (math.isfinite(tl) and math.isfinite(vl)):
                raise TrainingDiverged(epoch, b, tl if not math.isfinite(tl) else vl)
            for c, v in zip(METRIC_COLUMNS, (tl, vl, ta, va)):
                hist[c].append(v)
            log.info("%s seed %d epoch %d: train %.4f/%.3f val %.4f/%.3f", cfg.model.kind.value, seed, epoch, tl, ta, vl, va)
        record = ExperimentRecord(cfg.model.kind.value, seed, wall_seconds=time.perf_counter() - t0, **hist)
    except Exception as exc:
        if persist:
            (out / "FAILED.txt").write_text(f"{type(exc).__name__}: {exc}\n")
        raise
    if persist:
        write_run(out, cfg, seed, record, model, ds)
    return record


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run(out: Path, cfg: TrainConfig, seed: int, record: ExperimentRecord, model, ds: EncodedDataset):
    (out / "metrics.csv").write_text(record.metrics_csv())
    (out / "record.json").write_text(json.dumps(record.to_dict(), indent=1, sort_keys=True) + "\n")
    save_model(out / "model.ckpt", model, {"seed": seed, "epochs": record.epochs})
    artifacts = ["metrics.csv", "record.json", "model.ckpt"]
    if cfg.curves:
        (out / "curves.svg").write_text(curves_svg(record))
        artifacts.append("curves.svg")
    run_cfg = replace(cfg, seeds=(seed,), model=replace(cfg.model, seed=seed))
    manifest = {
        "version": __version__,
        "seed": seed,
        "config": run_cfg.to_dict(),
        "dataset_sha256": sha256_file(cfg.dataset) if os.path.exists(cfg.dataset) else None,
        "dataset_meta": ds.meta,
        "artifacts": {name: sha256_file(out / name) for name in artifacts},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


# -- suites and summaries ------------------------------------------------------------------


@dataclass(frozen=True)
class Stat:
    mean: float
    min: float
    max: float

    @classmethod
    def of(cls, values) -> "Stat":
        vals = [float(v) for v in values]
        if not vals:
            raise ValueError("no values to aggregate")
        # fsum is exactly rounded, so the mean ignores seed order
        return cls(math.fsum(vals) / len(vals), min(vals), max(vals))

    def cell(self, digits: int = 2) -> str:
        return f"{self.mean:.{digits}f} ({self.min:.{digits}f}, {self.max:.{digits}f})"


@dataclass(frozen=True)
class SummaryRow:
    kind: str
    seeds: tuple[int, ...]
    stats: dict  # column -> Stat


@dataclass
class Summary:
    rows: list[SummaryRow]
    failed: dict = field(default_factory=dict)  # "kind/seed" -> message

    @property
    def partial(self) -> bool:
        return bool(self.failed)

    def row(self, kind) -> SummaryRow:
        k = ModelKind.parse(kind).value
        for r in self.rows:
            if r.kind == k:
                return r
        raise KeyError(k)

    def to_csv(self) -> str:
        cols = ["model", "n_seeds", "seeds"]
        for c in ("train_acc", "val_acc", "train_loss", "val_loss"):
            cols += [f"{c}_mean", f"{c}_min", f"{c}_max"]
        lines = [",".join(cols)]
        for r in self.rows:
            cells = [ModelKind.parse(r.kind).label, str(len(r.seeds)), " ".join(map(str, r.seeds))]
            for c in ("train_acc", "val_acc", "train_loss", "val_loss"):
                s = r.stats[c]
                cells += [repr(s.mean), repr(s.min), repr(s.max)]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        head = ["Model", "Train acc", "Val acc", "Train loss", "Val loss", "Seeds"]
        body = [
            [ModelKind.parse(r.kind).label]
            + [r.stats[c].cell() for c in ("train_acc", "val_acc", "train_loss", "val_loss")]
            + [str(len(r.seeds))]
            for r in self.rows
        ]
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
        fmt = lambda row: "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        lines = [fmt(head), fmt(["-" * w for w in widths])] + [fmt(row) for row in body]
        if self.failed:
            lines.append("")
            lines.append("PARTIAL: failed runs excluded from the table")
            lines += [f"  {k}: {v}" for k, v in sorted(self.failed.items())]
        return "\n".join(lines) + "\n"


def summarize(records: list[ExperimentRecord], failed: dict | None = None) -> Summary:
    """Final-epoch mean/min/max per model kind, rows in the fixed table order."""
    rows = []
    for kind in KIND_ORDER:
        recs = sorted((r for r in records if r.kind == kind.value), key=lambda r: r.seed)
        if not recs:
            continue
        stats = {c: Stat.of(r.final(c) for r in recs) for c in METRIC_COLUMNS}
        rows.append(SummaryRow(kind.value, tuple(r.seed for r in recs), stats))
    return Summary(rows, dict(failed or {}))


def write_summary(summary: Summary, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, txt_path = out / "summary.csv", out / "summary.txt"
    csv_path.write_text(summary.to_csv())
    txt_path.write_text(summary.to_text())
    return csv_path, txt_path


def _train_job(cfg_dict: dict, seed: int):
    cfg = TrainConfig.from_dict(cfg_dict)
    try:
        return seed, train(cfg, seed).to_dict(), None
    except Exception as exc:  # reported per seed; the suite keeps going
        log.debug("seed %d failed:\n%s", seed, traceback.format_exc())
        return seed, None, f"{type(exc).__name__}: {exc}"


@dataclass
class SuiteResult:
    records: list[ExperimentRecord]
    summary: Summary

    @property
    def partial(self) -> bool:
        return self.summary.partial


def run_suite(cfg: TrainConfig) -> SuiteResult:
    """Train every seed (concurrently when ``cfg.workers > 1``) and write the kind's summary."""
    if not os.path.exists(cfg.dataset):
        raise FileNotFoundError(f"dataset {cfg.dataset} not found")
    workers = min(cfg.workers, len(cfg.seeds))
    payload = cfg.to_dict()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_train_job, [payload] * len(cfg.seeds), cfg.seeds))
    else:
        results = [_train_job(payload, s) for s in cfg.seeds]
    kind = cfg.model.kind.value
    records, failed = [], {}
    for seed, rec, err in sorted(results, key=lambda r: r[0]):
        if err is None:
            records.append(ExperimentRecord.from_dict(rec))
        else:
            failed[f"{kind}/seed_{seed}"] = err
    summary = summarize(records, failed)
    write_summary(summary, Path(cfg.out_dir) / kind)
    return SuiteResult(records, summary)


def load_records(root) -> tuple[list[ExperimentRecord], dict]:
    """Every finished record below ``root`` plus the failure notes of aborted runs."""
    root = Path(root)
    records, failed = [], {}
    for path in sorted(root.glob("**/seed_*/record.json")):
        records.append(ExperimentRecord.from_dict(json.loads(path.read_text())))
    for path in sorted(root.glob("**/seed_*/FAILED.txt")):
        failed[f"{path.parent.parent.name}/{path.parent.name}"] = path.read_text().strip()
    return records, failed


def report(records_dir, out_dir=None) -> Summary:
    records, failed = load_records(records_dir)
    if not records:
        raise FileNotFoundError(f"no run records under {records_dir}")
    summary = summarize(records, failed)
    write_summary(summary, out_dir if out_dir is not None else records_dir)
    return summary


# -- learning curves --------------------------------------------------------------------------


def curves_svg(record: ExperimentRecord, width: int = 640, height: int = 260) -> str:
    """Loss and accuracy per epoch, train solid and validation dashed."""
    pad, gap = 40, 30
    pw = (width - 2 * pad - gap) / 2
    ph = height - 2 * pad
    epochs = np.arange(1, record.epochs + 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-family="sans-serif" font-size="12">'
        f"{ModelKind.parse(record.kind).label}, seed {record.seed}</text>",
    ]
    panels = [("loss", record.train_loss, record.val_loss), ("accuracy", record.train_acc, record.val_acc)]
    for i, (title, tr, va) in enumerate(panels):
        x0 = pad + i * (pw + gap)
        lo, hi = (0.0, 1.0) if title == "accuracy" else (0.0, max(max(tr), max(va)) * 1.05 or 1.0)
        x_hi = max(record.epochs, 2)

        def pt(e, v):
            x = x0 + (e - 1) / (x_hi - 1) * pw
            y = pad + ph - (v - lo) / (hi - lo) * ph
            return f"{x:.2f},{y:.2f}"

        parts.append(f'<rect x="{x0:.2f}" y="{pad}" width="{pw:.2f}" height="{ph}" fill="none" stroke="#888"/>')
        parts.append(
            f'<text x="{x0 + pw / 2:.2f}" y="{pad - 6}" text-anchor="middle" font-family="sans-serif" font-size="11">{title}</text>'
        )
        parts.append(f'<text x="{x0 - 4:.2f}" y="{pad + 4}" text-anchor="end" font-family="sans-serif" font-size="9">{hi:.2f}</text>')
        parts.append(f'<text x="{x0 - 4:.2f}" y="{pad + ph}" text-anchor="end" font-family="sans-serif" font-size="9">{lo:.2f}</text>')
        parts.append(
            f'<text x="{x0 + pw:.2f}" y="{pad + ph + 14}" text-anchor="end" font-family="sans-serif" font-size="9">epoch {record.epochs}</text>'
        )
        for series, style in ((tr, ""), (va, ' stroke-dasharray="4 3"')):
            pts = " ".join(pt(e, v) for e, v in zip(epochs, series))
            parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e79" stroke-width="1.5"{style}/>')
    parts.append(
        f'<text x="{pad}" y="{height - 8}" font-family="sans-serif" font-size="9">solid: train, dashed: validation</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
