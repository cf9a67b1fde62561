"""Fixed-length Bezier-segment datasets.

A sample is an ``N x 10`` matrix, one row per cubic segment: the 8 control
coordinates (in the sketch's normalized unit box), an end-of-stroke flag and a
valid flag.  Rows past the sample's own segment count are all zero.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import _container
from .bezier import BezierSegment, fit_bezier
from .quickdraw import CATEGORIES, CLASS_INDEX, RawDrawing

log = logging.getLogger(__name__)

ROW_WIDTH = 10
MAGIC = "QDDATA"
VERSION = 1
TRAIN, VAL = 0, 1


def normalize_strokes(raw: RawDrawing) -> list[np.ndarray] | None:
    """Scale the longer bounding-box side onto [0, 1], centering the shorter one.

    Returns None for a sketch with zero extent.
    """
    strokes = raw.stroke_points()
    allpts = np.vstack(strokes)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    extent = hi - lo
    scale = extent.max()
    if scale == 0:
        return None
    offset = (1.0 - extent / scale) / 2.0
    return [(s - lo) / scale + offset for s in strokes]


def encode_drawing(raw: RawDrawing, tol: float) -> list[BezierSegment] | None:
    strokes = normalize_strokes(raw)
    if strokes is None:
        return None
    allpts = np.vstack(strokes)
    diagonal = float(np.hypot(*np.ptp(allpts, axis=0)))
    # the points touching 0 and 1 on the long axis become anchors, so the encoding keeps the box
    axis = int(np.argmax(np.ptp(allpts, axis=0)))
    segs: list[BezierSegment] = []
    for s in strokes:
        touch = np.nonzero((s[:, axis] == 0.0) | (s[:, axis] == 1.0))[0]
        segs.extend(fit_bezier(s, tol, diagonal=diagonal, bounds=(0.0, 1.0), anchors=touch))
    return segs


def _encode_star(args):
    return encode_drawing(*args)


@dataclass
class EncodedDataset:
    samples: np.ndarray  # (M, N, 10)
    labels: np.ndarray  # (M,) int
    split: np.ndarray  # (M,) TRAIN / VAL
    n_segments: np.ndarray  # (M,) int
    classes: tuple[str, ...] = CATEGORIES
    meta: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.samples.shape[1]

    def subset(self, which: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.split == which
        return self.samples[m], self.labels[m]

    def train(self):
        return self.subset(TRAIN)

    def val(self):
        return self.subset(VAL)

    def class_counts(self, which: int | None = None) -> dict[str, int]:
        lab = self.labels if which is None else self.labels[self.split == which]
        return {c: int(np.sum(lab == i)) for i, c in enumerate(self.classes)}


def stratified_split(labels: np.ndarray, split: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    tags = np.full(len(labels), VAL, dtype=np.int64)
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(len(idx))]
        n_train = int(np.floor(split * len(idx) + 0.5))
        tags[idx[:n_train]] = TRAIN
    return tags


def encode_dataset(
    drawings: list[RawDrawing],
    tol: float = 0.02,
    split: float = 0.8,
    seed: int = 0,
    max_segments: int = 64,
    workers: int = 1,
) -> EncodedDataset:
    if not drawings:
        raise ValueError("no drawings to encode")
    if not 0 < split < 1:
        raise ValueError("split must lie strictly between 0 and 1")
    for d in drawings:
        if d.category not in CLASS_INDEX:
            raise ValueError(f"unknown category {d.category!r}")
    jobs = [(d, tol) for d in drawings]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            encoded = list(pool.map(_encode_star, jobs, chunksize=16))
    else:
        encoded = [_encode_star(j) for j in jobs]

    kept, labels, dropped = [], [], 0
    for d, segs in zip(drawings, encoded):
        if segs is None:
            log.warning("dropping a %s sketch with zero extent", d.category)
            dropped += 1
        elif len(segs) > max_segments:
            log.warning("dropping a %s sketch with %d segments (cap %d)", d.category, len(segs), max_segments)
            dropped += 1
        else:
            kept.append(segs)
            labels.append(CLASS_INDEX[d.category])
    if not kept:
        raise ValueError("every drawing was dropped")
    n = max(len(s) for s in kept)
    samples = np.zeros((len(kept), n, ROW_WIDTH))
    for i, segs in enumerate(kept):
        samples[i, : len(segs)] = [s.row() for s in segs]
    labels_arr = np.array(labels, dtype=np.int64)
    meta = {"tol": tol, "split": split, "seed": seed, "max_segments": max_segments, "dropped": dropped}
    return EncodedDataset(
        samples=samples,
        labels=labels_arr,
        split=stratified_split(labels_arr, split, seed),
        n_segments=np.array([len(s) for s in kept], dtype=np.int64),
        meta=meta,
    )


def save_dataset(path, ds: EncodedDataset) -> None:
    meta = dict(ds.meta, N=ds.n_rows, classes=list(ds.classes), counts=ds.class_counts())
    _container.write(
        path,
        MAGIC,
        VERSION,
        meta,
        {"samples": ds.samples, "labels": ds.labels, "split": ds.split, "n_segments": ds.n_segments},
    )


def load_dataset(path) -> EncodedDataset:
    meta, t = _container.read(path, MAGIC, VERSION)
    for key in ("samples", "labels", "split", "n_segments"):
        if key not in t:
            raise _container.ContainerError(f"{path}: missing tensor {key!r}")
    samples = t["samples"]
    if samples.ndim != 3 or samples.shape[2] != ROW_WIDTH or samples.shape[1] != meta.get("N"):
        raise _container.ContainerError(f"{path}: sample tensor has shape {samples.shape}")
    classes = tuple(meta.pop("classes", CATEGORIES))
    meta.pop("N", None)
    meta.pop("counts", None)
    return EncodedDataset(
        samples=samples,
        labels=t["labels"].astype(np.int64),
        split=t["split"].astype(np.int64),
        n_segments=t["n_segments"].astype(np.int64),
        classes=classes,
        meta=meta,
    )
