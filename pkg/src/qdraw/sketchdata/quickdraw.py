"""QuickDraw simplified-format ingestion.

Each line of a category file is a JSON object; we use ``word`` and
``drawing`` (a list of ``[xs, ys]`` pairs, integer coordinates 0-255).
"""
from __future__ import annotations

import json
import logging
import os
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

CATEGORIES = ("calculator", "camera", "cellphone")
CLASS_INDEX = {name: i for i, name in enumerate(CATEGORIES)}
# file / "word" names used by the public dataset
SOURCE_NAME = {"calculator": "calculator", "camera": "camera", "cellphone": "cell phone"}
BASE_URL = "https://storage.googleapis.com/quickdraw_dataset/full/simplified/"
CACHE_ENV = "QDRAW_CACHE"


class DrawingError(ValueError):
    pass


class UnknownCategoryError(ValueError):
    pass


class FetchError(RuntimeError):
    pass


@dataclass(frozen=True)
class RawDrawing:
    category: str
    strokes: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]

    def __post_init__(self):
        if not self.strokes:
            raise DrawingError("drawing has no strokes")
        for i, (xs, ys) in enumerate(self.strokes):
            if len(xs) != len(ys):
                raise DrawingError(f"ragged stroke {i}: {len(xs)} x values vs {len(ys)} y values")
            if len(xs) < 2:
                raise DrawingError(f"stroke {i} has {len(xs)} point(s), need at least 2")

    def stroke_points(self) -> list[np.ndarray]:
        return [np.column_stack([xs, ys]).astype(float) for xs, ys in self.strokes]

    def to_json(self) -> str:
        return json.dumps({"word": self.category, "drawing": [[list(xs), list(ys)] for xs, ys in self.strokes]})


@dataclass(frozen=True)
class SketchSequence:
    """Point stream ``(x, y, f)`` with ``f = 1`` on the last point of every stroke."""

    points: np.ndarray  # (L, 3)

    @property
    def length(self) -> int:
        return len(self.points)


def parse_drawing(line: str) -> RawDrawing:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DrawingError(f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict) or "drawing" not in obj:
        raise DrawingError("object lacks a 'drawing' field")
    strokes = []
    for stroke in obj["drawing"]:
        if not isinstance(stroke, list) or len(stroke) < 2:
            raise DrawingError("stroke is not an [xs, ys] pair")
        strokes.append((tuple(stroke[0]), tuple(stroke[1])))
    return RawDrawing(str(obj.get("word", "")), tuple(strokes))


def to_sequence(raw: RawDrawing) -> SketchSequence:
    rows = []
    for xs, ys in raw.strokes:
        block = np.zeros((len(xs), 3))
        block[:, 0] = xs
        block[:, 1] = ys
        block[-1, 2] = 1.0
        rows.append(block)
    return SketchSequence(np.vstack(rows))


def read_drawings(path, limit: int | None = None, category: str | None = None) -> tuple[list[RawDrawing], int]:
    """First ``limit`` valid drawings of a file plus the number of rejected lines.

    ``category`` relabels every drawing (the source files say "cell phone").
    """
    out, rejected = [], 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if limit is not None and len(out) >= limit:
                break
            if not line.strip():
                continue
            try:
                d = parse_drawing(line)
            except DrawingError as exc:
                rejected += 1
                log.debug("%s: skipping line: %s", path, exc)
                continue
            if category is not None and d.category != category:
                d = RawDrawing(category, d.strokes)
            out.append(d)
    return out, rejected


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "qdraw"))


def fetch_category(category: str, cache_dir=None, base_url: str = BASE_URL, timeout: float = 60.0) -> Path:
    """Download ``<category>.ndjson`` into the cache (no-op when already cached)."""
    if category not in CLASS_INDEX:
        raise UnknownCategoryError(f"unknown category {category!r}; supported: {', '.join(CATEGORIES)}")
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    cache.mkdir(parents=True, exist_ok=True)
    target = cache / f"{category}.ndjson"
    if target.exists() and target.stat().st_size > 0:
        return target
    url = urllib.parse.urljoin(base_url, urllib.parse.quote(f"{SOURCE_NAME[category]}.ndjson"))
    part = target.with_name(target.name + ".part")
    log.info("downloading %s", url)
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp, open(part, "wb") as fh:
            while chunk := resp.read(1 << 20):
                fh.write(chunk)
    except (urllib.error.URLError, OSError) as exc:
        part.unlink(missing_ok=True)
        raise FetchError(f"could not download {url}: {exc}") from exc
    with open(part, encoding="utf-8", errors="replace") as fh:
        first = fh.readline()
    try:
        parse_drawing(first)
    except DrawingError as exc:
        part.unlink(missing_ok=True)
        raise FetchError(f"{url} did not return QuickDraw ndjson: {exc}") from exc
    part.replace(target)
    return target
