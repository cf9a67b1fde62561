"""Procedural three-class sketches for offline tests and smoke runs.

These are not QuickDraw data.  Each class is a jittered outline plus
class-specific details, drawn on the 0-255 integer canvas of the simplified
format:

* calculator: upright body, display box near the top, a grid of key strokes;
* camera: wide body, circular lens, a viewfinder bump on the top edge;
* cellphone: tall narrow body, large screen, one round home button.
"""
from __future__ import annotations

import numpy as np

from .quickdraw import RawDrawing


def _jitter(rng, pts, amount):
    return pts + rng.normal(scale=amount, size=pts.shape)


def _rect(rng, x0, y0, x1, y1, per_side=3, noise=1.5):
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]], dtype=float)
    pts = [corners[0]]
    for a, b in zip(corners[:-1], corners[1:]):
        for k in range(1, per_side + 1):
            pts.append(a + (b - a) * k / per_side)
    return _jitter(rng, np.array(pts), noise)


def _circle(rng, cx, cy, r, n=14, noise=1.0):
    start = rng.uniform(0, 2 * np.pi)
    t = start + np.linspace(0, 2 * np.pi, n)
    return _jitter(rng, np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)]), noise)


def _calculator(rng):
    w, h = rng.uniform(110, 150), rng.uniform(170, 220)
    x0, y0 = rng.uniform(10, 245 - w), rng.uniform(5, 250 - h)
    strokes = [_rect(rng, x0, y0, x0 + w, y0 + h)]
    strokes.append(_rect(rng, x0 + 0.1 * w, y0 + 0.07 * h, x0 + 0.9 * w, y0 + 0.25 * h, per_side=1))
    rows, cols = rng.integers(3, 5), 3
    for r in range(rows):
        y = y0 + h * (0.35 + 0.55 * (r + 0.5) / rows)
        for c in range(cols):
            x = x0 + w * (0.15 + 0.7 * (c + 0.5) / cols)
            if rng.random() < 0.85:
                s = rng.uniform(6, 10)
                strokes.append(_rect(rng, x - s, y - s, x + s, y + s, per_side=1, noise=0.8))
    return strokes


def _camera(rng):
    w, h = rng.uniform(180, 230), rng.uniform(110, 140)
    x0, y0 = rng.uniform(5, 250 - w), rng.uniform(30, 250 - h)
    strokes = [_rect(rng, x0, y0, x0 + w, y0 + h)]
    r = rng.uniform(0.25, 0.33) * h
    strokes.append(_circle(rng, x0 + w / 2, y0 + h / 2, r))
    if rng.random() < 0.7:
        strokes.append(_circle(rng, x0 + w / 2, y0 + h / 2, 0.5 * r, n=9))
    bx = x0 + rng.uniform(0.55, 0.75) * w
    bump = np.array([[bx, y0], [bx, y0 - 18], [bx + 35, y0 - 18], [bx + 35, y0]])
    strokes.append(_jitter(rng, bump, 1.0))
    return strokes


def _cellphone(rng):
    w, h = rng.uniform(70, 100), rng.uniform(180, 235)
    x0, y0 = rng.uniform(10, 245 - w), rng.uniform(5, 250 - h)
    strokes = [_rect(rng, x0, y0, x0 + w, y0 + h)]
    strokes.append(_rect(rng, x0 + 0.12 * w, y0 + 0.1 * h, x0 + 0.88 * w, y0 + 0.78 * h, per_side=2))
    strokes.append(_circle(rng, x0 + w / 2, y0 + 0.89 * h, rng.uniform(5, 9), n=9))
    if rng.random() < 0.5:
        strokes.append(_jitter(rng, np.array([[x0 + 0.4 * w, y0 + 0.05 * h], [x0 + 0.6 * w, y0 + 0.05 * h]]), 0.5))
    return strokes


_MAKERS = {"calculator": _calculator, "camera": _camera, "cellphone": _cellphone}


def _to_raw(category, strokes) -> RawDrawing:
    out = []
    for s in strokes:
        q = np.clip(np.rint(s), 0, 255).astype(int)
        out.append((tuple(int(v) for v in q[:, 0]), tuple(int(v) for v in q[:, 1])))
    return RawDrawing(category, tuple(out))


def synthetic_drawings(n_per_class: int, seed: int = 0, categories=("calculator", "camera", "cellphone")) -> list[RawDrawing]:
    """``n_per_class`` drawings of each category, interleaved by class."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_per_class):
        for c in categories:
            out.append(_to_raw(c, _MAKERS[c](rng)))
    return out
