"""Least-squares cubic Bezier fitting with anchored endpoints.

Interior points start at their normalized chord-length parameters.  The two
curvature points are solved as offsets from the straight-line thirds, so
under-determined fits (2 or 3 points) fall back to the closest-to-a-line
solution.  Fits then alternate with Newton reparameterization (each point moves
to its nearest curve parameter) until the tolerance is met or progress stalls.
When the worst point still lies further than the tolerance from the curve, the
stroke is split at that point and both halves are refit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

REFINE_ITERS = 100
ALTERNATING_ROUNDS = 5


@dataclass(frozen=True)
class BezierSegment:
    p0: tuple[float, float]
    p1: tuple[float, float]
    p2: tuple[float, float]
    p3: tuple[float, float]
    eos: int = 0
    valid: int = 1

    @property
    def control(self) -> np.ndarray:
        return np.array([self.p0, self.p1, self.p2, self.p3], dtype=float)

    def row(self) -> np.ndarray:
        """Flat encoding: 8 control coordinates, eos, valid."""
        return np.concatenate([self.control.reshape(-1), [self.eos, self.valid]]).astype(float)

    @classmethod
    def from_row(cls, row) -> "BezierSegment":
        r = np.asarray(row, dtype=float)
        pts = [tuple(r[2 * i : 2 * i + 2]) for i in range(4)]
        return cls(*pts, eos=int(r[8]), valid=int(r[9]))


def bernstein(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    s = 1.0 - t
    out = np.empty((len(t), 4))
    out[:, 0] = s * s * s
    out[:, 1] = 3 * s * s * t
    out[:, 2] = 3 * s * t * t
    out[:, 3] = t * t * t
    return out


def bezier_eval(control, t) -> np.ndarray:
    return bernstein(t) @ np.asarray(control, dtype=float)


def chord_params(points: np.ndarray) -> np.ndarray:
    seg = np.hypot(*np.diff(points, axis=0).T)
    d = np.concatenate([[0.0], np.cumsum(seg)])
    if d[-1] == 0:
        return np.linspace(0.0, 1.0, len(points))
    return d / d[-1]


def bezier_d1(control, t) -> np.ndarray:
    c = np.asarray(control, dtype=float)
    t = np.asarray(t, dtype=float)[:, None]
    s = 1.0 - t
    return 3 * (s * s * (c[1] - c[0]) + 2 * s * t * (c[2] - c[1]) + t * t * (c[3] - c[2]))


def bezier_d2(control, t) -> np.ndarray:
    c = np.asarray(control, dtype=float)
    t = np.asarray(t, dtype=float)[:, None]
    return 6 * ((1.0 - t) * (c[2] - 2 * c[1] + c[0]) + t * (c[3] - 2 * c[2] + c[1]))


def _newton_params(control, points, t) -> np.ndarray:
    """One Newton step on |B(t) - P|^2 per point; endpoints stay at 0 and 1, order is kept."""
    diff = bezier_eval(control, t) - points
    d1, d2 = bezier_d1(control, t), bezier_d2(control, t)
    num = (diff * d1).sum(axis=1)
    den = (d1 * d1).sum(axis=1) + (diff * d2).sum(axis=1)
    ok = den > 1e-12
    step = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
    out = np.clip(t - step, 0.0, 1.0)
    out[0], out[-1] = 0.0, 1.0
    return np.maximum.accumulate(out)


def _lstsq_control(points: np.ndarray, t: np.ndarray) -> np.ndarray:
    p0, p3 = points[0], points[-1]
    chord = p3 - p0
    ctrl = np.array([p0, p0 + chord / 3, p0 + 2 * chord / 3, p3])
    if len(points) > 2:
        target = points - (p0 + np.outer(t, chord))
        offsets, *_ = np.linalg.lstsq(bernstein(t)[:, 1:3], target, rcond=None)
        ctrl[1:3] += offsets
    return ctrl


def _joint_step(points, ctrl, t, lam):
    """Levenberg-Marquardt step on the curvature points and interior parameters together."""
    n = len(points)
    basis = bernstein(t)
    r = (basis @ ctrl - points).reshape(-1)
    jac = np.zeros((2 * n, 4 + n - 2))
    for d in range(2):
        jac[d::2, d] = basis[:, 1]
        jac[d::2, 2 + d] = basis[:, 2]
    d1 = bezier_d1(ctrl, t)
    rows = np.arange(1, n - 1)
    jac[2 * rows, 4 + rows - 1] = d1[1:-1, 0]
    jac[2 * rows + 1, 4 + rows - 1] = d1[1:-1, 1]
    jtj = jac.T @ jac
    delta = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj) + 1e-12), -jac.T @ r)
    new_ctrl = ctrl.copy()
    new_ctrl[1:3] += delta[:4].reshape(2, 2)
    new_t = t.copy()
    new_t[1:-1] = np.clip(t[1:-1] + delta[4:], 0.0, 1.0)
    return new_ctrl, new_t


def _fit_one(points: np.ndarray, bounds, limit: float, max_iter: int = REFINE_ITERS):
    """Best (control, params, residuals) found while refining from the chord-length fit.

    A few alternating refit / reparameterize rounds are followed by joint
    Levenberg-Marquardt steps, which converge quickly near an exact fit.
    """

    def score(ctrl, t):
        if bounds is not None:
            ctrl = ctrl.copy()
            ctrl[1:3] = np.clip(ctrl[1:3], bounds[0], bounds[1])
        resid = np.hypot(*(bezier_eval(ctrl, t) - points).T)
        return ctrl, t, resid

    t = chord_params(points)
    ctrl = _lstsq_control(points, t)
    best = score(ctrl, t)
    if best[2].max() <= limit or len(points) <= 3:
        return best
    for _ in range(ALTERNATING_ROUNDS):
        t = _newton_params(ctrl, points, t)
        ctrl = _lstsq_control(points, t)
        cand = score(ctrl, t)
        if cand[2].max() < best[2].max():
            best = cand
    if best[2].max() <= limit:
        return best
    lam = 1e-3
    cost = float(((bezier_eval(ctrl, t) - points) ** 2).sum())
    for _ in range(max_iter):
        c2, t2 = _joint_step(points, ctrl, t, lam)
        cost2 = float(((bezier_eval(c2, t2) - points) ** 2).sum())
        if cost2 < cost:
            improved = cost - cost2
            ctrl, t, cost, lam = c2, t2, cost2, max(lam / 3, 1e-12)
            cand = score(ctrl, t)
            if cand[2].max() < best[2].max():
                best = cand
            if best[2].max() <= limit or improved <= 1e-3 * cost:
                break
        else:
            lam *= 4
            if lam > 1e8:
                break
    return best


class BezierFit(NamedTuple):
    segments: list[BezierSegment]
    breaks: list[tuple[int, int]]  # inclusive input index range of each segment
    params: list[np.ndarray]  # curve parameter of each input point in its segment


def fit_bezier(points, tol: float, diagonal: float | None = None, bounds=None, anchors=()) -> list[BezierSegment]:
    """Fit a stroke with C0-continuous cubic segments.

    ``tol`` is a fraction of ``diagonal`` (defaults to the stroke's own
    bounding-box diagonal; pass the sketch's).  ``bounds=(lo, hi)`` clips the
    curvature points into a box; the residual test uses the clipped curve.
    ``anchors`` lists point indices that must become segment endpoints.
    """
    return fit_bezier_breaks(points, tol, diagonal, bounds, anchors).segments


def fit_bezier_breaks(points, tol: float, diagonal: float | None = None, bounds=None, anchors=()) -> BezierFit:
    """Like :func:`fit_bezier`, also returning each segment's input range and point parameters."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("a stroke needs at least 2 points")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if np.all(pts == pts[0]):
        p = tuple(pts[0])
        return BezierFit([BezierSegment(p, p, p, p, eos=1)], [(0, len(pts) - 1)], [np.linspace(0, 1, len(pts))])
    if diagonal is None:
        diagonal = float(np.hypot(*np.ptp(pts, axis=0)))
    limit = tol * diagonal

    controls, breaks, params = [], [], []
    cuts = sorted({0, len(pts) - 1} | {int(a) for a in anchors if 0 < a < len(pts) - 1})
    stack = list(zip(cuts[:-1], cuts[1:]))[::-1]
    while stack:
        lo, hi = stack.pop()
        ctrl, t, resid = _fit_one(pts[lo : hi + 1], bounds, limit)
        k = int(np.argmax(resid))
        if resid[k] <= limit or hi - lo < 2 or k in (0, hi - lo):
            controls.append(ctrl)
            breaks.append((lo, hi))
            params.append(t)
            continue
        # right half first so the left half is popped (and emitted) first
        stack.append((lo + k, hi))
        stack.append((lo, lo + k))
    segs = [BezierSegment(*map(tuple, c)) for c in controls]
    last = segs[-1]
    segs[-1] = BezierSegment(last.p0, last.p1, last.p2, last.p3, eos=1)
    return BezierFit(segs, breaks, params)


def fit_residual(points, fit: BezierFit) -> float:
    """Worst distance between an input point and its segment at the fitter's parameter for it."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    worst = 0.0
    for seg, (lo, hi), t in zip(fit.segments, fit.breaks, fit.params):
        resid = np.hypot(*(bezier_eval(seg.control, t) - pts[lo : hi + 1]).T)
        worst = max(worst, float(resid.max()))
    return worst


def point_curve_distance(points, control, samples: int = 2001, iters: int = 80) -> np.ndarray:
    """Distance from each point to the nearest point of a cubic.

    Dense search over the parameter, then golden-section refinement inside
    the grid cell on either side of the best sample (no derivatives, so it
    stays accurate at cusps).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    grid = np.linspace(0.0, 1.0, samples)
    curve = bezier_eval(control, grid)
    d2 = ((pts[:, None, :] - curve[None, :, :]) ** 2).sum(axis=2)
    k = np.argmin(d2, axis=1)
    best = d2[np.arange(len(pts)), k]
    lo = grid[np.maximum(k - 1, 0)]
    hi = grid[np.minimum(k + 1, samples - 1)]

    def dist2(t):
        return ((bezier_eval(control, t) - pts) ** 2).sum(axis=1)

    g = (np.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
    f1, f2 = dist2(x1), dist2(x2)
    for _ in range(iters):
        left = f1 < f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x1n, x2n = hi - g * (hi - lo), lo + g * (hi - lo)
        x1, x2 = x1n, x2n
        f1, f2 = dist2(x1), dist2(x2)
        best = np.minimum(best, np.minimum(f1, f2))
    return np.sqrt(best)


def max_residual(points, segments: list[BezierSegment], breaks) -> float:
    """Worst point-to-curve distance of each input point to the segment covering it."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    worst = 0.0
    for seg, (lo, hi) in zip(segments, breaks):
        worst = max(worst, float(point_curve_distance(pts[lo : hi + 1], seg.control).max()))
    return worst
