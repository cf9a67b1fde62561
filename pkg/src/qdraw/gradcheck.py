"""Central finite-difference oracles for every gradient path in the package."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import qsim

FD_STEP = 1e-5


def numeric_grad(f: Callable[[], float], arr: np.ndarray, index, h: float = FD_STEP) -> float:
    """d f / d arr[index] by central differences, mutating ``arr`` in place and restoring it."""
    old = arr[index]
    arr[index] = old + h
    fp = f()
    arr[index] = old - h
    fm = f()
    arr[index] = old
    return (fp - fm) / (2 * h)


def rel_error(analytic: float, numeric: float, floor: float = 1e-5) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@dataclass
class CheckReport:
    scope: str
    tolerance: float
    kind: str  # "abs" or "rel"
    deviations: dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> tuple[str, float]:
        return max(self.deviations.items(), key=lambda kv: kv[1])

    @property
    def ok(self) -> bool:
        return bool(self.deviations) and self.worst[1] < self.tolerance


def check_qsim(seed: int, trials: int = 20, shift: float = qsim.SHIFT, n_qubits: int = 5) -> CheckReport:
    """Parameter-shift Jacobians vs finite differences on random HEA instances."""
    rng = np.random.default_rng(seed)
    report = CheckReport("qsim", 1e-6, "abs")
    for trial in range(trials):
        layout = qsim.build_hea(n_qubits, entangling=True)
        e = rng.uniform(-np.pi, np.pi, layout.n_embed)
        t = rng.uniform(0, 2 * np.pi, layout.n_train)
        je, jt = qsim.param_shift_grad(layout, e, t, shift=shift)
        for arr, jac, label in ((e, je, "EMBED"), (t, jt, "TRAIN")):
            for i in range(arr.size):
                old = arr[i]
                arr[i] = old + FD_STEP
                fp = qsim.run_circuit(layout, e, t)
                arr[i] = old - FD_STEP
                fm = qsim.run_circuit(layout, e, t)
                arr[i] = old
                fd = (fp - fm) / (2 * FD_STEP)
                key = f"{label}[{i}]"
                dev = float(np.max(np.abs(jac[:, i] - fd)))
                report.deviations[key] = max(report.deviations.get(key, 0.0), dev)
    return report


def check_autograd(seed: int, trials: int = 10) -> CheckReport:
    """Every primitive plus a randomly wired composite, against finite differences."""
    from . import autograd as ag

    report = CheckReport("autograd", 1e-4, "rel")
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 5))
        c = rng.normal(size=(5,))
        d = rng.normal(size=(3, 5))
        x = rng.normal(size=(3, 6))
        w = rng.normal(size=(5, 6))
        lab = rng.integers(0, 6, size=3)
        arrays = {"a": a, "b": b, "c": c, "d": d, "x": x, "w": w}

        def composite(vals):
            va, vb, vc, vd, vx, vw = (vals[k] for k in "a b c d x w".split())
            h = ag.tanh(ag.add(ag.matmul(va, vb), vc))
            h = ag.mul(ag.sigmoid(h), vd)
            h = ag.concat([ag.slice_last(h, 0, 2), ag.relu(ag.slice_last(h, 2, 5))], axis=-1)
            h = ag.sub(h, ag.mul(vd, 0.3))
            z = ag.add(ag.matmul(h, vw), vx)
            p = ag.max_pool_1d(z)
            return ag.add(ag.softmax_cross_entropy(z, lab), ag.mean_all(ag.mul(p, p)))

        def loss_value():
            with ag.no_grad():
                return composite({k: ag.Value(v) for k, v in arrays.items()}).item()

        vals = {k: ag.Value(v.copy(), requires_grad=True) for k, v in arrays.items()}
        composite(vals).backward()
        for k, arr in arrays.items():
            for idx in np.ndindex(arr.shape):
                fd = numeric_grad(loss_value, arr, idx)
                err = rel_error(vals[k].grad[idx], fd)
                key = f"{k}{list(idx)}"
                report.deviations[key] = max(report.deviations.get(key, 0.0), err)
    return report


def check_model(seed: int, n_params: int = 12, kind: str = "qd", hidden_size: int = 16) -> CheckReport:
    """End-to-end loss gradient of a model on a toy batch vs finite differences."""
    from . import autograd as ag
    from .models import ModelConfig, ModelKind, build_model
    from .sketchdata import encode_dataset, synthetic_drawings

    report = CheckReport(f"model {ModelKind.parse(kind).value}", 1e-4, "rel")
    ds = encode_dataset(synthetic_drawings(2, seed=seed), tol=0.05, split=0.5, seed=seed)
    x, y = ds.samples[:4], ds.labels[:4]
    model = build_model(ModelConfig(kind=ModelKind.parse(kind), hidden_size=hidden_size, seed=seed))

    def loss_value():
        with ag.no_grad():
            return ag.softmax_cross_entropy(model.forward(x), y).item()

    ag.softmax_cross_entropy(model.forward(x), y).backward()
    named = model.named_parameters()
    rng = np.random.default_rng(seed)
    for name, idx in pick_parameters(named, rng, n_params):
        p = named[name]
        fd = numeric_grad(loss_value, p.data, idx)
        report.deviations[f"{name}{list(idx)}"] = rel_error(p.grad[idx], fd)
    model.zero_grad()
    return report


def pick_parameters(named: dict, rng: np.random.Generator, n: int, min_per_tensor: int = 1) -> list[tuple[str, tuple]]:
    """Random entries covering every trainable tensor at least once, then extra random picks."""
    names = [k for k, v in named.items() if v.requires_grad]
    picks = []
    for name in names:
        for _ in range(min_per_tensor):
            picks.append((name, tuple(int(rng.integers(s)) for s in named[name].shape)))
    while len(picks) < n:
        name = names[int(rng.integers(len(names)))]
        picks.append((name, tuple(int(rng.integers(s)) for s in named[name].shape)))
    return picks
