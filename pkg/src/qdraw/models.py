"""The four sketch classifiers and the autodiff node wrapping the quantum circuit.

All variants share the recurrent encoder (two stacked LSTMs over the valid
Bezier rows of a sample).  The QD family then runs::

    max-pool(h) -> fc1 -> relu -> fc2 -> relu -> fc_embed -> pi*tanh
      -> RX embedding + HEA -> <Z_i> for each qubit -> fc_out -> logits

while the baseline goes straight from the final hidden state to the logits.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np

from . import autograd as ag
from . import qsim
from .autograd.engine import Value, _acc, _make
from .sketchdata.dataset import ROW_WIDTH


class ModelKind(str, Enum):
    BASELINE = "baseline"
    QD = "qd"
    QD_FROZEN = "qd-frozen"
    QD_SEP = "qd-sep"

    @classmethod
    def parse(cls, name) -> "ModelKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for k in cls:
            if k.value == key:
                return k
        raise ValueError(f"unknown model kind {name!r}; choose from {', '.join(k.value for k in cls)}")

    @property
    def label(self) -> str:
        return {"baseline": "Classical baseline", "qd": "QD", "qd-frozen": "QD-Frozen", "qd-sep": "QD-Sep"}[self.value]

    @property
    def quantum(self) -> bool:
        return self is not ModelKind.BASELINE


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind = ModelKind.QD
    hidden_size: int = 128
    n_qubits: int = 5
    n_classes: int = 3
    angle_squash: bool = True
    seed: int = 0
    hea_layers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if self.hidden_size < 2 or self.hidden_size % 2:
            raise ValueError("hidden_size must be even (the max-pool halves it)")
        if self.n_qubits < 1 or self.n_classes < 2:
            raise ValueError("need at least one qubit and two classes")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def circuit_node(angles: Value, theta: Value, layout: qsim.CircuitLayout) -> Value:
    """Per-qubit <Z> of the circuit as an autodiff op; backward uses parameter-shift Jacobians.

    ``angles`` is (B, n_embed) or (n_embed,), ``theta`` is (n_train,).  The
    theta Jacobian is only evaluated when ``theta.requires_grad``.
    """
    single = angles.data.ndim == 1
    e = angles.data[None, :] if single else angles.data
    out = qsim.run_circuit_batch(layout, e, theta.data)

    def factory(node):
        def backward():
            g = node.grad[None, :] if single else node.grad
            d_e, d_t = qsim.param_shift_grad_batch(layout, e, theta.data, wrt_theta=theta.requires_grad)
            if angles.requires_grad:
                ge = np.einsum("bq,bqj->bj", g, d_e)
                _acc(angles, ge[0] if single else ge)
            if theta.requires_grad:
                _acc(theta, np.einsum("bq,bqj->j", g, d_t))
        return backward

    return _make(out[0] if single else out, (angles, theta), "circuit", factory)


class HybridModel:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        h = cfg.hidden_size
        # fixed draw order keeps the classical weights identical across the QD variants
        self.lstm1 = ag.LstmParams.init(rng, ROW_WIDTH, h, "lstm1")
        self.lstm2 = ag.LstmParams.init(rng, h, h, "lstm2")
        self.layout = None
        self.theta = None
        if cfg.kind.quantum:
            half = h // 2
            self.fc1 = ag.Linear.init(rng, half, half, "fc1")
            self.fc2 = ag.Linear.init(rng, half, half, "fc2")
            self.fc_embed = ag.Linear.init(rng, half, cfg.n_qubits, "fc_embed")
            self.layout = qsim.build_hea(cfg.n_qubits, entangling=cfg.kind is not ModelKind.QD_SEP, layers=cfg.hea_layers)
            self.theta = Value(
                rng.uniform(0.0, 2 * math.pi, self.layout.n_train),
                requires_grad=cfg.kind is not ModelKind.QD_FROZEN,
                name="theta",
            )
            self.fc_out = ag.Linear.init(rng, cfg.n_qubits, cfg.n_classes, "fc_out")
        else:
            self.head = ag.Linear.init(rng, h, cfg.n_classes, "head")

    # -- parameters ---------------------------------------------------------------

    def named_parameters(self) -> dict[str, Value]:
        """Every learnable tensor, frozen ones included, in a fixed order."""
        out = {}
        mods = [("lstm1", self.lstm1), ("lstm2", self.lstm2)]
        if self.cfg.kind.quantum:
            mods += [("fc1", self.fc1), ("fc2", self.fc2), ("fc_embed", self.fc_embed)]
        for prefix, mod in mods:
            for p in mod.parameters():
                out[p.name or prefix] = p
        if self.cfg.kind.quantum:
            out["theta"] = self.theta
            for p in self.fc_out.parameters():
                out[p.name] = p
        else:
            for p in self.head.parameters():
                out[p.name] = p
        return out

    def parameters(self) -> list[Value]:
        """Trainable tensors only (theta is excluded for QD-Frozen)."""
        return [p for p in self.named_parameters().values() if p.requires_grad]

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        named = self.named_parameters()
        if set(state) != set(named):
            raise ValueError(f"checkpoint tensors {sorted(state)} do not match model {sorted(named)}")
        for k, v in named.items():
            if state[k].shape != v.data.shape:
                raise ValueError(f"{k}: checkpoint shape {state[k].shape} != model shape {v.data.shape}")
            v.data[...] = state[k]

    # -- forward ----------------------------------------------------------------------

    def encode(self, x: np.ndarray) -> Value:
        """Final hidden state of the second LSTM, skipping padded rows."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 2
        xb = x[None] if single else x
        if xb.ndim != 3 or xb.shape[2] != ROW_WIDTH:
            raise ValueError(f"sample rows must have width {ROW_WIDTH}, got shape {x.shape}")
        valid = xb[:, :, 9] > 0.5
        if not np.all(valid.any(axis=1)):
            raise ValueError("every sample needs at least one valid row")
        b, hs = xb.shape[0], self.cfg.hidden_size
        h1 = c1 = h2 = c2 = Value(np.zeros((b, hs)))
        for t in range(int(valid.sum(axis=1).max())):
            m = valid[:, t]
            if not m.any():
                continue
            n1, d1 = ag.lstm_cell(xb[:, t, :], h1, c1, self.lstm1)
            n2, d2 = ag.lstm_cell(n1, h2, c2, self.lstm2)
            if m.all():
                h1, c1, h2, c2 = n1, d1, n2, d2
            else:
                mm = m[:, None]
                h1, c1 = ag.where(mm, n1, h1), ag.where(mm, d1, c1)
                h2, c2 = ag.where(mm, n2, h2), ag.where(mm, d2, c2)
        if single:
            h2 = ag.index_rows(h2, 0)
        return h2

    def embedding_angles(self, x: np.ndarray) -> Value:
        z = self.fc_embed(ag.relu(self.fc2(ag.relu(self.fc1(ag.max_pool_1d(self.encode(x)))))))
        if self.cfg.angle_squash:
            z = ag.mul(ag.tanh(z), math.pi)
        return z

    def expvals(self, x: np.ndarray) -> Value:
        return circuit_node(self.embedding_angles(x), self.theta, self.layout)

    def forward(self, x: np.ndarray) -> Value:
        if not self.cfg.kind.quantum:
            return self.head(self.encode(x))
        return self.fc_out(self.expvals(x))

    __call__ = forward


def build_model(cfg: ModelConfig) -> HybridModel:
    return HybridModel(cfg)


def hybrid_backward(model: HybridModel, loss: Value) -> dict[str, np.ndarray]:
    """Backpropagate ``loss`` through the classical graph and the circuit node."""
    if not loss.requires_grad or not loss._parents:
        raise RuntimeError("loss carries no graph; run a forward pass with gradients enabled first")
    loss.backward()
    return {k: v.grad for k, v in model.named_parameters().items() if v.requires_grad}


def probabilities(logits) -> np.ndarray:
    data = logits.data if isinstance(logits, Value) else np.asarray(logits, dtype=float)
    return ag.softmax_np(data)


def predict(model_or_logits, sample=None):
    """Arg-max class (lowest index on ties) from a model and sample, or from logits directly."""
    if sample is None:
        logits = model_or_logits
    else:
        with ag.no_grad():
            logits = model_or_logits.forward(sample)
    data = logits.data if isinstance(logits, Value) else np.asarray(logits, dtype=float)
    out = np.argmax(data, axis=-1)
    return int(out) if out.ndim == 0 else out


def save_model(path, model: HybridModel, extra: dict | None = None):
    meta = {"config": model.cfg.to_dict(), "layout": model.layout.dump() if model.layout else None}
    meta.update(extra or {})
    ag.save_checkpoint(path, model.state_dict(), meta)


def load_model(path) -> tuple[HybridModel, dict]:
    arrays, meta = ag.load_checkpoint(path)
    model = build_model(ModelConfig.from_dict(meta["config"]))
    model.load_state_dict(arrays)
    return model, meta


def with_kind(cfg: ModelConfig, kind) -> ModelConfig:
    return replace(cfg, kind=ModelKind.parse(kind))
