"""Dense statevector simulation of small parameterized circuits.

Conventions used throughout:

* qubit 0 is the most significant bit of the basis index, so ``|10>`` on two
  qubits is amplitude index 2;
* ``R_a(t) = exp(-i t/2 sigma_a)``, which makes the +/- pi/2 parameter-shift
  recipe exact for every rotation in the gate dictionary;
* expectation values are exact (no shot sampling).

The batched helpers (``run_circuit_batch``, ``param_shift_grad_batch``) are
what the models use; the single-state functions are thin wrappers over the
same kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

SHIFT = math.pi / 2


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CNOT = "CNOT"

    @property
    def is_rotation(self) -> bool:
        return self is not GateKind.CNOT


class SlotKind(str, Enum):
    EMBED = "EMBED"
    TRAIN = "TRAIN"


@dataclass(frozen=True)
class GateOp:
    kind: GateKind
    targets: tuple[int, ...]
    param_slot: tuple[SlotKind, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind is GateKind.CNOT:
            if len(self.targets) != 2:
                raise ValueError("CNOT needs (control, target)")
            if self.targets[0] == self.targets[1]:
                raise ValueError("CNOT control and target must differ")
            if self.param_slot is not None:
                raise ValueError("CNOT takes no parameter slot")
        else:
            if len(self.targets) != 1:
                raise ValueError(f"{self.kind.value} acts on exactly one qubit")
            if self.param_slot is None:
                raise ValueError(f"{self.kind.value} needs a parameter slot")
            kind, idx = self.param_slot
            object.__setattr__(self, "param_slot", (SlotKind(kind), int(idx)))
        if min(self.targets) < 0:
            raise ValueError("negative qubit index")


@dataclass(frozen=True)
class CircuitLayout:
    n_qubits: int
    gates: tuple[GateOp, ...]
    n_embed: int = field(init=False)
    n_train: int = field(init=False)
    entangling: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        seen = {SlotKind.EMBED: [], SlotKind.TRAIN: []}
        for g in self.gates:
            if max(g.targets) >= self.n_qubits:
                raise IndexError(f"gate {g.kind.value} targets {g.targets} outside {self.n_qubits} qubits")
            if g.param_slot is not None:
                seen[g.param_slot[0]].append(g.param_slot[1])
        for kind, idxs in seen.items():
            if sorted(idxs) != list(range(len(idxs))):
                raise ValueError(f"{kind.value} slots must cover 0..{len(idxs) - 1} exactly once, got {sorted(idxs)}")
        object.__setattr__(self, "n_embed", len(seen[SlotKind.EMBED]))
        object.__setattr__(self, "n_train", len(seen[SlotKind.TRAIN]))
        object.__setattr__(self, "entangling", any(g.kind is GateKind.CNOT for g in self.gates))

    @property
    def n_cnots(self) -> int:
        return sum(g.kind is GateKind.CNOT for g in self.gates)

    def dump(self) -> str:
        """Line-oriented listing: ``KIND targets slot`` with ``-`` for no slot."""
        lines = [f"# qubits {self.n_qubits}"]
        for g in self.gates:
            slot = "-" if g.param_slot is None else f"{g.param_slot[0].value}:{g.param_slot[1]}"
            lines.append(f"{g.kind.value} {','.join(map(str, g.targets))} {slot}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "CircuitLayout":
        n_qubits = None
        gates = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["qubits"]:
                    n_qubits = int(parts[1])
                continue
            kind, targets, slot = line.split()
            slot_val = None
            if slot != "-":
                sk, si = slot.split(":")
                slot_val = (SlotKind(sk), int(si))
            gates.append(GateOp(GateKind(kind), tuple(int(t) for t in targets.split(",")), slot_val))
        if n_qubits is None:
            raise ValueError("layout dump lacks '# qubits N' header")
        return cls(n_qubits, tuple(gates))


@dataclass(frozen=True)
class ObservableZ:
    qubit: int


class StateVector:
    """Immutable n-qubit pure state."""

    __slots__ = ("n_qubits", "_amps")

    def __init__(self, amplitudes, n_qubits: int | None = None):
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        n = int(round(math.log2(amps.size))) if amps.size else 0
        if n_qubits is not None and n != n_qubits:
            raise ValueError(f"{amps.size} amplitudes do not describe {n_qubits} qubits")
        if amps.size != 2**n or n < 1:
            raise ValueError(f"amplitude count {amps.size} is not a power of two >= 2")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state is not normalized (|psi|^2 = {norm!r})")
        amps.flags.writeable = False
        self.n_qubits = n
        self._amps = amps

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(amps)

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amps

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits}, amplitudes={self._amps!r})"


# ---------------------------------------------------------------------------
# kernels: amplitudes are (batch, 2**n) complex arrays


def rotation_matrices(kind: GateKind, angles) -> np.ndarray:
    """(B, 2, 2) rotation matrices for a vector of angles."""
    t = np.asarray(angles, dtype=float).reshape(-1) / 2.0
    c, s = np.cos(t), np.sin(t)
    m = np.zeros((t.size, 2, 2), dtype=complex)
    if kind is GateKind.RX:
        m[:, 0, 0] = c
        m[:, 1, 1] = c
        m[:, 0, 1] = -1j * s
        m[:, 1, 0] = -1j * s
    elif kind is GateKind.RY:
        m[:, 0, 0] = c
        m[:, 1, 1] = c
        m[:, 0, 1] = -s
        m[:, 1, 0] = s
    elif kind is GateKind.RZ:
        m[:, 0, 0] = c - 1j * s
        m[:, 1, 1] = c + 1j * s
    else:
        raise ValueError(f"{kind} is not a rotation")
    return m


def _apply_1q(amps: np.ndarray, mats: np.ndarray, qubit: int, n: int) -> np.ndarray:
    b = amps.shape[0]
    view = amps.reshape(b, 2**qubit, 2, 2 ** (n - qubit - 1))
    a0, a1 = view[:, :, 0, :], view[:, :, 1, :]
    # (B or 1, 2, 2, 1, 1) so each entry broadcasts over the (B, A, C) halves
    m = mats.reshape(-1, 2, 2, 1, 1)
    out = np.empty_like(view)
    out[:, :, 0, :] = m[:, 0, 0] * a0 + m[:, 0, 1] * a1
    out[:, :, 1, :] = m[:, 1, 0] * a0 + m[:, 1, 1] * a1
    return out.reshape(b, -1)


def _apply_cnot(amps: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    view = amps.reshape((amps.shape[0],) + (2,) * n).copy()
    idx1 = [slice(None)] * (n + 1)
    idx1[1 + control] = 1
    sub = view[tuple(idx1)]
    # target axis shifts down by one when control precedes it
    t_axis = target if target < control else target - 1
    view[tuple(idx1)] = np.flip(sub, axis=1 + t_axis)
    return view.reshape(amps.shape[0], -1)


def _z_signs(n: int) -> np.ndarray:
    k = np.arange(2**n)
    bits = (k[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1.0 - 2.0 * bits


# ---------------------------------------------------------------------------
# single-state API


def apply_gate(state: StateVector, gate: GateOp, angle: float | None = None) -> StateVector:
    n = state.n_qubits
    if max(gate.targets) >= n:
        raise IndexError(f"gate targets {gate.targets} outside {n}-qubit state")
    amps = state.amplitudes.reshape(1, -1)
    if gate.kind is GateKind.CNOT:
        if angle is not None:
            raise ValueError("CNOT takes no angle")
        out = _apply_cnot(amps, gate.targets[0], gate.targets[1], n)
    else:
        if angle is None:
            raise ValueError(f"{gate.kind.value} needs an angle")
        out = _apply_1q(amps, rotation_matrices(gate.kind, [angle]), gate.targets[0], n)
    return StateVector(out[0])


def born_probabilities(state: StateVector) -> np.ndarray:
    a = state.amplitudes
    return a.real**2 + a.imag**2


def expval_z(state: StateVector, obs: ObservableZ) -> float:
    n = state.n_qubits
    if not 0 <= obs.qubit < n:
        raise IndexError(f"observable qubit {obs.qubit} outside {n}-qubit state")
    p = born_probabilities(state)
    signs = np.ascontiguousarray(_z_signs(n)[:, obs.qubit])
    return float(p @ signs)


def build_hea(n_qubits: int, entangling: bool = True, layers: int = 1) -> CircuitLayout:
    """Angle-embedding RX column followed by ``layers`` of (RY, RZ, RY) + CNOT chain."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    if layers < 1:
        raise ValueError("layers must be >= 1")
    gates = [GateOp(GateKind.RX, (q,), (SlotKind.EMBED, q)) for q in range(n_qubits)]
    slot = 0
    for _ in range(layers):
        for q in range(n_qubits):
            for kind in (GateKind.RY, GateKind.RZ, GateKind.RY):
                gates.append(GateOp(kind, (q,), (SlotKind.TRAIN, slot)))
                slot += 1
        if entangling:
            gates.extend(GateOp(GateKind.CNOT, (q, q + 1)) for q in range(n_qubits - 1))
    return CircuitLayout(n_qubits, tuple(gates))


# ---------------------------------------------------------------------------
# batched circuit execution


def _as_batch(values, width: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"{name} has shape {np.shape(values)}, expected (..., {width})")
    return arr


def simulate_batch(layout: CircuitLayout, embed, theta) -> np.ndarray:
    """Final amplitudes, shape (B, 2**n), starting from |0...0>.

    ``embed`` is (B, n_embed) or (n_embed,); ``theta`` is (B, n_train) or
    (n_train,), a 1-D theta is shared across the batch.
    """
    e = _as_batch(embed, layout.n_embed, "embed")
    t = _as_batch(theta, layout.n_train, "theta")
    b = max(e.shape[0], t.shape[0])
    if e.shape[0] not in (1, b) or t.shape[0] not in (1, b):
        raise ValueError(f"batch sizes disagree: embed {e.shape[0]}, theta {t.shape[0]}")
    n = layout.n_qubits
    amps = np.zeros((b, 2**n), dtype=complex)
    amps[:, 0] = 1.0
    for g in layout.gates:
        if g.kind is GateKind.CNOT:
            amps = _apply_cnot(amps, g.targets[0], g.targets[1], n)
            continue
        kind, idx = g.param_slot
        angles = e[:, idx] if kind is SlotKind.EMBED else t[:, idx]
        amps = _apply_1q(amps, rotation_matrices(g.kind, angles), g.targets[0], n)
    return amps


def run_circuit_batch(layout: CircuitLayout, embed, theta) -> np.ndarray:
    """Per-qubit <Z> for each batch row, shape (B, n_qubits)."""
    amps = simulate_batch(layout, embed, theta)
    probs = amps.real**2 + amps.imag**2
    return probs @ _z_signs(layout.n_qubits)


def run_circuit(layout: CircuitLayout, embed, theta) -> np.ndarray:
    embed = np.asarray(embed, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if embed.shape != (layout.n_embed,):
        raise ValueError(f"embed has shape {embed.shape}, expected ({layout.n_embed},)")
    if theta.shape != (layout.n_train,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({layout.n_train},)")
    return run_circuit_batch(layout, embed, theta)[0]


def param_shift_grad_batch(
    layout: CircuitLayout,
    embed,
    theta,
    *,
    wrt_theta: bool = True,
    shift: float = SHIFT,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Parameter-shift Jacobians for a batch.

    Returns ``(d_embed, d_theta)`` with shapes (B, n_qubits, n_embed) and
    (B, n_qubits, n_train); ``d_theta`` is None when ``wrt_theta`` is false.
    ``shift`` exists for fault injection; anything but pi/2 is wrong.
    """
    e = _as_batch(embed, layout.n_embed, "embed")
    t = _as_batch(theta, layout.n_train, "theta")
    b = max(e.shape[0], t.shape[0])
    e = np.broadcast_to(e, (b, layout.n_embed))
    t = np.broadcast_to(t, (b, layout.n_train))
    slots = [(SlotKind.EMBED, i) for i in range(layout.n_embed)]
    if wrt_theta:
        slots += [(SlotKind.TRAIN, j) for j in range(layout.n_train)]
    s = len(slots)
    # rows ordered (slot, sign, batch)
    ee = np.tile(e, (2 * s, 1))
    tt = np.tile(t, (2 * s, 1))
    for k, (kind, idx) in enumerate(slots):
        for sign_i, sign in enumerate((1.0, -1.0)):
            rows = slice((2 * k + sign_i) * b, (2 * k + sign_i + 1) * b)
            if kind is SlotKind.EMBED:
                ee[rows, idx] += sign * shift
            else:
                tt[rows, idx] += sign * shift
    f = run_circuit_batch(layout, ee, tt).reshape(s, 2, b, layout.n_qubits)
    grads = 0.5 * (f[:, 0] - f[:, 1])  # (s, B, n_qubits)
    grads = np.transpose(grads, (1, 2, 0))
    d_embed = np.ascontiguousarray(grads[:, :, : layout.n_embed])
    d_theta = np.ascontiguousarray(grads[:, :, layout.n_embed :]) if wrt_theta else None
    return d_embed, d_theta


def param_shift_grad(layout: CircuitLayout, embed, theta, *, shift: float = SHIFT):
    """Jacobians (n_qubits x n_embed, n_qubits x n_train) for one input."""
    embed = np.asarray(embed, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if embed.shape != (layout.n_embed,) or theta.shape != (layout.n_train,):
        raise ValueError(
            f"expected embed ({layout.n_embed},) and theta ({layout.n_train},), "
            f"got {embed.shape} and {theta.shape}"
        )
    d_e, d_t = param_shift_grad_batch(layout, embed, theta, shift=shift)
    return d_e[0], d_t[0]
