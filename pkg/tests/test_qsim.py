import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdraw.qsim import (
    CircuitLayout,
    GateKind,
    GateOp,
    ObservableZ,
    SlotKind,
    StateVector,
    apply_gate,
    born_probabilities,
    build_hea,
    expval_z,
    param_shift_grad,
    run_circuit,
)

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
PAULI = {GateKind.RX: X, GateKind.RY: Y, GateKind.RZ: Z}


def rot(kind, t):
    return math.cos(t / 2) * I2 - 1j * math.sin(t / 2) * PAULI[kind]


def full_1q(m, q, n):
    out = np.array([[1.0]])
    for k in range(n):
        out = np.kron(out, m if k == q else I2)
    return out


def full_cnot(c, t, n):
    dim = 2**n
    u = np.zeros((dim, dim))
    for k in range(dim):
        bits = [(k >> (n - 1 - i)) & 1 for i in range(n)]
        if bits[c]:
            bits[t] ^= 1
        j = int("".join(map(str, bits)), 2)
        u[j, k] = 1
    return u


def kron_oracle(layout, embed, theta):
    """Whole-unitary simulation; shares nothing with the einsum kernels."""
    n = layout.n_qubits
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    for g in layout.gates:
        if g.kind is GateKind.CNOT:
            psi = full_cnot(*g.targets, n) @ psi
        else:
            kind, idx = g.param_slot
            angle = embed[idx] if kind is SlotKind.EMBED else theta[idx]
            psi = full_1q(rot(g.kind, angle), g.targets[0], n) @ psi
    p = np.abs(psi) ** 2
    out = []
    for q in range(n):
        out.append(sum(p[k] * (1 if ((k >> (n - 1 - q)) & 1) == 0 else -1) for k in range(2**n)))
    return np.array(out)


def per_qubit_oracle(layout, embed, theta):
    """Product-state simulation: n independent 2-vectors, non-entangling layouts only."""
    assert not layout.entangling
    qubits = [np.array([1, 0], dtype=complex) for _ in range(layout.n_qubits)]
    for g in layout.gates:
        kind, idx = g.param_slot
        angle = embed[idx] if kind is SlotKind.EMBED else theta[idx]
        q = g.targets[0]
        qubits[q] = rot(g.kind, angle) @ qubits[q]
    return np.array([abs(v[0]) ** 2 - abs(v[1]) ** 2 for v in qubits])


def fd_jacobian(layout, embed, theta, h=1e-5):
    je = np.zeros((layout.n_qubits, layout.n_embed))
    jt = np.zeros((layout.n_qubits, layout.n_train))
    for i in range(layout.n_embed):
        d = np.zeros_like(embed)
        d[i] = h
        je[:, i] = (run_circuit(layout, embed + d, theta) - run_circuit(layout, embed - d, theta)) / (2 * h)
    for j in range(layout.n_train):
        d = np.zeros_like(theta)
        d[j] = h
        jt[:, j] = (run_circuit(layout, embed, theta + d) - run_circuit(layout, embed, theta - d)) / (2 * h)
    return je, jt


def rx0(q=0):
    return GateOp(GateKind.RX, (q,), (SlotKind.EMBED, 0))


# --- apply_gate ---------------------------------------------------------------

def test_rz_zero_is_identity():
    rng = np.random.default_rng(0)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    s = StateVector(v / np.linalg.norm(v))
    out = apply_gate(s, GateOp("RZ", (1,), (SlotKind.TRAIN, 0)), 0.0)
    np.testing.assert_array_equal(out.amplitudes, s.amplitudes)


def test_rx_pi_on_zero():
    out = apply_gate(StateVector.zero(1), rx0(), math.pi)
    expected = rot(GateKind.RX, math.pi) @ np.array([1, 0])
    np.testing.assert_allclose(out.amplitudes, expected, atol=1e-15)
    np.testing.assert_allclose(out.amplitudes, [0, -1j], atol=1e-15)


def test_cnot_truth_table():
    out = apply_gate(StateVector.basis("10"), GateOp("CNOT", (0, 1)))
    np.testing.assert_array_equal(out.amplitudes, StateVector.basis("11").amplitudes)
    out = apply_gate(StateVector.basis("01"), GateOp("CNOT", (0, 1)))
    np.testing.assert_array_equal(out.amplitudes, StateVector.basis("01").amplitudes)
    # reversed orientation, target above control
    out = apply_gate(StateVector.basis("01"), GateOp("CNOT", (1, 0)))
    np.testing.assert_array_equal(out.amplitudes, StateVector.basis("11").amplitudes)


def test_apply_gate_value_semantics():
    s = StateVector.zero(2)
    before = s.amplitudes.copy()
    apply_gate(s, GateOp("RY", (0,), (SlotKind.TRAIN, 0)), 1.0)
    np.testing.assert_array_equal(s.amplitudes, before)
    with pytest.raises(ValueError):
        s.amplitudes[0] = 0


@pytest.mark.parametrize(
    "gate, angle, exc",
    [
        (GateOp("RX", (2,), (SlotKind.EMBED, 0)), 0.1, IndexError),
        (GateOp("RX", (0,), (SlotKind.EMBED, 0)), None, ValueError),
        (GateOp("CNOT", (0, 1)), 0.3, ValueError),
    ],
)
def test_apply_gate_errors(gate, angle, exc):
    with pytest.raises(exc):
        apply_gate(StateVector.zero(2), gate, angle)


def test_gateop_invariants():
    with pytest.raises(ValueError):
        GateOp("CNOT", (1, 1))
    with pytest.raises(ValueError):
        GateOp("CNOT", (0, 1), (SlotKind.TRAIN, 0))
    with pytest.raises(ValueError):
        GateOp("RY", (0,))


def test_layout_slot_invariants():
    with pytest.raises(ValueError):
        CircuitLayout(1, (rx0(), rx0()))
    with pytest.raises(IndexError):
        CircuitLayout(1, (GateOp("CNOT", (0, 1)),))


def test_unnormalized_state_rejected():
    with pytest.raises(ValueError):
        StateVector([1, 1])


# --- born / expval --------------------------------------------------------------

def test_born_basis():
    np.testing.assert_array_equal(born_probabilities(StateVector.zero(2)), [1, 0, 0, 0])


def test_born_ry_half_pi():
    s = apply_gate(StateVector.zero(1), GateOp("RY", (0,), (SlotKind.TRAIN, 0)), math.pi / 2)
    np.testing.assert_allclose(born_probabilities(s), [math.cos(math.pi / 4) ** 2, math.sin(math.pi / 4) ** 2], atol=1e-15)


def test_expval_eigenstates():
    assert expval_z(StateVector.basis("0"), ObservableZ(0)) == 1.0
    assert expval_z(StateVector.basis("1"), ObservableZ(0)) == -1.0
    with pytest.raises(IndexError):
        expval_z(StateVector.basis("1"), ObservableZ(1))


@pytest.mark.parametrize("theta", [0.0, math.pi / 3, math.pi / 2, math.pi])
def test_expval_rx(theta):
    s = apply_gate(StateVector.zero(1), rx0(), theta)
    amps = rot(GateKind.RX, theta) @ np.array([1, 0])
    brute = abs(amps[0]) ** 2 * (+1) + abs(amps[1]) ** 2 * (-1)
    assert expval_z(s, ObservableZ(0)) == pytest.approx(brute, abs=1e-15)
    assert expval_z(s, ObservableZ(0)) == pytest.approx(math.cos(theta), abs=1e-12)


def _random_circuit_state(rng, n, n_gates):
    s = StateVector.zero(n)
    for _ in range(n_gates):
        if n > 1 and rng.random() < 0.3:
            c, t = rng.choice(n, size=2, replace=False)
            s = apply_gate(s, GateOp("CNOT", (int(c), int(t))))
        else:
            kind = ["RX", "RY", "RZ"][rng.integers(3)]
            s = apply_gate(s, GateOp(kind, (int(rng.integers(n)),), (SlotKind.TRAIN, 0)), rng.uniform(-7, 7))
    return s


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), n_gates=st.integers(1, 200))
def test_norm_preservation_and_born_consistency(seed, n, n_gates):
    s = _random_circuit_state(np.random.default_rng(seed), n, n_gates)
    p = born_probabilities(s)
    assert abs(p.sum() - 1) < 1e-10
    for q in range(n):
        signs = np.array([1.0 if ((k >> (n - 1 - q)) & 1) == 0 else -1.0 for k in range(2**n)])
        assert expval_z(s, ObservableZ(q)) == float(p @ signs)


# --- HEA / run_circuit ------------------------------------------------------------

def test_hea_counts():
    lay = build_hea(5, True)
    assert (lay.n_embed, lay.n_train, lay.n_cnots, lay.entangling) == (5, 15, 4, True)
    sep = build_hea(5, False)
    assert (sep.n_embed, sep.n_train, sep.n_cnots, sep.entangling) == (5, 15, 0, False)
    assert [g for g in lay.gates if g.kind is not GateKind.CNOT] == list(sep.gates)
    one = build_hea(1, True)
    assert (one.n_embed, one.n_train, one.n_cnots) == (1, 3, 0)
    with pytest.raises(ValueError):
        build_hea(0, True)


def test_hea_gate_order():
    lay = build_hea(2, True)
    kinds = [(g.kind.value, g.targets, g.param_slot and g.param_slot[0].value) for g in lay.gates]
    assert kinds == [
        ("RX", (0,), "EMBED"), ("RX", (1,), "EMBED"),
        ("RY", (0,), "TRAIN"), ("RZ", (0,), "TRAIN"), ("RY", (0,), "TRAIN"),
        ("RY", (1,), "TRAIN"), ("RZ", (1,), "TRAIN"), ("RY", (1,), "TRAIN"),
        ("CNOT", (0, 1), None),
    ]


def test_layout_dump_roundtrip():
    lay = build_hea(3, True, layers=2)
    assert CircuitLayout.parse(lay.dump()) == lay
    assert lay.dump().splitlines()[1] == "RX 0 EMBED:0"


def test_run_circuit_identity():
    np.testing.assert_array_equal(run_circuit(build_hea(5, True), np.zeros(5), np.zeros(15)), np.ones(5))


def test_run_circuit_flip_propagates_along_chain():
    embed = np.array([math.pi, 0, 0, 0, 0])
    lay = build_hea(5, True)
    oracle = kron_oracle(lay, embed, np.zeros(15))
    np.testing.assert_allclose(oracle, -np.ones(5), atol=1e-12)
    np.testing.assert_allclose(run_circuit(lay, embed, np.zeros(15)), oracle, atol=1e-12)


def test_run_circuit_flip_separable():
    embed = np.array([math.pi, 0, 0, 0, 0])
    lay = build_hea(5, False)
    oracle = per_qubit_oracle(lay, embed, np.zeros(15))
    np.testing.assert_allclose(oracle, [-1, 1, 1, 1, 1], atol=1e-12)
    np.testing.assert_allclose(run_circuit(lay, embed, np.zeros(15)), oracle, atol=1e-12)


def test_run_circuit_length_mismatch():
    with pytest.raises(ValueError):
        run_circuit(build_hea(5, True), np.zeros(4), np.zeros(15))
    with pytest.raises(ValueError):
        param_shift_grad(build_hea(5, True), np.zeros(5), np.zeros(14))


@pytest.mark.parametrize("seed", range(5))
def test_run_circuit_matches_kron_oracle(seed):
    rng = np.random.default_rng(seed)
    lay = build_hea(4, True, layers=2)
    e, t = rng.uniform(-4, 4, lay.n_embed), rng.uniform(-4, 4, lay.n_train)
    np.testing.assert_allclose(run_circuit(lay, e, t), kron_oracle(lay, e, t), atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_separability_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    lay = build_hea(5, False)
    e, t = rng.uniform(-4, 4, 5), rng.uniform(0, 2 * np.pi, 15)
    assert np.max(np.abs(run_circuit(lay, e, t) - per_qubit_oracle(lay, e, t))) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), i=st.integers(0, 4), entangling=st.booleans())
def test_embedding_periodicity(seed, i, entangling):
    rng = np.random.default_rng(seed)
    lay = build_hea(5, entangling)
    e, t = rng.uniform(-4, 4, 5), rng.uniform(0, 2 * np.pi, 15)
    e2 = e.copy()
    e2[i] += 2 * math.pi
    assert np.max(np.abs(run_circuit(lay, e2, t) - run_circuit(lay, e, t))) < 1e-10


# --- parameter shift -----------------------------------------------------------------

def test_param_shift_single_rx():
    lay = CircuitLayout(1, (rx0(),))
    for theta, expected in [(math.pi / 2, -1.0), (0.0, 0.0)]:
        je, _ = param_shift_grad(lay, np.array([theta]), np.zeros(0))
        fd = (math.cos(theta + 1e-5) - math.cos(theta - 1e-5)) / 2e-5
        assert je[0, 0] == pytest.approx(-math.sin(theta), abs=1e-15)
        assert je[0, 0] == pytest.approx(fd, abs=1e-9)
        assert je[0, 0] == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_param_shift_vs_finite_differences(seed):
    rng = np.random.default_rng(seed)
    lay = build_hea(5, True)
    e, t = rng.uniform(-np.pi, np.pi, 5), rng.uniform(0, 2 * np.pi, 15)
    je, jt = param_shift_grad(lay, e, t)
    fe, ft = fd_jacobian(lay, e, t)
    assert np.max(np.abs(je - fe)) < 1e-6
    assert np.max(np.abs(jt - ft)) < 1e-6


def test_wrong_shift_is_detected():
    rng = np.random.default_rng(3)
    lay = build_hea(3, True)
    e, t = rng.uniform(-np.pi, np.pi, 3), rng.uniform(0, 2 * np.pi, 9)
    je, jt = param_shift_grad(lay, e, t, shift=0.7)
    fe, ft = fd_jacobian(lay, e, t)
    assert max(np.max(np.abs(je - fe)), np.max(np.abs(jt - ft))) > 1e-3
