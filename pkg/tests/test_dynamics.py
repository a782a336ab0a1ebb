import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import null_space

from nvdac import dynamics as dyn
from nvdac.errors import StepSizeError, ValidationError
from nvdac.pressure import default_paper_model, params_at
from nvdac.spinops import (
    FieldVector,
    basis_index,
    build_ground_hamiltonian,
    eigenstate_for_label,
    nmr_frequencies,
    transition_frequency,
)

P06 = params_at(default_paper_model(), 0.6)
B460 = FieldVector(460.0)
H9 = build_ground_hamiltonian(P06, B460).matrix
OPT = dyn.OpticalModel()
QUIET = dyn.NoiseModel(t1e=1.0, t2e_star=1.0, t2n_star=1.0, shot_noise=False)


def random_state(rng, dim=9):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def assert_physical(rho, tol=1e-8):
    tr, herm, lam = dyn.state_defects(rho)
    assert tr < tol and herm < 1e-9 and lam > -tol


# ---------------------------------------------------------------------------
# master equation core

def test_lindblad_step_identity():
    rho = random_state(np.random.default_rng(1), 4)
    out = dyn.lindblad_step(rho, np.zeros((4, 4)), (), 1e-6)
    assert np.allclose(out, rho, atol=1e-14)


def test_pure_dephasing_two_level():
    sz = np.diag([1.0, -1.0]).astype(complex)
    gamma = 1e4
    rho = 0.5 * np.ones((2, 2), complex)
    t = 0.0
    for _ in range(20):
        rho = dyn.lindblad_step(rho, np.zeros((2, 2)), [(gamma, sz)], 5e-6)
        t += 5e-6
        # L = gamma (sz rho sz - rho) damps the coherence at 2 gamma
        assert abs(rho[0, 1]) == pytest.approx(0.5 * math.exp(-2 * gamma * t), rel=0.01)


def test_resonant_rabi_two_level():
    omega = 1e6
    h = 0.5 * omega * np.array([[0, 1], [1, 0]], complex)
    rho = np.diag([1.0, 0.0]).astype(complex)
    t = 0.0
    for _ in range(25):
        rho = dyn.lindblad_step(rho, h, (), 2e-8)
        t += 2e-8
        assert rho[1, 1].real == pytest.approx(math.sin(math.pi * omega * t) ** 2, abs=1e-6)


def test_step_size_guard():
    with pytest.raises(StepSizeError):
        dyn.lindblad_step(np.diag([1.0, 0]).astype(complex), np.diag([1e9, 0]), (), 1e-6)
    with pytest.raises(ValidationError):
        dyn.lindblad_step(np.eye(2) / 2, np.zeros((3, 3)), (), 1e-9)


def test_sparse_and_dense_steady_state_agree():
    coll = dyn.optical_channels(OPT) + dyn.noise_channels(dyn.NoiseModel(), dyn.N_FULL)
    h = dyn.full_hamiltonian(P06, B460)
    a = dyn.steady_state(dyn.liouvillian(h, coll))
    b = dyn.steady_state(dyn.liouvillian(h, coll, sparse=True))
    assert np.abs(a - b).max() < 1e-9
    assert_physical(a)


def test_noise_model_guards():
    with pytest.raises(ValidationError):
        dyn.NoiseModel(t1e=-1)
    with pytest.raises(ValidationError):
        dyn.NoiseModel(t1e=1e-6, t2e_star=3e-6)
    with pytest.raises(ValidationError):
        dyn.OpticalModel(isc_rate_ms1=1e6, isc_rate_ms0=5e6)
    with pytest.raises(ValidationError):
        dyn.OpticalModel(singlet_branching_ms0=1.5)


# ---------------------------------------------------------------------------
# optical cycle

def _rate_fixed_point(model, t1e):
    # classical seven-level cycle (ground, excited and singlet) without hyperfine flip-flops
    k = np.zeros((7, 7))
    for i, ms in enumerate((1, 0, -1)):
        k[3 + i, i] += model.pump_rate
        k[i, 3 + i] += model.radiative_rate
        k[6, 3 + i] += model.isc_rate_ms0 if ms == 0 else model.isc_rate_ms1
        branch = model.singlet_branching_ms0 if ms == 0 else 0.5 * (1 - model.singlet_branching_ms0)
        k[i, 6] += model.singlet_decay * branch
        for j in range(3):
            if j != i:
                k[j, i] += 1 / (3 * t1e)
    p = null_space(k - np.diag(k.sum(axis=0)))[:, 0]
    p /= p.sum()
    return (p[1] + p[4]) / (1 - p[6])


def test_pump_without_field_polarizes_electron_only():
    rho = dyn.optical_pump(dyn.thermal_state(dyn.N_FULL), OPT, P06, FieldVector(0.0), 5e-6)
    pe = dyn.electron_populations(rho)
    # spin polarization of the triplet; the metastable singlet holds the rest
    assert pe[1] / pe.sum() > 0.85
    assert pe[1] / pe.sum() == pytest.approx(_rate_fixed_point(OPT, 254e-6), abs=0.01)
    assert dyn.electron_populations(dyn.settle(rho, OPT))[1] > 0.85
    assert np.allclose(dyn.nuclear_populations(rho), 1 / 3, atol=0.05)


def test_pump_at_460_polarizes_nucleus():
    rho = dyn.optical_pump(dyn.thermal_state(dyn.N_FULL), OPT, P06, B460, 5e-6)
    assert dyn.nuclear_populations(rho)[0] > 0.8
    assert_physical(rho)


def test_pump_zero_duration_identity():
    rho = dyn.embed(random_state(np.random.default_rng(3)))
    assert np.array_equal(dyn.optical_pump(rho, OPT, P06, B460, 0.0), rho)
    with pytest.raises(ValidationError):
        dyn.optical_pump(random_state(np.random.default_rng(3)), OPT, P06, B460, 1e-6)


def test_repeated_pumping_converges():
    rho = dyn.thermal_state(dyn.N_FULL)
    pol = []
    for _ in range(12):
        rho = dyn.optical_pump(rho, OPT, P06, B460, 3e-6)
        rho = dyn.embed(dyn.settle(rho, OPT))
        pol.append(dyn.nuclear_polarization(rho))
    assert all(abs(b - a) < 1e-4 for a, b in zip(pol[10:], pol[11:]))


def test_dnp_scan_shape():
    b = [0.0, 460.0, 507.0]
    pol = dyn.dnp_efficiency_scan(OPT, P06, b)
    assert pol[0] < 0.1
    assert pol[1] > 0.85 * pol[2]


def test_settle_returns_ground_state():
    rho = dyn.optical_pump(dyn.thermal_state(dyn.N_FULL), OPT, P06, B460, 1e-6)
    g = dyn.settle(rho, OPT)
    assert g.shape == (9, 9)
    assert_physical(g)


# ---------------------------------------------------------------------------
# drives

def _ms_pop(rho, ms, mi):
    i = basis_index(ms, mi)
    return rho[i, i].real


def test_electron_pi_pulse():
    f = transition_frequency(build_ground_hamiltonian(P06, B460), (0, 1), (-1, 1))
    drive = dyn.make_drive(H9, "mw", f, 10e6)
    out = dyn.coherent_pulse(dyn.basis_state(0, 1), drive, 1 / (2 * 10e6))
    assert _ms_pop(out, -1, 1) > 0.99


def test_electron_rabi_at_62_mhz():
    f = transition_frequency(build_ground_hamiltonian(P06, B460), (0, 1), (-1, 1))
    rabi = 62e6
    drive = dyn.make_drive(H9, "mw", f, rabi)
    for t in np.linspace(1e-9, 30e-9, 12):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", dyn.RWAWarning)
            out = dyn.coherent_pulse(dyn.basis_state(0, 1), drive, t)
        # the other nuclear lines are 2 MHz off, far below the drive
        assert _ms_pop(out, -1, 1) == pytest.approx(math.sin(math.pi * rabi * t) ** 2, abs=2e-3)


def _nuclear_oracle(e_plus, e_zero, e_minus, f, rabi, t2, duration):
    # independent three-level rotating-frame model of the m_S = 0 nuclear triplet
    h = np.diag([e_plus - f, e_zero, e_minus - f]).astype(complex)
    h[0, 1] = h[1, 0] = h[1, 2] = h[2, 1] = 0.5 * rabi
    iz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    g = 2.0 / t2

    def rhs(_, y):
        r = y.reshape(3, 3)
        d = -2j * math.pi * (h @ r - r @ h) + g * (iz @ r @ iz - 0.5 * (iz @ iz @ r + r @ iz @ iz))
        return d.reshape(-1)

    r0 = np.zeros((3, 3), complex)
    r0[0, 0] = 1
    sol = solve_ivp(rhs, (0, duration), r0.reshape(-1), rtol=1e-10, atol=1e-12, method="DOP853")
    return sol.y[:, -1].reshape(3, 3)[1, 1].real


def test_rf_pi_pulse_with_dephasing_matches_oracle():
    h = build_ground_hamiltonian(P06, B460)
    e = {mi: eigenstate_for_label(h, (0, mi))[0] for mi in (1, 0, -1)}
    f0, _ = nmr_frequencies(P06, B460)
    duration = 8e-6
    rabi = 1 / (2 * duration)
    noise = dyn.NoiseModel(t1e=10.0, t2e_star=50e-9, t2n_star=70e-6)
    drive = dyn.make_drive(H9, "rf", f0, rabi, q_sign=np.sign(P06.q))
    got = _ms_pop(dyn.coherent_pulse(dyn.basis_state(0, 1), drive, duration, noise), 0, 0)
    ideal = _ms_pop(dyn.coherent_pulse(dyn.basis_state(0, 1), drive, duration, QUIET), 0, 0)
    oracle = _nuclear_oracle(e[1] - e[0], 0.0, e[-1] - e[0], f0, rabi, 70e-6, duration)
    assert got == pytest.approx(oracle, abs=5e-3)
    assert got < ideal


def test_rwa_guard_warns():
    f = transition_frequency(build_ground_hamiltonian(P06, B460), (0, 1), (-1, 1))
    drive = dyn.make_drive(H9, "mw", f, 1.5e9)
    assert not drive.rwa_valid
    with pytest.warns(dyn.RWAWarning):
        dyn.coherent_pulse(dyn.basis_state(0, 1), drive, 1e-10)


def test_lab_frame_agrees_with_rwa():
    f0, _ = nmr_frequencies(P06, B460)
    drive = dyn.make_drive(H9, "rf", f0, 50e3, q_sign=1.0)
    t = 1 / (2 * 50e3)
    rwa = dyn.coherent_pulse(dyn.basis_state(0, 1), drive, t)
    lab = dyn.lab_frame_pulse(dyn.basis_state(0, 1), drive, t)
    assert _ms_pop(lab, 0, 0) == pytest.approx(_ms_pop(rwa, 0, 0), abs=0.02)


# ---------------------------------------------------------------------------
# free evolution and readout

def test_free_evolution_identity_and_t2():
    rho = random_state(np.random.default_rng(5))
    assert np.array_equal(dyn.free_evolution(rho, H9, dyn.NoiseModel(), 0.0), rho)
    i, j = basis_index(0, 1), basis_index(0, 0)
    sup = np.zeros((9, 9), complex)
    sup[i, i] = sup[j, j] = sup[i, j] = sup[j, i] = 0.5
    out = dyn.free_evolution(sup, H9, dyn.NoiseModel(), 70e-6)
    assert abs(out[i, j]) / 0.5 == pytest.approx(math.exp(-1), abs=1e-3)


def test_electron_t1_relaxation():
    noise = dyn.NoiseModel()
    rho = dyn.basis_state(-1, 1)
    out = dyn.free_evolution(rho, H9, noise, 254e-6)
    pm = dyn.electron_populations(out)[2]
    # a_perp admixture of order (a_perp / D)^2 separates the dressed and bare bases
    assert pm == pytest.approx(1 / 3 + 2 / 3 * math.exp(-1), abs=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-7, 1e-4), st.floats(1e-7, 1e-4), st.integers(0, 10_000))
def test_free_evolution_composes(t1, t2, seed):
    rho = random_state(np.random.default_rng(seed))
    noise = dyn.NoiseModel()
    a = dyn.free_evolution(dyn.free_evolution(rho, H9, noise, t1), H9, noise, t2)
    b = dyn.free_evolution(rho, H9, noise, t1 + t2)
    assert np.abs(a - b).max() < 1e-8


def test_readout_ratio_and_shots():
    bright, _ = dyn.readout(dyn.basis_state(0, 1), OPT, 3e-7)
    dim, _ = dyn.readout(dyn.basis_state(0, 0), OPT, 3e-7)
    assert dim / bright == pytest.approx(0.80, abs=1e-12)
    rel = [s / m for m, s in (dyn.readout(dyn.basis_state(0, 1), OPT, 3e-7, shots=n) for n in (1, 100, 10 ** 6))]
    assert rel[0] > rel[1] > rel[2]
    assert rel[2] < 2e-3
    with pytest.raises(ValidationError):
        dyn.readout(dyn.basis_state(0, 1), OPT, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.integers(0, 10_000))
def test_readout_linear(alpha, seed):
    rng = np.random.default_rng(seed)
    r1, r2 = random_state(rng), random_state(rng)
    m = dyn.readout(alpha * r1 + (1 - alpha) * r2, OPT, 3e-7)[0]
    ref = alpha * dyn.readout(r1, OPT, 3e-7)[0] + (1 - alpha) * dyn.readout(r2, OPT, 3e-7)[0]
    assert m == pytest.approx(ref, rel=1e-12, abs=1e-15)


# ---------------------------------------------------------------------------
# invariants of every evolution operation on random states

_OPS = ("free", "mw", "rf", "pump", "settle")


def _apply(op, rho, rng):
    if op == "free":
        return dyn.free_evolution(rho, dyn.hamiltonian_for(P06, B460, rho.shape[0]), dyn.NoiseModel(),
                                  rng.uniform(0, 300e-6))
    if op in ("mw", "rf"):
        rho = dyn.settle(rho, OPT)
        f = rng.uniform(2.0e9, 2.9e9) if op == "mw" else rng.uniform(4.8e6, 7.5e6)
        rabi = rng.uniform(1e6, 60e6) if op == "mw" else rng.uniform(1e3, 50e3)
        drive = dyn.make_drive(H9, op, f, rabi, rng.uniform(0, 2 * math.pi))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", dyn.RWAWarning)
            return dyn.coherent_pulse(rho, drive, rng.uniform(0, 2e-6 if op == "mw" else 100e-6),
                                      dyn.NoiseModel(), t0=rng.uniform(0, 1e-3))
    if op == "pump":
        r = rho if rho.shape[0] == dyn.N_FULL else dyn.embed(rho)
        return dyn.optical_pump(r, OPT, P06, B460, rng.uniform(0, 3e-6), dyn.NoiseModel())
    return dyn.settle(rho, OPT)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.lists(st.sampled_from(_OPS), min_size=1, max_size=4))
def test_operations_preserve_physicality(seed, ops):
    rng = np.random.default_rng(seed)
    rho = random_state(rng)
    for op in ops:
        rho = _apply(op, rho, rng)
        assert_physical(rho)
