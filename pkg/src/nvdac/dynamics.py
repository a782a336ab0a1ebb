"""Open-system dynamics of the NV electron / 14N nuclear spin pair.

Density matrices are plain complex ndarrays, either the 9-level ground
manifold or the 21-level optical model::

    0..8    ground triplet  (x) 14N   (spinops product ordering)
    9..17   excited triplet (x) 14N
    18..20  metastable singlet (x) 14N   (m_I = +1, 0, -1)

Hamiltonians are in Hz; every collapse rate is in 1/s.  The master equation
is d(rho)/dt = -2 pi i [H, rho] + sum_k r_k D[C_k] rho.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import expm

from .errors import StepSizeError, ValidationError
from .spinops import (
    FieldVector,
    Hamiltonian,
    NVParams,
    basis_index,
    build_excited_hamiltonian,
    build_ground_hamiltonian,
    spin1_operators,
)

N_GS = 9
N_FULL = 21
GS = slice(0, 9)
ES = slice(9, 18)
SINGLET = slice(18, 21)

TRACE_TOL = 1e-9
HERM_TOL = 1e-9
POS_TOL = 1e-8


class RWAWarning(UserWarning):
    """Drive strong compared with the detuning of discarded couplings."""


@dataclass(frozen=True)
class OpticalModel:
    pump_rate: float = 10e6
    radiative_rate: float = 66e6
    isc_rate_ms0: float = 5e6
    isc_rate_ms1: float = 50e6
    singlet_decay: float = 3.3e6
    singlet_branching_ms0: float = 0.9
    counts_rate_bright: float = 2e6
    contrast_nuclear: float = 0.20
    contrast_electron: float = 0.30

    def __post_init__(self):
        for name in ("pump_rate", "radiative_rate", "isc_rate_ms0", "isc_rate_ms1",
                     "singlet_decay", "counts_rate_bright"):
            if getattr(self, name) < 0:
                raise ValidationError(f"optical.{name} must be >= 0")
        for name in ("singlet_branching_ms0", "contrast_nuclear", "contrast_electron"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError(f"optical.{name} must lie in [0, 1]")
        if not self.isc_rate_ms1 > self.isc_rate_ms0:
            raise ValidationError("optical.isc_rate_ms1 must exceed optical.isc_rate_ms0")


@dataclass(frozen=True)
class NoiseModel:
    """Phenomenological relaxation.

    ``t2e_star`` and ``t2n_star`` are the total coherence decay times of the
    m_S = 0 <-> +-1 and m_I = +1 <-> 0 coherences; the pure-dephasing part is
    whatever the T1 channels do not already supply.
    """

    t1e: float = 254e-6
    t2e_star: float = 50e-9
    t2n_star: float = 70e-6
    t1n: float = math.inf
    shot_noise: bool = True

    def __post_init__(self):
        for name in ("t1e", "t2e_star", "t2n_star", "t1n"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"noise.{name} must be > 0")
        if self.t2e_star > 2 * self.t1e:
            raise ValidationError("noise.t2e_star must not exceed 2 * noise.t1e")


# ----------------------------------------------------------------------------
# state helpers

def validate_state(rho, what="density matrix"):
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] not in (N_GS, N_FULL):
        raise ValidationError(f"{what} must be 9x9 or 21x21, got {rho.shape}")
    return rho


def state_defects(rho) -> tuple[float, float, float]:
    """(|tr - 1|, Hermiticity defect, most negative eigenvalue)."""
    tr = abs(np.trace(rho) - 1)
    herm = np.abs(rho - rho.conj().T).max()
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    return float(tr), float(herm), float(lam)


def is_physical(rho) -> bool:
    tr, herm, lam = state_defects(rho)
    return tr < TRACE_TOL and herm < HERM_TOL and lam > -POS_TOL


def thermal_state(dim: int = N_GS) -> np.ndarray:
    """Maximally mixed ground-state populations (embedded if ``dim`` is 21)."""
    rho = np.zeros((dim, dim), complex)
    rho[GS, GS] = np.eye(N_GS) / N_GS
    return rho


def basis_state(m_s: int, m_i: int, dim: int = N_GS) -> np.ndarray:
    rho = np.zeros((dim, dim), complex)
    i = basis_index(m_s, m_i)
    rho[i, i] = 1
    return rho


def embed(rho9) -> np.ndarray:
    rho = np.zeros((N_FULL, N_FULL), complex)
    rho[GS, GS] = rho9
    return rho


def populations(rho) -> np.ndarray:
    return np.real(np.diag(rho)).copy()


def nuclear_populations(rho) -> np.ndarray:
    """Populations of m_I = (+1, 0, -1) summed over every electronic level."""
    p = populations(rho)
    out = p[:9].reshape(3, 3).sum(axis=0)
    if len(p) == N_FULL:
        out = out + p[9:18].reshape(3, 3).sum(axis=0) + p[18:21]
    return out


def electron_populations(rho) -> np.ndarray:
    """Ground plus excited populations of m_S = (+1, 0, -1)."""
    p = populations(rho)
    out = p[:9].reshape(3, 3).sum(axis=1)
    if len(p) == N_FULL:
        out = out + p[9:18].reshape(3, 3).sum(axis=1)
    return out


def nuclear_polarization(rho) -> float:
    pn = nuclear_populations(rho)
    return float(pn[0] - pn[2])


# ----------------------------------------------------------------------------
# Liouvillian machinery (row-major vectorisation: vec(A rho B) = (A kron B^T) vec(rho))

def liouvillian(h, collapse=(), sparse: bool = False):
    """Superoperator of the master equation; ``collapse`` holds (rate, operator).

    With ``sparse`` a CSR matrix is returned (used by the steady-state solver).
    """
    m = h.matrix if isinstance(h, Hamiltonian) else np.asarray(h)
    n = m.shape[0]
    a = -2j * math.pi * m.astype(complex)
    jumps = []
    for rate, c in collapse:
        if rate == 0:
            continue
        a = a - 0.5 * rate * (c.conj().T @ c)
        jumps.append((rate, c))
    if sparse:
        return _sparse_generator(a, jumps, n)
    eye = np.eye(n)
    sup = np.kron(a, eye) + np.kron(eye, a.conj())
    for rate, c in jumps:
        sup += rate * np.kron(c, c.conj())
    return sup


def _sparse_generator(a, jumps, n):
    # direct COO assembly of kron(a, I) + kron(I, conj a) + sum r kron(c, conj c)
    rows, cols, vals = [], [], []
    ar = np.arange(n)
    i, j = np.nonzero(a)
    v = a[i, j]
    rows.append((i[:, None] * n + ar).ravel())
    cols.append((j[:, None] * n + ar).ravel())
    vals.append(np.repeat(v, n))
    rows.append((ar[:, None] * n + i).ravel())
    cols.append((ar[:, None] * n + j).ravel())
    vals.append(np.tile(v.conj(), n))
    for rate, c in jumps:
        i, j = np.nonzero(c)
        v = c[i, j]
        rows.append((i[:, None] * n + i[None, :]).ravel())
        cols.append((j[:, None] * n + j[None, :]).ravel())
        vals.append((rate * v[:, None] * v.conj()[None, :]).ravel())
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    val = np.concatenate(vals)
    return sp.csr_matrix((val, (r, c)), shape=(n * n, n * n))


def propagator(sup: np.ndarray, t: float, max_norm_step: float = 0.1) -> np.ndarray:
    """exp(sup * t) by substepping to norm <= ``max_norm_step`` and repeated squaring."""
    if t == 0:
        return np.eye(sup.shape[0], dtype=complex)
    norm = np.abs(sup).sum(axis=0).max() * t
    n = max(1, int(math.ceil(norm / max_norm_step)))
    step = expm(sup * (t / n))
    return np.linalg.matrix_power(step, n)


def apply_super(prop: np.ndarray, rho: np.ndarray) -> np.ndarray:
    n = rho.shape[0]
    out = (prop @ rho.reshape(-1)).reshape(n, n)
    return 0.5 * (out + out.conj().T)


def steady_state(sup) -> np.ndarray:
    """Unique trace-one fixed point of the generator (dense or sparse)."""
    n2 = sup.shape[0]
    n = int(round(math.sqrt(n2)))
    tr_row = np.eye(n).reshape(-1)
    rhs = np.zeros(n2, complex)
    rhs[0] = 1
    if sp.issparse(sup):
        a = sup.tolil()
        a[0, :] = tr_row
        vec = spla.spsolve(a.tocsc(), rhs)
    else:
        a = np.array(sup, copy=True)
        a[0, :] = tr_row
        vec = np.linalg.solve(a, rhs)
    rho = vec.reshape(n, n)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def lindblad_step(rho, h, collapse, dt: float) -> np.ndarray:
    """Exact propagation over one step of piecewise-constant generator."""
    rho = validate_state(rho) if np.asarray(rho).shape[0] in (N_GS, N_FULL) else np.asarray(rho)
    m = h.matrix if isinstance(h, Hamiltonian) else np.asarray(h)
    if m.shape != rho.shape:
        raise ValidationError(f"Hamiltonian {m.shape} and state {rho.shape} dimensions differ")
    if dt <= 0:
        raise ValidationError("dt must be positive")
    if 2 * math.pi * np.linalg.norm(m, 2) * dt > math.pi:
        raise StepSizeError("step too large: |H| dt exceeds pi")
    return apply_super(propagator(liouvillian(m, collapse), dt), rho)


# ----------------------------------------------------------------------------
# operators of the 21-level model

def _proj(i, j, n=N_FULL):
    m = np.zeros((n, n), complex)
    m[i, j] = 1
    return m


@lru_cache(maxsize=None)
def _optical_ops():
    pump = np.zeros((N_FULL, N_FULL), complex)
    for i in range(9):
        pump[9 + i, i] = 1
    rad = pump.T.copy()
    isc = {}
    relax = {}
    for ms in (1, 0, -1):
        c = np.zeros((N_FULL, N_FULL), complex)
        r = np.zeros((N_FULL, N_FULL), complex)
        for k, mi in enumerate((1, 0, -1)):
            c[18 + k, 9 + basis_index(ms, mi)] = 1
            r[basis_index(ms, mi), 18 + k] = 1
        isc[ms] = c
        relax[ms] = r
    return pump, rad, isc, relax


def optical_channels(model: OpticalModel, laser: bool = True, pump_rate: float | None = None):
    """Spin-conserving optical cycle; nuclear coherences survive each jump."""
    pump, rad, isc, relax = _optical_ops()
    out = []
    if laser:
        out.append((model.pump_rate if pump_rate is None else pump_rate, pump))
    out.append((model.radiative_rate, rad))
    for ms in (1, 0, -1):
        out.append((model.isc_rate_ms0 if ms == 0 else model.isc_rate_ms1, isc[ms]))
        branch = model.singlet_branching_ms0 if ms == 0 else 0.5 * (1 - model.singlet_branching_ms0)
        out.append((model.singlet_decay * branch, relax[ms]))
    return out


def _ground_embed(op, dim):
    if dim == N_GS:
        return op
    out = np.zeros((dim, dim), complex)
    out[GS, GS] = op
    return out


def _dressed(op, h):
    """Part of ``op`` diagonal in the eigenbasis of ``h``."""
    dim = h.shape[0]
    _, v = _manifold_eig(h, dim)
    d = np.real(np.einsum("ik,ij,jk->k", v.conj(), op, v))
    return (v * d) @ v.conj().T


def noise_channels(noise: NoiseModel, dim: int = N_GS, extra_width: float = 0.0, h=None):
    """T1/T2* channels acting on the ground manifold.

    ``extra_width`` (Hz FWHM) adds nuclear pure dephasing on top of t2n_star.
    With ``h`` the dephasing operators are taken diagonal in its eigenbasis, so
    fast electron dephasing cannot drive spin flips through hyperfine admixture.
    """
    s = spin1_operators()
    e3 = s.identity
    out = []
    g1e = 1.0 / (3.0 * noise.t1e)
    g1n = 0.0 if math.isinf(noise.t1n) else 1.0 / (3.0 * noise.t1n)
    for a in range(3):
        for b in range(3):
            if a == b:
                continue
            jump = np.zeros((3, 3), complex)
            jump[a, b] = 1
            out.append((g1e, _ground_embed(np.kron(jump, e3), dim)))
            if g1n:
                out.append((g1n, _ground_embed(np.kron(e3, jump), dim)))
    # coherence decay from T1 jumps is 2*g1 for neighbouring levels
    gphi_e = max(0.0, 2.0 * (1.0 / noise.t2e_star - 2 * g1e))
    gphi_n = max(0.0, 2.0 * (1.0 / noise.t2n_star - 2 * g1e - 2 * g1n)) + 2 * math.pi * extra_width
    deph_e = _ground_embed(np.kron(s.sz, e3), dim)
    deph_n = _ground_embed(np.kron(e3, s.sz), dim)
    if h is not None:
        m = h.matrix if isinstance(h, Hamiltonian) else np.asarray(h)
        deph_e, deph_n = _dressed(deph_e, m), _dressed(deph_n, m)
    out.append((gphi_e, deph_e))
    out.append((gphi_n, deph_n))
    return [(r, c) for r, c in out if r > 0]


def full_hamiltonian(p: NVParams, b: FieldVector) -> np.ndarray:
    s = spin1_operators()
    h = np.zeros((N_FULL, N_FULL), complex)
    h[GS, GS] = build_ground_hamiltonian(p, b).matrix
    h[ES, ES] = build_excited_hamiltonian(p, b).matrix
    bx, by, bz = b.vector
    h[SINGLET, SINGLET] = p.q * (s.sz @ s.sz) + p.gamma_n * (bx * s.sx + by * s.sy + bz * s.sz)
    return h


def hamiltonian_for(p: NVParams, b: FieldVector, dim: int) -> np.ndarray:
    return build_ground_hamiltonian(p, b).matrix if dim == N_GS else full_hamiltonian(p, b)


# ----------------------------------------------------------------------------
# evolution operations

def optical_pump(rho, model: OpticalModel, p: NVParams, b: FieldVector, duration: float,
                 noise: NoiseModel | None = None, pump_rate: float | None = None) -> np.ndarray:
    """Laser on for ``duration``: pumping, emission, ISC and singlet decay.

    Excited-state hyperfine mixing is coherent through the excited Hamiltonian,
    which is what transfers polarization near the excited-state anti-crossing.
    """
    rho = validate_state(rho)
    if rho.shape[0] != N_FULL:
        raise ValidationError("optical_pump needs the 21-level state; use embed()")
    if duration < 0:
        raise ValidationError("duration must be >= 0")
    if duration == 0:
        return rho.copy()
    return apply_super(_pump_map(model, p, b, float(duration), noise, pump_rate), rho)


@lru_cache(maxsize=64)
def _pump_map(model, p, b, duration, noise, pump_rate):
    h = full_hamiltonian(p, b)
    coll = optical_channels(model, True, pump_rate)
    if noise is not None:
        coll += noise_channels(noise, N_FULL, h=h)
    return propagator(liouvillian(h, coll), duration)


def pumped_steady_state(model: OpticalModel, p: NVParams, b: FieldVector,
                        noise: NoiseModel | None = None) -> np.ndarray:
    """Fixed point of continuous optical pumping (the state after many repetitions)."""
    h = full_hamiltonian(p, b)
    coll = optical_channels(model, True)
    if noise is not None:
        coll += noise_channels(noise, N_FULL, h=h)
    return steady_state(liouvillian(h, coll, sparse=True))


@lru_cache(maxsize=32)
def _settle_map(model: OpticalModel):
    sup = liouvillian(np.zeros((N_FULL, N_FULL)), optical_channels(model, laser=False))
    slowest = min(model.singlet_decay, model.radiative_rate + model.isc_rate_ms0)
    return propagator(sup, 60.0 / slowest, max_norm_step=0.5)


def settle(rho, model: OpticalModel) -> np.ndarray:
    """Let excited and singlet populations decay; returns the 9-level ground state.

    The decay (sub-microsecond) is treated as instantaneous on the time scale of
    the microwave and radio-frequency segments that follow.
    """
    rho = validate_state(rho)
    if rho.shape[0] == N_GS:
        return rho.copy()
    out = apply_super(_settle_map(model), rho)[GS, GS]
    return out / np.trace(out).real


def dnp_efficiency_scan(model: OpticalModel, p: NVParams, b_magnitudes,
                        duration: float = 5e-6, rho0=None) -> np.ndarray:
    """Nuclear polarization <I_z> after ``duration`` of pumping per aligned field value."""
    rho0 = thermal_state(N_FULL) if rho0 is None else rho0
    out = []
    for bm in b_magnitudes:
        rho = optical_pump(rho0, model, p, FieldVector(float(bm)), duration)
        out.append(nuclear_polarization(rho))
    return np.array(out)


# ----------------------------------------------------------------------------
# drives in the rotating frame

def _manifold_eig(h, dim):
    """Eigen-decomposition done block by block so levels never mix across manifolds."""
    if dim == N_GS:
        return np.linalg.eigh(h)
    e = np.zeros(dim)
    v = np.zeros((dim, dim), complex)
    for sl in (GS, ES, SINGLET):
        ee, vv = np.linalg.eigh(h[sl, sl])
        e[sl] = ee
        v[sl, sl] = vv
    return e, v


@dataclass
class RotatingDrive:
    """Time-independent RWA generator for one MW or RF tone.

    ``kind`` selects the frame: 'mw' counts photons with S_z^2, 'rf' with
    sign(q) I_z^2, evaluated on the eigenstates of the static Hamiltonian so the
    frame always commutes with it.
    """

    h0: np.ndarray
    kind: str
    frequency: float
    rabi: float
    phase: float = 0.0
    q_sign: float = 1.0
    energies: np.ndarray = field(init=False, repr=False)
    vectors: np.ndarray = field(init=False, repr=False)
    photons: np.ndarray = field(init=False, repr=False)
    h_rot: np.ndarray = field(init=False, repr=False)
    min_discarded: float = field(init=False)

    def __post_init__(self):
        if self.kind not in ("mw", "rf"):
            raise ValidationError(f"unknown drive kind {self.kind!r}")
        dim = self.h0.shape[0]
        s = spin1_operators()
        e3 = s.identity
        sz2 = s.sz @ s.sz
        if self.kind == "mw":
            k_op = np.kron(sz2, e3)
            k_singlet = np.zeros((3, 3))
            x_op = math.sqrt(2) * np.kron(s.sx, e3)
        else:
            k_op = np.sign(self.q_sign) * np.kron(e3, sz2)
            k_singlet = np.sign(self.q_sign) * sz2
            x_op = math.sqrt(2) * np.kron(e3, s.sx)
        if dim == N_FULL:
            # the frame spans every manifold so optical jumps stay in one harmonic
            k_full = np.zeros((dim, dim), complex)
            k_full[GS, GS] = k_op
            k_full[ES, ES] = k_op
            k_full[SINGLET, SINGLET] = k_singlet
            k_op = k_full
        x_op = _ground_embed(x_op, dim)
        e, v = _manifold_eig(self.h0, dim)
        n = np.rint(np.real(np.einsum("ik,ij,jk->k", v.conj(), k_op, v)))
        self.energies, self.vectors, self.photons = e, v, n
        x = v.conj().T @ x_op @ v
        dn = n[:, None] - n[None, :]
        c = 0.5 * self.rabi
        keep = np.zeros_like(x)
        keep[dn == 1] = c * np.exp(-1j * self.phase) * x[dn == 1]
        keep[dn == -1] = c * np.exp(1j * self.phase) * x[dn == -1]
        h = np.diag(e - self.frequency * n) + keep
        self.h_rot = v @ h @ v.conj().T
        self.h_rot = 0.5 * (self.h_rot + self.h_rot.conj().T)
        # discarded couplings oscillate at these frequencies in the frame; each is
        # scaled by its matrix element so weak admixtures do not trip the guard
        gap = e[:, None] - e[None, :]
        ax = np.abs(x)
        coupled = ax > 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            other = np.abs(gap - self.frequency * dn) / ax
            counter = np.abs(gap + self.frequency * dn) / ax
        cand = list(other[coupled & (np.abs(dn) != 1)]) + list(counter[coupled & (np.abs(dn) == 1)])
        self.min_discarded = float(min(cand)) if cand else math.inf

    @property
    def rwa_valid(self) -> bool:
        return self.rabi <= 0.2 * self.min_discarded

    def frame(self, t: float) -> np.ndarray:
        """U(t) = exp(+2 pi i f t K); rho_rot = U rho_lab U^dagger."""
        ph = np.exp(2j * math.pi * self.frequency * t * self.photons)
        return (self.vectors * ph) @ self.vectors.conj().T

    def steady_state(self, collapse) -> np.ndarray:
        """Fixed point of the frame generator, solved in the static eigenbasis
        where the secular collapse parts stay sparse; returned in the product basis."""
        v = self.vectors
        dn = self.photons[:, None] - self.photons[None, :]
        h_e = v.conj().T @ self.h_rot @ v
        h_e[np.abs(h_e) < 1e-12 * max(1.0, np.abs(h_e).max())] = 0
        parts = []
        for rate, c in collapse:
            ce = v.conj().T @ c @ v
            ce[np.abs(ce) < 1e-12 * max(1.0, np.abs(ce).max())] = 0
            for d in np.unique(dn[ce != 0]):
                parts.append((rate, np.where(dn == d, ce, 0)))
        rho_e = steady_state(liouvillian(h_e, parts, sparse=True))
        rho = v @ rho_e @ v.conj().T
        return 0.5 * (rho + rho.conj().T)

    def secular(self, collapse):
        """Split each collapse operator into frame-harmonic parts, dropping cross terms."""
        v = self.vectors
        dn = self.photons[:, None] - self.photons[None, :]
        out = []
        for rate, c in collapse:
            ce = v.conj().T @ c @ v
            for d in np.unique(dn[np.abs(ce) > 1e-12]):
                part = np.where(dn == d, ce, 0)
                out.append((rate, v @ part @ v.conj().T))
        return out


def make_drive(h0, kind: str, frequency: float, rabi: float, phase: float = 0.0,
               q_sign: float = 1.0) -> RotatingDrive:
    m = h0.matrix if isinstance(h0, Hamiltonian) else np.asarray(h0)
    return RotatingDrive(m, kind, frequency, rabi, phase, q_sign)


def coherent_pulse(rho, h_drive: RotatingDrive, duration: float, noise: NoiseModel | None = None,
                   t0: float = 0.0, extra_collapse=(), extra_width: float = 0.0) -> np.ndarray:
    """Apply a rotating-frame drive; ``rho`` is in the lab frame at absolute time ``t0``."""
    rho = validate_state(rho)
    if rho.shape != h_drive.h0.shape:
        raise ValidationError("state and drive dimensions differ")
    if duration < 0:
        raise ValidationError("duration must be >= 0")
    if not h_drive.rwa_valid:
        warnings.warn(
            f"drive Rabi frequency {h_drive.rabi:.3g} Hz exceeds 20% of the nearest "
            f"discarded coupling ({h_drive.min_discarded:.3g} Hz)", RWAWarning, stacklevel=2,
        )
    if duration == 0:
        return rho.copy()
    coll = list(extra_collapse)
    if noise is not None:
        coll += noise_channels(noise, rho.shape[0], extra_width, h=h_drive.h0)
    sup = liouvillian(h_drive.h_rot, h_drive.secular(coll))
    u0 = h_drive.frame(t0)
    r = u0 @ rho @ u0.conj().T
    r = apply_super(propagator(sup, duration), r)
    u1 = h_drive.frame(t0 + duration)
    out = u1.conj().T @ r @ u1
    return 0.5 * (out + out.conj().T)


def lab_frame_pulse(rho, h_drive: RotatingDrive, duration: float, steps_per_cycle: int = 40,
                    t0: float = 0.0) -> np.ndarray:
    """Validation mode: full time-dependent drive, no rotating-wave approximation."""
    dim = rho.shape[0]
    s = spin1_operators()
    e3 = s.identity
    x = math.sqrt(2) * (np.kron(s.sx, e3) if h_drive.kind == "mw" else np.kron(e3, s.sx))
    x = _ground_embed(x, dim)
    nsteps = max(1, int(math.ceil(duration * h_drive.frequency * steps_per_cycle)))
    dt = duration / nsteps
    psi_rho = rho.copy()
    for k in range(nsteps):
        t = t0 + (k + 0.5) * dt
        h = h_drive.h0 + h_drive.rabi * math.cos(2 * math.pi * h_drive.frequency * t + h_drive.phase) * x
        e, v = np.linalg.eigh(h)
        u = (v * np.exp(-2j * math.pi * e * dt)) @ v.conj().T
        psi_rho = u @ psi_rho @ u.conj().T
    return psi_rho


def free_evolution(rho, h, noise: NoiseModel | None, tau: float, extra_collapse=(),
                   extra_width: float = 0.0) -> np.ndarray:
    rho = validate_state(rho)
    if tau < 0:
        raise ValidationError("tau must be >= 0")
    if tau == 0:
        return rho.copy()
    m = h.matrix if isinstance(h, Hamiltonian) else np.asarray(h)
    coll = list(extra_collapse)
    if noise is not None:
        coll += noise_channels(noise, rho.shape[0], extra_width, h=m)
    return apply_super(propagator(liouvillian(m, coll), tau), rho)


# ----------------------------------------------------------------------------
# readout

def readout_weights(model: OpticalModel, dim: int = N_GS) -> np.ndarray:
    """Relative brightness of each basis level; |0, +1> is 1 by definition."""
    w = np.empty(9)
    for ms in (1, 0, -1):
        for mi in (1, 0, -1):
            we = 1.0 if ms == 0 else 1.0 - model.contrast_electron
            wn = 1.0 if mi == 1 else 1.0 - model.contrast_nuclear
            w[basis_index(ms, mi)] = we * wn
    if dim == N_GS:
        return w
    return np.concatenate([w, w, np.zeros(3)])


def readout(rho, model: OpticalModel, window: float, shots: int = 1,
            shot_noise: bool = True) -> tuple[float, float]:
    """Expected photons per shot and the Poisson sigma of the shot average."""
    rho = validate_state(rho)
    if window <= 0:
        raise ValidationError("readout window must be positive")
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    w = readout_weights(model, rho.shape[0])
    mean = model.counts_rate_bright * window * float(np.real(np.diag(rho)) @ w)
    sigma = math.sqrt(mean * shots) / shots if shot_noise else 0.0
    return mean, sigma


def brightness(rho, model: OpticalModel) -> float:
    """Readout signal normalised to the |0, +1> level."""
    w = readout_weights(model, rho.shape[0])
    return float(np.real(np.diag(rho)) @ w)
