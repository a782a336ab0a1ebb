"""Spin-1 operators and NV/14N spin Hamiltonians.

All energies are in Hz (ordinary frequency, not angular), fields in Gauss.
The single-spin basis is ordered (m = +1, 0, -1); the coupled basis is
|m_S> (x) |m_I>, so index = 3 * (1 - m_S) + (1 - m_I).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import MixingError, ValidationError

D_GS = 2.870e9
D_ES = 1.420e9
GAMMA_E = 2.8025e6  # Hz/G
GAMMA_N = 307.7  # Hz/G, 14N
Q_AMBIENT = 4.945e6
A_PAR_AMBIENT = -2.16e6
A_PERP = -2.7e6
A_PAR_ES = -40e6

M_VALUES = (1, 0, -1)


@dataclass(frozen=True)
class OperatorSet:
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    identity: np.ndarray

    @property
    def splus(self):
        return self.sx + 1j * self.sy

    @property
    def sminus(self):
        return self.sx - 1j * self.sy


@lru_cache(maxsize=None)
def _spin1():
    r = 1 / math.sqrt(2)
    sx = np.array([[0, r, 0], [r, 0, r], [0, r, 0]], dtype=complex)
    sy = np.array([[0, -1j * r, 0], [1j * r, 0, -1j * r], [0, 1j * r, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    for m in (sx, sy, sz):
        m.setflags(write=False)
    eye = np.eye(3, dtype=complex)
    eye.setflags(write=False)
    return OperatorSet(sx, sy, sz, eye)


def spin1_operators() -> OperatorSet:
    """Standard spin-1 matrices in the (+1, 0, -1) basis."""
    return _spin1()


@dataclass(frozen=True)
class NVParams:
    """Spin-Hamiltonian coefficients at one pressure.

    ``q`` and ``a_par`` are signed; reported quantities are magnitudes.
    ``check_ranges`` turns off the 14N plausibility guard for synthetic work.
    """

    d_gs: float = D_GS
    d_es: float = D_ES
    q: float = Q_AMBIENT
    a_par: float = A_PAR_AMBIENT
    a_perp: float = A_PERP
    a_par_es: float = A_PAR_ES
    a_perp_es: float = A_PAR_ES
    gamma_e: float = GAMMA_E
    gamma_n: float = GAMMA_N
    check_ranges: bool = field(default=True, compare=False)

    def __post_init__(self):
        if not (self.d_gs > 0 and self.d_es > 0):
            raise ValidationError("zero-field splittings must be positive")
        if not (self.gamma_e > 0 and self.gamma_n > 0):
            raise ValidationError("gyromagnetic ratios must be positive")
        if self.check_ranges:
            if not 4.0e6 <= abs(self.q) <= 5.5e6:
                raise ValidationError(f"|q| = {abs(self.q):.4g} Hz outside [4.0, 5.5] MHz")
            if not 1.5e6 <= abs(self.a_par) <= 2.5e6:
                raise ValidationError(f"|a_par| = {abs(self.a_par):.4g} Hz outside [1.5, 2.5] MHz")

    def replace(self, **kw) -> "NVParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class FieldVector:
    """Magnetic field: magnitude in Gauss, polar angle from the NV axis, azimuth."""

    magnitude: float = 0.0
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValidationError("field magnitude must be >= 0")
        if not 0 <= self.theta <= math.pi + 1e-12:
            raise ValidationError("theta must lie in [0, pi]")
        if not 0 <= self.phi < 2 * math.pi:
            raise ValidationError("phi must lie in [0, 2 pi)")

    @property
    def vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return self.magnitude * np.array(
            [st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)]
        )

    @classmethod
    def from_vector(cls, v) -> "FieldVector":
        v = np.asarray(v, dtype=float)
        b = float(np.linalg.norm(v))
        if b == 0:
            return cls(0.0, 0.0, 0.0)
        theta = math.acos(max(-1.0, min(1.0, v[2] / b)))
        phi = math.atan2(v[1], v[0]) % (2 * math.pi)
        if phi >= 2 * math.pi:
            phi = 0.0
        return cls(b, theta, phi)

    @property
    def aligned(self) -> bool:
        return self.magnitude == 0 or self.theta == 0.0


@dataclass(frozen=True)
class Hamiltonian:
    matrix: np.ndarray
    basis_labels: tuple

    def __post_init__(self):
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n) or len(self.basis_labels) != n:
            raise ValidationError("Hamiltonian dimension does not match its basis labels")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


PRODUCT_LABELS = tuple((ms, mi) for ms in M_VALUES for mi in M_VALUES)


def basis_index(m_s: int, m_i: int) -> int:
    return 3 * (1 - m_s) + (1 - m_i)


def _coupled(d, q, a_par, a_perp, gamma_e, gamma_n, bvec):
    s = spin1_operators()
    e3 = s.identity
    kron = np.kron
    sx, sy, sz = s.sx, s.sy, s.sz
    h = d * kron(sz @ sz, e3)
    h = h + q * kron(e3, sz @ sz)
    h = h + a_par * kron(sz, sz)
    h = h + a_perp * (kron(sx, sx) + kron(sy, sy))
    bx, by, bz = bvec
    h = h + gamma_e * (bx * kron(sx, e3) + by * kron(sy, e3) + bz * kron(sz, e3))
    h = h + gamma_n * (bx * kron(e3, sx) + by * kron(e3, sy) + bz * kron(e3, sz))
    return 0.5 * (h + h.conj().T)


def build_ground_hamiltonian(p: NVParams, b: FieldVector) -> Hamiltonian:
    """9x9 ground-state Hamiltonian in the |m_S, m_I> product basis."""
    h = _coupled(p.d_gs, p.q, p.a_par, p.a_perp, p.gamma_e, p.gamma_n, b.vector)
    return Hamiltonian(h, PRODUCT_LABELS)


def build_excited_hamiltonian(p: NVParams, b: FieldVector) -> Hamiltonian:
    """9x9 excited-state Hamiltonian (room-temperature orbital average)."""
    h = _coupled(p.d_es, p.q, p.a_par_es, p.a_perp_es, p.gamma_e, p.gamma_n, b.vector)
    return Hamiltonian(h, PRODUCT_LABELS)


def electron_hamiltonian(d: float, gamma_e: float, bvec) -> np.ndarray:
    """3x3 electron-only Hamiltonian (hyperfine-averaged line centres)."""
    s = spin1_operators()
    bx, by, bz = bvec
    return d * (s.sz @ s.sz) + gamma_e * (bx * s.sx + by * s.sy + bz * s.sz)


def eigensystem(h) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues (Hz) and the unitary of column eigenvectors."""
    m = h.matrix if isinstance(h, Hamiltonian) else np.asarray(h)
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m - m.conj().T).max() > 1e-9 * scale:
        raise ValidationError("matrix is not Hermitian")
    energies, states = np.linalg.eigh(m)
    return energies, states


def _label_index(labels, label) -> int:
    try:
        return labels.index(tuple(label))
    except ValueError:
        raise ValidationError(f"unknown basis label {label!r}") from None


def eigenstate_for_label(h: Hamiltonian, label, threshold: float = 0.5):
    """(energy, index) of the eigenstate whose dominant basis component is ``label``."""
    energies, states = eigensystem(h)
    i = _label_index(h.basis_labels, label)
    weights = np.abs(states[i, :]) ** 2
    k = int(np.argmax(weights))
    if weights[k] <= threshold:
        raise MixingError(
            f"no eigenstate has more than {threshold:.2f} weight on {label}; "
            "operating point is too close to an anti-crossing"
        )
    return energies[k], k


def transition_frequency(h: Hamiltonian, from_label, to_label) -> float:
    e_from, k_from = eigenstate_for_label(h, from_label)
    e_to, k_to = eigenstate_for_label(h, to_label)
    if k_from == k_to:
        raise MixingError(f"{from_label} and {to_label} map onto the same eigenstate")
    return float(abs(e_to - e_from))


# NV axes expressed in the frame where axis 1 is z and axis 2 lies in the x-z plane.
_C = -1.0 / 3.0
_S = math.sqrt(8.0) / 3.0
NV_AXES = np.array(
    [
        [0.0, 0.0, 1.0],
        [_S, 0.0, _C],
        [-_S / 2, _S * math.sqrt(3) / 2, _C],
        [-_S / 2, -_S * math.sqrt(3) / 2, _C],
    ]
)


def axis_frame(n) -> np.ndarray:
    """Rotation whose rows are the (x, y, z) unit vectors of an NV frame with z = n."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = ref - n * (ref @ n)
    x /= np.linalg.norm(x)
    y = np.cross(n, x)
    return np.vstack([x, y, n])


def project_field(b_lab, axis) -> FieldVector:
    """Lab-frame field vector expressed in the frame of one NV axis."""
    v = b_lab.vector if isinstance(b_lab, FieldVector) else np.asarray(b_lab, dtype=float)
    return FieldVector.from_vector(axis_frame(axis) @ v)


def _electron_lines(d, gamma_e, bvec):
    e, u = np.linalg.eigh(electron_hamiltonian(d, gamma_e, bvec))
    k0 = int(np.argmax(np.abs(u[1, :]) ** 2))
    return sorted(abs(e[k] - e[k0]) for k in range(3) if k != k0)


def odmr_lines(p: NVParams, b_lab, axes=NV_AXES) -> list[float]:
    """Eight hyperfine-averaged electron resonances, two per NV orientation.

    Returned grouped by axis, (lower, upper) per axis.
    """
    v = b_lab.vector if isinstance(b_lab, FieldVector) else np.asarray(b_lab, dtype=float)
    out = []
    for n in axes:
        out.extend(_electron_lines(p.d_gs, p.gamma_e, axis_frame(n) @ v))
    return out


def nmr_frequencies(p: NVParams, b: FieldVector) -> tuple[float, float]:
    """Exact f_RF0 and f_RF1: the m_I=+1 <-> 0 transitions in m_S = 0 and m_S = -1."""
    h = build_ground_hamiltonian(p, b)
    f0 = transition_frequency(h, (0, 1), (0, 0))
    f1 = transition_frequency(h, (-1, 1), (-1, 0))
    return f0, f1


def electron_frequency(p: NVParams, b: FieldVector, m_s: int = -1) -> float:
    """Hyperfine-averaged m_S = 0 <-> m_S transition of the NV whose axis is z."""
    lo, hi = _electron_lines(p.d_gs, p.gamma_e, b.vector)
    # below the ground-state anti-crossing m_S=-1 is the lower line
    return lo if m_s == -1 else hi
