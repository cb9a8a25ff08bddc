"""Two-qubit states, global rotations and entanglement estimators.

Basis ordering is (|00>, |01>, |10>, |11>) with the first label for atom A.
Rotation convention: ``R_{phi,theta} = exp(-i theta/2 (cos phi X + sin phi Y))``,
which makes ``R_{0,theta}|00>`` carry a ``-i`` on the odd terms and a minus
sign on ``|11>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

BASIS = ("00", "01", "10", "11")
_INDEX = {label: i for i, label in enumerate(BASIS)}

NORM_TOL = 1e-12
PSD_TOL = 1e-10

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


class StateError(ValueError):
    """Raised for non-normalized or non-physical states."""


def _index(label: str | int) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    return _INDEX[label]


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True)
class TwoQubitState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def normalized(cls, amplitudes) -> "TwoQubitState":
        a = np.asarray(amplitudes, dtype=complex).reshape(4)
        n = np.linalg.norm(a)
        if n == 0:
            raise StateError("zero vector cannot be normalized")
        return cls(a / n)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm**2 - 1.0) <= tol

    def amplitude(self, label: str | int) -> complex:
        return complex(self.amplitudes[_index(label)])

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_density_matrix(self) -> "TwoQubitDensityMatrix":
        a = self.amplitudes
        return TwoQubitDensityMatrix(np.outer(a, a.conj()))


@dataclass(frozen=True)
class TwoQubitDensityMatrix:
    elements: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.elements, dtype=complex).reshape(4, 4)
        object.__setattr__(self, "elements", hermitize(m))

    def __getitem__(self, key) -> complex:
        """``rho["11", "00"]`` returns the coherence rho_{11,00}."""
        row, col = key
        return complex(self.elements[_index(row), _index(col)])

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.elements)))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.elements)).copy()

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.elements)

    def validate(self, tol: float = NORM_TOL) -> "TwoQubitDensityMatrix":
        if abs(self.trace - 1.0) > tol:
            raise StateError(f"trace {self.trace!r} differs from 1")
        if self.eigenvalues().min() < -PSD_TOL:
            raise StateError("density matrix has negative eigenvalues")
        return self

    def normalized(self) -> "TwoQubitDensityMatrix":
        tr = self.trace
        if tr <= 0:
            raise StateError("non-positive trace")
        return TwoQubitDensityMatrix(self.elements / tr)

    @classmethod
    def maximally_mixed(cls) -> "TwoQubitDensityMatrix":
        return cls(np.eye(4) / 4.0)


State = Union[TwoQubitState, TwoQubitDensityMatrix]


@dataclass(frozen=True)
class RotationPulse:
    """Global pulse of area ``angle`` about the equatorial axis ``axis_phase``."""

    axis_phase: float = 0.0
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "axis_phase", float(np.mod(self.axis_phase, 2 * np.pi)))
        object.__setattr__(self, "angle", float(np.mod(self.angle, 2 * np.pi)))

    def single_qubit(self) -> np.ndarray:
        return rotation_matrix(self.axis_phase, self.angle)

    def two_qubit(self) -> np.ndarray:
        u = self.single_qubit()
        return np.kron(u, u)


def rotation_matrix(phi: float, theta: float) -> np.ndarray:
    axis = np.cos(phi) * _X + np.sin(phi) * _Y
    return np.cos(theta / 2) * _I2 - 1j * np.sin(theta / 2) * axis


def global_rotation(state: State, pulse: RotationPulse) -> State:
    """Apply ``pulse`` to both atoms."""
    u = pulse.two_qubit()
    if isinstance(state, TwoQubitState):
        if not state.is_normalized():
            raise StateError("input state is not normalized")
        return TwoQubitState(u @ state.amplitudes)
    if isinstance(state, TwoQubitDensityMatrix):
        if abs(state.trace - 1.0) > NORM_TOL:
            raise StateError("input density matrix does not have unit trace")
        return TwoQubitDensityMatrix(u @ state.elements @ u.conj().T)
    raise TypeError(f"unsupported state type {type(state).__name__}")


def as_density_matrix(state: State) -> TwoQubitDensityMatrix:
    if isinstance(state, TwoQubitState):
        return state.to_density_matrix()
    if isinstance(state, TwoQubitDensityMatrix):
        return state
    return TwoQubitDensityMatrix(np.asarray(state, dtype=complex))


# Bell states ---------------------------------------------------------------

_S2 = 1.0 / np.sqrt(2.0)
PHI_PLUS = TwoQubitState([_S2, 0, 0, _S2])
PHI_MINUS = TwoQubitState([_S2, 0, 0, -_S2])
PSI_PLUS = TwoQubitState([0, _S2, _S2, 0])
PSI_MINUS = TwoQubitState([0, _S2, -_S2, 0])


def overlap(rho: State, target: TwoQubitState) -> float:
    """<target|rho|target>."""
    m = as_density_matrix(rho).elements
    t = target.amplitudes
    return float(np.real(t.conj() @ m @ t))


def fidelity_phi_plus(rho: State) -> float:
    """Overlap with |Phi+>: (rho_00,00 + rho_11,11 + rho_00,11 + rho_11,00)/2."""
    m = as_density_matrix(rho).elements
    f = 0.5 * np.real(m[0, 0] + m[3, 3] + m[0, 3] + m[3, 0])
    return float(np.clip(f, 0.0, 1.0))


def parity(rho: State) -> float:
    p = as_density_matrix(rho).populations()
    return float(p[0] - p[1] - p[2] + p[3])


def analysis_pulse(phi: float) -> RotationPulse:
    """pi/2 analysis pulse used for parity oscillations.

    The axis is offset by pi/2 from the preparation axis so that the parity
    oscillation reads ``2Re(rho_10,01) + 2Im(rho_11,00) sin2phi +
    2Re(rho_11,00) cos2phi`` under the preparation convention above.
    """
    return RotationPulse(phi + np.pi / 2, np.pi / 2)


def parity_curve(rho: State, phis) -> np.ndarray:
    """Parity after the analysis pulse at each phase in ``phis``."""
    dm = as_density_matrix(rho)
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    out = np.empty(phis.shape)
    for i, phi in enumerate(phis):
        out[i] = parity(global_rotation(dm, analysis_pulse(phi)))
    return out


def parity_closed_form(rho: State, phis) -> np.ndarray:
    m = as_density_matrix(rho).elements
    phis = np.asarray(phis, dtype=float)
    c = m[3, 0]
    return 2 * np.real(m[2, 1]) + 2 * np.imag(c) * np.sin(2 * phis) + 2 * np.real(c) * np.cos(2 * phis)


def concurrence_lower_bound(rho: State) -> float:
    """2(|rho_00,11| - sqrt(rho_01,01 rho_10,10)); negative values do not certify."""
    m = as_density_matrix(rho).elements
    p01 = max(np.real(m[1, 1]), 0.0)
    p10 = max(np.real(m[2, 2]), 0.0)
    return float(2.0 * (abs(m[0, 3]) - np.sqrt(p01 * p10)))


def concurrence_bound_equal_split(coherence_abs: float, p_odd: float) -> float:
    """Bound when only P01 + P10 is known; the worst case is P01 = P10."""
    return float(2.0 * (abs(coherence_abs) - 0.5 * p_odd))


# Noise channels --------------------------------------------------------------


def depolarize(rho: State, p: float) -> TwoQubitDensityMatrix:
    """Each qubit is replaced by I/2 with probability ``p``."""
    m = as_density_matrix(rho).elements
    paulis = (_X, _Y, _Z)
    for q in range(2):
        ops = [np.kron(P, _I2) if q == 0 else np.kron(_I2, P) for P in paulis]
        m = (1 - 0.75 * p) * m + 0.25 * p * sum(o @ m @ o.conj().T for o in ops)
    return TwoQubitDensityMatrix(m)


def damp_coherences(rho: State, factor: float) -> TwoQubitDensityMatrix:
    """Multiply every off-diagonal element by ``factor``."""
    m = as_density_matrix(rho).elements.copy()
    off = ~np.eye(4, dtype=bool)
    m[off] *= factor
    return TwoQubitDensityMatrix(m)


def dephase_atoms(rho: State, contrast_a: float, contrast_b: float) -> TwoQubitDensityMatrix:
    """Independent single-atom dephasing with Ramsey contrasts ``contrast_a/b``."""
    m = as_density_matrix(rho).elements.copy()
    for i, bra in enumerate(BASIS):
        for j, ket in enumerate(BASIS):
            f = 1.0
            if bra[0] != ket[0]:
                f *= contrast_a
            if bra[1] != ket[1]:
                f *= contrast_b
            m[i, j] *= f
    return TwoQubitDensityMatrix(m)


def swap_atoms(rho: State) -> TwoQubitDensityMatrix:
    perm = [0, 2, 1, 3]
    m = as_density_matrix(rho).elements
    return TwoQubitDensityMatrix(m[np.ix_(perm, perm)])


def product_state(a: np.ndarray, b: np.ndarray) -> TwoQubitState:
    return TwoQubitState.normalized(np.kron(a, b))
