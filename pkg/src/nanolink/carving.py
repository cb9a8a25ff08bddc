"""Heralded entanglement by cavity carving.

A weak pulse reflected from the cavity is detected; conditioning on the
detection re-weights each two-atom basis state by its (effective) reflection
amplitude.  Two post-selection models are provided: a coherent one (pure
conditional state) and a mixed one where photons reflected from |00> are
distinguishable from the coupled manifold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from . import constants as const
from .quantum_core import (
    PSI_PLUS,
    RotationPulse,
    TwoQubitDensityMatrix,
    TwoQubitState,
    as_density_matrix,
    damp_coherences,
    depolarize,
    fidelity_phi_plus,
    global_rotation,
    overlap,
    parity_curve,
)


class HeraldError(RuntimeError):
    """Post-selection has zero probability."""


def reference_amplitudes(r00: float = const.R00_REPORTED, r01: float = const.R01_REPORTED,
                     r11: float = const.R11_REPORTED) -> np.ndarray:
    """Real amplitudes from reflectivities; undercoupled, so every r is negative."""
    return -np.sqrt(np.array([r00, r01, r01, r11], dtype=float)).astype(complex)


@dataclass(frozen=True)
class InterferometerModel:
    """Reference-arm subtraction of the empty-cavity amplitude.

    ``mismatch`` is the residual fraction of r00 that survives subtraction;
    it follows from the fringe contrast as 2 sqrt((1-V)/(1+V)).
    """

    contrast: float = 0.96
    p_u: float | None = None
    mismatch_override: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError("fringe contrast must lie in [0, 1]")
        if self.p_u is not None and not 0.0 <= self.p_u <= 1.0:
            raise ValueError("p_u must lie in [0, 1]")
        if self.mismatch_override is not None and not 0.0 <= self.mismatch_override <= 2.0:
            raise ValueError("mismatch must lie in [0, 2]")

    @property
    def mismatch(self) -> float:
        if self.mismatch_override is not None:
            return self.mismatch_override
        return mismatch_from_contrast(self.contrast)

    @classmethod
    def off(cls) -> "InterferometerModel":
        return cls(contrast=0.0, mismatch_override=1.0)


def mismatch_from_contrast(contrast: float) -> float:
    if contrast > 1 or contrast < 0:
        raise ValueError("fringe contrast must lie in [0, 1]")
    return float(2.0 * np.sqrt((1.0 - contrast) / (1.0 + contrast)))


def effective_amplitudes(raw: Sequence[complex], interferometer: InterferometerModel) -> np.ndarray:
    r = np.asarray(raw, dtype=complex)
    return r - (1.0 - interferometer.mismatch) * r[0]


def p_u_from_reflectivities(r00_eff: float, r01_eff: float) -> float:
    if r00_eff < 0 or r01_eff < 0:
        raise ValueError("reflectivities must be non-negative")
    total = r00_eff + r01_eff
    if total == 0:
        raise ValueError("p_u undefined when both reflectivities vanish")
    return float(r00_eff / total)


def p_u_for(amplitudes: Sequence[complex]) -> float:
    a = np.asarray(amplitudes)
    return p_u_from_reflectivities(abs(a[0]) ** 2, abs(a[1]) ** 2)


@dataclass(frozen=True)
class CarvingConfig:
    theta: float = 0.3 * np.pi
    n_sent: float = 0.35
    model: Literal["coherent", "mixed"] = "mixed"
    interferometer: InterferometerModel = field(default_factory=InterferometerModel)
    amplitudes: tuple = tuple(reference_amplitudes())
    cooperativity: float = const.C_MEAN
    kappa_wg_ratio: float = const.KAPPA_WG_FRACTION

    def __post_init__(self):
        if not 0.0 < self.theta < np.pi:
            raise ValueError("theta must lie in (0, pi)")
        if self.n_sent < 0:
            raise ValueError("n_sent must be non-negative")
        if self.model not in ("coherent", "mixed"):
            raise ValueError(f"unknown carving model {self.model!r}")

    def effective(self) -> np.ndarray:
        return effective_amplitudes(self.amplitudes, self.interferometer)

    def p_u(self) -> float:
        if self.interferometer.p_u is not None:
            return self.interferometer.p_u
        return p_u_for(self.effective())


@dataclass(frozen=True)
class ProtocolOutcome:
    state: TwoQubitDensityMatrix
    success_probability: float
    fidelity_psi_plus: float
    fidelity_phi_plus: float
    eps0: complex | None = None
    eps1: complex | None = None
    f: complex | None = None
    norm: float | None = None


def prepare_theta_state(theta: float) -> TwoQubitState:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return TwoQubitState([c * c, -1j * s * c, -1j * s * c, -s * s])


_TO_PHI = RotationPulse(0.0, np.pi / 2)


def _outcome(rho: TwoQubitDensityMatrix, success: float, **extra) -> ProtocolOutcome:
    f_psi = overlap(rho, PSI_PLUS)
    f_phi = fidelity_phi_plus(global_rotation(rho, _TO_PHI))
    return ProtocolOutcome(rho, float(success), float(np.clip(f_psi, 0, 1)), f_phi, **extra)


def carve_coherent(state: TwoQubitState, amplitudes: Sequence[complex]) -> ProtocolOutcome:
    """Multiply each basis amplitude by its reflection amplitude and renormalize.

    The outcome carries the relabelled amplitudes eps0, eps1 and f of the
    decomposition eps0|00> - eps1|11> - i f|Psi+>; for a symmetric input the
    Bell fidelity is |f|^2.
    """
    if not state.is_normalized():
        raise ValueError("input state is not normalized")
    r = np.asarray(amplitudes, dtype=complex)
    a = state.amplitudes * r
    weight = float(np.sum(np.abs(a) ** 2))
    if weight <= 0:
        raise HeraldError("zero post-selection probability")
    n = np.sqrt(weight)
    cond = TwoQubitState(a / n)
    eps0 = a[0] / n
    eps1 = -a[3] / n
    f = 1j * (a[1] + a[2]) / np.sqrt(2) / n
    return _outcome(cond.to_density_matrix(), weight, eps0=complex(eps0), eps1=complex(eps1),
                    f=complex(f), norm=float(n))


_MU = np.diag([1.0, 0.0, 0.0, 0.0])
_MC = np.eye(4) - _MU


def carve_mixed(rho, p_u: float) -> ProtocolOutcome:
    """rho' = p_u M_u rho M_u + (1 - p_u) M_c rho M_c, renormalized.

    The returned success probability is the normalization weight, i.e. the
    herald probability relative to a unit-reflectivity coupled manifold.
    """
    if not 0.0 <= p_u <= 1.0:
        raise ValueError("p_u must lie in [0, 1]")
    m = as_density_matrix(rho).elements
    out = p_u * _MU @ m @ _MU + (1 - p_u) * _MC @ m @ _MC
    weight = float(np.real(np.trace(out)))
    if weight <= 0:
        raise HeraldError("zero post-selection probability")
    return _outcome(TwoQubitDensityMatrix(out / weight), weight)


def carve(state, config: CarvingConfig) -> ProtocolOutcome:
    if config.model == "coherent":
        if not isinstance(state, TwoQubitState):
            raise TypeError("coherent carving needs a pure state")
        return carve_coherent(state, config.effective())
    return carve_mixed(state, config.p_u())


def scattering_rate(c: float, kappa_wg_ratio: float) -> float:
    """Spontaneous emission probability per photon, 4 (kappa_wg/kappa) C/(C+1)^2."""
    return 4.0 * kappa_wg_ratio * c / (c + 1.0) ** 2


def scattering_decay(n_sent: float, c: float, kappa_wg_ratio: float) -> float:
    if min(n_sent, c, kappa_wg_ratio) < 0:
        raise ValueError("arguments must be non-negative")
    if np.isinf(c):
        return 1.0
    return float(np.exp(-scattering_rate(c, kappa_wg_ratio) * n_sent))


# Angle optimization -------------------------------------------------------------


@dataclass
class AngleScan:
    thetas: np.ndarray
    fidelity: np.ndarray
    success: np.ndarray
    contrast: float

    @property
    def best_index(self) -> int:
        # argmax returns the first maximum, i.e. the smallest theta on ties
        return int(np.argmax(self.fidelity))

    @property
    def theta_opt(self) -> float:
        return float(self.thetas[self.best_index])

    @property
    def fidelity_max(self) -> float:
        return float(self.fidelity[self.best_index])

    @property
    def success_at_opt(self) -> float:
        return float(self.success[self.best_index])


def theta_grid(step: float = 0.005 * np.pi, top: float = np.pi / 2) -> np.ndarray:
    n = int(round(top / step))
    return step * np.arange(1, n + 1)


def carving_landscape(amplitudes: Sequence[complex], thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized coherent-model Bell fidelity and herald probability over ``thetas``."""
    r = np.asarray(amplitudes, dtype=complex)
    c, s = np.cos(thetas / 2), np.sin(thetas / 2)
    a00 = r[0] * c * c
    a01 = -1j * r[1] * s * c
    a10 = -1j * r[2] * s * c
    a11 = -r[3] * s * s
    weight = np.abs(a00) ** 2 + np.abs(a01) ** 2 + np.abs(a10) ** 2 + np.abs(a11) ** 2
    fid = np.abs(a01 + a10) ** 2 / 2.0 / weight
    return fid, weight


def optimize_angle(amplitudes: Sequence[complex], contrast: float | None = None,
                   interferometer: InterferometerModel | None = None,
                   step: float = 0.005 * np.pi) -> AngleScan:
    """Scan theta in (0, pi/2] and keep the best coherent-model Bell fidelity.

    ``amplitudes`` are raw; the interferometer is built from ``contrast``
    unless given explicitly.
    """
    if interferometer is None:
        interferometer = InterferometerModel(contrast=0.96 if contrast is None else contrast)
    eff = effective_amplitudes(amplitudes, interferometer)
    thetas = theta_grid(step)
    fid, weight = carving_landscape(eff, thetas)
    return AngleScan(thetas, fid, weight, interferometer.contrast)


def perfect_interferometer_fidelity(theta):
    return 1.0 / (1.0 + np.tan(np.asarray(theta) / 2)) ** 2


def write_landscape_csv(path: str | Path, scans: Sequence[AngleScan]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_rad", "contrast", "fidelity", "success_prob"])
        for scan in scans:
            for t, f, p in zip(scan.thetas, scan.fidelity, scan.success):
                w.writerow([f"{t:.10f}", f"{scan.contrast:.6f}", f"{f:.10f}", f"{p:.10f}"])


# Parity-scan predictions ----------------------------------------------------


@dataclass
class ParityScanPrediction:
    model: str
    state: TwoQubitDensityMatrix
    populations: np.ndarray  # P00, P01, P10, P11 after the pi/2 rotation
    phis: np.ndarray
    parity: np.ndarray
    fidelity: float
    success_probability: float

    @property
    def p_even(self) -> float:
        return float(self.populations[0] + self.populations[3])

    @property
    def p_odd(self) -> float:
        return float(self.populations[1] + self.populations[2])


def carve_and_rotate(config: CarvingConfig, prep_fidelity: float = 1.0,
                     model: str | None = None) -> tuple[TwoQubitDensityMatrix, float]:
    """prepare -> carve -> scattering damping -> R_{0,pi/2}; returns (rho_zz, herald prob)."""
    model = model or config.model
    psi = prepare_theta_state(config.theta)
    p_depol = 1.0 - prep_fidelity
    if model == "coherent" and p_depol == 0:
        out = carve_coherent(psi, config.effective())
    else:
        start = TwoQubitDensityMatrix(np.diag([1.0, 0, 0, 0]))
        if p_depol > 0:
            start = depolarize(start, p_depol)
        rho = global_rotation(start, RotationPulse(0.0, config.theta))
        if model == "coherent":
            r = np.asarray(config.effective())
            m = np.outer(r, r.conj()) * rho.elements
            w = float(np.real(np.trace(m)))
            if w <= 0:
                raise HeraldError("zero post-selection probability")
            out = _outcome(TwoQubitDensityMatrix(m / w), w)
        else:
            out = carve_mixed(rho, config.p_u())
    damp = scattering_decay(config.n_sent, config.cooperativity, config.kappa_wg_ratio)
    rho = damp_coherences(out.state, damp)
    return global_rotation(rho, _TO_PHI), out.success_probability


def predict_parity_scan(config: CarvingConfig, phis=None, prep_fidelity: float = 1.0,
                    model: str | None = None) -> ParityScanPrediction:
    phis = np.linspace(0, np.pi, 41) if phis is None else np.asarray(phis, dtype=float)
    rho_zz, success = carve_and_rotate(config, prep_fidelity, model)
    return ParityScanPrediction(
        model=model or config.model,
        state=rho_zz,
        populations=rho_zz.populations(),
        phis=phis,
        parity=parity_curve(rho_zz, phis),
        fidelity=fidelity_phi_plus(rho_zz),
        success_probability=success,
    )
