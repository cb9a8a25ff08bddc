"""Atom-cavity reflection, thermal cooperativity averaging and cavity readout."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from . import constants as const
from .seeding import child_rng


class CavityError(ValueError):
    pass


@dataclass(frozen=True)
class CavityParams:
    """Rates in rad/s; detunings are drive-minus-resonance offsets."""

    g: float
    kappa: float
    kappa_wg: float
    gamma: float
    delta_a: float = 0.0
    delta_c: float = 0.0

    def __post_init__(self):
        if self.kappa <= 0 or self.gamma <= 0:
            raise CavityError("kappa and gamma must be positive")
        if self.g < 0 or self.kappa_wg < 0:
            raise CavityError("g and kappa_wg must be non-negative")
        if self.kappa_wg > self.kappa * (1 + 1e-12):
            raise CavityError("kappa_wg cannot exceed kappa")

    @property
    def kappa_sc(self) -> float:
        return self.kappa - self.kappa_wg

    @property
    def cooperativity(self) -> float:
        return cooperativity(self.g, self.kappa, self.gamma)

    @property
    def coupling_ratio(self) -> float:
        """2 kappa_wg / kappa."""
        return 2.0 * self.kappa_wg / self.kappa

    def with_cooperativity(self, c: float) -> "CavityParams":
        return replace(self, g=g_for_cooperativity(c, self.kappa, self.gamma))

    def with_g(self, g: float) -> "CavityParams":
        return replace(self, g=g)

    def detuned(self, omega: float, omega_a: float = 0.0, omega_c: float = 0.0) -> "CavityParams":
        return replace(self, delta_a=omega - omega_a, delta_c=omega - omega_c)


def reference_cavity(kappa_wg_fraction: float = const.KAPPA_WG_FRACTION) -> CavityParams:
    """(2g, gamma, kappa) = 2pi x (786, 6, 3800) MHz, undercoupled."""
    return CavityParams(
        g=const.G_RATE,
        kappa=const.KAPPA_RATE,
        kappa_wg=kappa_wg_fraction * const.KAPPA_RATE,
        gamma=const.GAMMA_RATE,
    )


def cooperativity(g: float, kappa: float, gamma: float) -> float:
    if kappa <= 0 or gamma <= 0:
        raise CavityError("cooperativity needs kappa > 0 and gamma > 0")
    return 4.0 * g**2 / (kappa * gamma)


def g_for_cooperativity(c: float, kappa: float, gamma: float) -> float:
    if c < 0:
        raise CavityError("cooperativity must be non-negative")
    return float(np.sqrt(c * kappa * gamma / 4.0))


def reflection_amplitude(params: CavityParams, omega: float | np.ndarray | None = None,
                         omega_a: float = 0.0, omega_c: float = 0.0):
    """Complex reflection amplitude.

    With ``omega`` given, detunings are ``omega - omega_a`` and ``omega - omega_c``;
    otherwise the detunings stored in ``params`` are used.
    """
    if omega is None:
        da, dc = params.delta_a, params.delta_c
    else:
        omega = np.asarray(omega, dtype=float)
        da, dc = omega - omega_a, omega - omega_c
    atom = params.gamma / 2 - 1j * da
    with np.errstate(divide="ignore", invalid="ignore"):
        if np.any(atom == 0) and params.g > 0:
            raise CavityError("reflection amplitude has a pole at these parameters")
        denom = params.kappa / 2 - 1j * dc + (params.g**2 / atom if params.g > 0 else 0.0)
    if np.any(np.abs(denom) == 0):
        raise CavityError("reflection amplitude has a pole at these parameters")
    r = params.kappa_wg / denom - 1.0
    return complex(r) if np.ndim(r) == 0 else r


def reflectivity(params: CavityParams, omega=None, **kw):
    return np.abs(reflection_amplitude(params, omega, **kw)) ** 2


def resonant_amplitude(c, coupling_ratio: float):
    """Exact on-resonance amplitude (2kappa_wg/kappa)/(1+C) - 1."""
    return coupling_ratio / (1.0 + np.asarray(c, dtype=float)) - 1.0


def resonant_reflectivity_large_c(c, coupling_ratio: float):
    """Large-cooperativity approximation |1 - (2kappa_wg/kappa)/C|^2.

    Overestimates the coupled-atom correction by a factor (1+C)/C; use
    :func:`resonant_amplitude` for anything quantitative.
    """
    return np.abs(1.0 - coupling_ratio / np.asarray(c, dtype=float)) ** 2


def basis_state_amplitudes(params_a: CavityParams, params_b: CavityParams,
                           omega: float | None = None) -> np.ndarray:
    """(r00, r01, r10, r11); only atoms in |1> couple to the cavity.

    |11> couples through the collective coupling sqrt(g_A^2 + g_B^2).
    """
    empty = params_a.with_g(0.0)
    g_eff = np.hypot(params_a.g, params_b.g)
    return np.array([
        reflection_amplitude(empty, omega),
        reflection_amplitude(params_a.with_g(params_b.g), omega),
        reflection_amplitude(params_a, omega),
        reflection_amplitude(params_a.with_g(g_eff), omega),
    ], dtype=complex)


def spectrum(params: CavityParams, detunings_hz: np.ndarray) -> np.ndarray:
    """Reflectivity versus common detuning (Hz) of atom and cavity."""
    w = const.TWO_PI * np.asarray(detunings_hz, dtype=float)
    return reflectivity(params, w)


def write_spectrum_csv(path: str | Path, detunings_hz, reflectivities) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detuning_Hz", "reflectivity"])
        for d, r in zip(detunings_hz, reflectivities):
            w.writerow([f"{d:.6e}", f"{r:.10f}"])


# Thermal averaging -------------------------------------------------------------


@dataclass(frozen=True)
class ModeFunction:
    """Cooperativity map C(x, y, z) = C0 exp(-2(x^2+y^2)/w^2) exp(-z/decay).

    x, y are the in-plane (radial trap) axes, z the vertical (axial) axis
    pointing away from the surface.
    """

    c0: float = const.C0_STATIONARY
    waist: float = 2.2204e-7
    decay_length: float = 4.1996e-8

    def __call__(self, x, y, z):
        return self.c0 * np.exp(-2 * (np.asarray(x) ** 2 + np.asarray(y) ** 2) / self.waist**2) \
            * np.exp(-np.asarray(z) / self.decay_length)


@dataclass(frozen=True)
class CooperativityDistribution:
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if v.size == 0:
            raise CavityError("empty cooperativity distribution")
        if v.shape != w.shape:
            raise CavityError("values and weights must have the same shape")
        if np.any(w < 0) or np.any(v < 0):
            raise CavityError("weights and cooperativities must be non-negative")
        s = w.sum()
        if s <= 0:
            raise CavityError("weights sum to zero")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w / s)

    @classmethod
    def delta(cls, c: float) -> "CooperativityDistribution":
        return cls(np.array([c]), np.array([1.0]))

    @classmethod
    def from_samples(cls, samples) -> "CooperativityDistribution":
        s = np.asarray(samples, dtype=float)
        return cls(s, np.ones_like(s))

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    @property
    def std(self) -> float:
        m = self.mean
        return float(np.sqrt(np.dot(self.weights, (self.values - m) ** 2)))


def thermal_position_sigmas(omega_r: float, omega_z: float, temperature: float,
                            mass: float = const.M_RB87) -> tuple[float, float]:
    if temperature <= 0:
        return 0.0, 0.0
    kt = const.KB * temperature
    return float(np.sqrt(kt / (mass * omega_r**2))), float(np.sqrt(kt / (mass * omega_z**2)))


def sample_cooperativities(mode: ModeFunction, omega_r: float = const.OMEGA_R_PCC,
                           omega_z: float = const.OMEGA_Z_PCC, temperature: float = const.T_PCC,
                           n_samples: int = 100_000, seed: int = 0,
                           mass: float = const.M_RB87) -> CooperativityDistribution:
    """Boltzmann positions in the 3D harmonic trap mapped through ``mode``."""
    sr, sz = thermal_position_sigmas(omega_r, omega_z, temperature, mass)
    xi = child_rng(seed, 0).standard_normal((n_samples, 3))
    c = mode(sr * xi[:, 0], sr * xi[:, 1], sz * xi[:, 2])
    return CooperativityDistribution.from_samples(c)


def mode_moments(mode: ModeFunction, sigma_r: float, sigma_z: float) -> tuple[float, float]:
    """Exact mean and SD of C under Gaussian position noise."""
    a = sigma_r**2 / mode.waist**2
    b2 = (sigma_z / mode.decay_length) ** 2
    m1 = mode.c0 * np.exp(b2 / 2) / (1 + 4 * a)
    m2 = mode.c0**2 * np.exp(2 * b2) / (1 + 8 * a)
    return float(m1), float(np.sqrt(max(m2 - m1**2, 0.0)))


def calibrate_mode_function(c0: float = const.C0_STATIONARY, mean: float = const.C_MEAN,
                            sd: float = const.C_SD, omega_r: float = const.OMEGA_R_PCC,
                            omega_z: float = const.OMEGA_Z_PCC,
                            temperature: float = const.T_PCC) -> ModeFunction:
    """Solve for (waist, decay length) so the thermal C distribution has the given moments."""
    sr, sz = thermal_position_sigmas(omega_r, omega_z, temperature)
    mu, s = mean / c0, sd / c0
    # with x = 1 + 4a: (mu x)^4 = (mu^2 + s^2)(2x - 1), root with exp(b^2/2) = mu x > 1
    f = lambda x: (mu * x) ** 4 - (mu**2 + s**2) * (2 * x - 1)
    x = optimize.brentq(f, 1.0 / mu, 50.0)
    a = (x - 1) / 4
    b = np.sqrt(2 * np.log(mu * x))
    return ModeFunction(c0=c0, waist=float(sr / np.sqrt(a)), decay_length=float(sz / b))


def thermal_average_reflectivity(dist: CooperativityDistribution, params: CavityParams,
                                 omega: float | None = None) -> float:
    """Weighted mean of |r(C)|^2 over the distribution."""
    g = np.sqrt(dist.values * params.kappa * params.gamma / 4.0)
    if omega is None:
        da, dc = params.delta_a, params.delta_c
    else:
        da = dc = omega
    r = params.kappa_wg / (params.kappa / 2 - 1j * dc + g**2 / (params.gamma / 2 - 1j * da)) - 1.0
    return float(np.dot(dist.weights, np.abs(r) ** 2))


def thermal_basis_reflectivities(dist_a: CooperativityDistribution, dist_b: CooperativityDistribution,
                                 params: CavityParams) -> np.ndarray:
    """(R00, R01, R10, R11) thermally averaged; |11> adds independent cooperativities."""
    r00 = thermal_average_reflectivity(CooperativityDistribution.delta(0.0), params)
    r01 = thermal_average_reflectivity(dist_b, params)
    r10 = thermal_average_reflectivity(dist_a, params)
    # pair sample i of A with sample i + n/2 of B so identical inputs stay independent
    n = min(dist_a.values.size, dist_b.values.size)
    shift = n // 2
    vb = np.roll(dist_b.values[:n], shift)
    wb = np.roll(dist_b.weights[:n], shift)
    pair = CooperativityDistribution(dist_a.values[:n] + vb, dist_a.weights[:n] * wb)
    r11 = thermal_average_reflectivity(pair, params)
    return np.array([r00, r01, r10, r11])


# Single-shot readout -------------------------------------------------------------


@dataclass(frozen=True)
class ReadoutModel:
    flux: float  # photons/s
    integration_time: float = 25e-6
    efficiency: float = 0.28
    threshold: int = 1
    coupled_above: bool = True

    def __post_init__(self):
        if min(self.flux, self.integration_time, self.efficiency) < 0 or self.efficiency > 1:
            raise CavityError("invalid readout model")

    @property
    def photons(self) -> float:
        """Mean detected photons for unit reflectivity."""
        return self.flux * self.integration_time * self.efficiency

    def classify(self, counts):
        counts = np.asarray(counts)
        coupled = counts >= self.threshold if self.coupled_above else counts < self.threshold
        return coupled


BASIS_LABELS = ("00", "01", "10", "11")


def simulate_cavity_readout(state: str | int, model: ReadoutModel, reflectivities: Sequence[float],
                            seed: int = 0, shots: int = 1, rng: np.random.Generator | None = None):
    """Poisson photon counts and coupled/uncoupled classification.

    Returns ``(counts, coupled)`` arrays of length ``shots``.
    """
    idx = BASIS_LABELS.index(state) if isinstance(state, str) else int(state)
    mean = model.photons * float(reflectivities[idx])
    rng = rng if rng is not None else child_rng(seed, idx)
    counts = rng.poisson(mean, size=shots)
    return counts, model.classify(counts)


def readout_fidelities(model: ReadoutModel, reflectivities: Sequence[float]) -> np.ndarray:
    """Exact Poisson discrimination fidelity per basis state.

    |00> counts as correct when classified uncoupled, all others when coupled.
    """
    out = np.empty(4)
    for i, r in enumerate(reflectivities):
        mu = model.photons * r
        p_above = stats.poisson.sf(model.threshold - 1, mu)
        p_coupled = p_above if model.coupled_above else 1 - p_above
        out[i] = 1 - p_coupled if i == 0 else p_coupled
    return out


def calibrate_readout(reflectivities: Sequence[float], target_00: float = 0.956,
                      integration_time: float = 25e-6, efficiency: float = 0.28,
                      max_photons: float = 200.0) -> ReadoutModel:
    """Smallest flux whose best threshold reaches ``target_00`` for |00>
    while keeping every other state at least as well discriminated."""

    def best(photons: float) -> tuple[float, int]:
        top = int(np.ceil(photons * max(reflectivities))) + 2
        best_f, best_t = -1.0, 1
        for t in range(1, top + 1):
            m = ReadoutModel(photons / (integration_time * efficiency), integration_time, efficiency, t)
            f = readout_fidelities(m, reflectivities)
            score = min(f[0], f[1:].min())
            if score > best_f:
                best_f, best_t = score, t
        return best_f, best_t

    grid = np.arange(1.0, max_photons, 0.25)
    for photons in grid:
        f, t = best(photons)
        if f >= target_00:
            return ReadoutModel(photons / (integration_time * efficiency), integration_time, efficiency, t)
    raise CavityError("target fidelity unreachable within max_photons")
