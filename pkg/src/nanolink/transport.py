"""Qubit frequency along the transport trajectory and its dephasing.

The qubit frequency of a trapped atom is shifted by the differential light
shift, which depends on the trap depth and on the atom's motional energy.
Moving the tweezer from the cavity's standing wave into free space changes
both, so the atom accumulates a trajectory-dependent phase.  Carr-Purcell
pulse trains symmetric about the ramp center cancel the part of that phase
which is constant or antisymmetric in time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy import optimize

from . import constants as const
from .seeding import chunk_slices, child_rng, ordered_map

Configuration = Literal["gaussian", "standing_wave"]


@dataclass(frozen=True)
class TrapGeometry:
    u0: float  # J, depth of the single forward beam
    w0: float  # m
    wavelength: float = const.TRAP_WAVELENGTH
    alpha: float = const.ALPHA_STANDING_WAVE
    mass: float = const.M_RB87

    def __post_init__(self):
        if min(self.u0, self.w0, self.wavelength, self.alpha, self.mass) <= 0:
            raise ValueError("trap geometry parameters must be positive")

    @property
    def z_r(self) -> float:
        return np.pi * self.w0**2 / self.wavelength

    @property
    def k(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def z_lambda(self) -> float:
        return self.wavelength / (2 * np.pi)

    def with_depth(self, u0: float) -> "TrapGeometry":
        return replace(self, u0=u0)

    def depth(self, configuration: Configuration) -> float:
        return self.alpha * self.u0 if configuration == "standing_wave" else self.u0


def trap_frequencies(geometry: TrapGeometry, configuration: Configuration = "gaussian") -> tuple[float, float]:
    """Harmonic (omega_r, omega_z) in rad/s."""
    g = geometry
    if configuration == "gaussian":
        return (np.sqrt(4 * g.u0 / (g.mass * g.w0**2)), np.sqrt(2 * g.u0 / (g.mass * g.z_r**2)))
    if configuration == "standing_wave":
        return (np.sqrt(4 * g.alpha * g.u0 / (g.mass * g.w0**2)),
                np.sqrt(2 * g.alpha * g.u0 / (g.mass * g.z_lambda**2)))
    raise ValueError(f"unknown trap configuration {configuration!r}")


def calibrate_geometry(omega_r: float = const.OMEGA_R_PCC, omega_z: float = const.OMEGA_Z_PCC,
                       alpha: float = const.ALPHA_STANDING_WAVE, wavelength: float = const.TRAP_WAVELENGTH,
                       mass: float = const.M_RB87) -> TrapGeometry:
    """Depth and waist whose standing-wave frequencies equal (omega_r, omega_z)."""
    z_lam = wavelength / (2 * np.pi)
    u0 = mass * omega_z**2 * z_lam**2 / (2 * alpha)
    w0 = np.sqrt(4 * alpha * u0 / (mass * omega_r**2))
    return TrapGeometry(u0=float(u0), w0=float(w0), wavelength=wavelength, alpha=alpha, mass=mass)


DEFAULT_GEOMETRY = calibrate_geometry()


# Differential light shift ------------------------------------------------------------


def bose_occupation(omega, temperature: float):
    omega = np.asarray(omega, dtype=float)
    if temperature <= 0:
        return np.zeros_like(omega)
    return 1.0 / np.expm1(const.HBAR * omega / (const.KB * temperature))


def mean_energy(omegas: Sequence[float], temperature: float | None = None,
                occupations: Sequence[float] | None = None) -> float:
    """Sum over axes of hbar omega_i (1/2 + n_i)."""
    w = np.asarray(omegas, dtype=float)
    n = bose_occupation(w, temperature) if occupations is None else np.asarray(occupations, dtype=float)
    return float(np.sum(const.HBAR * w * (0.5 + n)))


def differential_light_shift(u0: float, omega_r: float, omega_z: float, zeta: float = const.ZETA,
                             temperature: float | None = None,
                             occupations: tuple[float, float] | None = None) -> float:
    """delta0 = -zeta U0/hbar + (zeta/2)(2 omega_r (1/2 + n_r) + omega_z (1/2 + n_z)).

    ``occupations`` is (n_r, n_z); otherwise Bose factors at ``temperature``
    (zero-point only if neither is given).  The dominant term is negative.
    """
    if occupations is None:
        n_r, n_z = (bose_occupation([omega_r, omega_z], temperature) if temperature
                    else (0.0, 0.0))
    else:
        n_r, n_z = occupations
    thermal = 0.5 * zeta * (2 * omega_r * (0.5 + n_r) + omega_z * (0.5 + n_z))
    return float(-zeta * u0 / const.HBAR + thermal)


def dephasing_time(temperature: float, zeta: float = const.ZETA) -> float:
    """Reversible dephasing time T2* = 2 hbar / (zeta k_B T)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return 2 * const.HBAR / (zeta * const.KB * temperature)


dephasing_times = dephasing_time


def dephasing_rate_slope(zeta: float = const.ZETA) -> float:
    """d(1/T2*)/dT in 1/(s K)."""
    return zeta * const.KB / (2 * const.HBAR)


def ramsey_contrast(t, t2_star: float):
    """Thermal Ramsey envelope for a 3D harmonic trap: (1 + (t/T2*)^2)^(-3/2)."""
    return (1 + (np.asarray(t, dtype=float) / t2_star) ** 2) ** -1.5


# Ramps ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class LightShiftRamp:
    """delta0(t) sampled on a uniform grid from 0 to ``duration``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("times and values must be 1D arrays of equal length >= 2")
        if not np.all(np.isfinite(v)):
            raise ValueError("ramp samples must be finite")
        if t[0] != 0 or t[-1] <= 0:
            raise ValueError("ramp must start at t=0 and have positive duration")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "delta0_rad_per_s"])
            for t, v in zip(self.times, self.values):
                w.writerow([f"{t:.9e}", f"{v:.9e}"])


@dataclass(frozen=True)
class TanhRamp:
    """Analytic ramp midpoint + amplitude * tanh((t - T/2 - shift)/tau)."""

    midpoint: float
    amplitude: float
    duration: float = 650e-6
    tau: float = 650e-6 / 8
    shift: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.isinf(self.tau):
            return np.full_like(t, self.midpoint)
        return self.midpoint + self.amplitude * np.tanh((t - self.duration / 2 - self.shift) / self.tau)

    def sample(self, n: int = 2001) -> LightShiftRamp:
        t = np.linspace(0, self.duration, n)
        return LightShiftRamp(t, self(t))


def first_order_response(times: np.ndarray, values: np.ndarray, response_time: float) -> np.ndarray:
    """Exact first-order low-pass of a piecewise-linear input, starting settled."""
    out = np.empty_like(values)
    out[0] = values[0]
    for i in range(1, values.size):
        h = times[i] - times[i - 1]
        a = np.exp(-h / response_time)
        slope = (values[i] - values[i - 1]) / h
        out[i] = values[i] - slope * response_time + a * (out[i - 1] - values[i - 1] + slope * response_time)
    return out


def build_ramp(start_shift: float, end_shift: float, duration: float = 650e-6, steepness: float = 8.0,
               response_time: float | None = None, n: int = 2001) -> LightShiftRamp:
    """tanh ramp between two stationary shifts.

    ``steepness`` is duration/tau; 0 gives a constant ramp at the midpoint.
    ``response_time`` optionally passes the ramp through a first-order mirror response.
    """
    if response_time and duration < response_time:
        raise ValueError("duration must be at least the response time")
    mid = 0.5 * (start_shift + end_shift)
    amp = 0.5 * (end_shift - start_shift)
    tau = np.inf if steepness == 0 else duration / steepness
    ramp = TanhRamp(mid, amp, duration, tau).sample(n)
    if response_time:
        return LightShiftRamp(ramp.times, first_order_response(ramp.times, ramp.values, response_time))
    return ramp


# Pulse sequences -------------------------------------------------------------------------


@dataclass(frozen=True)
class PulseSequence:
    times: tuple[float, ...]
    duration: float = 650e-6
    pulse_length: float = 20e-6
    kind: str = "cp"
    finite_pulses: bool = False

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("pulse times must be strictly increasing")
        if t and (t[0] < 0 or t[-1] > self.duration):
            raise ValueError("pulse times must lie inside [0, duration]")
        object.__setattr__(self, "times", t)

    @property
    def n_pulses(self) -> int:
        return len(self.times)

    def segments(self) -> list[tuple[float, float, float]]:
        """(start, stop, sign) pieces of the toggling function s(t)."""
        segs = []
        edges = [0.0]
        signs = []
        sign = 1.0
        half = 0.5 * self.pulse_length if self.finite_pulses else 0.0
        for tp in self.times:
            if half:
                edges += [max(tp - half, edges[-1]), min(tp + half, self.duration)]
                signs += [sign, 0.0]
            else:
                edges.append(tp)
                signs.append(sign)
            sign = -sign
        edges.append(self.duration)
        signs.append(sign)
        for a, b, s in zip(edges[:-1], edges[1:], signs):
            if b > a:
                segs.append((a, b, s))
        return segs


def cp_pulse_times(n: int, duration: float) -> list[float]:
    """CPMG spacing t_k = (k - 1/2) T / N."""
    if n < 1:
        raise ValueError("number of pulses must be >= 1")
    return [(k - 0.5) * duration / n for k in range(1, n + 1)]


def cp_sequence(n: int, duration: float = 650e-6, **kw) -> PulseSequence:
    kind = "ramsey" if n == 0 else ("spin-echo" if n == 1 else f"cp{n}")
    times = tuple(cp_pulse_times(n, duration)) if n else ()
    return PulseSequence(times, duration, kind=kind, **kw)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2 * ax)) - np.log(2.0)


def _tanh_integral(a, b, center, tau):
    """Integral of tanh((t - center)/tau) from a to b (vectorized over center)."""
    return tau * (_logcosh((b - center) / tau) - _logcosh((a - center) / tau))


def accumulated_phase(ramp, sequence: PulseSequence) -> float:
    """Integral of s(t) delta0(t) over the sequence.

    ``ramp`` may be a :class:`LightShiftRamp` (exact for its piecewise-linear
    interpolant), a :class:`TanhRamp` (closed form) or any callable
    (64-point Gauss-Legendre per segment).
    """
    segs = sequence.segments()
    if isinstance(ramp, TanhRamp):
        if np.isinf(ramp.tau):
            return float(sum(s * ramp.midpoint * (b - a) for a, b, s in segs))
        c = ramp.duration / 2 + ramp.shift
        return float(sum(s * (ramp.midpoint * (b - a) + ramp.amplitude * _tanh_integral(a, b, c, ramp.tau))
                         for a, b, s in segs))
    if isinstance(ramp, LightShiftRamp):
        total = 0.0
        for a, b, s in segs:
            if s == 0:
                continue
            inner = ramp.times[(ramp.times > a) & (ramp.times < b)]
            pts = np.concatenate([[a], inner, [b]])
            v = ramp(pts)
            total += s * float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(pts)))
        return float(total)
    total = 0.0
    for a, b, s in segs:
        if s == 0:
            continue
        t = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
        total += s * 0.5 * (b - a) * np.dot(_GL_WEIGHTS, ramp(t))
    return float(total)


# Transport Monte Carlo --------------------------------------------------------------------


@dataclass(frozen=True)
class TransportConfig:
    geometry: TrapGeometry = DEFAULT_GEOMETRY
    temperature: float = const.T_PCC
    zeta: float = const.ZETA
    duration: float = 650e-6
    steepness: float = 8.0
    t2_prime_pcc: float = 4.9e-3
    t2_prime_free: float = 17e-3
    pcc_fraction: float = 0.5
    jitter_sd: float = 0.0  # s, Gaussian shift of the ramp center
    offset_noise: bool = True
    finite_pulses: bool = False
    pulse_length: float = 20e-6

    def endpoint_frequencies(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return trap_frequencies(self.geometry, "standing_wave"), trap_frequencies(self.geometry, "gaussian")

    def t2_factor(self) -> float:
        t_pcc = self.pcc_fraction * self.duration
        return float(np.exp(-t_pcc / self.t2_prime_pcc - (self.duration - t_pcc) / self.t2_prime_free))

    def nominal_ramp(self) -> TanhRamp:
        (wr1, wz1), (wr0, wz0) = self.endpoint_frequencies()
        start = differential_light_shift(self.geometry.depth("standing_wave"), wr1, wz1, self.zeta, self.temperature)
        end = differential_light_shift(self.geometry.depth("gaussian"), wr0, wz0, self.zeta, self.temperature)
        tau = np.inf if self.steepness == 0 else self.duration / self.steepness
        return TanhRamp(0.5 * (start + end), 0.5 * (end - start), self.duration, tau)


@dataclass
class CoherenceResult:
    contrast: float
    mc_error: float
    dephasing_contrast: float
    t2_factor: float
    phases: np.ndarray


def _atom_ramp_coefficients(cfg: TransportConfig, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom (midpoint, amplitude) with motional quanta held fixed along the ramp."""
    (wr1, wz1), (wr0, wz0) = cfg.endpoint_frequencies()
    w_pcc = np.array([wr1, wr1, wz1])
    w_free = np.array([wr0, wr0, wz0])
    if cfg.offset_noise and cfg.temperature > 0:
        p = -np.expm1(-const.HBAR * w_pcc / (const.KB * cfg.temperature))
        quanta = rng.geometric(p, size=(n, 3)) - 1.0
    else:
        quanta = np.broadcast_to(bose_occupation(w_pcc, cfg.temperature), (n, 3))
    z = cfg.zeta
    start = -z * cfg.geometry.depth("standing_wave") / const.HBAR + 0.5 * z * ((0.5 + quanta) @ w_pcc)
    end = -z * cfg.geometry.depth("gaussian") / const.HBAR + 0.5 * z * ((0.5 + quanta) @ w_free)
    return 0.5 * (start + end), 0.5 * (end - start)


def sequence_phases(cfg: TransportConfig, sequence: PulseSequence, mids: np.ndarray, amps: np.ndarray,
                    shifts: np.ndarray) -> np.ndarray:
    tau = np.inf if cfg.steepness == 0 else cfg.duration / cfg.steepness
    phase = np.zeros_like(mids)
    center = cfg.duration / 2 + shifts
    for a, b, s in sequence.segments():
        if s == 0:
            continue
        part = mids * (b - a)
        if np.isfinite(tau):
            part = part + amps * _tanh_integral(a, b, center, tau)
        phase += s * part
    return phase


def simulate_retained_coherence(cfg: TransportConfig, sequence: PulseSequence, n_samples: int = 4000,
                                seed: int = 0, workers: int = 1) -> CoherenceResult:
    """Monte Carlo Ramsey contrast after transport under ``sequence``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")

    def chunk(item: tuple[int, slice]) -> np.ndarray:
        ci, sl = item
        rng = child_rng(seed, 7, ci)
        m = sl.stop - sl.start
        mids, amps = _atom_ramp_coefficients(cfg, m, rng)
        xi = rng.standard_normal(m)
        return sequence_phases(cfg, sequence, mids, amps, cfg.jitter_sd * xi)

    phases = np.concatenate(ordered_map(chunk, enumerate(chunk_slices(n_samples)), workers))
    z = np.exp(1j * phases)
    mean = z.mean()
    deph = float(abs(mean))
    proj = np.real(z * np.conj(mean) / max(deph, 1e-300))
    err = float(np.std(proj, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    t2 = cfg.t2_factor()
    return CoherenceResult(deph * t2, err * t2, deph, t2, phases)


def calibrate_jitter(target_contrast: float, cfg: TransportConfig | None = None, n_pulses: int = 4,
                     n_samples: int = 4000, seed: int = 0, max_sd: float = 100e-6) -> float:
    """Ramp-center jitter SD (s) giving ``target_contrast`` for a CP(n) sequence."""
    cfg = cfg or TransportConfig()
    seq = cp_sequence(n_pulses, cfg.duration)
    f = lambda sd: simulate_retained_coherence(replace(cfg, jitter_sd=sd), seq, n_samples, seed).contrast - target_contrast
    if f(0.0) < 0:
        raise ValueError("target contrast exceeds the jitter-free contrast")
    if f(max_sd) > 0:
        raise ValueError("target contrast not reached within max_sd")
    return float(optimize.brentq(f, 0.0, max_sd, xtol=1e-10))


def contrast_vs_pulses(cfg: TransportConfig, ns: Sequence[int] = (1, 2, 3, 4, 5, 6), n_samples: int = 4000,
                       seed: int = 0) -> list[tuple[int, float, float]]:
    out = []
    for n in ns:
        r = simulate_retained_coherence(cfg, cp_sequence(n, cfg.duration, finite_pulses=cfg.finite_pulses,
                                                         pulse_length=cfg.pulse_length), n_samples, seed)
        out.append((int(n), r.contrast, r.mc_error))
    return out


def write_contrast_csv(path: str | Path, rows: Sequence[tuple[int, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "contrast", "mc_error"])
        for n, c, e in rows:
            w.writerow([n, f"{c:.10f}", f"{e:.10f}"])
