"""Classical trajectories through the tweezer to standing-wave handoff.

Each principal axis is treated as an independent 1D problem.  An atom starts
thermal in the Gaussian tweezer; the potential then morphs into the standing
wave formed by the reflection off the nanostructure.  An atom survives if it
ends bound in the lattice site at the origin.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from . import constants as const
from .seeding import chunk_slices, child_rng, ordered_map
from .transport import DEFAULT_GEOMETRY, TrapGeometry

Axis = Literal["axial", "radial"]

SURVIVED, HIGHER_SITE, LOST = 0, 1, 2


@dataclass(frozen=True)
class PotentialMorph:
    """Linear morph from ``s_start`` to ``s_end`` over ``duration``, then ``hold``.

    Equal endpoints give a static potential.
    """

    geometry: TrapGeometry = DEFAULT_GEOMETRY
    duration: float = 0.15 * 650e-6
    hold: float = 0.0
    axis: Axis = "axial"
    window: float | None = None  # m; default 4 z_r axially, 4 w0 radially
    s_start: float = 0.0
    s_end: float = 1.0

    def __post_init__(self):
        if not (0 <= self.s_start <= 1 and 0 <= self.s_end <= 1):
            raise ValueError("morph endpoints must lie in [0, 1]")
        if self.duration <= 0 or self.hold < 0:
            raise ValueError("morph duration must be positive and hold non-negative")
        if self.axis not in ("axial", "radial"):
            raise ValueError(f"unknown axis {self.axis!r}")

    @property
    def total_time(self) -> float:
        return self.duration + self.hold

    @property
    def escape_window(self) -> float:
        if self.window is not None:
            return self.window
        return 4 * (self.geometry.z_r if self.axis == "axial" else self.geometry.w0)

    def s(self, t):
        frac = np.clip(np.asarray(t, dtype=float) / self.duration, 0.0, 1.0)
        return self.s_start + (self.s_end - self.s_start) * frac

    def for_axis(self, axis: Axis) -> "PotentialMorph":
        return replace(self, axis=axis, window=None if axis != self.axis else self.window)

    def curvature(self, s, u0=None) -> float:
        """U''(0) at morph parameter ``s``."""
        g = self.geometry
        u0 = g.u0 if u0 is None else u0
        if self.axis == "axial":
            return 2 * u0 * ((1 - s) / g.z_r**2 + s * g.alpha * (g.k**2 + 1 / g.z_r**2))
        return 4 * u0 * ((1 - s) + s * g.alpha) / g.w0**2

    def max_frequency(self, u0=None) -> float:
        """Largest harmonic frequency (Hz) reached during the morph."""
        u = None if u0 is None else float(np.max(u0))
        k = max(self.curvature(self.s_start, u), self.curvature(self.s_end, u))
        return np.sqrt(k / self.geometry.mass) / (2 * np.pi)


def _axial_terms(z, s, g: TrapGeometry):
    lor = 1.0 / (1.0 + (z / g.z_r) ** 2)
    cos2 = np.cos(g.k * z) ** 2
    shape = (1.0 - s) + s * g.alpha * cos2
    return lor, cos2, shape


def potential_1d(axis: Axis, x, t, morph: PotentialMorph, u0=None):
    """Potential energy (J) along one axis at time ``t``; ``u0`` overrides the depth."""
    g = morph.geometry
    u0 = g.u0 if u0 is None else u0
    x = np.asarray(x, dtype=float)
    s = morph.s(t)
    if axis == "axial":
        lor, _, shape = _axial_terms(x, s, g)
        return -u0 * lor * shape
    if axis == "radial":
        return -u0 * ((1.0 - s) + s * g.alpha) * np.exp(-2 * x**2 / g.w0**2)
    raise ValueError(f"unknown axis {axis!r}")


def force_1d(axis: Axis, x, t, morph: PotentialMorph, u0=None):
    g = morph.geometry
    u0 = g.u0 if u0 is None else u0
    s = morph.s(t)
    if axis == "axial":
        lor, _, shape = _axial_terms(x, s, g)
        dlor = -2 * x / g.z_r**2 * lor**2
        dshape = -s * g.alpha * g.k * np.sin(2 * g.k * x)
        return u0 * (dlor * shape + lor * dshape)
    return -u0 * ((1.0 - s) + s * g.alpha) * np.exp(-2 * x**2 / g.w0**2) * 4 * x / g.w0**2


# Sampling ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseSpaceSample:
    position: np.ndarray
    momentum: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=float)
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")

    def __len__(self) -> int:
        return int(np.size(self.position))


def _initial_omega(axis: Axis, geometry: TrapGeometry, u0) -> np.ndarray:
    u0 = np.asarray(u0, dtype=float)
    if axis == "axial":
        return np.sqrt(2 * u0 / (geometry.mass * geometry.z_r**2))
    return np.sqrt(4 * u0 / (geometry.mass * geometry.w0**2))


def boltzmann_sample(axis: Axis, temperature, u0, morph: PotentialMorph, normals: np.ndarray) -> PhaseSpaceSample:
    """Map standard normals (n, 2) to a weighted thermal sample of the initial well.

    The harmonic approximation is the proposal; importance weights
    exp(-(U - U_harm)/kT) restore the Gaussian well and unbound states get
    zero weight.  Reusing ``normals`` across temperatures and depths gives
    common-random-number comparisons.
    """
    g = morph.geometry
    m = g.mass
    temperature = np.asarray(temperature, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    kt = const.KB * temperature
    omega = _initial_omega(axis, g, u0)
    x = normals[..., 0] * np.sqrt(kt / (m * omega**2))
    p = normals[..., 1] * np.sqrt(m * kt)
    u = potential_1d(axis, x, 0.0, morph, u0)
    u_h = -u0 + 0.5 * m * omega**2 * x**2
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        logw = np.where(kt > 0, -(u - u_h) / np.where(kt > 0, kt, 1.0), 0.0)
    bound = (p**2 / (2 * m) + u < 0) & (np.abs(x) < morph.escape_window)
    w = np.where(bound, np.exp(np.minimum(logw, 700.0)), 0.0)
    return PhaseSpaceSample(x, p, w)


# Integration ------------------------------------------------------------------------


@dataclass
class TrajectoryResult:
    position: np.ndarray
    momentum: np.ndarray
    final_energy: np.ndarray
    escaped: np.ndarray
    category: np.ndarray
    trajectory: np.ndarray | None = None


def check_timestep(dt: float, morph: PotentialMorph, u0=None) -> None:
    limit = 1.0 / (50 * morph.max_frequency(u0))
    if not dt > 0 or dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt:g} s exceeds the stability limit {limit:g} s (1/(50 f_max))")


def default_timestep(morph: PotentialMorph, u0=None) -> float:
    return 1.0 / (50 * morph.max_frequency(u0))


def integrate_trajectory(sample: PhaseSpaceSample, morph: PotentialMorph, dt: float | None = None,
                         u0=None, duration: float | None = None, record_every: int = 0) -> TrajectoryResult:
    """Velocity-Verlet integration of every sample through the morph.

    ``u0`` may be a scalar or an array matching the sample.  With
    ``record_every`` > 0 the phase-space points every that many steps are
    returned as an array of shape (frames, 2, n).
    """
    if dt is None:
        dt = default_timestep(morph, u0)
    check_timestep(dt, morph, u0)
    axis = morph.axis
    g = morph.geometry
    m = g.mass
    u0 = g.u0 if u0 is None else np.asarray(u0, dtype=float)
    total = morph.total_time if duration is None else duration
    n_steps = int(np.ceil(total / dt - 1e-9))
    dt = total / n_steps if n_steps else dt
    x = np.array(sample.position, dtype=float, copy=True)
    p = np.array(sample.momentum, dtype=float, copy=True)
    win = morph.escape_window
    escaped = np.abs(x) >= win
    f = force_1d(axis, x, 0.0, morph, u0)
    frames = [np.stack([x, p])] if record_every else None
    for i in range(n_steps):
        t1 = (i + 1) * dt
        p += 0.5 * dt * f
        x += dt * p / m
        f = force_1d(axis, x, t1, morph, u0)
        p += 0.5 * dt * f
        escaped |= np.abs(x) >= win
        if record_every and (i + 1) % record_every == 0:
            frames.append(np.stack([x, p]))
    t_end = n_steps * dt
    energy = p**2 / (2 * m) + potential_1d(axis, x, t_end, morph, u0)
    bound = (energy < 0) & ~escaped
    if axis == "axial":
        central = np.abs(x) < g.wavelength / 4
        category = np.where(bound & central, SURVIVED, np.where(bound, HIGHER_SITE, LOST))
    else:
        category = np.where(bound, SURVIVED, LOST)
    traj = np.array(frames) if record_every else None
    return TrajectoryResult(x, p, energy, escaped, category.astype(np.int8), traj)


# Survival ----------------------------------------------------------------------------


@dataclass(frozen=True)
class AxisSurvival:
    survival: float
    error: float
    higher_site: float


@dataclass(frozen=True)
class SurvivalResult:
    temperature: float
    depth: float  # J
    axial: AxisSurvival
    radial: AxisSurvival

    @property
    def joint(self) -> float:
        return self.axial.survival * self.radial.survival

    @property
    def error(self) -> float:
        a, r = self.axial, self.radial
        return float(np.hypot(a.error * r.survival, r.error * a.survival))


def _weighted_fraction(weights: np.ndarray, flags: np.ndarray) -> tuple[float, float]:
    """Self-normalized importance estimate and its delta-method standard error."""
    sw = weights.sum(axis=-1)
    if np.any(sw <= 0):
        raise ValueError("no bound samples; increase n_samples or check the temperature")
    p = (weights * flags).sum(axis=-1) / sw
    var = (weights**2 * (flags - p[..., None]) ** 2).sum(axis=-1) / sw**2
    return p, np.sqrt(var)


def _normals(seed: int, n: int, axis_key: int) -> np.ndarray:
    out = np.empty((n, 2))
    for ci, sl in enumerate(chunk_slices(n)):
        out[sl] = child_rng(seed, 11, axis_key, ci).standard_normal((sl.stop - sl.start, 2))
    return out


def _grid_axis(axis: Axis, temps: np.ndarray, depths: np.ndarray, morph: PotentialMorph, n: int, seed: int,
               dt: float | None, workers: int = 1):
    mo = morph.for_axis(axis)
    z = _normals(seed, n, 0 if axis == "axial" else 1)
    tt = np.repeat(temps[:, None], depths.size, axis=1).reshape(-1, 1)
    uu = np.repeat(depths[None, :], temps.size, axis=0).reshape(-1, 1)
    sample = boltzmann_sample(axis, tt, uu, mo, z[None, :, :])
    x, p = sample.position.ravel(), sample.momentum.ravel()
    u_full = np.broadcast_to(uu, sample.position.shape).ravel()
    dt = default_timestep(mo, u_full) if dt is None else dt
    # every trajectory is independent and the update is elementwise, so any split is exact
    parts = np.array_split(np.arange(x.size), max(1, workers))

    def run(idx: np.ndarray) -> np.ndarray:
        part = PhaseSpaceSample(x[idx], p[idx], np.ones(idx.size))
        return integrate_trajectory(part, mo, dt, u0=u_full[idx]).category

    cat = np.concatenate(ordered_map(run, parts, workers)).reshape(sample.position.shape)
    p, err = _weighted_fraction(sample.weight, (cat == SURVIVED).astype(float))
    hs, _ = _weighted_fraction(sample.weight, (cat == HIGHER_SITE).astype(float))
    shape = (temps.size, depths.size)
    return p.reshape(shape), err.reshape(shape), hs.reshape(shape)


@dataclass
class SurvivalMap:
    temperatures: np.ndarray  # K
    depths: np.ndarray  # J
    survival: np.ndarray
    error: np.ndarray
    cells: list[list[SurvivalResult]]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["temperature_K", "depth_K", "survival", "mc_error"])
            for i, t in enumerate(self.temperatures):
                for j, u in enumerate(self.depths):
                    w.writerow([f"{t:.6e}", f"{u / const.KB:.6e}", f"{self.survival[i, j]:.10f}",
                                f"{self.error[i, j]:.10f}"])


def survival_map(temperatures: Sequence[float], depths: Sequence[float], morph: PotentialMorph | None = None,
                 n_samples: int = 1000, seed: int = 0, dt: float | None = None,
                 workers: int = 1) -> SurvivalMap:
    """Survival on a (temperature K) x (depth J) grid.

    All cells share the same underlying normals, so comparisons between cells
    use common random numbers.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    morph = morph or PotentialMorph()
    temps = np.atleast_1d(np.asarray(temperatures, dtype=float))
    depths_arr = np.atleast_1d(np.asarray(depths, dtype=float))
    if np.any(temps < 0) or np.any(depths_arr <= 0):
        raise ValueError("temperatures must be >= 0 and depths > 0")
    ax = _grid_axis("axial", temps, depths_arr, morph, n_samples, seed, dt, workers)
    ra = _grid_axis("radial", temps, depths_arr, morph, n_samples, seed, dt, workers)
    cells = [[SurvivalResult(float(t), float(u), AxisSurvival(float(ax[0][i, j]), float(ax[1][i, j]), float(ax[2][i, j])),
                             AxisSurvival(float(ra[0][i, j]), float(ra[1][i, j]), float(ra[2][i, j])))
              for j, u in enumerate(depths_arr)] for i, t in enumerate(temps)]
    surv = np.array([[c.joint for c in row] for row in cells])
    err = np.array([[c.error for c in row] for row in cells])
    return SurvivalMap(temps, depths_arr, surv, err, cells)


def survival_probability(temperature: float, u0: float, morph: PotentialMorph | None = None,
                         n_samples: int = 10_000, seed: int = 0, dt: float | None = None,
                         workers: int = 1) -> SurvivalResult:
    """Per-axis and joint survival for one (temperature K, depth J) point."""
    return survival_map([temperature], [u0], morph, n_samples, seed, dt, workers).cells[0][0]
