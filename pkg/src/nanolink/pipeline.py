"""End-to-end simulated experiment and the photon/rate budget."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .carving import CarvingConfig, InterferometerModel, carve_and_rotate
from .cavity_model import (
    calibrate_mode_function,
    calibrate_readout,
    reference_cavity,
    readout_fidelities,
    sample_cooperativities,
    thermal_basis_reflectivities,
)
from .quantum_core import TwoQubitDensityMatrix, dephase_atoms, fidelity_phi_plus
from .readout import (
    RecordSet,
    RetentionCalibration,
    TomographyResult,
    analyze,
    simulate_cavity_records,
    simulate_pushout_records,
)
from .transport import TransportConfig, cp_sequence, simulate_retained_coherence


# Budget ---------------------------------------------------------------------------------


def _check_probability(name: str, v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {v!r}")


def detection_efficiency(components: Sequence[float]) -> float:
    eta = 1.0
    for i, c in enumerate(components):
        _check_probability(f"efficiency component {i}", c)
        eta *= c
    return float(eta)


def photon_budget(t_int: float, components: Sequence[float] | None = None, n_sent: float = 0.35,
                  eta: float | None = None) -> tuple[float, float]:
    """(eta, N_collected = T_int * eta * N_sent).

    ``eta`` overrides the product of ``components`` when given.
    """
    if eta is None:
        eta = detection_efficiency(components if components is not None else (0.6, 0.6, 0.8))
    _check_probability("t_int", t_int)
    _check_probability("eta", eta)
    if n_sent < 0:
        raise ValueError("n_sent must be non-negative")
    return float(eta), float(t_int * eta * n_sent)


@dataclass(frozen=True)
class RateModel:
    """Bell pairs per minute from the repetition structure.

    rate = triggers/min x loading^2 x attempts per loaded pair x
    N_collected x run fraction.
    """

    trigger_rate: float = 24.0  # loading cycles per minute
    loading: float = 0.8
    attempts_with_pair: float = 4.0
    run_fraction: float = 0.85

    def __post_init__(self):
        if min(self.trigger_rate, self.attempts_with_pair) < 0:
            raise ValueError("rates must be non-negative")
        _check_probability("loading", self.loading)
        _check_probability("run_fraction", self.run_fraction)


def bell_pair_rate(n_collected: float, model: RateModel | None = None) -> float:
    m = model or RateModel()
    if n_collected < 0:
        raise ValueError("n_collected must be non-negative")
    return float(m.trigger_rate * m.loading**2 * m.attempts_with_pair * n_collected * m.run_fraction)


# Experiment -----------------------------------------------------------------------------

DEFAULT_P_U = 0.087


@dataclass(frozen=True)
class ExperimentConfig:
    prep_fidelity: float = 0.98
    carving: CarvingConfig = field(
        default_factory=lambda: CarvingConfig(interferometer=InterferometerModel(p_u=DEFAULT_P_U)))
    # Ramsey contrast retained by each atom after transport; None runs the transport Monte Carlo
    contrast_a: float | None = 0.64
    contrast_b: float | None = 0.88
    transport: TransportConfig = field(default_factory=TransportConfig)
    transport_pulses: int = 4
    transport_loss: float = 0.0
    retention: RetentionCalibration = field(default_factory=RetentionCalibration)
    readout_target_00: float = 0.956
    cavity_readout: bool = True
    shots: int = 500
    parity_phases: int = 8
    n_resamples: int = 1000
    mc_samples: int = 4000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        _check_probability("prep_fidelity", self.prep_fidelity)
        _check_probability("transport_loss", self.transport_loss)
        for name in ("contrast_a", "contrast_b"):
            v = getattr(self, name)
            if v is not None:
                _check_probability(name, v)
        if self.shots < 1 or self.parity_phases < 3:
            raise ValueError("need shots >= 1 and at least 3 parity phases")

    @classmethod
    def ideal(cls, **kw) -> "ExperimentConfig":
        carving = CarvingConfig(theta=1e-3, n_sent=0.0, interferometer=InterferometerModel(contrast=1.0))
        base = dict(prep_fidelity=1.0, carving=carving, contrast_a=1.0, contrast_b=1.0,
                    retention=RetentionCalibration.ideal(), cavity_readout=False)
        base.update(kw)
        return cls(**base)


@dataclass
class Branch:
    state: TwoQubitDensityMatrix
    records: RecordSet
    tomography: TomographyResult

    @property
    def true_fidelity(self) -> float:
        return fidelity_phi_plus(self.state)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    herald_probability: float
    reflectivities: np.ndarray
    readout_fidelities: np.ndarray
    contrasts: tuple[float, float]
    in_situ: Branch
    post_transport: Branch


def transport_contrasts(cfg: ExperimentConfig) -> tuple[float, float]:
    def one(value: float | None, stream: int) -> float:
        if value is not None:
            return value
        seq = cp_sequence(cfg.transport_pulses, cfg.transport.duration)
        return simulate_retained_coherence(cfg.transport, seq, cfg.mc_samples, cfg.seed + stream,
                                           cfg.workers).contrast

    return one(cfg.contrast_a, 101), one(cfg.contrast_b, 102)


def in_situ_readout(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Thermal basis reflectivities and the threshold-readout fidelities they allow."""
    if not cfg.cavity_readout:
        return np.array([0.0, 1.0, 1.0, 1.0]), np.ones(4)
    mode = calibrate_mode_function()
    dist_a = sample_cooperativities(mode, n_samples=20_000, seed=cfg.seed + 201)
    dist_b = sample_cooperativities(mode, n_samples=20_000, seed=cfg.seed + 202)
    refl = thermal_basis_reflectivities(dist_a, dist_b, reference_cavity())
    model = calibrate_readout(refl, cfg.readout_target_00)
    return refl, readout_fidelities(model, refl)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    rho, p_herald = carve_and_rotate(cfg.carving, cfg.prep_fidelity)
    refl, fids = in_situ_readout(cfg)
    phis = np.arange(cfg.parity_phases) * np.pi / cfg.parity_phases
    recs_in = simulate_cavity_records(rho, cfg.shots, cfg.seed + 1, phis, fids[0], fids[1:])
    tomo_in = analyze(recs_in, None, cfg.n_resamples, cfg.seed + 2, cfg.workers)

    ca, cb = transport_contrasts(cfg)
    rho_t = dephase_atoms(rho, ca, cb)
    sim_cal = cfg.retention.with_loss(cfg.transport_loss) if cfg.transport_loss else cfg.retention
    recs_t = simulate_pushout_records(rho_t, sim_cal, cfg.shots, cfg.seed + 3)
    tomo_t = analyze(recs_t, sim_cal, cfg.n_resamples, cfg.seed + 4, cfg.workers)
    return ExperimentResult(cfg, p_herald, refl, fids, (ca, cb),
                            Branch(rho, recs_in, tomo_in), Branch(rho_t, recs_t, tomo_t))


def error_budget(cfg: ExperimentConfig | None = None) -> dict[str, float]:
    """Fidelity lost to each imperfection, switching them on one at a time.

    Uses the exact (noise-free) state, so entries are deterministic.
    """
    cfg = cfg or ExperimentConfig()
    ideal = ExperimentConfig.ideal()
    theta_only = replace(ideal, carving=replace(cfg.carving, n_sent=0.0,
                                                interferometer=InterferometerModel(contrast=1.0)))
    steps = [
        ("angle", theta_only),
        ("interferometer", replace(theta_only, carving=replace(cfg.carving, n_sent=0.0))),
        ("scattering", replace(theta_only, carving=cfg.carving)),
        ("initialization", replace(theta_only, carving=cfg.carving, prep_fidelity=cfg.prep_fidelity)),
    ]
    out = {}
    prev = 1.0
    for name, c in steps:
        f = fidelity_phi_plus(carve_and_rotate(c.carving, c.prep_fidelity)[0])
        out[name] = prev - f
        prev = f
    rho = carve_and_rotate(cfg.carving, cfg.prep_fidelity)[0]
    ca = cfg.contrast_a if cfg.contrast_a is not None else 1.0
    cb = cfg.contrast_b if cfg.contrast_b is not None else 1.0
    out["transport"] = prev - fidelity_phi_plus(dephase_atoms(rho, ca, cb))
    out["final_in_situ"] = prev
    return out


__all__ = [
    "ExperimentConfig", "ExperimentResult", "Branch", "RateModel", "DEFAULT_P_U",
    "bell_pair_rate", "detection_efficiency", "error_budget",
    "in_situ_readout", "photon_budget", "run_experiment", "transport_contrasts",
]
