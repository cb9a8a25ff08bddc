"""Readout correction and state inference from measured counts.

Two readout paths produce :class:`MeasurementRecord` objects:

* push-out (free space): four retention outcomes per shot, corrected with the
  product calibration matrix K = K_A (x) K_B;
* cavity (in situ): a single coupled/uncoupled decision per shot, stored as
  ``n_both`` = uncoupled and ``n_none`` = coupled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .quantum_core import (
    RotationPulse,
    TwoQubitDensityMatrix,
    analysis_pulse,
    as_density_matrix,
    global_rotation,
)
from .seeding import child_rng, ordered_map


class CalibrationError(ValueError):
    pass


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class RetentionCalibration:
    """Retention probability of each atom prepared in |0> (h) and |1> (l)."""

    h_a: float = 0.80
    l_a: float = 0.05
    h_b: float = 0.80
    l_b: float = 0.05

    def __post_init__(self):
        for v in (self.h_a, self.l_a, self.h_b, self.l_b):
            if not 0.0 <= v <= 1.0:
                raise CalibrationError("retention probabilities must lie in [0, 1]")

    @classmethod
    def ideal(cls) -> "RetentionCalibration":
        return cls(1.0, 0.0, 1.0, 0.0)

    def with_loss(self, loss: float) -> "RetentionCalibration":
        """Scale retention by an extra survival factor (1 - loss)."""
        k = 1.0 - loss
        return replace(self, h_a=self.h_a * k, l_a=self.l_a * k, h_b=self.h_b * k, l_b=self.l_b * k)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.h_a, self.l_a, self.h_b, self.l_b)


def single_atom_matrix(h: float, l: float) -> np.ndarray:
    """Columns: prepared |0>, |1>; rows: retained, lost."""
    return np.array([[h, l], [1 - h, 1 - l]])


def correction_matrix(cal: RetentionCalibration) -> np.ndarray:
    """K with R = K P; entry K[i, j] is P(outcome i | state j).

    Outcome order is (both retained, A only, B only, none), matching the
    population order (00, 01, 10, 11).
    """
    if cal.h_a == cal.l_a or cal.h_b == cal.l_b:
        raise CalibrationError("h == l makes the correction matrix singular")
    return np.kron(single_atom_matrix(cal.h_a, cal.l_a), single_atom_matrix(cal.h_b, cal.l_b))


def retention_probabilities(populations, cal: RetentionCalibration) -> np.ndarray:
    return correction_matrix(cal) @ np.asarray(populations, dtype=float)


@dataclass(frozen=True)
class InferredPopulations:
    raw: np.ndarray
    clipped: np.ndarray


def infer_populations(retention, cal: RetentionCalibration, loss: float = 0.0) -> InferredPopulations:
    """P = K^-1 R, then clip negatives and renormalize (raw kept)."""
    r = np.asarray(retention, dtype=float)
    if np.any(r < -1e-12) or np.any(r > 1 + 1e-12):
        raise RecordError("retention fractions must lie in [0, 1]")
    if abs(r.sum() - 1.0) > 1e-9:
        raise RecordError("retention fractions must sum to 1")
    k = correction_matrix(cal.with_loss(loss) if loss else cal)
    raw = np.linalg.solve(k, r)
    clipped = np.clip(raw, 0.0, 1.0)
    s = clipped.sum()
    clipped = clipped / s if s > 0 else np.full(4, 0.25)
    return InferredPopulations(raw, clipped)


# Records --------------------------------------------------------------------------

PUSHOUT_BASES = ("ZZ", "XX", "YY", "PARITY")
CAVITY_BASES = ("Z", "Z_PI", "PARITY", "PARITY_PI")


@dataclass(frozen=True)
class MeasurementRecord:
    basis: str
    phi: float
    counts: tuple[int, int, int, int]

    def __post_init__(self):
        c = tuple(int(x) for x in self.counts)
        if len(c) != 4 or min(c) < 0:
            raise RecordError("counts must be four non-negative integers")
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "basis", self.basis.upper())

    @property
    def total(self) -> int:
        return sum(self.counts)

    def fractions(self) -> np.ndarray:
        if self.total == 0:
            raise RecordError(f"record {self.basis} at phi={self.phi} has no shots")
        return np.asarray(self.counts, dtype=float) / self.total

    def resampled(self, rng: np.random.Generator) -> "MeasurementRecord":
        if self.total == 0:
            return self
        c = rng.multinomial(self.total, self.fractions())
        return MeasurementRecord(self.basis, self.phi, tuple(c))


@dataclass
class RecordSet:
    records: list[MeasurementRecord]
    readout: str = "pushout"

    def __post_init__(self):
        if self.readout not in ("pushout", "cavity"):
            raise RecordError(f"unknown readout kind {self.readout!r}")

    def by_basis(self, basis: str) -> list[MeasurementRecord]:
        return [r for r in self.records if r.basis == basis.upper()]

    def resampled(self, rng: np.random.Generator) -> "RecordSet":
        return RecordSet([r.resampled(rng) for r in self.records], self.readout)


def write_records(path: str | Path, records: RecordSet) -> None:
    lines = [f"# readout={records.readout}", "# basis,phi_rad,n_both,n_Aonly,n_Bonly,n_none"]
    for r in records.records:
        lines.append(f"{r.basis},{r.phi:.12g}," + ",".join(str(c) for c in r.counts))
    Path(path).write_text("\n".join(lines) + "\n")


def read_records(path: str | Path) -> RecordSet:
    readout = "pushout"
    recs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("readout="):
                readout = body.split("=", 1)[1].strip()
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 6:
            raise RecordError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
        try:
            recs.append(MeasurementRecord(parts[0], float(parts[1]), tuple(int(p) for p in parts[2:])))
        except ValueError as exc:
            raise RecordError(f"{path}:{lineno}: {exc}") from exc
    if not recs:
        raise RecordError(f"{path}: no records")
    return RecordSet(recs, readout)


def write_calibration(path: str | Path, cal: RetentionCalibration) -> None:
    Path(path).write_text("# h_A,l_A,h_B,l_B\n" + ",".join(f"{v:.12g}" for v in cal.as_tuple()) + "\n")


def read_calibration(path: str | Path) -> RetentionCalibration:
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            vals = [float(v) for v in line.split(",")]
            if len(vals) != 4:
                raise CalibrationError("calibration line needs h_A,l_A,h_B,l_B")
            return RetentionCalibration(*vals)
    raise CalibrationError(f"{path}: no calibration line")


# Coherence extraction --------------------------------------------------------------


def extract_coherence(phis, parities) -> tuple[complex, float]:
    """Least-squares fit of c0 + A sin2phi + B cos2phi.

    Returns ``(rho_11_00, re_rho_10_01)`` = ((B + iA)/2, c0/2).
    """
    phis = np.asarray(phis, dtype=float)
    y = np.asarray(parities, dtype=float)
    distinct = np.unique(np.round(np.mod(phis, np.pi), 12))
    if distinct.size < 3:
        raise RecordError("need at least three phases distinct modulo pi")
    design = np.column_stack([np.ones_like(phis), np.sin(2 * phis), np.cos(2 * phis)])
    if np.linalg.matrix_rank(design) < 3:
        raise RecordError("degenerate phase grid")
    (c0, a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    return complex(b / 2, a / 2), float(c0 / 2)


def two_point_coherence(parity_parallel: float, parity_orthogonal: float) -> float:
    return abs(parity_parallel - parity_orthogonal) / 4.0


# Estimators -------------------------------------------------------------------------


def _parity(p: np.ndarray) -> float:
    return float(p[0] - p[1] - p[2] + p[3])


def _mean_fractions(records: Sequence[MeasurementRecord]) -> np.ndarray:
    counts = np.sum([r.counts for r in records], axis=0).astype(float)
    if counts.sum() == 0:
        raise RecordError("no shots")
    return counts / counts.sum()


def estimate_pushout(records: RecordSet, cal: RetentionCalibration) -> dict[str, float]:
    """ZZ populations plus XX/YY (or PARITY scan) coherence, readout corrected.

    The coherence is the signed projection on the calibrated phase axis,
    (Pi_XX - Pi_YY)/4, so it can fluctuate below zero.
    """
    zz = records.by_basis("ZZ")
    if not zz:
        raise RecordError("push-out analysis needs ZZ records")
    pops_inf = infer_populations(_mean_fractions(zz), cal)
    p = pops_inf.clipped
    out = {f"P{lab}": float(v) for lab, v in zip(("00", "01", "10", "11"), p)}
    out.update({f"P{lab}_raw": float(v) for lab, v in zip(("00", "01", "10", "11"), pops_inf.raw)})
    xx, yy = records.by_basis("XX"), records.by_basis("YY")
    if xx and yy:
        pi_x = _parity(infer_populations(_mean_fractions(xx), cal).clipped)
        pi_y = _parity(infer_populations(_mean_fractions(yy), cal).clipped)
        coh = (pi_x - pi_y) / 4.0
        out.update(parity_XX=pi_x, parity_YY=pi_y, coherence=coh, coherence_phase=0.0)
    else:
        scan = records.by_basis("PARITY")
        if not scan:
            raise RecordError("push-out analysis needs XX/YY or PARITY records")
        phis = [r.phi for r in scan]
        par = [_parity(infer_populations(r.fractions(), cal).clipped) for r in scan]
        rho, _ = extract_coherence(phis, par)
        out.update(coherence=abs(rho), coherence_phase=float(np.angle(rho)))
    _finish(out)
    return out


def estimate_cavity(records: RecordSet) -> dict[str, float]:
    """In-situ estimate from uncoupled fractions with and without a pi pulse."""
    z, zpi = records.by_basis("Z"), records.by_basis("Z_PI")
    if not z or not zpi:
        raise RecordError("cavity analysis needs Z and Z_PI records")
    p00 = float(_mean_fractions(z)[0])
    p11 = float(_mean_fractions(zpi)[0])
    p_odd = 1.0 - p00 - p11
    out = {"P00": p00, "P11": p11, "P_odd": p_odd, "P01": p_odd / 2, "P10": p_odd / 2}
    par = {r.phi: r for r in records.by_basis("PARITY")}
    par_pi = {r.phi: r for r in records.by_basis("PARITY_PI")}
    phis = sorted(set(par) & set(par_pi))
    if len(phis) < 3:
        raise RecordError("cavity analysis needs PARITY and PARITY_PI at >= 3 phases")
    parities = [2 * (par[ph].fractions()[0] + par_pi[ph].fractions()[0]) - 1 for ph in phis]
    rho, _ = extract_coherence(phis, parities)
    out.update(coherence=float(np.real(rho)), coherence_abs=abs(rho), coherence_phase=float(np.angle(rho)))
    _finish(out)
    return out


def _finish(out: dict[str, float]) -> None:
    p00, p11 = out["P00"], out["P11"]
    coh = out["coherence"]
    out["P_even"] = p00 + p11
    out["fidelity"] = 0.5 * (p00 + p11) + coh
    p01, p10 = max(out["P01"], 0.0), max(out["P10"], 0.0)
    out["concurrence_bound"] = 2.0 * (abs(coh) - math.sqrt(p01 * p10))


def estimate(records: RecordSet, cal: RetentionCalibration | None = None) -> dict[str, float]:
    if records.readout == "cavity":
        return estimate_cavity(records)
    return estimate_pushout(records, cal if cal is not None else RetentionCalibration.ideal())


# Bootstrap ---------------------------------------------------------------------------


@dataclass
class BootstrapResult:
    samples: dict[str, np.ndarray]

    def interval(self, key: str, level: float = 0.6827) -> tuple[float, float]:
        lo = 50 * (1 - level)
        return (float(np.percentile(self.samples[key], lo)), float(np.percentile(self.samples[key], 100 - lo)))

    def sd(self, key: str) -> float:
        return float(np.std(self.samples[key], ddof=1))

    def lower_bound(self, key: str, confidence: float = 0.99) -> float:
        return float(np.percentile(self.samples[key], 100 * (1 - confidence)))


def bootstrap(records: RecordSet, estimator: Callable[[RecordSet], Mapping[str, float]],
              n_resamples: int = 1000, seed: int = 0, workers: int = 1) -> BootstrapResult:
    """Percentile bootstrap over multinomial resamples of every record.

    Resample ``b`` always draws from ``child_rng(seed, b)``, so the result
    does not depend on ``workers``.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be at least 100")
    if not records.records:
        raise RecordError("empty record set")
    ests = ordered_map(lambda b: estimator(records.resampled(child_rng(seed, b))), range(n_resamples), workers)
    keys = list(ests[0])
    return BootstrapResult({k: np.array([e[k] for e in ests]) for k in keys})


# Tomography result --------------------------------------------------------------------


@dataclass
class TomographyResult:
    estimate: dict[str, float]
    intervals: dict[str, tuple[float, float]] = field(default_factory=dict)
    sds: dict[str, float] = field(default_factory=dict)
    lower_99: dict[str, float] = field(default_factory=dict)

    @property
    def fidelity(self) -> float:
        return self.estimate["fidelity"]

    @property
    def concurrence_bound(self) -> float:
        return self.estimate["concurrence_bound"]

    def populations(self) -> np.ndarray:
        e = self.estimate
        return np.array([e["P00"], e["P01"], e["P10"], e["P11"]])

    def to_text(self) -> str:
        lines = []
        for k, v in self.estimate.items():
            lines.append(f"{k} = {v:.6f}")
        for k, (lo, hi) in self.intervals.items():
            lines.append(f"{k}.interval_1sd = [{lo:.6f}, {hi:.6f}]")
        for k, v in self.sds.items():
            lines.append(f"{k}.sd = {v:.6f}")
        for k, v in self.lower_99.items():
            lines.append(f"{k}.lower_99 = {v:.6f}")
        return "\n".join(lines) + "\n"


REPORTED = ("P00", "P01", "P10", "P11", "P_even", "coherence", "fidelity", "concurrence_bound")


def analyze(records: RecordSet, cal: RetentionCalibration | None = None, n_resamples: int = 1000,
            seed: int = 0, workers: int = 1) -> TomographyResult:
    est = lambda rs: estimate(rs, cal)
    point = est(records)
    boot = bootstrap(records, est, n_resamples, seed, workers)
    keys = [k for k in REPORTED if k in point]
    res = TomographyResult(point)
    for k in keys:
        lo, hi = boot.interval(k)
        # keep the point estimate inside its interval
        res.intervals[k] = (min(lo, point[k]), max(hi, point[k]))
        res.sds[k] = boot.sd(k)
    for k in ("fidelity", "concurrence_bound"):
        res.lower_99[k] = boot.lower_bound(k, 0.99)
    return res


# Threshold readout fidelity ------------------------------------------------------------


def threshold_fidelity(histograms: Mapping[str, Sequence[int]], threshold: int,
                       coupled_above: bool = True) -> dict[str, tuple[float, float, float]]:
    """Per-state fraction correctly classified at ``threshold`` with CI from threshold +- 1.

    ``histograms[state][k]`` is the number of shots with k detected photons;
    |00> is correct when classified uncoupled.
    """

    def frac(hist: np.ndarray, state: str, t: int) -> float:
        k = np.arange(hist.size)
        above = hist[k >= t].sum() / hist.sum()
        coupled = above if coupled_above else 1 - above
        return float(1 - coupled if state == "00" else coupled)

    out = {}
    for state, hist in histograms.items():
        h = np.asarray(hist, dtype=float)
        if h.sum() == 0:
            raise RecordError(f"empty histogram for {state}")
        vals = [frac(h, state, t) for t in (threshold - 1, threshold, threshold + 1)]
        out[state] = (vals[1], min(vals), max(vals))
    return out


def histogram(counts: Iterable[int]) -> np.ndarray:
    c = np.asarray(list(counts), dtype=int)
    return np.bincount(c) if c.size else np.zeros(1, dtype=int)


# Forward simulation of records -----------------------------------------------------------


def pushout_probabilities(rho, basis: str, cal: RetentionCalibration, phi: float = 0.0,
                          phase_ref: float = 0.0) -> np.ndarray:
    """Outcome probabilities for a push-out measurement in ``basis``.

    XX / YY are parity analysis pulses parallel / orthogonal to ``phase_ref``
    (the calibrated phi0 with 2 phi0 = arg rho_11,00).
    """
    dm = as_density_matrix(rho)
    basis = basis.upper()
    if basis == "ZZ":
        pops = dm.populations()
    else:
        ang = {"XX": phase_ref, "YY": phase_ref + np.pi / 2, "PARITY": phi}[basis]
        pops = global_rotation(dm, analysis_pulse(ang)).populations()
    p = retention_probabilities(np.clip(pops, 0, None), cal)
    return p / p.sum()


def simulate_pushout_records(rho, cal: RetentionCalibration, shots: int, seed: int,
                             bases: Sequence[str] = ("ZZ", "XX", "YY"), phase_ref: float | None = None,
                             parity_phis: Sequence[float] = ()) -> RecordSet:
    dm = as_density_matrix(rho)
    if phase_ref is None:
        phase_ref = float(np.angle(dm["11", "00"])) / 2
    recs = []
    for i, b in enumerate(bases):
        p = pushout_probabilities(dm, b, cal, phase_ref=phase_ref)
        recs.append(MeasurementRecord(b, phase_ref if b != "ZZ" else 0.0,
                                      tuple(child_rng(seed, 1, i).multinomial(shots, p))))
    for j, phi in enumerate(parity_phis):
        p = pushout_probabilities(dm, "PARITY", cal, phi=phi)
        recs.append(MeasurementRecord("PARITY", phi, tuple(child_rng(seed, 2, j).multinomial(shots, p))))
    return RecordSet(recs, "pushout")


_PI = RotationPulse(0.0, np.pi)


def simulate_cavity_records(rho, shots: int, seed: int, phis: Sequence[float],
                            fid_uncoupled: float = 1.0, fid_coupled: Sequence[float] | float = 1.0,
                            ) -> RecordSet:
    """Cavity readout records with per-state classification fidelities.

    ``fid_coupled`` may be one value or three (for |01>, |10>, |11>).
    """
    dm = as_density_matrix(rho)
    fc = np.broadcast_to(np.asarray(fid_coupled, dtype=float), (3,))
    p_unc_given = np.array([fid_uncoupled, 1 - fc[0], 1 - fc[1], 1 - fc[2]])

    def record(label: str, phi: float, state: TwoQubitDensityMatrix, key: tuple[int, ...]):
        p_unc = float(np.clip(np.dot(state.populations(), p_unc_given), 0, 1))
        n_unc = int(child_rng(seed, *key).binomial(shots, p_unc))
        return MeasurementRecord(label, phi, (n_unc, 0, 0, shots - n_unc))

    recs = [record("Z", 0.0, dm, (3, 0)), record("Z_PI", 0.0, global_rotation(dm, _PI), (3, 1))]
    for j, phi in enumerate(phis):
        rot = global_rotation(dm, analysis_pulse(phi))
        recs.append(record("PARITY", float(phi), rot, (4, j)))
        recs.append(record("PARITY_PI", float(phi), global_rotation(rot, _PI), (5, j)))
    return RecordSet(recs, "cavity")


def synthetic_bell_state(p_even: float, coherence: complex, p01_fraction: float = 0.5,
                         p00_fraction: float = 0.5, odd_coherence: complex = 0.0) -> TwoQubitDensityMatrix:
    """Density matrix with given P00 + P11, rho_00,11 and odd-population split."""
    p00 = p_even * p00_fraction
    p11 = p_even - p00
    p_odd = 1 - p_even
    p01 = p_odd * p01_fraction
    p10 = p_odd - p01
    m = np.diag([p00, p01, p10, p11]).astype(complex)
    m[0, 3] = coherence
    m[3, 0] = np.conj(coherence)
    m[1, 2] = odd_coherence
    m[2, 1] = np.conj(odd_coherence)
    return TwoQubitDensityMatrix(m).validate()
