"""Acceptance suite: one reported line per criterion.

Each test prints ``criterion N: PASS|FAIL ...`` straight to the terminal,
then asserts. Criteria that cannot hold are strict xfails so an accidental
pass would break the run.
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

from nanolink import constants as const
from nanolink.carving import (
    InterferometerModel,
    carve_coherent,
    carve_mixed,
    effective_amplitudes,
    optimize_angle,
    p_u_for,
    reference_amplitudes,
    perfect_interferometer_fidelity,
    prepare_theta_state,
    scattering_decay,
)
from nanolink.cavity_model import CavityParams, cooperativity, reflection_amplitude, resonant_amplitude
from nanolink.cli import EXIT_OK, main
from nanolink.loading import PhaseSpaceSample, PotentialMorph, boltzmann_sample, integrate_trajectory, \
    potential_1d, survival_map, survival_probability
from nanolink.pipeline import RateModel, bell_pair_rate, detection_efficiency, photon_budget
from nanolink.quantum_core import concurrence_bound_equal_split
from nanolink.readout import (
    RetentionCalibration,
    analyze,
    estimate,
    infer_populations,
    retention_probabilities,
    simulate_pushout_records,
    synthetic_bell_state,
)
from nanolink.transport import (
    DEFAULT_GEOMETRY,
    TransportConfig,
    accumulated_phase,
    cp_sequence,
    dephasing_time,
    simulate_retained_coherence,
)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, expected_fail=False):
        status = "PASS" if ok else ("FAIL (expected, xfail)" if expected_fail else "FAIL")
        with capsys.disabled():
            print(f"\ncriterion {n}: {status}  {detail}")
    return emit


def test_criterion_01_cooperativity(report):
    g, gamma, kappa = (2 * np.pi * f * 1e6 for f in (786 / 2, 6, 3800))
    c = cooperativity(g, kappa, gamma)
    reps = 1000
    t0 = time.perf_counter()
    for _ in range(reps):
        cooperativity(g, kappa, gamma)
    per_call = (time.perf_counter() - t0) / reps
    ok = abs(c - 27.1) <= 0.2 and per_call < 1e-3
    report(1, ok, f"C = {c:.3f} (27.1 +- 0.2), {per_call * 1e6:.2f} us per call")
    assert ok


def test_criterion_02_reflection_identity(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10_000):
        kappa = 10 ** rng.uniform(8, 11)
        gamma = 10 ** rng.uniform(6, 8)
        frac = rng.uniform(0.0, 1.0)
        c = 10 ** rng.uniform(-2, 3)
        p = CavityParams(0.0, kappa, frac * kappa, gamma).with_cooperativity(c)
        worst = max(worst, abs(reflection_amplitude(p) - resonant_amplitude(c, p.coupling_ratio)))
    ok = worst < 1e-14
    report(2, ok, f"max |r - ((2k_wg/k)/(1+C) - 1)| = {worst:.2e} over 1e4 draws (< 1e-14)")
    assert ok


@pytest.mark.xfail(strict=True, reason="1/(1+tan(theta/2))^2 disagrees with the normalized carving landscape")
def test_criterion_03_perfect_interferometer_closed_form(report):
    scan = optimize_angle(reference_amplitudes(), 1.0)
    err = np.max(np.abs(scan.fidelity - perfect_interferometer_fidelity(scan.thetas)))
    amps = effective_amplitudes(reference_amplitudes(), InterferometerModel(1.0))
    derived = 1 / (1 + abs(amps[3]) ** 2 / abs(amps[1]) ** 2 * np.tan(scan.thetas / 2) ** 2 / 2)
    derr = np.max(np.abs(scan.fidelity - derived))
    ok = err < 1e-10
    report(3, ok, f"max dev from 1/(1+tan(theta/2))^2 = {err:.3f} (< 1e-10); "
                  f"derived form 1/(1+(R11/R01) tan^2(theta/2)/2) matches to {derr:.1e}", expected_fail=True)
    assert ok


def test_criterion_04_protocol_optimum(report):
    t0 = time.perf_counter()
    scan = optimize_angle(reference_amplitudes(), 0.96)
    low = optimize_angle(reference_amplitudes(r00=0.1), 0.96)
    elapsed = time.perf_counter() - t0
    p_u = p_u_for(effective_amplitudes(reference_amplitudes(), InterferometerModel(0.96)))
    checks = [abs(scan.fidelity_max - 0.76) <= 0.03, abs(scan.theta_opt / np.pi - 0.30) <= 0.05,
              0.07 <= p_u <= 0.11, abs(low.fidelity_max - 0.90) <= 0.03, elapsed < 1.0]
    ok = all(checks)
    report(4, ok, f"F_max = {scan.fidelity_max:.4f} at theta* = {scan.theta_opt / np.pi:.3f} pi, p_u = {p_u:.4f}, "
                  f"R00=0.1 -> F_max = {low.fidelity_max:.4f}, {elapsed * 1e3:.1f} ms")
    assert ok


def _model_gap(rng, common_magnitude):
    theta = rng.uniform(0.01, np.pi - 0.01)
    mags = rng.uniform(0, 1, 4)
    if common_magnitude:
        mags[1:] = rng.uniform(0.05, 1)
    amps = mags * np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
    amps[2] = amps[1]
    psi = prepare_theta_state(theta)
    a = carve_coherent(psi, amps).fidelity_phi_plus
    b = carve_mixed(psi.to_density_matrix(), p_u_for(amps)).fidelity_phi_plus
    return abs(a - b)


@pytest.mark.xfail(strict=True, reason="the two models coincide only when coupled states share one |r|")
def test_criterion_05_model_equivalence(report):
    rng = np.random.default_rng(5)
    worst = max(_model_gap(rng, False) for _ in range(1000))
    ok = worst < 1e-10
    report(5, ok, f"general (theta, amplitude) draws: max |F_coh - F_mix| = {worst:.3f} (< 1e-10)",
           expected_fail=True)
    assert ok


def test_criterion_05_model_equivalence_common_magnitude(report):
    rng = np.random.default_rng(5)
    worst = max(_model_gap(rng, True) for _ in range(1000))
    ok = worst < 1e-10
    report("5b", ok, f"draws with |r01| = |r10| = |r11|: max |F_coh - F_mix| = {worst:.1e} (< 1e-10)")
    assert ok


def test_criterion_06_scattering_factor(report):
    f = scattering_decay(0.35, 27.0, 0.184)
    ok = abs(f - 0.9912) <= 1e-4
    report(6, ok, f"exp(-lambda N_sent) = {f:.5f} (0.9912 +- 1e-4)")
    assert ok


def test_criterion_07_tomography_regression(report):
    cal = RetentionCalibration()
    res = analyze(simulate_pushout_records(synthetic_bell_state(0.78, 0.33), cal, 500, 0), cal, 1000, seed=0)
    sd = res.sds["fidelity"]
    in_ci = abs(res.fidelity - 0.72) <= 2 * sd

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        h, l = rng.uniform(0.6, 1.0, 2), rng.uniform(0.0, 0.3, 2)
        c = RetentionCalibration(h[0], l[0], h[1], l[1])
        p = rng.dirichlet(np.ones(4))
        worst = max(worst, np.max(np.abs(infer_populations(retention_probabilities(p, c), c).raw - p)))
    round_trip = worst < 1e-12

    recs = simulate_pushout_records(synthetic_bell_state(0.78, 0.26), cal, 200_000, 5)
    corrected = estimate(recs, cal)["fidelity"]
    raw = estimate(recs, RetentionCalibration.ideal())["fidelity"]
    # reference values carry roughly 0.06 statistical error each
    gap_ok = corrected > raw and abs(corrected - 0.65) <= 0.06 and abs(raw - 0.52) <= 0.06

    ok = in_ci and round_trip and gap_ok
    report(7, ok, f"F = {res.fidelity:.3f} +- {sd:.3f} vs 0.72 (95% CI); round trip {worst:.1e}; "
                  f"uncorrected {raw:.3f} -> corrected {corrected:.3f}")
    assert ok


def test_criterion_08_concurrence(report):
    c = concurrence_bound_equal_split(0.33, 0.22)
    cal = RetentionCalibration()
    res = analyze(simulate_pushout_records(synthetic_bell_state(0.78, 0.26), cal, 500, 0), cal, 1000, seed=0)
    lf, lc = res.lower_99["fidelity"], res.lower_99["concurrence_bound"]
    ok = abs(c - 0.44) < 1e-12 and lf > 0.5 and lc > 0
    report(8, ok, f"equal-split bound = {c:.2f}; 500 shots/basis: F_99 lower = {lf:.3f} > 0.5, "
                  f"C_99 lower = {lc:.3f} > 0")
    assert ok


def test_criterion_09_dephasing(report):
    t2 = dephasing_time(70e-6, 5.4e-4)
    temps = np.array([10e-6, 40e-6, 130e-6])
    rates = 1 / np.array([dephasing_time(t) for t in temps])
    s01 = (rates[1] - rates[0]) / (temps[1] - temps[0])
    s12 = (rates[2] - rates[1]) / (temps[2] - temps[1])
    col = abs(s01 - s12) / s01
    ok = abs(t2 - 0.40e-3) <= 0.01e-3 and abs(t2 - 0.35e-3) <= 2 * 0.04e-3 and col < 1e-12
    report(9, ok, f"T2* = {t2 * 1e3:.4f} ms; vs 0.35(4) ms: {abs(t2 - 0.35e-3) / 0.04e-3:.2f} SD; "
                  f"collinearity {col:.1e}")
    assert ok


def test_criterion_10_phase_cancellation(report):
    T = 650e-6
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(200):
        c, coef, freqs = rng.normal(0, 5e4), rng.normal(0, 1e4, 5), rng.uniform(1, 20, 5)

        def f(t, c=c, coef=coef, freqs=freqs):
            x = (np.asarray(t) - T / 2) / T
            return c + sum(a * np.sin(2 * np.pi * w * x) for a, w in zip(coef, freqs)) + 3e4 * np.tanh(8 * x)

        for n in (2, 4, 6):
            worst = max(worst, abs(accumulated_phase(f, cp_sequence(n))))
    ramp = TransportConfig().nominal_ramp()
    odd = abs(accumulated_phase(ramp, cp_sequence(1)))
    cfg = TransportConfig()
    contrast = simulate_retained_coherence(cfg, cp_sequence(4), 2000, seed=0).contrast
    ok = worst < 1e-10 and odd > 0 and abs(contrast - 0.92) <= 0.01
    report(10, ok, f"even-N max |phase| = {worst:.1e} rad; N=1 |phase| = {odd:.3f} rad; "
                   f"T2'-only contrast = {contrast:.4f}")
    assert ok


def test_criterion_11_loading(report):
    mk = 1e-3 * const.KB
    ref = survival_probability(2e-6, 2.1 * mk, n_samples=10_000, seed=0)

    temps = np.geomspace(2e-6, 400e-6, 10)
    depths = np.linspace(0.3, 4.0, 10) * mk
    t0 = time.perf_counter()
    m = survival_map(temps, depths, n_samples=1000, seed=11, workers=4)
    elapsed = time.perf_counter() - t0
    tol_t = m.error[1:] + m.error[:-1]
    tol_d = m.error[:, 1:] + m.error[:, :-1]
    mono = bool(np.all(np.diff(m.survival, axis=0) <= tol_t) and np.all(np.diff(m.survival, axis=1) >= -tol_d))

    G = DEFAULT_GEOMETRY
    static = PotentialMorph(axis="axial", s_start=1.0, s_end=1.0, duration=1.0)
    f = static.max_frequency()
    x0 = np.random.default_rng(0).uniform(-0.1, 0.1, 20) * G.wavelength
    res = integrate_trajectory(PhaseSpaceSample(x0, np.zeros(20), np.ones(20)), static,
                               duration=1000 / f, record_every=1)
    x, p = res.trajectory[:, 0], res.trajectory[:, 1]
    energy = p**2 / (2 * G.mass) + potential_1d("axial", x, 1.0, static)
    drift = np.max(np.abs(np.polyfit(np.linspace(0, 1, energy.shape[0]), energy, 1)[0] / energy[0]))

    morph = PotentialMorph(axis="radial", duration=2e-3)
    s = boltzmann_sample("radial", 10e-6, G.u0, morph, np.random.default_rng(1).standard_normal((4000, 2)))
    e0 = s.momentum**2 / (2 * G.mass) + potential_1d("radial", s.position, 0.0, morph) + G.u0
    e1 = integrate_trajectory(s, morph).final_energy + G.alpha * G.u0
    ratio = np.dot(s.weight, e1) / np.dot(s.weight, e0)
    w0, w1 = (np.sqrt(morph.curvature(v) / G.mass) for v in (0.0, 1.0))
    adiabatic = abs(ratio / (w1 / w0) - 1)

    ok = ref.joint >= 0.90 and mono and drift < 1e-6 and adiabatic < 0.02 and elapsed < 60
    report(11, ok, f"survival(2 uK, 2.1 mK) = {ref.joint:.3f}; monotone = {mono}; drift = {drift:.1e}; "
                   f"E/w change = {adiabatic:.2%}; 10x10 map in {elapsed:.1f} s")
    assert ok


def test_criterion_12_rates(report):
    eta = detection_efficiency((0.6, 0.6, 0.8))
    _, n = photon_budget(0.1, eta=0.28, n_sent=0.35)
    _, n2 = photon_budget(0.2, eta=0.28, n_sent=0.35)
    _, n0 = photon_budget(0.1, (0.6, 0.0, 0.8), 0.35)
    r, r2 = bell_pair_rate(n), bell_pair_rate(2 * n)
    lin = n2 == 2 * n and r2 == 2 * r and n0 == 0.0 and bell_pair_rate(0.0) == 0.0
    ok = abs(eta - 0.288) < 1e-12 and abs(n - 9.8e-3) < 1e-12 and lin
    report(12, ok, f"eta = {eta:.3f}; N_collected = {n:.2e}; rate = {r:.3f}/min "
                   f"({RateModel().trigger_rate:g} triggers/min); linearity exact = {lin}")
    assert ok


def test_criterion_13_determinism(tmp_path, report):
    def outputs(d):
        return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}

    cfg = tmp_path / "c.ini"
    cfg.write_text("[general]\nsamples = 400\n[readout]\nresamples = 200\n[experiment]\nshots = 200\n"
                   "contrast_a = none\ncontrast_b = none\n"
                   "[loading]\ntemperatures_uk = 5, 50\ndepths_mk = 1.0, 2.1\n")
    same = True
    for cmd in ("transport", "loading", "experiment"):
        runs = []
        for w in (1, 4):
            d = tmp_path / f"{cmd}{w}"
            assert main([cmd, "--config", str(cfg), "--workers", str(w), "--out", str(d)]) == EXIT_OK
            runs.append(outputs(d))
        replayed = tmp_path / f"{cmd}_replay"
        assert main(["replay", str(tmp_path / f"{cmd}4" / "manifest.json"), "--out", str(replayed)]) == EXIT_OK
        manifest = json.loads((tmp_path / f"{cmd}1" / "manifest.json").read_text())
        runs.append(outputs(replayed))
        same &= runs[0] == runs[1] == runs[2] and len(manifest["outputs"]) == len(runs[0])
    rho = synthetic_bell_state(0.78, 0.26)
    cal = RetentionCalibration()
    recs = simulate_pushout_records(rho, cal, 500, 3)
    same &= analyze(recs, cal, 300, 1, workers=1).to_text() == analyze(recs, cal, 300, 1, workers=8).to_text()
    cfg_t = replace(TransportConfig(), jitter_sd=20e-6)
    same &= simulate_retained_coherence(cfg_t, cp_sequence(4), 3000, 2, workers=1).contrast == \
        simulate_retained_coherence(cfg_t, cp_sequence(4), 3000, 2, workers=5).contrast
    report(13, same, "transport, loading, experiment CLI outputs, bootstrap and MC byte-identical "
                     "across 1/4 workers and manifest replay")
    assert same
