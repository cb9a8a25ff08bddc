import numpy as np
import pytest
from hypothesis import given, strategies as st

from nanolink.quantum_core import PHI_PLUS, concurrence_bound_equal_split
from nanolink.readout import (
    CalibrationError,
    MeasurementRecord,
    RecordError,
    RecordSet,
    RetentionCalibration,
    analyze,
    bootstrap,
    correction_matrix,
    estimate,
    extract_coherence,
    histogram,
    infer_populations,
    read_calibration,
    read_records,
    retention_probabilities,
    simulate_cavity_records,
    simulate_pushout_records,
    synthetic_bell_state,
    threshold_fidelity,
    two_point_coherence,
    write_calibration,
    write_records,
)

prob = st.floats(0, 1)
PHIS = np.arange(8) * np.pi / 8


def test_identity_calibration():
    np.testing.assert_array_equal(correction_matrix(RetentionCalibration.ideal()), np.eye(4))


def test_correction_matrix_entries():
    k = correction_matrix(RetentionCalibration())
    assert k[0, 0] == pytest.approx(0.64)
    np.testing.assert_allclose(k.sum(axis=0), 1.0, atol=1e-15)


def test_singular_calibration_rejected():
    with pytest.raises(CalibrationError):
        correction_matrix(RetentionCalibration(0.5, 0.5, 0.8, 0.05))
    with pytest.raises(CalibrationError):
        RetentionCalibration(1.2, 0.0, 1.0, 0.0)


@given(ha=prob, la=prob, hb=prob, lb=prob)
def test_correction_inverse_identity(ha, la, hb, lb):
    if abs(ha - la) < 0.05 or abs(hb - lb) < 0.05:
        return
    k = correction_matrix(RetentionCalibration(ha, la, hb, lb))
    np.testing.assert_allclose(np.linalg.solve(k, k), np.eye(4), atol=1e-12)


def test_round_trip_on_simplex():
    rng = np.random.default_rng(3)
    for _ in range(500):
        h, l = rng.uniform(0.6, 1.0, 2), rng.uniform(0.0, 0.3, 2)
        cal = RetentionCalibration(h[0], l[0], h[1], l[1])
        p = rng.dirichlet(np.ones(4))
        out = infer_populations(retention_probabilities(p, cal), cal)
        np.testing.assert_allclose(out.raw, p, atol=1e-12)


def test_trivial_inference():
    r = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(infer_populations(r, RetentionCalibration.ideal()).raw, r)
    with pytest.raises(RecordError):
        infer_populations([0.5, 0.5, 0.5, 0.5], RetentionCalibration())


def test_clipping_keeps_raw():
    cal = RetentionCalibration()
    out = infer_populations([0.70, 0.10, 0.10, 0.10], cal)
    assert out.raw.min() < 0
    assert out.clipped.min() >= 0 and out.clipped.sum() == pytest.approx(1.0)


def test_extract_coherence_examples():
    rho, off = extract_coherence(PHIS, 0.66 * np.cos(2 * PHIS))
    assert rho == pytest.approx(0.33, abs=1e-12) and off == pytest.approx(0, abs=1e-12)
    rho, _ = extract_coherence(PHIS, np.full(8, 0.2))
    assert abs(rho) < 1e-12
    phi0 = 0.4
    rho, _ = extract_coherence(PHIS, 0.66 * np.cos(2 * PHIS - 2 * phi0))
    assert abs(rho) == pytest.approx(0.33, abs=1e-10)
    assert np.angle(rho) == pytest.approx(2 * phi0, abs=1e-10)
    with pytest.raises(RecordError):
        extract_coherence([0.0, np.pi, 2 * np.pi, 0.5], [1, 1, 1, 0])


@given(amp=st.floats(0, 0.5), phase=st.floats(-np.pi, np.pi), off=st.floats(-0.5, 0.5))
def test_extract_coherence_noiseless(amp, phase, off):
    y = 2 * off + 2 * amp * np.cos(2 * PHIS - phase)
    rho, c = extract_coherence(PHIS, y)
    assert abs(rho - amp * np.exp(1j * phase)) < 1e-10
    assert c == pytest.approx(off, abs=1e-10)


def test_two_point_coherence():
    assert two_point_coherence(1.0, -1.0) == 0.5
    assert two_point_coherence(0.3, 0.3) == 0.0


def test_record_validation_and_io(tmp_path):
    with pytest.raises(RecordError):
        MeasurementRecord("ZZ", 0.0, (1, -1, 0, 0))
    recs = RecordSet([MeasurementRecord("zz", 0.0, (5, 1, 2, 3)), MeasurementRecord("PARITY", 0.3, (1, 2, 3, 4))])
    path = tmp_path / "r.csv"
    write_records(path, recs)
    back = read_records(path)
    assert back.records == recs.records and back.records[0].basis == "ZZ"
    bad = tmp_path / "bad.csv"
    bad.write_text("ZZ,0,1,2\n")
    with pytest.raises(RecordError):
        read_records(bad)
    cal = RetentionCalibration(0.81, 0.04, 0.79, 0.06)
    write_calibration(tmp_path / "c.csv", cal)
    assert read_calibration(tmp_path / "c.csv") == cal


def test_ideal_phi_plus_pushout_estimate():
    recs = simulate_pushout_records(PHI_PLUS, RetentionCalibration.ideal(), 400, seed=0)
    est = estimate(recs)
    assert est["fidelity"] == pytest.approx(1.0, abs=1e-12)
    assert est["concurrence_bound"] == pytest.approx(1.0, abs=1e-12)


def test_parity_scan_route_matches_xx_yy():
    rho = synthetic_bell_state(0.8, 0.3 * np.exp(0.6j))
    cal = RetentionCalibration()
    recs = simulate_pushout_records(rho, cal, 200_000, 1, bases=("ZZ",), parity_phis=PHIS)
    est = estimate(recs, cal)
    assert est["coherence"] == pytest.approx(0.3, abs=0.01)
    # the synthetic state stores rho_00,11; the estimator reports rho_11,00
    assert est["coherence_phase"] == pytest.approx(-0.6, abs=0.05)


def test_bootstrap_zero_variance_and_determinism():
    recs = RecordSet([MeasurementRecord("ZZ", 0.0, (100, 0, 0, 0)), MeasurementRecord("XX", 0.0, (100, 0, 0, 0)),
                      MeasurementRecord("YY", 0.0, (0, 100, 0, 0))])
    res = analyze(recs, RetentionCalibration.ideal(), 200, seed=4)
    lo, hi = res.intervals["fidelity"]
    assert lo == hi
    again = analyze(recs, RetentionCalibration.ideal(), 200, seed=4)
    assert again.to_text() == res.to_text()
    with pytest.raises(ValueError):
        bootstrap(recs, estimate, 10)


def test_bootstrap_independent_of_workers():
    rho = synthetic_bell_state(0.78, 0.26)
    recs = simulate_pushout_records(rho, RetentionCalibration(), 500, 2)
    a = analyze(recs, RetentionCalibration(), 300, seed=1, workers=1)
    b = analyze(recs, RetentionCalibration(), 300, seed=1, workers=4)
    assert a.to_text() == b.to_text()


def test_bootstrap_width_scales_inverse_sqrt_n():
    rho = synthetic_bell_state(0.78, 0.26)
    cal = RetentionCalibration()
    sd = [analyze(simulate_pushout_records(rho, cal, n, 3), cal, 1000, seed=0).sds["fidelity"] for n in (400, 1600)]
    assert sd[0] / sd[1] == pytest.approx(2.0, rel=0.2)


def test_typical_fidelity_uncertainty():
    rho = synthetic_bell_state(0.78, 0.26)
    cal = RetentionCalibration()
    res = analyze(simulate_pushout_records(rho, cal, 500, 0), cal)
    assert 0.02 <= res.sds["fidelity"] <= 0.07


def test_uncorrected_estimate_is_lower():
    rho = synthetic_bell_state(0.78, 0.26)
    cal = RetentionCalibration()
    recs = simulate_pushout_records(rho, cal, 200_000, 5)
    corrected = estimate(recs, cal)["fidelity"]
    raw = estimate(recs, RetentionCalibration.ideal())["fidelity"]
    assert corrected == pytest.approx(0.65, abs=0.01)
    assert raw == pytest.approx(0.52, abs=0.05)
    assert corrected - raw == pytest.approx(0.13, abs=0.05)


def test_concurrence_equal_split():
    assert concurrence_bound_equal_split(0.33, 0.22) == pytest.approx(0.44)


def test_cavity_estimator_ideal_readout():
    recs = simulate_cavity_records(PHI_PLUS, 1000, 0, PHIS)
    est = estimate(recs)
    assert est["P00"] + est["P11"] == pytest.approx(1.0, abs=0.05)
    assert est["fidelity"] == pytest.approx(1.0, abs=0.02)
    with pytest.raises(RecordError):
        estimate(RecordSet(recs.records[:2], "cavity"))


def test_threshold_fidelity():
    sep = {"00": [10, 0, 0, 0], "11": [0, 0, 0, 10]}
    assert threshold_fidelity(sep, 2) == {"00": (1.0, 1.0, 1.0), "11": (1.0, 1.0, 1.0)}
    same = {"00": [5, 5], "11": [5, 5]}
    assert threshold_fidelity(same, 1)["00"][0] == 0.5
    assert threshold_fidelity(same, 1)["11"][0] == 0.5
    with pytest.raises(RecordError):
        threshold_fidelity({"00": [0, 0]}, 1)


def test_threshold_fidelity_from_calibrated_poisson():
    from nanolink.cavity_model import calibrate_readout, simulate_cavity_readout

    refl = [0.40, 0.94, 0.94, 0.97]
    model = calibrate_readout(refl, 0.956)
    hists = {s: histogram(simulate_cavity_readout(s, model, refl, seed=2, shots=20_000)[0])
             for s in ("00", "01", "10", "11")}
    out = threshold_fidelity(hists, model.threshold)
    assert out["00"][0] == pytest.approx(0.956, abs=0.01)
    assert out["00"][1] <= out["00"][0] <= out["00"][2]
