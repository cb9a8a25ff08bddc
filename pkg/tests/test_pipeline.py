from dataclasses import replace

import numpy as np
import pytest

from nanolink.carving import InterferometerModel
from nanolink.pipeline import (
    ExperimentConfig,
    RateModel,
    bell_pair_rate,
    detection_efficiency,
    error_budget,
    photon_budget,
    run_experiment,
    transport_contrasts,
)
from nanolink.transport import TransportConfig


def test_detection_efficiency_and_budget():
    assert detection_efficiency((0.6, 0.6, 0.8)) == pytest.approx(0.288, abs=1e-12)
    eta, n = photon_budget(0.1, (0.6, 0.6, 0.8), 0.35, eta=0.28)
    assert eta == 0.28
    assert n == pytest.approx(9.8e-3, abs=1e-12)
    with pytest.raises(ValueError):
        detection_efficiency((0.5, 1.2))
    with pytest.raises(ValueError):
        photon_budget(1.5)


def test_budget_linearity():
    _, base = photon_budget(0.1, eta=0.28, n_sent=0.35)
    assert photon_budget(0.2, eta=0.28, n_sent=0.35)[1] == pytest.approx(2 * base, rel=1e-15)
    assert photon_budget(0.1, eta=0.14, n_sent=0.35)[1] == pytest.approx(base / 2, rel=1e-15)
    assert photon_budget(0.1, eta=0.28, n_sent=1.05)[1] == pytest.approx(3 * base, rel=1e-15)


def test_rate_linearity():
    r1 = bell_pair_rate(9.8e-3)
    assert r1 == pytest.approx(24 * 0.64 * 4 * 9.8e-3 * 0.85)
    assert bell_pair_rate(2 * 9.8e-3) == pytest.approx(2 * r1, rel=1e-15)
    assert bell_pair_rate(9.8e-3, RateModel(trigger_rate=48)) == pytest.approx(2 * r1, rel=1e-15)
    assert bell_pair_rate(0.0) == 0.0
    with pytest.raises(ValueError):
        RateModel(loading=1.1)
    with pytest.raises(ValueError):
        bell_pair_rate(-1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(prep_fidelity=1.5)
    with pytest.raises(ValueError):
        ExperimentConfig(contrast_a=-0.1)
    with pytest.raises(ValueError):
        ExperimentConfig(parity_phases=2)


def test_error_budget_sums_to_final():
    b = error_budget()
    parts = ("angle", "interferometer", "scattering", "initialization")
    assert 1 - sum(b[k] for k in parts) == pytest.approx(b["final_in_situ"], abs=1e-12)
    assert all(b[k] > 0 for k in parts + ("transport",))
    assert b["scattering"] == pytest.approx(0.0034, abs=3e-4)


def test_ideal_pipeline():
    res = run_experiment(ExperimentConfig.ideal())
    assert res.in_situ.true_fidelity == pytest.approx(1.0, abs=1e-6)
    t = res.in_situ.tomography
    assert abs(t.fidelity - 1.0) < 3 * t.sds["fidelity"]
    assert res.post_transport.tomography.fidelity == pytest.approx(1.0, abs=1e-6)


def test_in_situ_regression():
    fids = []
    for seed in range(4):
        res = run_experiment(ExperimentConfig(seed=seed, n_resamples=200))
        assert res.in_situ.true_fidelity == pytest.approx(0.7367, abs=1e-3)
        assert res.readout_fidelities.min() >= 0.95
        fids.append(res.in_situ.tomography.fidelity)
    assert np.mean(fids) == pytest.approx(0.72, abs=0.04)


def test_post_transport_regression():
    res = run_experiment(ExperimentConfig(n_resamples=200))
    assert res.post_transport.true_fidelity == pytest.approx(0.65, abs=0.07)
    fids = [run_experiment(ExperimentConfig(seed=s, n_resamples=200)).post_transport.tomography.fidelity
            for s in range(4)]
    assert np.mean(fids) == pytest.approx(0.65, abs=0.07)


def test_post_transport_certification_with_more_shots():
    res = run_experiment(ExperimentConfig(shots=2000, n_resamples=500))
    t = res.post_transport.tomography
    assert t.lower_99["fidelity"] > 0.5
    assert t.lower_99["concurrence_bound"] > 0


def test_in_situ_beats_post_transport():
    for seed in range(3):
        res = run_experiment(ExperimentConfig(seed=seed, n_resamples=200))
        assert res.in_situ.true_fidelity > res.post_transport.true_fidelity


def test_fidelity_monotone_in_imperfections():
    base = ExperimentConfig(n_resamples=100)
    true = lambda cfg: run_experiment(cfg).post_transport.true_fidelity
    f0 = true(base)
    assert true(replace(base, contrast_a=0.5)) < f0
    assert true(replace(base, prep_fidelity=0.9)) < f0
    worse = replace(base.carving, interferometer=InterferometerModel(p_u=0.2))
    assert true(replace(base, carving=worse)) < f0


def test_transport_model_contrasts():
    cfg = ExperimentConfig(contrast_a=None, contrast_b=None, mc_samples=1000,
                           transport=TransportConfig(steepness=16, jitter_sd=40e-6))
    ca, cb = transport_contrasts(cfg)
    assert 0.8 < ca < 0.92 and 0.8 < cb < 0.92
    assert ca != cb


def test_pipeline_deterministic_across_workers():
    a = run_experiment(ExperimentConfig(n_resamples=200, workers=1))
    b = run_experiment(ExperimentConfig(n_resamples=200, workers=4))
    assert a.in_situ.tomography.to_text() == b.in_situ.tomography.to_text()
    assert a.post_transport.tomography.to_text() == b.post_transport.tomography.to_text()
