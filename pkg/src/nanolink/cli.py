"""Command-line front end: ``nanolink <subcommand> [--config FILE] [--seed N] [--samples N] [--out DIR]``.

Every run writes its outputs plus ``manifest.json``; ``nanolink replay
manifest.json`` reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import config as config_mod
from .carving import (
    CarvingConfig,
    HeraldError,
    InterferometerModel,
    carve,
    optimize_angle,
    reference_amplitudes,
    prepare_theta_state,
    scattering_decay,
    write_landscape_csv,
)
from .cavity_model import CavityError, CavityParams, spectrum, write_spectrum_csv
from .config import Config, ConfigError
from . import constants as const
from .loading import PotentialMorph, survival_map
from .pipeline import ExperimentConfig, RateModel, bell_pair_rate, error_budget, photon_budget, run_experiment
from .quantum_core import StateError
from .readout import (
    CalibrationError,
    RecordError,
    RetentionCalibration,
    analyze,
    read_calibration,
    read_records,
    write_calibration,
    write_records,
)
from .transport import (
    DEFAULT_GEOMETRY,
    TransportConfig,
    build_ramp,
    contrast_vs_pulses,
    dephasing_time,
    write_contrast_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (HeraldError, CavityError, StateError, RecordError, CalibrationError, FloatingPointError,
                  np.linalg.LinAlgError, ValueError)


def _kv(pairs: dict) -> str:
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if isinstance(v, np.integer):
            return str(int(v))
        return str(v)

    return "".join(f"{k} = {fmt(v)}\n" for k, v in pairs.items())


class Run:
    """Collects outputs for one subcommand and writes the manifest."""

    def __init__(self, out: Path, name: str, cfg: Config, inputs: dict[str, str]):
        self.out, self.name, self.cfg, self.inputs = out, name, cfg, inputs
        self.files: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, filename: str) -> Path:
        p = self.out / filename
        self.files.append(p)
        return p

    def text(self, filename: str, body: str) -> Path:
        p = self.path(filename)
        _atomic_write(p, body)
        return p

    def manifest(self) -> Path:
        doc = {
            "subcommand": self.name,
            "tool_version": __version__,
            "seed": self.cfg["general"]["seed"],
            "config": self.cfg.snapshot(),
            "inputs": self.inputs,
            "outputs": {p.name: {"path": str(p), "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
                        for p in self.files},
        }
        p = self.out / "manifest.json"
        _atomic_write(p, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return p


def _atomic_write(path: Path, body: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(body)
    os.replace(tmp, path)


# Builders from config ----------------------------------------------------------------


def cavity_params(cfg: Config) -> CavityParams:
    c = cfg["cavity"]
    kappa = const.mhz(c["kappa_mhz"])
    frac = c["kappa_wg_fraction"] if c["kappa_wg_fraction"] is not None else const.KAPPA_WG_FRACTION
    return CavityParams(g=const.mhz(c["two_g_mhz"]) / 2, kappa=kappa, kappa_wg=frac * kappa,
                        gamma=const.mhz(c["gamma_mhz"]))


def carving_config(cfg: Config) -> CarvingConfig:
    c = cfg["carving"]
    return CarvingConfig(theta=c["theta_pi"] * np.pi, n_sent=c["n_sent"], model=c["model"],
                         interferometer=InterferometerModel(contrast=c["contrast"], p_u=c["p_u"]),
                         amplitudes=tuple(reference_amplitudes(c["r00"], c["r01"], c["r11"])))


def retention(cfg: Config) -> RetentionCalibration:
    r = cfg["readout"]
    return RetentionCalibration(r["h_a"], r["l_a"], r["h_b"], r["l_b"])


def transport_config(cfg: Config) -> TransportConfig:
    t = cfg["transport"]
    return TransportConfig(temperature=t["temperature_uk"] * 1e-6, zeta=t["zeta"], duration=t["duration_us"] * 1e-6,
                           steepness=t["steepness"], t2_prime_pcc=t["t2_pcc_ms"] * 1e-3,
                           t2_prime_free=t["t2_free_ms"] * 1e-3, pcc_fraction=t["pcc_fraction"],
                           jitter_sd=t["jitter_us"] * 1e-6, offset_noise=t["offset_noise"])


# Subcommands ---------------------------------------------------------------------------


def cmd_spectrum(run: Run, args) -> None:
    params = cavity_params(run.cfg)
    c = run.cfg["cavity"]
    det = np.linspace(-c["span_mhz"], c["span_mhz"], c["points"]) * 1e6
    write_spectrum_csv(run.path("spectrum_coupled.csv"), det, spectrum(params, det))
    write_spectrum_csv(run.path("spectrum_uncoupled.csv"), det, spectrum(params.with_g(0.0), det))
    run.text("spectrum.txt", _kv({"cooperativity": params.cooperativity, "kappa_wg_over_kappa": params.kappa_wg / params.kappa,
                                  "resonant_reflectivity_coupled": float(spectrum(params, np.zeros(1))[0]),
                                  "resonant_reflectivity_uncoupled": float(spectrum(params.with_g(0.0), np.zeros(1))[0])}))


def cmd_carve(run: Run, args) -> None:
    cc = carving_config(run.cfg)
    out = carve(prepare_theta_state(cc.theta), cc)
    damp = scattering_decay(cc.n_sent, cc.cooperativity, cc.kappa_wg_ratio)
    pops = out.state.populations()
    run.text("carve.txt", _kv({"model": cc.model, "theta_pi": cc.theta / np.pi, "p_u": cc.p_u(),
                               "success_probability": out.success_probability,
                               "fidelity_psi_plus": out.fidelity_psi_plus, "fidelity_phi_plus": out.fidelity_phi_plus,
                               "scattering_factor": damp, "P00": pops[0], "P01": pops[1], "P10": pops[2],
                               "P11": pops[3]}))


def cmd_optimize(run: Run, args) -> None:
    c = run.cfg["carving"]
    amps = reference_amplitudes(c["r00"], c["r01"], c["r11"])
    step = c["theta_step_pi"] * np.pi
    scan = optimize_angle(amps, contrast=c["contrast"], step=step)
    perfect = optimize_angle(amps, contrast=1.0, step=step)
    write_landscape_csv(run.path("landscape.csv"), [scan, perfect])
    cc = replace(carving_config(run.cfg), theta=max(scan.theta_opt, 1e-9))
    run.text("optimize.txt", _kv({"contrast": c["contrast"], "theta_opt_pi": scan.theta_opt / np.pi,
                                  "fidelity_max": scan.fidelity_max, "success_probability": scan.success_at_opt,
                                  "p_u": cc.p_u()}))


def cmd_tomography(run: Run, args) -> None:
    if not args.records:
        raise ConfigError("tomography needs --records")
    records = read_records(args.records)
    cal = read_calibration(args.cal) if args.cal else (retention(run.cfg) if records.readout == "pushout" else None)
    loss = run.cfg["readout"]["loss"]
    if cal is not None and loss:
        cal = cal.with_loss(loss)
    res = analyze(records, cal, run.cfg["readout"]["resamples"], run.cfg["general"]["seed"],
                  run.cfg["general"]["workers"])
    run.text("tomography.txt", res.to_text())


def cmd_transport(run: Run, args) -> None:
    t = run.cfg["transport"]
    g = run.cfg["general"]
    tc = transport_config(run.cfg)
    nominal = tc.nominal_ramp()
    start, end = nominal.midpoint - nominal.amplitude, nominal.midpoint + nominal.amplitude
    ramp = build_ramp(start, end, tc.duration, tc.steepness, t["response_us"] * 1e-6 or None)
    ramp.write_csv(run.path("ramp.csv"))
    rows = contrast_vs_pulses(tc, t["pulses"], g["samples"], g["seed"])
    write_contrast_csv(run.path("contrast_vs_n.csv"), rows)
    best = max(rows, key=lambda r: r[1])
    run.text("transport.txt", _kv({"t2_star_s": dephasing_time(tc.temperature, tc.zeta),
                                   "t2_prime_factor": tc.t2_factor(), "best_n": best[0], "best_contrast": best[1],
                                   "ramp_start_rad_per_s": start, "ramp_end_rad_per_s": end}))


def cmd_loading(run: Run, args) -> None:
    l = run.cfg["loading"]
    g = run.cfg["general"]
    morph = PotentialMorph(DEFAULT_GEOMETRY, duration=l["morph_fraction"] * l["transport_time_us"] * 1e-6)
    temps = np.array(l["temperatures_uk"]) * 1e-6
    depths = np.array(l["depths_mk"]) * 1e-3 * const.KB
    m = survival_map(temps, depths, morph, max(g["samples"], 100), g["seed"], workers=g["workers"])
    m.write_csv(run.path("survival_map.csv"))
    run.text("loading.txt", _kv({"morph_duration_s": morph.duration, "cells": int(m.survival.size),
                                 "min_survival": float(m.survival.min()), "max_survival": float(m.survival.max())}))


def cmd_rates(run: Run, args) -> None:
    r = run.cfg["rates"]
    eta, n_col = photon_budget(r["t_int"], (r["qe"], r["taper"], r["throughput"]), r["n_sent"], r["eta"])
    eta_product, _ = photon_budget(r["t_int"], (r["qe"], r["taper"], r["throughput"]), r["n_sent"])
    model = RateModel(r["trigger_rate_per_min"], r["loading"], r["attempts_with_pair"], r["run_fraction"])
    run.text("rates.txt", _kv({"eta_components_product": eta_product, "eta": eta, "N_collected": n_col,
                               "bell_pairs_per_min": bell_pair_rate(n_col, model)}))


def experiment_config(cfg: Config) -> ExperimentConfig:
    e = cfg["experiment"]
    g = cfg["general"]
    cc = carving_config(cfg)
    if e["p_u"] is not None:
        cc = replace(cc, interferometer=replace(cc.interferometer, p_u=e["p_u"]))
    return ExperimentConfig(prep_fidelity=e["prep_fidelity"], carving=cc, contrast_a=e["contrast_a"],
                            contrast_b=e["contrast_b"], transport=transport_config(cfg),
                            transport_loss=e["transport_loss"], retention=retention(cfg), shots=e["shots"],
                            parity_phases=e["parity_phases"], n_resamples=cfg["readout"]["resamples"],
                            mc_samples=g["samples"], seed=g["seed"], workers=g["workers"])


def cmd_experiment(run: Run, args) -> None:
    ec = experiment_config(run.cfg)
    res = run_experiment(ec)
    write_records(run.path("records_in_situ.csv"), res.in_situ.records)
    write_records(run.path("records_post_transport.csv"), res.post_transport.records)
    cal = ec.retention.with_loss(ec.transport_loss) if ec.transport_loss else ec.retention
    write_calibration(run.path("calibration.csv"), cal)
    summary = {"herald_probability": res.herald_probability, "contrast_a": res.contrasts[0],
               "contrast_b": res.contrasts[1], "true_fidelity_in_situ": res.in_situ.true_fidelity,
               "true_fidelity_post_transport": res.post_transport.true_fidelity}
    summary.update({f"budget_{k}": v for k, v in error_budget(ec).items()})
    body = _kv(summary) + "\n[in_situ]\n" + res.in_situ.tomography.to_text() \
        + "\n[post_transport]\n" + res.post_transport.tomography.to_text()
    run.text("summary.txt", body)


COMMANDS: dict[str, Callable] = {
    "spectrum": cmd_spectrum,
    "carve": cmd_carve,
    "optimize": cmd_optimize,
    "tomography": cmd_tomography,
    "transport": cmd_transport,
    "loading": cmd_loading,
    "rates": cmd_rates,
    "experiment": cmd_experiment,
}


HELP = {
    "spectrum": "cavity reflection spectra with and without an atom",
    "carve": "carve one initial angle and report the heralded state",
    "optimize": "scan the initial angle for maximal fidelity",
    "tomography": "estimate fidelity and concurrence from record files",
    "transport": "ramp export and retained contrast vs CP pulse count",
    "loading": "survival map over temperature and trap depth",
    "rates": "photon budget and Bell-pair rate",
    "experiment": "end-to-end simulated run with both readout branches",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nanolink", description="Cavity-carved atom entanglement toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="shared INI config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", default=".", help="output directory")
        if name in ("optimize", "carve"):
            p.add_argument("--contrast", type=float, help="interferometer fringe contrast")
        if name == "tomography":
            p.add_argument("--records", help="record file")
            p.add_argument("--cal", help="retention calibration file")
    rp = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", help="output directory (default: the manifest's directory)")
    return parser


def _resolve(args) -> tuple[str, Config, dict[str, str]]:
    if args.command == "replay":
        doc = json.loads(Path(args.manifest).read_text())
        cfg = config_mod.from_snapshot(doc["config"])
        for k, v in doc.get("inputs", {}).items():
            setattr(args, k, v)
        if args.out is None:
            args.out = str(Path(args.manifest).parent)
        for k in ("records", "cal"):
            if not hasattr(args, k):
                setattr(args, k, doc.get("inputs", {}).get(k))
        return doc["subcommand"], cfg, doc.get("inputs", {})
    cfg = config_mod.load(args.config)
    for flag, key in (("seed", "seed"), ("samples", "samples"), ("workers", "workers")):
        if getattr(args, flag) is not None:
            cfg.set("general", key, getattr(args, flag))
    if getattr(args, "contrast", None) is not None:
        cfg.set("carving", "contrast", args.contrast)
    inputs = {k: str(Path(getattr(args, k)).resolve()) for k in ("records", "cal") if getattr(args, k, None)}
    return args.command, cfg, inputs


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        name, cfg, inputs = _resolve(args)
        run = Run(Path(args.out), name, cfg, inputs)
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            COMMANDS[name](run, args)
        run.manifest()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
