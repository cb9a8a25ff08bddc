"""Shared INI configuration with one section per module.

Every key has a type and a default; unknown sections or keys are rejected
with the list of valid names.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(";", ",").split(",") if x.strip())


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


def _fmt(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str = ""


SCHEMA: dict[str, dict[str, Key]] = {
    "general": {
        "seed": Key(int, 0, "master seed"),
        "samples": Key(int, 4000, "Monte Carlo samples (per cell for loading)"),
        "workers": Key(int, 1, "worker threads; results do not depend on it"),
    },
    "cavity": {
        "two_g_mhz": Key(float, 786.0, "2g / 2pi"),
        "gamma_mhz": Key(float, 6.0, "gamma / 2pi"),
        "kappa_mhz": Key(float, 3800.0, "kappa / 2pi"),
        "kappa_wg_fraction": Key(_opt_float, None, "kappa_wg / kappa; none uses the critical-coupling value"),
        "span_mhz": Key(float, 6000.0, "half-width of the detuning scan"),
        "points": Key(int, 1201, "spectrum points"),
    },
    "carving": {
        "theta_pi": Key(float, 0.3, "initial angle in units of pi"),
        "contrast": Key(float, 0.96, "interferometer fringe contrast"),
        "p_u": Key(_opt_float, None, "direct override of the uncoupled-herald probability"),
        "n_sent": Key(float, 0.35, "mean photons sent"),
        "model": Key(str, "mixed", "coherent or mixed"),
        "r00": Key(float, 0.40, "reflectivity of |00>"),
        "r01": Key(float, 0.94, "reflectivity of |01> and |10>"),
        "r11": Key(float, 0.97, "reflectivity of |11>"),
        "theta_step_pi": Key(float, 0.005, "optimizer grid step in units of pi"),
    },
    "readout": {
        "h_a": Key(float, 0.80, "retention of atom A in |0>"),
        "l_a": Key(float, 0.05, "retention of atom A in |1>"),
        "h_b": Key(float, 0.80, ""),
        "l_b": Key(float, 0.05, ""),
        "loss": Key(float, 0.0, "extra atom loss folded into the retention"),
        "resamples": Key(int, 1000, "bootstrap resamples"),
    },
    "transport": {
        "temperature_uk": Key(float, 70.0, "atom temperature at the cavity"),
        "zeta": Key(float, 5.4e-4, "differential light-shift coefficient"),
        "duration_us": Key(float, 650.0, "move time"),
        "steepness": Key(float, 8.0, "ramp duration / tanh time constant"),
        "response_us": Key(float, 0.0, "first-order mirror response time for the exported ramp"),
        "t2_pcc_ms": Key(float, 4.9, "T2' next to the cavity"),
        "t2_free_ms": Key(float, 17.0, "T2' in free space"),
        "pcc_fraction": Key(float, 0.5, "fraction of the move spent at the cavity"),
        "jitter_us": Key(float, 0.0, "SD of the ramp-center time shift"),
        "offset_noise": Key(lambda s: s.strip().lower() in ("1", "true", "yes", "on"), True,
                            "sample thermal motional quanta"),
        "pulses": Key(_ints, (1, 2, 3, 4, 5, 6), "CP pulse counts to scan"),
    },
    "loading": {
        "temperatures_uk": Key(_floats, (2.0, 10.0, 20.0, 40.0, 70.0), "temperature grid"),
        "depths_mk": Key(_floats, (1.0, 1.6, 2.1, 3.0), "depth grid"),
        "morph_fraction": Key(float, 0.15, "morph duration as a fraction of the transport time"),
        "transport_time_us": Key(float, 650.0, ""),
    },
    "rates": {
        "t_int": Key(float, 0.1, "fraction of the photon pulse inside the detection window"),
        "qe": Key(float, 0.6, "counter quantum efficiency"),
        "taper": Key(float, 0.6, "fiber taper coupling"),
        "throughput": Key(float, 0.8, "optical path throughput"),
        "eta": Key(_opt_float, 0.28, "total detection efficiency; none uses the product of components"),
        "n_sent": Key(float, 0.35, ""),
        "trigger_rate_per_min": Key(float, 24.0, "loading cycles per minute"),
        "loading": Key(float, 0.8, "single-atom loading probability"),
        "attempts_with_pair": Key(float, 4.0, "iterations per cycle with both atoms present"),
        "run_fraction": Key(float, 0.85, "duty-cycle factor"),
    },
    "experiment": {
        "prep_fidelity": Key(float, 0.98, ""),
        "p_u": Key(_opt_float, 0.087, "uncoupled-herald probability used by the pipeline"),
        "contrast_a": Key(_opt_float, 0.64, "retained contrast of atom A; none runs the transport model"),
        "contrast_b": Key(_opt_float, 0.88, ""),
        "shots": Key(int, 500, "shots per basis"),
        "parity_phases": Key(int, 8, ""),
        "transport_loss": Key(float, 0.0, ""),
    },
}


class Config:
    """Resolved configuration: ``cfg["carving"]["contrast"]``."""

    def __init__(self, values: dict[str, dict[str, Any]]):
        self.values = values

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    def set(self, section: str, key: str, value: Any) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown key [{section}] {key}")
        self.values[section][key] = value

    def to_ini(self) -> str:
        lines = []
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            lines += [f"{k} = {_fmt(v)}" for k, v in keys.items()]
            lines.append("")
        return "\n".join(lines)

    def snapshot(self) -> dict[str, dict[str, Any]]:
        return {s: {k: list(v) if isinstance(v, tuple) else v for k, v in keys.items()}
                for s, keys in self.values.items()}


def defaults() -> Config:
    return Config({s: {k: key.default for k, key in keys.items()} for s, keys in SCHEMA.items()})


def parse_text(text: str) -> Config:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; valid sections: {', '.join(SCHEMA)}")
        valid = SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in valid:
                raise ConfigError(f"unknown key '{key}' in [{section}]; valid keys: {', '.join(valid)}")
            try:
                cfg.values[section][key] = valid[key].parse(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc
    return cfg


def load(path: str | Path | None) -> Config:
    if path is None:
        return defaults()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_text(p.read_text())


def from_snapshot(snapshot: dict[str, dict[str, Any]]) -> Config:
    cfg = defaults()
    for section, keys in snapshot.items():
        for key, value in keys.items():
            cfg.set(section, key, tuple(value) if isinstance(value, list) else value)
    return cfg
