"""Scenario files: TOML parsing, schema checks and the builtin catalogue."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

EXPERIMENTS = ("spectra", "ranging", "isar", "loopback", "evm_grid", "evm_vs_snr", "phase_sweep")

_NUM = (int, float)

# section -> field -> (accepted types, default); `None` default means required
SCHEMA = {
    "": {
        "name": (str, None),
        "experiment": (str, None),
        "description": (str, ""),
        "seed": (int, 0),
        "sample_rate": (_NUM, 40e9),
        "threads": (int, 1),
    },
    "waveform": {
        "f0": (_NUM, 8.5e9),
        "bandwidth": (_NUM, 1e9),
        "bandwidths": (list, []),
        "period": (_NUM, 4e-6),
        "duty": (_NUM, 0.95),
        "bit_rate": (_NUM, 105.26e6),
        "bit_rates": (list, []),
        "nrz_level": (_NUM, 1.0),
        "data_phase": (bool, True),
    },
    "link": {
        "m1": (_NUM, 0.3),
        "m2_level": (_NUM, 0.2),
        "e_in": (_NUM, 1.0),
        "responsivity": (_NUM, 1.0),
        "edfa_gain": (_NUM, 1.0),
        "load": (_NUM, 50.0),
        "ebpf_taps": (int, 1025),
        "tone": (_NUM, 9e9),
        "rbw": (_NUM, 10e6),
    },
    "radar": {
        "standoff": (_NUM, 1.0),
        "distances": (list, []),
        "targets": (list, []),
        "rotation": (_NUM, 0.0),
        "crossrange_resolution": (_NUM, 0.0),
        "num_pulses": (int, 512),
        "window": (str, "hann"),
        "zero_pad": (int, 8),
        "elpf_cutoff": (_NUM, 1.4e9),
        "elpf_taps": (int, 1025),
        "out_rate": (_NUM, 20e6),
        "echo_scale": (_NUM, 1.0),
        "crop_halfwidth": (_NUM, 0.6),
        "dynamic_range_db": (_NUM, 40.0),
        "floor_db": (_NUM, -20.0),
    },
    "comm": {
        "path_scale": (_NUM, 1.0),
        "snr_db": ((int, float, str), "none"),
        "snrs": (list, []),
        "received_powers_dbm": (list, []),
        "noise_floor_dbm": (_NUM, -36.0),
        "lo_frequency": (_NUM, 8e9),
        "lo_amplitude": (_NUM, 1.0),
        "min_bits": (int, 10_000),
        "display_window": (_NUM, 0.5e-6),
        "max_points": (int, 1000),
    },
    "sweep": {
        "distances": (list, []),
        "symbol_durations": (list, []),
        "ratio_distance": (_NUM, 3.0),
        "ratios": (list, []),
        "seeds": (list, [0, 1, 2, 3]),
        "num_pulses": (int, 128),
        "rotation": (_NUM, 0.5125),
        "dynamic_range_db": (_NUM, 30.0),
    },
    "outputs": {
        "directory": (str, ""),
    },
}

TARGET_FIELDS = {"x": _NUM, "y": _NUM, "reflectivity": _NUM}


@dataclass(frozen=True)
class Scenario:
    """A validated scenario: ``values[section][field]`` with defaults filled in."""

    values: dict
    source: str = "<memory>"

    @property
    def name(self) -> str:
        return self.values[""]["name"]

    @property
    def experiment(self) -> str:
        return self.values[""]["experiment"]

    @property
    def seed(self) -> int:
        return self.values[""]["seed"]

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def with_overrides(self, seed=None, sample_rate=None, threads=None, out_dir=None) -> "Scenario":
        vals = {k: dict(v) for k, v in self.values.items()}
        if seed is not None:
            vals[""]["seed"] = int(seed)
        if sample_rate is not None:
            vals[""]["sample_rate"] = float(sample_rate)
        if threads is not None:
            vals[""]["threads"] = int(threads)
        if out_dir is not None:
            vals["outputs"]["directory"] = str(out_dir)
        return validate(_echo(vals), self.source)

    def echo(self) -> dict:
        """Plain nested dict (top-level fields at the root) for manifests."""
        return _echo(self.values)


def _echo(values: dict) -> dict:
    out = dict(values[""])
    for section, fields in values.items():
        if section:
            out[section] = dict(fields)
    return out


def _type_name(types) -> str:
    types = types if isinstance(types, tuple) else (types,)
    names = dict.fromkeys("number" if t in (int, float) else t.__name__ for t in types)
    return " or ".join(names)


def _check_value(path: str, value, types):
    # bool is an int subclass; never accept it where a number is meant
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}: expected {_type_name(types)}, got bool")
    if not isinstance(value, types):
        raise ConfigError(f"{path}: expected {_type_name(types)}, got {type(value).__name__}")
    if isinstance(value, float) and math.isnan(value):
        raise ConfigError(f"{path}: NaN is not allowed")
    return float(value) if types == _NUM else value


def _check_numbers(path: str, values) -> list:
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, _NUM):
            raise ConfigError(f"{path}[{i}]: expected number, got {type(v).__name__}")
        out.append(float(v))
    return out


def validate(raw: dict, source: str = "<memory>") -> Scenario:
    """Check ``raw`` against the schema, fill defaults, and return a :class:`Scenario`."""
    values = {}
    for section, fields in SCHEMA.items():
        given = raw if section == "" else raw.get(section, {})
        if section and not isinstance(given, dict):
            raise ConfigError(f"{section}: expected a table")
        out = {}
        for key, (types, default) in fields.items():
            path = key if section == "" else f"{section}.{key}"
            if key in given:
                out[key] = _check_value(path, given[key], types)
            elif default is None:
                raise ConfigError(f"{path}: required field missing")
            else:
                out[key] = list(default) if isinstance(default, list) else default
        for key in given:
            if section == "" and key in SCHEMA:
                continue
            if key not in fields:
                where = key if section == "" else f"{section}.{key}"
                raise ConfigError(f"{where}: unknown field")
        values[section] = out

    top = values[""]
    if top["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown {top['experiment']!r}; choose from {EXPERIMENTS}")
    if top["threads"] < 1:
        raise ConfigError("threads: must be >= 1")
    for section, key in [("waveform", "bandwidths"), ("waveform", "bit_rates"),
                         ("radar", "distances"), ("comm", "snrs"),
                         ("comm", "received_powers_dbm"), ("sweep", "distances"),
                         ("sweep", "symbol_durations"), ("sweep", "ratios")]:
        values[section][key] = _check_numbers(f"{section}.{key}", values[section][key])
    seeds = values["sweep"]["seeds"]
    for i, s in enumerate(seeds):
        if isinstance(s, bool) or not isinstance(s, int):
            raise ConfigError(f"sweep.seeds[{i}]: expected int")
    snr = values["comm"]["snr_db"]
    if isinstance(snr, str):
        if snr != "none":
            raise ConfigError("comm.snr_db: expected a number or \"none\"")
        values["comm"]["snr_db"] = math.inf
    else:
        values["comm"]["snr_db"] = float(snr)
    targets = []
    for i, t in enumerate(values["radar"]["targets"]):
        path = f"radar.targets[{i}]"
        if not isinstance(t, dict):
            raise ConfigError(f"{path}: expected a table with x, y, reflectivity")
        for k in t:
            if k not in TARGET_FIELDS:
                raise ConfigError(f"{path}.{k}: unknown field")
        for k in ("x", "y"):
            if k not in t:
                raise ConfigError(f"{path}.{k}: required field missing")
        targets.append({k: _check_value(f"{path}.{k}", t.get(k, 1.0), _NUM) for k in TARGET_FIELDS})
    values["radar"]["targets"] = targets
    return Scenario(values, source)


def loads(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return validate(raw, source)


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    return loads(text, str(path))


def _builtin_dir():
    return resources.files("jcrsim") / "scenarios"


def list_builtin_scenarios() -> list[tuple[str, str]]:
    """``(name, description)`` for every shipped scenario, sorted by name."""
    out = []
    for entry in sorted(_builtin_dir().iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".toml"):
            sc = loads(entry.read_text(encoding="utf-8"), entry.name)
            out.append((sc.name, sc.values[""]["description"]))
    return out


def builtin_text(name: str) -> str:
    entry = _builtin_dir() / f"{name}.toml"
    if not entry.is_file():
        names = ", ".join(n for n, _ in list_builtin_scenarios())
        raise ConfigError(f"no builtin scenario {name!r}; available: {names}")
    return entry.read_text(encoding="utf-8")


def builtin(name: str) -> Scenario:
    return loads(builtin_text(name), f"builtin:{name}")


def resolve(ref: str) -> Scenario:
    """A scenario file path, or the name of a builtin."""
    if Path(ref).is_file():
        return load(ref)
    if ref.endswith(".toml") or "/" in ref:
        raise ConfigError(f"scenario file not found: {ref}")
    return builtin(ref)
