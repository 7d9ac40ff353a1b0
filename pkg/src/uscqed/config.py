"""Run configuration: strict JSON parsing, named presets, and hashing.

A config bundles the model, the packet, the time stepper, optional sweep
grids, and output destinations.  Parsing is strict: unknown keys anywhere
are hard errors, so a typo never silently falls back to a default.  Preset
expansion happens before user overlays, and the expanded values are what
gets hashed, so the same physics reached via a preset or spelled out by
hand carries the same identity.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import numbers
from dataclasses import dataclass

from .errors import ConfigError
from .evolution import EvolutionParams
from .model import ModelParams
from .scattering import WavepacketSpec


@dataclass(frozen=True)
class SweepGrid:
    """Optional grids over coupling and carrier; empty axes reuse the base."""

    g: tuple = ()
    omega_in: tuple = ()
    k_in: tuple = ()

    def __post_init__(self):
        for name in ("g", "omega_in", "k_in"):
            vals = getattr(self, name)
            try:
                vals = tuple(float(v) for v in vals)
            except (TypeError, ValueError):
                raise ConfigError(f"sweep.{name} must be a list of numbers")
            object.__setattr__(self, name, vals)
        if self.omega_in and self.k_in:
            raise ConfigError("sweep cannot grid omega_in and k_in together")

    @property
    def empty(self) -> bool:
        return not (self.g or self.omega_in or self.k_in)


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "runs"
    formats: tuple = ("csv", "json")

    def __post_init__(self):
        object.__setattr__(self, "formats", tuple(self.formats))
        for f in self.formats:
            if f not in ("csv", "json"):
                raise ConfigError(f"outputs.formats: unknown format {f!r}")


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    packet: WavepacketSpec
    evolution: EvolutionParams = EvolutionParams()
    sweep: SweepGrid = SweepGrid()
    outputs: OutputSpec = OutputSpec()
    preset: str = None


# Parameter sets for the published figures plus a laptop-scale variant.
# Chains of 480 cavities with the scatterer at 240 and launch at 160
# (inset geometry: wall 20 sites past the scatterer at 460, launch at 380);
# sigma=2 packets are momentum-broad for spectra, sigma=20 momentum-sharp
# for dynamics.
PRESETS = {
    "desk": {
        "model": {"L": 120, "g": 0.7, "j0": 60, "n_max": 4},
        "packet": {"sigma": 10.0, "x0": 30.0, "omega": 0.85},
        "evolution": {"dt": 0.05, "t_final": 110.0, "order": 3,
                      "max_rank": 10, "cutoff": 1e-10},
    },
    "paper-fig3": {
        "model": {"L": 480, "g": 0.7, "j0": 240, "n_max": 4},
        "packet": {"sigma": 20.0, "x0": 160.0, "omega": 0.85},
        "evolution": {"dt": 0.05, "t_final": 420.0, "order": 3,
                      "max_rank": 10, "cutoff": 1e-10},
        "sweep": {"omega_in": [0.70, 0.85]},
    },
    "paper-fig4": {
        "model": {"L": 480, "g": 0.7, "j0": 240, "n_max": 4},
        "packet": {"sigma": 2.0, "x0": 160.0, "omega": 1.0},
        "evolution": {"dt": 0.05, "t_final": 420.0, "order": 3,
                      "max_rank": 10, "cutoff": 1e-10},
        "sweep": {"g": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]},
    },
    "paper-fig5": {
        "model": {"L": 480, "g": 0.7, "j0": 240, "n_max": 4},
        "packet": {"sigma": 2.0, "x0": 160.0, "omega": 1.0},
        "evolution": {"dt": 0.05, "t_final": 420.0, "order": 3,
                      "max_rank": 10, "cutoff": 1e-10},
        "sweep": {"g": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]},
    },
    "paper-fig5-inset": {
        "model": {"L": 481, "g": 0.8, "j0": 460, "n_max": 4,
                  "boundary": "mirror", "mirror_dx": 20},
        "packet": {"sigma": 2.0, "x0": 380.0, "omega": 1.0},
        "evolution": {"dt": 0.05, "t_final": 800.0, "order": 3,
                      "max_rank": 10, "cutoff": 1e-10},
    },
    "paper-fig6": {
        "model": {"L": 480, "g": 0.3, "j0": 240, "n_max": 4},
        "packet": {"sigma": 20.0, "x0": 160.0, "omega": 0.90},
        "evolution": {"dt": 0.05, "t_final": 420.0, "order": 3,
                      "max_rank": 10, "cutoff": 1e-10},
        "sweep": {"g": [0.30, 0.40, 0.45, 0.55]},
    },
}

_ALLOWED = {
    None: {"preset", "model", "packet", "evolution", "sweep", "outputs"},
    "model": {"L", "g", "j0", "n_max", "J", "Delta", "coupling_mode",
              "scatterer", "boundary", "mirror_dx"},
    "packet": {"sigma", "x0", "omega", "k_in", "direction"},
    "evolution": {"dt", "t_final", "order", "max_rank", "cutoff",
                  "n_snapshots"},
    "sweep": {"g", "omega_in", "k_in"},
    "outputs": {"directory", "formats"},
}


def _check_keys(data: dict, section):
    prefix = f"{section}." if section else ""
    for key in data:
        if key not in _ALLOWED[section]:
            raise ConfigError(f"unknown key {prefix}{key}")


def _merge(base: dict, override: dict) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(v)
        else:
            out[k] = v
    return out


def _build(cls, section: str, values: dict):
    try:
        return cls(**values)
    except TypeError as exc:
        # surface missing/duplicate fields with the config path, not a traceback
        raise ConfigError(f"{section}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def from_dict(data: dict) -> RunConfig:
    """Validate a plain dict (parsed JSON) into a RunConfig."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    _check_keys(data, None)
    preset = data.get("preset")
    merged = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        merged = _merge(merged, PRESETS[preset])
    merged = _merge(merged, {k: v for k, v in data.items() if k != "preset"})
    # a user-specified carrier replaces the preset's, whichever form it takes
    for section, pair in (("packet", ("omega", "k_in")),
                          ("sweep", ("omega_in", "k_in"))):
        given = data.get(section, {})
        if isinstance(given, dict) and isinstance(merged.get(section), dict):
            for mine, other in (pair, pair[::-1]):
                if mine in given and other not in given:
                    merged[section].pop(other, None)
    for section in ("model", "packet", "evolution", "sweep", "outputs"):
        part = merged.get(section, {})
        if not isinstance(part, dict):
            raise ConfigError(f"{section} must be an object")
        _check_keys(part, section)
    model = _build(ModelParams, "model", merged.get("model", {}))
    packet = _build(WavepacketSpec, "packet", merged.get("packet", {}))
    evolution = _build(EvolutionParams, "evolution",
                       merged.get("evolution", {}))
    sweep = _build(SweepGrid, "sweep", merged.get("sweep", {}))
    outputs = _build(OutputSpec, "outputs", merged.get("outputs", {}))
    return RunConfig(model=model, packet=packet, evolution=evolution,
                     sweep=sweep, outputs=outputs, preset=preset)


def parse_config(path) -> RunConfig:
    """Read and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}")
    return from_dict(data)


def preset_config(name: str, overrides: dict = None) -> RunConfig:
    """Expand a named preset, optionally overlaying user sections."""
    data = {"preset": name}
    data.update(overrides or {})
    return from_dict(data)


def to_dict(config: RunConfig) -> dict:
    """Plain-type mirror of the config (JSON-ready, tuples as lists)."""
    out = dataclasses.asdict(config)

    def plain(v):
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [plain(x) for x in v]
        if isinstance(v, numbers.Integral):
            return int(v)
        if isinstance(v, numbers.Real):
            return float(v)
        return v

    return plain(out)


def config_hash(config: RunConfig) -> str:
    """Short identity of the physics content (outputs and preset excluded).

    The hash covers model, packet, evolution, and sweep after preset
    expansion, so relocating outputs or spelling a preset out by hand does
    not orphan previously completed sweep rows.
    """
    d = to_dict(config)
    d.pop("outputs", None)
    d.pop("preset", None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
