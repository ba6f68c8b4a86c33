"""Experiment manifest and its YAML configuration file.

Every field has a default; a config file only lists what it changes.
Unknown keys and out-of-range values are rejected with an error naming the
offending key. ``manifest_hash`` is a digest of the fully resolved manifest,
so it changes exactly when a semantically meaningful field changes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .dynamics import LORENZ63, LORENZ96, ModelSpec
from .emulator import GAMMA_NEIGHBOURS, GAMMA_SKIP, PseudoObsConfig, RegionPartition
from .errors import ConfigurationError
from .letkf import TAPER_GAUSSIAN, TAPER_NONE, LetkfConfig
from .mlp import BATCH, ONLINE, TrainConfig
from .observations import DEFAULT_OFF_PHASE_FRACTION, EVERY_CYCLE, SCHEDULES


class ConfigValidationError(ConfigurationError):
    def __init__(self, key, constraint):
        self.key = key
        self.constraint = constraint
        super().__init__(f"{key}: {constraint}")


@dataclass(frozen=True)
class ModelSection:
    kind: str = LORENZ96
    n: int = 40
    forcing: float = 8.0
    dt: float = 0.05
    steps_per_cycle: int = 1


@dataclass(frozen=True)
class ObservationSection:
    density: float = 0.5
    noise_std: float = 1.0
    schedule: str = EVERY_CYCLE
    off_phase_fraction: float = DEFAULT_OFF_PHASE_FRACTION


@dataclass(frozen=True)
class LetkfSection:
    ensemble_size: int = 30
    localization_radius: int = 3
    inflation: float = 1.05
    additive_std: float = 0.0
    taper: str = TAPER_NONE
    init_spread: float = 1.0


@dataclass(frozen=True)
class PseudoObsSection:
    layers: int = 2
    normalize: bool = True
    gamma_rule: str = GAMMA_SKIP


@dataclass(frozen=True)
class EmulatorSection:
    n_regions: int = 6
    n_hidden: int = 11
    slope: float = 2.0


@dataclass(frozen=True)
class TrainingSection:
    learning_rate: float = 0.001
    max_epochs: int = 5000
    error_goal: float = 1e-5
    mode: str = ONLINE
    patience: int | None = None
    min_improvement: float = 1e-2


@dataclass(frozen=True)
class CycleSection:
    spin_up: int = 1440
    training: int = 1200
    hindcast: int = 112


@dataclass(frozen=True)
class ExperimentManifest:
    model: ModelSection = ModelSection()
    observations: ObservationSection = ObservationSection()
    letkf: LetkfSection = LetkfSection()
    pseudo_obs: PseudoObsSection = PseudoObsSection()
    emulator: EmulatorSection = EmulatorSection()
    training: TrainingSection = TrainingSection()
    cycles: CycleSection = CycleSection()
    seed: int = 1
    compare_letkf: bool = True

    def __post_init__(self):
        validate(self)

    # typed views consumed by the library modules

    def model_spec(self) -> ModelSpec:
        return ModelSpec(**asdict(self.model))

    def letkf_config(self) -> LetkfConfig:
        s = self.letkf
        return LetkfConfig(s.localization_radius, s.inflation, s.additive_std,
                           self.observations.noise_std, s.taper, self.seed)

    def pseudo_config(self) -> PseudoObsConfig:
        return PseudoObsConfig(self.pseudo_obs.layers, 2, self.pseudo_obs.normalize,
                               self.pseudo_obs.gamma_rule)

    def partition(self) -> RegionPartition:
        return RegionPartition(self.model.n, self.emulator.n_regions)

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(t.learning_rate, t.max_epochs, t.error_goal, self.seed, t.mode,
                           t.patience, t.min_improvement)

    @property
    def total_cycles(self):
        return self.cycles.training + self.cycles.hindcast

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {f.name: f.type for f in fields(ExperimentManifest)}
_SECTION_TYPES = {
    "model": ModelSection, "observations": ObservationSection, "letkf": LetkfSection,
    "pseudo_obs": PseudoObsSection, "emulator": EmulatorSection, "training": TrainingSection,
    "cycles": CycleSection,
}
_SCALARS = {"seed": int, "compare_letkf": bool}


def _check(cond, key, constraint):
    if not cond:
        raise ConfigValidationError(key, constraint)


def validate(m: ExperimentManifest):
    """Raise :class:`ConfigValidationError` for the first violated constraint."""
    md = m.model
    _check(md.kind in (LORENZ96, LORENZ63), "model.kind", f"one of {LORENZ96}, {LORENZ63}")
    if md.kind == LORENZ96:
        _check(md.n >= 4, "model.n", ">= 4 for lorenz96")
    else:
        _check(md.n == 3, "model.n", "== 3 for lorenz63")
    _check(md.dt > 0, "model.dt", "> 0")
    _check(md.steps_per_cycle >= 1, "model.steps_per_cycle", ">= 1")
    ob = m.observations
    _check(0 < ob.density <= 1, "observations.density", "in (0, 1]")
    _check(ob.noise_std > 0, "observations.noise_std", "> 0")
    _check(ob.schedule in SCHEDULES, "observations.schedule", f"one of {', '.join(SCHEDULES)}")
    _check(0 < ob.off_phase_fraction < 1, "observations.off_phase_fraction", "in (0, 1)")
    lk = m.letkf
    _check(lk.ensemble_size >= 2, "letkf.ensemble_size", ">= 2")
    _check(lk.localization_radius >= 0, "letkf.localization_radius", ">= 0")
    _check(lk.inflation >= 1, "letkf.inflation", ">= 1")
    _check(lk.additive_std >= 0, "letkf.additive_std", ">= 0")
    _check(lk.taper in (TAPER_NONE, TAPER_GAUSSIAN), "letkf.taper", f"one of {TAPER_NONE}, {TAPER_GAUSSIAN}")
    _check(lk.init_spread > 0, "letkf.init_spread", "> 0")
    ps = m.pseudo_obs
    _check(ps.layers >= 0, "pseudo_obs.layers", ">= 0")
    _check(ps.gamma_rule in (GAMMA_SKIP, GAMMA_NEIGHBOURS), "pseudo_obs.gamma_rule",
           f"one of {GAMMA_SKIP}, {GAMMA_NEIGHBOURS}")
    em = m.emulator
    _check(1 <= em.n_regions <= md.n, "emulator.n_regions", "in [1, model.n]")
    _check(em.n_hidden >= 1, "emulator.n_hidden", ">= 1")
    _check(em.slope > 0, "emulator.slope", "> 0")
    tr = m.training
    _check(tr.learning_rate > 0, "training.learning_rate", "> 0")
    _check(tr.max_epochs >= 1, "training.max_epochs", ">= 1")
    _check(tr.error_goal > 0, "training.error_goal", "> 0")
    _check(tr.mode in (ONLINE, BATCH), "training.mode", f"one of {ONLINE}, {BATCH}")
    _check(tr.patience is None or tr.patience >= 1, "training.patience", "null or >= 1")
    _check(tr.min_improvement >= 0, "training.min_improvement", ">= 0")
    cy = m.cycles
    _check(cy.spin_up >= 0, "cycles.spin_up", ">= 0")
    _check(cy.training >= 1, "cycles.training", ">= 1")
    _check(cy.hindcast >= 1, "cycles.hindcast", ">= 1")
    _check(m.seed >= 0, "seed", ">= 0")


def _coerce(key, value, typ):
    """Convert a parsed YAML scalar to the field type; bools and ints are not interchangeable."""
    if typ in ("int | None", int | None):
        return None if value is None else _coerce(key, value, int)
    if typ in (bool, "bool"):
        _check(isinstance(value, bool), key, "must be true or false")
        return value
    if typ in (int, "int"):
        _check(isinstance(value, int) and not isinstance(value, bool), key, "must be an integer")
        return value
    if typ in (float, "float"):
        _check(isinstance(value, (int, float)) and not isinstance(value, bool), key, "must be a number")
        return float(value)
    if typ in (str, "str"):
        _check(isinstance(value, str), key, "must be a string")
        return value
    raise ConfigValidationError(key, f"unsupported field type {typ}")


def manifest_from_dict(data: dict | None) -> ExperimentManifest:
    data = data or {}
    _check(isinstance(data, dict), "<root>", "must be a mapping")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            cls = _SECTION_TYPES[key]
            _check(isinstance(value, dict), key, "must be a mapping")
            allowed = {f.name: f.type for f in fields(cls)}
            sub = {}
            for k, v in value.items():
                _check(k in allowed, f"{key}.{k}", "unknown key")
                sub[k] = _coerce(f"{key}.{k}", v, allowed[k])
            kwargs[key] = cls(**sub)
        elif key in _SCALARS:
            kwargs[key] = _coerce(key, value, _SCALARS[key])
        else:
            raise ConfigValidationError(key, "unknown key")
    return ExperimentManifest(**kwargs)


def apply_override(data: dict, assignment: str) -> dict:
    """Apply one ``section.key=value`` override (value parsed as YAML) to a raw config dict."""
    _check("=" in assignment, assignment, "override must look like key=value")
    path, raw = assignment.split("=", 1)
    value = yaml.safe_load(raw)
    parts = path.strip().split(".")
    out = json.loads(json.dumps(data))
    node = out
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        _check(isinstance(node, dict), path, "is not a section")
    node[parts[-1]] = value
    return out


def load_config(path=None, overrides=(), seed=None) -> ExperimentManifest:
    data = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigurationError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigValidationError(str(p), f"not valid YAML ({exc.__class__.__name__})") from exc
    for o in overrides:
        data = apply_override(data, o)
    if seed is not None:
        data = dict(data)
        data["seed"] = seed
    return manifest_from_dict(data)


def dump_config(m: ExperimentManifest) -> str:
    return yaml.safe_dump(m.to_dict(), sort_keys=True)


def manifest_hash(m: ExperimentManifest) -> str:
    canonical = json.dumps(m.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
