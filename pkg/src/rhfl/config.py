"""Typed experiment configuration backed by a sectioned TOML file.

Every section maps onto one dataclass; unknown sections or keys are rejected
by name.  Omitted keys take the defaults below, which are the method's
published hyperparameters plus the desk-scale reference setup.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .data import PAIRFLIP_MAX_RATE
from .errors import ConfigError
from .losses import LossConfig
from .models import DEFAULT_ROSTER

NOISE_KINDS = ("symflip", "pairflip")
PARTITIONS = ("iid", "dirichlet")
DELTA_SCOPES = ("round", "local", "collab")


@dataclass(frozen=True)
class TrainConfig:
    clients: int = 4
    rounds: int = 20
    local_epochs: int | str = "auto"
    pretrain_epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.001
    collab_steps: int = 1
    delta_scope: str = "round"
    weight_sources: bool = False


@dataclass(frozen=True)
class DataConfig:
    classes: int = 10
    dim: int = 20
    samples_per_client: int = 2000
    spread: float = 0.35
    public_size: int = 1000
    public_classes: int | str = "auto"
    test_per_class: int = 200
    partition: str = "iid"
    beta: float = 0.5
    min_per_client: int = 20


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "symflip"
    rate: float = 0.2
    # empty means every client is corrupted
    noisy_clients: tuple[int, ...] = ()


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[tuple[int, ...], ...] = DEFAULT_ROSTER


@dataclass(frozen=True)
class DlrConfig:
    schedule_scale: float = 10.0
    temperature: float = 1.0


@dataclass(frozen=True)
class EccrConfig:
    confidence_gain: float = 1.4


@dataclass(frozen=True)
class AblationFlags:
    hfl: bool = True
    sl: bool = True
    dlr: bool = True
    eccr: bool = True

    @property
    def label(self) -> str:
        on = [n for n in ("hfl", "sl", "dlr", "eccr") if getattr(self, n)]
        return "+".join(on) if on else "none"


# component rows of the ablation table, in table order
ABLATION_PRESETS: dict[str, AblationFlags] = {
    "none": AblationFlags(False, False, False, False),
    "hfl": AblationFlags(True, False, False, False),
    "sl": AblationFlags(False, True, False, False),
    "hfl+sl": AblationFlags(True, True, False, False),
    "hfl+sl+dlr": AblationFlags(True, True, True, False),
    "hfl+sl+dlr+eccr": AblationFlags(True, True, True, True),
}


@dataclass(frozen=True)
class FederationConfig:
    train: TrainConfig = TrainConfig()
    data: DataConfig = DataConfig()
    noise: NoiseConfig = NoiseConfig()
    model: ModelConfig = ModelConfig()
    loss: LossConfig = LossConfig()
    dlr: DlrConfig = DlrConfig()
    eccr: EccrConfig = EccrConfig()
    ablation: AblationFlags = AblationFlags()

    @property
    def local_epochs(self) -> int:
        le = self.train.local_epochs
        if le == "auto":
            return max(1, round(self.data.samples_per_client / self.data.public_size))
        return int(le)

    @property
    def public_classes(self) -> int:
        pc = self.data.public_classes
        return 2 * self.data.classes if pc == "auto" else int(pc)

    @property
    def noisy_clients(self) -> tuple[int, ...]:
        return self.noise.noisy_clients or tuple(range(self.train.clients))

    def validate(self) -> "FederationConfig":
        t, d, n = self.train, self.data, self.noise
        _require(t.clients >= 2, "train.clients must be >= 2")
        _require(t.rounds >= 0, "train.rounds must be >= 0")
        _require(t.local_epochs == "auto" or (isinstance(t.local_epochs, int) and t.local_epochs >= 1),
                 "train.local_epochs must be 'auto' or an integer >= 1")
        _require(t.pretrain_epochs >= 2, "train.pretrain_epochs must be >= 2 (re-weighting needs two loss points)")
        _require(t.batch_size >= 1, "train.batch_size must be >= 1")
        _require(t.learning_rate >= 0, "train.learning_rate must be >= 0")
        _require(t.collab_steps >= 1, "train.collab_steps must be >= 1")
        _require(t.delta_scope in DELTA_SCOPES, f"train.delta_scope must be one of {DELTA_SCOPES}")
        _require(d.classes >= 2, "data.classes must be >= 2")
        _require(d.dim >= 2, "data.dim must be >= 2")
        _require(d.samples_per_client >= 1, "data.samples_per_client must be >= 1")
        _require(d.spread > 0, "data.spread must be > 0")
        _require(d.public_size >= 1, "data.public_size must be >= 1")
        _require(d.public_classes == "auto" or (isinstance(d.public_classes, int) and d.public_classes >= 2),
                 "data.public_classes must be 'auto' or an integer >= 2")
        _require(d.test_per_class >= 1, "data.test_per_class must be >= 1")
        _require(d.partition in PARTITIONS, f"data.partition must be one of {PARTITIONS}")
        _require(d.beta > 0, "data.beta must be > 0")
        _require(d.min_per_client >= 1, "data.min_per_client must be >= 1")
        _require(n.kind in NOISE_KINDS, f"noise.kind must be one of {NOISE_KINDS}")
        _require(0.0 <= n.rate < 1.0, "noise.rate must lie in [0, 1)")
        _require(n.kind != "pairflip" or n.rate <= PAIRFLIP_MAX_RATE,
                 f"noise.rate must be <= {PAIRFLIP_MAX_RATE} for pairflip")
        _require(all(0 <= k < t.clients for k in n.noisy_clients),
                 "noise.noisy_clients entries must be client ids in [0, clients)")
        _require(len(self.model.hidden) >= 1 and all(len(h) >= 1 and min(h) >= 1 for h in self.model.hidden),
                 "model.hidden must list at least one architecture, each with widths >= 1")
        _require(self.dlr.schedule_scale > 0, "dlr.schedule_scale must be > 0")
        _require(self.dlr.temperature > 0, "dlr.temperature must be > 0")
        _require(self.eccr.confidence_gain >= 0, "eccr.confidence_gain must be >= 0")
        return self


def _require(ok: bool, message: str) -> None:
    if not ok:
        raise ConfigError(message)


SECTIONS: dict[str, type] = {
    "train": TrainConfig,
    "data": DataConfig,
    "noise": NoiseConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "dlr": DlrConfig,
    "eccr": EccrConfig,
    "ablation": AblationFlags,
}

# sweepable axes: "section.key" plus the "ablation" preset axis
SWEEP_AXES = (
    "noise.rate", "noise.kind", "data.beta", "data.partition", "dlr.schedule_scale",
    "loss.ce_weight", "loss.rce_weight", "loss.temperature", "eccr.confidence_gain",
    "ablation.hfl", "ablation.sl", "ablation.dlr", "ablation.eccr", "ablation",
)


@dataclass(frozen=True)
class ExperimentSpec:
    federation: FederationConfig = FederationConfig()
    seeds: tuple[int, ...] = (0,)
    sweep: tuple[tuple[str, tuple[Any, ...]], ...] = ()
    output_dir: str = "runs"
    checkpoints: bool = False
    save_datasets: bool = False

    def grid(self) -> list[tuple[dict[str, Any], FederationConfig]]:
        """Every sweep point (axis values, resolved config), in axis-major order."""
        if not self.sweep:
            return [({}, self.federation)]
        names = [a for a, _ in self.sweep]
        out = []
        for combo in itertools.product(*(vals for _, vals in self.sweep)):
            point = dict(zip(names, combo))
            out.append((point, apply_overrides(self.federation, point)))
        return out


def apply_overrides(cfg: FederationConfig, point: dict[str, Any]) -> FederationConfig:
    for axis, value in point.items():
        if axis == "ablation":
            if value not in ABLATION_PRESETS:
                raise ConfigError(f"unknown ablation preset {value!r}; expected one of {list(ABLATION_PRESETS)}")
            cfg = replace(cfg, ablation=ABLATION_PRESETS[value])
            continue
        section, key = axis.split(".", 1)
        sub = getattr(cfg, section)
        cfg = replace(cfg, **{section: replace(sub, **{key: _coerce(SECTIONS[section], key, value, axis)})})
    return cfg.validate()


def _coerce(cls: type, key: str, value: Any, where: str) -> Any:
    f = {f.name: f for f in fields(cls)}[key]
    default = f.default
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean, got {value!r}")
        return value
    if isinstance(default, tuple):
        if key == "hidden":
            if not isinstance(value, (list, tuple)) or not all(isinstance(h, (list, tuple)) for h in value):
                raise ConfigError(f"{where} must be a list of lists of layer widths")
            return tuple(tuple(int(w) for w in h) for h in value)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be a list, got {value!r}")
        return tuple(int(v) for v in value)
    if isinstance(value, str) and value == "auto" and default == "auto":
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, int) or default == "auto":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    return value


def _section_from_dict(cls: type, raw: dict[str, Any], section: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key '{section}.{key}'")
    kwargs = {k: _coerce(cls, k, v, f"{section}.{k}") for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def spec_from_dict(raw: dict[str, Any]) -> ExperimentSpec:
    raw = dict(raw)
    exp_raw = raw.pop("experiment", {})
    sweep_raw = raw.pop("sweep", {})
    parts = {}
    for section, value in raw.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        parts[section] = _section_from_dict(SECTIONS[section], value, section)
    fed = FederationConfig(**parts).validate()

    known_exp = {"seeds", "output_dir", "checkpoints", "save_datasets"}
    for key in exp_raw:
        if key not in known_exp:
            raise ConfigError(f"unknown key 'experiment.{key}'")
    seeds = tuple(exp_raw.get("seeds", (0,)))
    if not seeds or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        raise ConfigError("experiment.seeds must be a non-empty list of non-negative integers")

    sweep = []
    for axis, values in sweep_raw.items():
        if axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis '{axis}'; expected one of {list(SWEEP_AXES)}")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep axis '{axis}' must be a non-empty list")
        sweep.append((axis, tuple(values)))
    spec = ExperimentSpec(
        federation=fed,
        seeds=seeds,
        sweep=tuple(sweep),
        output_dir=str(exp_raw.get("output_dir", "runs")),
        checkpoints=bool(exp_raw.get("checkpoints", False)),
        save_datasets=bool(exp_raw.get("save_datasets", False)),
    )
    spec.grid()  # validates every sweep point
    return spec


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def federation_to_dict(cfg: FederationConfig) -> dict[str, Any]:
    return {
        section: {f.name: _plain(getattr(getattr(cfg, section), f.name)) for f in fields(cls)}
        for section, cls in SECTIONS.items()
    }


def spec_to_dict(spec: ExperimentSpec) -> dict[str, Any]:
    out = federation_to_dict(spec.federation)
    out["experiment"] = {
        "seeds": list(spec.seeds),
        "output_dir": spec.output_dir,
        "checkpoints": spec.checkpoints,
        "save_datasets": spec.save_datasets,
    }
    if spec.sweep:
        out["sweep"] = {axis: list(values) for axis, values in spec.sweep}
    return out


def dumps(spec: ExperimentSpec) -> str:
    return tomli_w.dumps(spec_to_dict(spec))


def loads(text: str) -> ExperimentSpec:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc
    return spec_from_dict(raw)


def load_config(path) -> ExperimentSpec:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return loads(path.read_text(encoding="utf-8"))


def dump_federation(cfg: FederationConfig) -> str:
    return tomli_w.dumps(federation_to_dict(cfg))


__all__ = [
    "ABLATION_PRESETS", "AblationFlags", "DataConfig", "DlrConfig", "EccrConfig", "ExperimentSpec",
    "FederationConfig", "LossConfig", "ModelConfig", "NoiseConfig", "TrainConfig", "apply_overrides",
    "dump_federation", "dumps", "load_config", "loads",
]
