"""Run configuration and its INI-style file format.

Sections and keys::

    [model]  levels unet_depth base_channels in_channels out_channels fusion_mode loss_kind
    [optim]  lr beta1 beta2 eps
    [train]  batch_size epochs seed train_count deterministic
    [data]   manifest

Unknown sections or keys are rejected so typos surface as config errors.
"""
import configparser
import io
from dataclasses import asdict, dataclass, field, replace

from .errors import ConfigError
from .model import NestedConfig


@dataclass(frozen=True)
class RunConfig:
    model: NestedConfig = field(default_factory=NestedConfig)
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    epochs: int = 80
    seed: int = 0
    train_count: int = 675
    manifest: str = ""
    deterministic: bool = False

    def validate(self):
        self.model.validate()
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ConfigError("need 0 <= beta1, beta2 < 1 and eps > 0")
        if self.train_count < 0:
            raise ConfigError(f"train_count must be >= 0, got {self.train_count}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["model"] = NestedConfig(**d.get("model", {}))
        return cls(**d)

    def with_model(self, **changes):
        return replace(self, model=replace(self.model, **changes))


# Full-scale settings: lr 0.01, Adam beta1 0.9, batch 8, 80 epochs, 675 training frames.
FULL_PROFILE = RunConfig()
# Small enough to train on a desktop CPU in minutes.
DESK_PROFILE = RunConfig(
    model=NestedConfig(levels=2, unet_depth=2, base_channels=8),
    lr=1e-3, batch_size=8, epochs=20, train_count=160,
)
PROFILES = {"full": FULL_PROFILE, "desk": DESK_PROFILE}

_MODEL_TYPES = {"levels": int, "unet_depth": int, "base_channels": int, "in_channels": int,
                "out_channels": int, "fusion_mode": str, "loss_kind": str}
_SECTIONS = {
    "model": _MODEL_TYPES,
    "optim": {"lr": float, "beta1": float, "beta2": float, "eps": float},
    "train": {"batch_size": int, "epochs": int, "seed": int, "train_count": int, "deterministic": bool},
    "data": {"manifest": str},
}


def _convert(section, key, raw):
    typ = _SECTIONS[section][key]
    try:
        if typ is bool:
            return configparser.ConfigParser.BOOLEAN_STATES[raw.strip().lower()]
        return typ(raw.strip())
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {typ.__name__}") from exc


def parse_config_text(text, base=FULL_PROFILE):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    top, model = {}, {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            value = _convert(section, key, raw)
            (model if section == "model" else top)[key] = value
    cfg = replace(base, **top)
    if model:
        cfg = replace(cfg, model=replace(cfg.model, **model))
    return cfg.validate()


def load_config(path, base=FULL_PROFILE):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base)


def dump_config(cfg):
    """Render ``cfg`` in the same format :func:`parse_config_text` reads."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["model"] = {k: str(v) for k, v in cfg.model.to_dict().items()}
    parser["optim"] = {"lr": repr(cfg.lr), "beta1": repr(cfg.beta1), "beta2": repr(cfg.beta2), "eps": repr(cfg.eps)}
    parser["train"] = {
        "batch_size": str(cfg.batch_size), "epochs": str(cfg.epochs), "seed": str(cfg.seed),
        "train_count": str(cfg.train_count), "deterministic": str(cfg.deterministic).lower(),
    }
    parser["data"] = {"manifest": cfg.manifest}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
