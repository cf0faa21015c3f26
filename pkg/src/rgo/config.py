"""Flat `key = value` run configuration."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .bench import ARMS
from .network import ACTIVATIONS, NetworkSpec
from .optimizer import TrainConfig

STREAM_KINDS = ("permuted", "split", "synthetic")
PATH_KEYS = ("images_path", "labels_path", "test_images_path", "test_labels_path")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    stream: str = "permuted"
    images_path: Path | None = None
    labels_path: Path | None = None
    test_images_path: Path | None = None
    test_labels_path: Path | None = None
    limit: int | None = None
    downsample: bool = False
    test_fraction: float = 0.2
    tasks: int = 5
    seeds: tuple[int, ...] = (0,)
    hidden: tuple[int, ...] = (64,)
    activation: str = "relu"
    init_scale: float = 1.0
    learning_rate: float = 0.1
    steps_per_task: int = 300
    batch_size: int = 10
    alpha: float = 1.0
    arms: tuple[str, ...] = ("rgo", "sgd", "stl")
    baseline_fel: bool = False
    synth_dim: int = 64
    synth_classes: int = 10
    synth_train: int = 200
    synth_test: int = 100
    synth_noise: float = 0.3
    output_dir: Path = field(default_factory=lambda: Path("results"))

    def validate(self) -> None:
        def need(ok, key, what):
            if not ok:
                raise ConfigError(f"{key}: {what}, got {getattr(self, key)!r}")

        need(self.stream in STREAM_KINDS, "stream", f"must be one of {STREAM_KINDS}")
        need(self.limit is None or self.limit >= 1, "limit", "must be >= 1")
        need(0.0 < self.test_fraction < 1.0, "test_fraction", "must be in (0, 1)")
        need(self.tasks >= 1, "tasks", "must be >= 1")
        need(len(self.seeds) >= 1 and min(self.seeds) >= 0, "seeds", "must be non-negative integers")
        need(all(h >= 1 for h in self.hidden), "hidden", "widths must be >= 1")
        need(self.activation in ACTIVATIONS, "activation", f"must be one of {ACTIVATIONS}")
        need(self.init_scale >= 0, "init_scale", "must be >= 0")
        need(self.learning_rate > 0, "learning_rate", "must be > 0")
        need(self.steps_per_task >= 0, "steps_per_task", "must be >= 0")
        need(self.batch_size >= 1, "batch_size", "must be >= 1")
        need(self.alpha > 0, "alpha", "must be > 0")
        need(len(self.arms) >= 1 and set(self.arms) <= set(ARMS), "arms", f"must be a subset of {ARMS}")
        need(len(set(self.arms)) == len(self.arms), "arms", "must not repeat")
        for key in ("synth_dim", "synth_classes", "synth_train", "synth_test"):
            need(getattr(self, key) >= 1, key, "must be >= 1")
        need(self.synth_noise >= 0, "synth_noise", "must be >= 0")
        need((self.images_path is None) == (self.labels_path is None),
             "images_path", "images_path and labels_path must be given together")
        need((self.test_images_path is None) == (self.test_labels_path is None),
             "test_images_path", "test_images_path and test_labels_path must be given together")
        need(self.test_images_path is None or self.images_path is not None,
             "test_images_path", "needs images_path as well")
        for key in PATH_KEYS:
            path = getattr(self, key)
            need(path is None or path.is_file(), key, "file does not exist")

    def network_spec(self, input_dim: int, n_classes: int, seed: int) -> NetworkSpec:
        return NetworkSpec((input_dim, *self.hidden, n_classes), self.activation, seed, self.init_scale)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.steps_per_task, self.batch_size)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(",", " ").split())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(p for p in text.replace(",", " ").split())


def _optional_int(text: str) -> int | None:
    return None if text.lower() in ("", "none", "0") else int(text)


_CONVERTERS = {
    "stream": str, "activation": str,
    "limit": _optional_int, "tasks": int, "steps_per_task": int, "batch_size": int,
    "synth_dim": int, "synth_classes": int, "synth_train": int, "synth_test": int,
    "test_fraction": float, "init_scale": float, "learning_rate": float, "alpha": float,
    "synth_noise": float,
    "downsample": _parse_bool, "baseline_fel": _parse_bool,
    "seeds": _int_list, "hidden": _int_list, "arms": _str_list,
}


def parse_config_text(text: str, base_dir: Path | None = None) -> RunConfig:
    """Parse config text; relative dataset paths resolve against `base_dir`."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            if key == "output_dir":
                values[key] = Path(value)
            elif key in PATH_KEYS:
                path = Path(value)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                values[key] = path
            else:
                values[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    config = RunConfig(**values)
    config.validate()
    return config


def parse_config(path) -> RunConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), base_dir=path.parent)
