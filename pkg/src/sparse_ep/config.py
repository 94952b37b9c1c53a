"""YAML-based configuration."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

DEFAULT_CONFIG_PATH = Path.home() / ".sparse-ep" / "config.yaml"


@dataclass
class KernelSettings:
    jitter: float = 1e-6
    max_jitter_factor: float = 1e-2
    jitter_growth: float = 10.0
    initial_lengthscale: float | None = None  # None means sqrt(d)
    initial_amplitude: float = 1.0


@dataclass
class TrainingSettings:
    method: str = "ep"
    batch_damping: float = 0.8
    minibatch_damping: float = 1.0
    iterations: int = 250
    epochs: int = 10
    minibatch_size: int = 200
    inducing: int | str = 200
    test_fraction: float = 0.2
    cache_upsilon: bool = False
    repair_halvings: int = 30


@dataclass
class OptimizerSettings:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TraceSettings:
    every: int = 25


@dataclass
class LoggingSettings:
    log_level: str = "INFO"


@dataclass
class SyntheticSettings:
    """Kernel used to generate synthetic data."""

    lengthscale: float = 1.0
    amplitude: float = 4.0


@dataclass
class GridSettings:
    jobs: int = 1
    seeds: list[int] = field(default_factory=lambda: [0])


@dataclass
class Config:
    kernel: KernelSettings = field(default_factory=KernelSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    trace: TraceSettings = field(default_factory=TraceSettings)
    logging: LoggingSettings = field(default_factory=LoggingSettings)
    synthetic: SyntheticSettings = field(default_factory=SyntheticSettings)
    grid: GridSettings = field(default_factory=GridSettings)


def load_config(path: Path | None = None) -> Config:
    """Load configuration from YAML file."""
    if path is None:
        path = DEFAULT_CONFIG_PATH

    if not path.exists():
        return Config()

    with open(path) as f:
        data = yaml.safe_load(f) or {}

    return _parse_config(data)


def _lengthscale(value: Any) -> float | None:
    if value is None or value == "auto":
        return None
    return float(value)


def _parse_config(data: dict[str, Any]) -> Config:
    """Parse YAML data into Config object."""
    config = Config()

    if "kernel" in data:
        k = data["kernel"]
        config.kernel = KernelSettings(
            jitter=float(k.get("jitter", 1e-6)),
            max_jitter_factor=float(k.get("max_jitter_factor", 1e-2)),
            jitter_growth=float(k.get("jitter_growth", 10.0)),
            initial_lengthscale=_lengthscale(k.get("initial_lengthscale", "auto")),
            initial_amplitude=float(k.get("initial_amplitude", 1.0)),
        )

    if "training" in data:
        t = data["training"]
        config.training = TrainingSettings(
            method=t.get("method", "ep"),
            batch_damping=float(t.get("batch_damping", 0.8)),
            minibatch_damping=float(t.get("minibatch_damping", 1.0)),
            iterations=t.get("iterations", 250),
            epochs=t.get("epochs", 10),
            minibatch_size=t.get("minibatch_size", 200),
            inducing=t.get("inducing", 200),
            test_fraction=float(t.get("test_fraction", 0.2)),
            cache_upsilon=t.get("cache_upsilon", False),
            repair_halvings=t.get("repair_halvings", 30),
        )

    if "optimizer" in data:
        o = data["optimizer"]
        config.optimizer = OptimizerSettings(
            learning_rate=float(o.get("learning_rate", 0.01)),
            beta1=float(o.get("beta1", 0.9)),
            beta2=float(o.get("beta2", 0.999)),
            eps=float(o.get("eps", 1e-8)),
        )

    if "trace" in data:
        config.trace = TraceSettings(every=data["trace"].get("every", 25))

    if "logging" in data:
        config.logging = LoggingSettings(log_level=data["logging"].get("log_level", "INFO"))

    if "synthetic" in data:
        s = data["synthetic"]
        config.synthetic = SyntheticSettings(
            lengthscale=float(s.get("lengthscale", 1.0)),
            amplitude=float(s.get("amplitude", 4.0)),
        )

    if "grid" in data:
        g = data["grid"]
        config.grid = GridSettings(
            jobs=g.get("jobs", 1),
            seeds=list(g.get("seeds", [0])),
        )

    return config
