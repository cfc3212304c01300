"""Pipeline configuration: one JSON file, overridable from the command line."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .aux_retrieval import DEFAULT_ETA
from .bm25 import DEFAULT_THETA, Bm25Params
from .errors import ConfigError
from .label_graph import DEFAULT_LAMBDA
from .reranker import DecisionPolicy, ModelConfig, TrainConfig
from .serialize import atomic_write_text

ARTIFACTS_ENV = "CODERANK_ARTIFACTS"


@dataclass(frozen=True)
class Paths:
    documents: str = "data/documents.jsonl"
    labels: str = "data/labels.jsonl"
    splits: str | None = "data/splits.json"
    artifacts: str = "artifacts"


@dataclass(frozen=True)
class RetrievalConfig:
    eta: float = DEFAULT_ETA
    # None: calibrate on the validation split at build-index time
    theta: float | None = DEFAULT_THETA
    k1: float = 1.2
    b: float = 0.75
    denominator: str = "okapi"
    use_aux: bool = True
    fallback: bool = True
    # fraction of aux-stage gold hits the calibrated theta must keep
    calibration_retain: float = 0.995

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta={self.eta} must lie in [0, 1]")
        if not 0.0 < self.calibration_retain <= 1.0:
            raise ConfigError("calibration_retain must lie in (0, 1]")
        self.bm25_params(0.0 if self.theta is None else self.theta)

    def bm25_params(self, theta: float) -> Bm25Params:
        return Bm25Params(k1=self.k1, b=self.b, theta=theta, denominator=self.denominator)


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    lam: float = DEFAULT_LAMBDA
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    # None: use the threshold calibrated on validation during training
    policy: DecisionPolicy | None = None
    seed: int = 0
    ks: tuple[int, ...] = (5, 8, 15)

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError(f"lambda={self.lam} must lie in (0, 1]")
        if not self.ks or any(k < 1 for k in self.ks):
            raise ConfigError(f"ks={self.ks} must be positive integers")

    @property
    def artifacts(self) -> Path:
        return Path(os.environ.get(ARTIFACTS_ENV) or self.paths.artifacts)

    def to_json(self) -> dict:
        out = asdict(self)
        out["ks"] = list(self.ks)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        if not isinstance(obj, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(obj) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown configuration field(s): {unknown}")
        try:
            return cls(
                paths=_build(Paths, obj.get("paths", {})),
                retrieval=_build(RetrievalConfig, obj.get("retrieval", {})),
                lam=float(obj.get("lam", DEFAULT_LAMBDA)),
                model=_build(ModelConfig, obj.get("model", {})),
                train=_build(TrainConfig, obj.get("train", {})),
                policy=None if obj.get("policy") is None else _build(DecisionPolicy, obj["policy"]),
                seed=int(obj.get("seed", 0)),
                ks=tuple(int(k) for k in obj.get("ks", (5, 8, 15))),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {exc}") from None

    def with_overrides(self, **sections) -> "PipelineConfig":
        """``sections`` maps a section name to a dict of field overrides (or a scalar for top-level fields)."""
        cfg = self
        for name, val in sections.items():
            cur = getattr(cfg, name)
            if isinstance(val, dict) and cur is not None and hasattr(cur, "__dataclass_fields__"):
                val = replace(cur, **val)
            cfg = replace(cfg, **{name: val})
        return cfg


def _build(cls, obj: dict):
    if not isinstance(obj, dict):
        raise ConfigError(f"{cls.__name__} section must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} field(s): {unknown}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()}
    return cls(**kw)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    return PipelineConfig.from_json(obj)


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(cfg.to_json(), indent=2) + "\n")


def recovery_preset(paths: Paths | None = None, seed: int = 0) -> PipelineConfig:
    """Settings that recover planted labels on the default synthetic corpus.

    The printed loss with mean-pooled positives plateaus well below this; see README.
    """
    return PipelineConfig(
        paths=paths or Paths(),
        retrieval=RetrievalConfig(theta=None),
        model=ModelConfig(hidden=256),
        train=TrainConfig(epochs=10, learning_rate=3e-3, optimizer="adam", loss_form="conventional", tau=0.1,
                          per_positive=True, graph_lr_scale=0.01),
        seed=seed,
    )
