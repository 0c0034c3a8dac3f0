"""Pipeline configuration: one serializable document whose content hash is
stamped into every artifact a run produces."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .curation import MODES, AugmentationConfig
from .metrics import DEFAULT_REGRESSION_PAIRS
from .ranking import TrueSkillConfig
from .scene import DEFAULT_ORACLE_WEIGHTS


@dataclass(frozen=True)
class CorpusSection:
    n: int = 420
    width: int = 32
    height: int = 32


@dataclass(frozen=True)
class OracleSection:
    weights: dict = field(default_factory=lambda: dict(DEFAULT_ORACLE_WEIGHTS))
    entropy_weight: float = 0.12
    noise_scale: float = 0.25


@dataclass(frozen=True)
class JudgmentSection:
    pairs_per_scene: int = 30


@dataclass(frozen=True)
class PartitionSection:
    lower: float = 33.0
    upper: float = 67.0
    min_judgments: int = 3


@dataclass(frozen=True)
class ClassifierSection:
    learning_rate: float = 0.5
    epochs: int = 60
    batch_size: int = 16
    weight_decay: float = 0.0
    split: float = 0.7
    hidden: tuple[int, ...] = (32, 32)
    feature_dim: int = 64
    input_grid: int = 4


@dataclass(frozen=True)
class GeneratorSection:
    learning_rate: float = 3.0
    epochs: int = 100
    batch_size: int = 32
    split: float = 0.7
    latent_dim: int = 32
    enc_hidden: int = 64
    dec_hidden: int = 128
    input_grid: int = 4


@dataclass(frozen=True)
class MaximizeSection:
    lam: float = 1e-3
    steps: int = 200
    step_size: float = 1.0
    rel_tol: float = 1e-7
    patience: int = 10
    count: int = 100  # scenes transformed per direction


@dataclass(frozen=True)
class EvaluationSection:
    votes: int = 3
    rater_noise: float = 0.35
    decile_lower: float = 10.0
    decile_upper: float = 90.0
    max_pairs_per_class: int = 100


@dataclass(frozen=True)
class RegressionSection:
    pairs: tuple[tuple[str, str], ...] = DEFAULT_REGRESSION_PAIRS
    ridge: float = 1e-6


@dataclass(frozen=True)
class ReportSection:
    max_panels: int = 12


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs; the workspace path deliberately stays outside
    so identical configs produce identical artifacts anywhere."""

    seed: int = 1
    corpus: CorpusSection = field(default_factory=CorpusSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    trueskill: TrueSkillConfig = field(default_factory=TrueSkillConfig)
    judgments: JudgmentSection = field(default_factory=JudgmentSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    generator: GeneratorSection = field(default_factory=GeneratorSection)
    maximize: MaximizeSection = field(default_factory=MaximizeSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    regression: RegressionSection = field(default_factory=RegressionSection)
    report: ReportSection = field(default_factory=ReportSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def stage_seed(self, stage: str) -> int:
        """Stable per-stage seed derived from the global seed."""
        digest = hashlib.sha256(f"{self.seed}:{stage}".encode()).digest()
        return int.from_bytes(digest[:4], "little")

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed)

    @classmethod
    def from_dict(cls, d: Mapping) -> "PipelineConfig":
        def section(klass, key, **tuplify):
            raw = dict(d.get(key, {}))
            for name in tuplify:
                if name in raw:
                    raw[name] = tuplify[name](raw[name])
            return klass(**raw)

        return cls(
            seed=d.get("seed", 1),
            corpus=section(CorpusSection, "corpus"),
            oracle=section(OracleSection, "oracle"),
            trueskill=section(TrueSkillConfig, "trueskill"),
            judgments=section(JudgmentSection, "judgments"),
            partition=section(PartitionSection, "partition"),
            augmentation=section(AugmentationConfig, "augmentation",
                                 angles=tuple, distances=tuple),
            classifier=section(ClassifierSection, "classifier", hidden=tuple),
            generator=section(GeneratorSection, "generator"),
            maximize=section(MaximizeSection, "maximize"),
            evaluation=section(EvaluationSection, "evaluation"),
            regression=section(RegressionSection, "regression",
                               pairs=lambda ps: tuple(tuple(p) for p in ps)),
            report=section(ReportSection, "report"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
