"""Training orchestration: reproducible runs, run reports, config files.

A run directory is self-describing: the effective config snapshot, the
dataset hash, per-epoch logs, and the final metrics are all written next
to the checkpoint, so every reported number traces back to an artifact.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import torch

from . import __version__
from .corpus import CorpusError, Sample, load_corpus, quarantine_invalid, split_corpus
from .classifier import StageBStrategy, train_stage_b
from .encoders import atomic_write_text
from .encoding import SpecialTokenScheme
from .entity_typer import StageCStrategy, train_stage_c
from .span_extractor import ExtractionStrategy, train_stage_a
from .training import TrainConfig, TrainingError

STAGE_STRATEGIES = {
    "a": ExtractionStrategy,
    "b": StageBStrategy,
    "c": StageCStrategy,
}


class UsageError(Exception):
    """Bad command usage or a degenerate configuration; rejected up front."""


def resolve_strategy(stage: str, strategy: str):
    if stage not in STAGE_STRATEGIES:
        raise UsageError(f"unknown stage {stage!r}; expected one of a, b, c")
    try:
        return STAGE_STRATEGIES[stage](strategy)
    except ValueError:
        valid = ", ".join(s.value for s in STAGE_STRATEGIES[stage])
        raise UsageError(f"invalid strategy {strategy!r} for stage {stage}; expected one of: {valid}")


def load_train_config(path: Optional[str], overrides: dict) -> TrainConfig:
    """Config file values first, CLI flag overrides on top."""
    base = {}
    if path:
        base = json.loads(Path(path).read_text(encoding="utf-8"))
    base.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig.from_json(base)
    except (TrainingError, TypeError) as exc:
        raise UsageError(str(exc))


def config_hash(config: TrainConfig) -> str:
    canonical = json.dumps(config.to_json(), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunReport:
    stage: str
    strategy: str
    config: dict
    config_hash: str
    dataset_hashes: dict
    quarantined: int
    excluded: int
    epoch_logs: dict
    final_metrics: dict
    best_epochs: dict
    checkpoint_dir: str
    wall_clock_seconds: float
    hardware: str
    version: str = __version__

    def to_json(self) -> dict:
        return dict(self.__dict__)

    def save(self, path: Path) -> None:
        atomic_write_text(Path(path), json.dumps(self.to_json(), indent=2))


def _hardware_note(device: str) -> str:
    return f"{platform.platform()}; python {platform.python_version()}; torch {torch.__version__}; device {device}"


def run_training(
    stage: str,
    strategy: str,
    config: TrainConfig,
    data_path: str | Path,
    out_dir: str | Path,
    valid_path: Optional[str | Path] = None,
) -> RunReport:
    """Train one stage and write checkpoint + logs + report atomically.

    Without an explicit validation file the corpus is split 80/10/10 with
    ``config.seed`` and the first two parts are used. Invalid samples are
    quarantined (reported, never silently dropped).
    """
    strategy_enum = resolve_strategy(stage, strategy)
    try:
        config.validate()
    except TrainingError as exc:
        raise UsageError(str(exc))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()

    samples = load_corpus(data_path)
    dataset_hashes = {str(data_path): file_sha256(Path(data_path))}
    if valid_path is not None:
        valid_samples = load_corpus(valid_path)
        dataset_hashes[str(valid_path)] = file_sha256(Path(valid_path))
        train_samples = samples
    else:
        train_samples, valid_samples, _ = split_corpus(samples, config.seed)

    train_samples, bad_train = quarantine_invalid(train_samples)
    valid_samples, bad_valid = quarantine_invalid(valid_samples)
    quarantined = len(bad_train) + len(bad_valid)
    if quarantined:
        atomic_write_text(
            out_dir / "quarantine.json",
            json.dumps({"train": bad_train, "valid": bad_valid}, indent=2),
        )

    scheme = SpecialTokenScheme(**config.special_tokens) if config.special_tokens else None
    if stage == "a":
        result = train_stage_a(train_samples, valid_samples, strategy_enum, config, scheme=scheme)
    elif stage == "b":
        result = train_stage_b(train_samples, valid_samples, strategy_enum, config, scheme=scheme)
    else:
        result = train_stage_c(train_samples, valid_samples, strategy_enum, config, scheme=scheme)

    checkpoint_dir = out_dir / "checkpoint"
    result.model.save(checkpoint_dir)

    log_path = out_dir / "log.jsonl"
    with log_path.open("w", encoding="utf-8") as handle:
        for part, fit_result in result.logs.items():
            for entry in fit_result.log:
                handle.write(json.dumps({"part": part, **entry}) + "\n")

    report = RunReport(
        stage=stage,
        strategy=strategy_enum.value,
        config=config.to_json(),
        config_hash=config_hash(config),
        dataset_hashes=dataset_hashes,
        quarantined=quarantined,
        excluded=getattr(result, "excluded", 0),
        epoch_logs={part: fr.log for part, fr in result.logs.items()},
        final_metrics={part: fr.log[-1] for part, fr in result.logs.items()},
        best_epochs={part: fr.best_epoch for part, fr in result.logs.items()},
        checkpoint_dir=str(checkpoint_dir),
        wall_clock_seconds=time.monotonic() - started,
        hardware=_hardware_note(config.device),
    )
    report.save(out_dir / "run_report.json")
    atomic_write_text(out_dir / "config.json", json.dumps(config.to_json(), indent=2))
    return report
