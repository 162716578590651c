"""Optimization settings and the shared train/validate loop."""

from __future__ import annotations

import copy
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import torch
from torch.nn import functional as F

from .encoders import collate_ids, default_learning_rate, family_kind, seed_everything

logger = logging.getLogger(__name__)


def seq2seq_loss(net, batch: list[tuple], pad_id: int) -> torch.Tensor:
    """Teacher-forced cross entropy for (source ids, target ids) pairs.
    Targets include BOS/EOS; padding positions are ignored."""
    src, src_mask = collate_ids([ids for ids, _ in batch], pad_id)
    tgt_in, _ = collate_ids([tgt[:-1] for _, tgt in batch], pad_id)
    tgt_out, _ = collate_ids([tgt[1:] for _, tgt in batch], pad_id)
    logits = net(src, src_mask, tgt_in)
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), tgt_out.reshape(-1), ignore_index=pad_id)


class TrainingError(Exception):
    pass


@dataclass
class TrainConfig:
    """Optimization settings for one training run.

    ``learning_rate=None`` resolves to the family default: 1e-4 for
    generative families, 1e-5 for discriminative ones.
    """

    checkpoint_family: str = "tiny"
    batch_size: int = 16
    epochs: int = 5
    learning_rate: Optional[float] = None
    seed: int = 13
    max_sequence_length: int = 256
    optimizer: str = "adamw"
    device: str = "cpu"
    select: str = "best"  # checkpoint selection: best validation metric, or "last"
    special_tokens: dict = field(default_factory=dict)  # marker overrides
    tiny_kwargs: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer.lower() not in ("adamw", "adam", "sgd"):
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")
        if self.select not in ("best", "last"):
            raise TrainingError(f"select must be 'best' or 'last', got {self.select!r}")

    @property
    def resolved_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return default_learning_rate(family_kind(self.checkpoint_family))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise TrainingError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


def make_optimizer(params, config: TrainConfig) -> torch.optim.Optimizer:
    lr = config.resolved_learning_rate
    name = config.optimizer.lower()
    if name == "adamw":
        return torch.optim.AdamW(params, lr=lr)
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    return torch.optim.SGD(params, lr=lr)


@dataclass
class FitResult:
    log: list[dict]
    best_epoch: int
    best_metric: float

    @property
    def first_loss(self) -> float:
        return self.log[0]["train_loss"]

    @property
    def final_loss(self) -> float:
        return self.log[-1]["train_loss"]

    def write_jsonl(self, path: Path) -> None:
        with Path(path).open("w", encoding="utf-8") as handle:
            for entry in self.log:
                handle.write(json.dumps(entry) + "\n")


def fit(
    model: torch.nn.Module,
    examples: Sequence,
    loss_fn: Callable[[torch.nn.Module, list], torch.Tensor],
    config: TrainConfig,
    eval_fn: Optional[Callable[[torch.nn.Module], dict]] = None,
    select_metric: Optional[str] = None,
    extra_log: Optional[Callable[[torch.nn.Module], dict]] = None,
) -> FitResult:
    """Generic epoch loop: shuffled minibatches, per-epoch validation,
    best-checkpoint retention (restored into ``model`` before returning).

    ``loss_fn(model, batch)`` returns a scalar loss. ``eval_fn(model)``
    returns a metric dict; ``select_metric`` names the entry to maximize.
    With ``config.select == "last"`` the final epoch weights are kept.
    """
    config.validate()
    if not examples:
        raise TrainingError("empty training set")
    seed_everything(config.seed)
    model.to(config.device)
    optimizer = make_optimizer(model.parameters(), config)
    shuffler = random.Random(config.seed ^ 0x5EED)

    log: list[dict] = []
    best_state = None
    best_metric = float("-inf")
    best_epoch = -1

    order = list(range(len(examples)))
    for epoch in range(1, config.epochs + 1):
        model.train()
        shuffler.shuffle(order)
        total, batches = 0.0, 0
        for at in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[at : at + config.batch_size]]
            optimizer.zero_grad()
            loss = loss_fn(model, batch)
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            batches += 1

        entry = {"epoch": epoch, "train_loss": total / batches}
        if eval_fn is not None:
            model.eval()
            with torch.no_grad():
                entry.update(eval_fn(model))
        if extra_log is not None:
            model.eval()
            with torch.no_grad():
                entry.update(extra_log(model))
        log.append(entry)
        logger.debug("epoch %d: %s", epoch, entry)

        if select_metric is not None and select_metric in entry:
            if entry[select_metric] > best_metric:
                best_metric = entry[select_metric]
                best_epoch = epoch
                if config.select == "best":
                    best_state = copy.deepcopy(model.state_dict())

    if config.select == "best" and best_state is not None:
        model.load_state_dict(best_state)
    if best_epoch == -1:
        best_epoch = config.epochs
        best_metric = float("nan")
    return FitResult(log=log, best_epoch=best_epoch, best_metric=best_metric)
