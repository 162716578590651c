"""Checkpoint families: tokenizers and encoder/decoder backbones.

Two in-repo families train from scratch on CPU in minutes and exist for
desk-scale runs and tests:

* ``tiny``       - word-level tokenizer + small Transformer encoder
* ``tiny-gen``   - same tokenizer + small Transformer encoder-decoder

The published checkpoint families (bert-base-uncased, roberta-base,
microsoft/deberta-base, facebook/bart-base, t5-small) are wired through
the ``transformers`` library and download pretrained weights; they are for
full-scale reproduction runs and are imported lazily.
"""

from __future__ import annotations

import json
import os
import random
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import torch
from torch import nn

from .encoding import SpecialTokenScheme

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
_WORD_RE = re.compile(r"\w+|[^\w\s]")

DISCRIMINATIVE = "discriminative"
GENERATIVE = "generative"

# name -> kind for the evaluated checkpoint families; anything else is
# classified by substring heuristic and recorded in the manifest.
KNOWN_FAMILIES = {
    "tiny": DISCRIMINATIVE,
    "tiny-gen": GENERATIVE,
    "bert-base-uncased": DISCRIMINATIVE,
    "roberta-base": DISCRIMINATIVE,
    "microsoft/deberta-base": DISCRIMINATIVE,
    "facebook/bart-base": GENERATIVE,
    "t5-small": GENERATIVE,
}


def family_kind(name: str) -> str:
    if name in KNOWN_FAMILIES:
        return KNOWN_FAMILIES[name]
    return GENERATIVE if ("bart" in name or "t5" in name) else DISCRIMINATIVE


def default_learning_rate(kind: str) -> float:
    return 1e-4 if kind == GENERATIVE else 1e-5


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


# ---------------------------------------------------------------------------
# word-level tokenizer (tiny families)


class WordTokenizer:
    """Deterministic word/punctuation tokenizer with char offsets.

    Markers are atomic vocabulary items; everything else is split on
    ``\\w+|[^\\w\\s]``. Lookup is casefolded; offsets index the original
    text.
    """

    def __init__(self, vocab: dict[str, int], scheme: SpecialTokenScheme):
        self.vocab = vocab
        self.scheme = scheme
        self.inverse = {i: t for t, i in vocab.items()}
        self.pad_id = vocab[PAD]
        self.unk_id = vocab[UNK]
        self.bos_id = vocab[BOS]
        self.eos_id = vocab[EOS]

    def __len__(self) -> int:
        return len(self.vocab)

    @classmethod
    def build(
        cls,
        texts: Iterable[str],
        scheme: SpecialTokenScheme,
        extra_tokens: Iterable[str] = (),
        min_freq: int = 1,
    ) -> "WordTokenizer":
        counts = Counter()
        for text in texts:
            for m in _WORD_RE.finditer(text):
                counts[m.group().casefold()] += 1
        vocab = {PAD: 0, UNK: 1, BOS: 2, EOS: 3}
        for marker in scheme.all_markers():
            vocab[marker] = len(vocab)
        for token in extra_tokens:
            if token not in vocab:
                vocab[token] = len(vocab)
        for token, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
            if counts[token] >= min_freq and token not in vocab:
                vocab[token] = len(vocab)
        return cls(vocab, scheme)

    def marker_id(self, marker: str) -> int:
        try:
            return self.vocab[marker]
        except KeyError:
            raise KeyError(f"marker {marker!r} is not registered in this tokenizer")

    def encode_text(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        ids, offsets = [], []
        for m in _WORD_RE.finditer(text):
            ids.append(self.vocab.get(m.group().casefold(), self.unk_id))
            offsets.append((m.start(), m.end()))
        return ids, offsets

    def encode_string(self, text: str) -> list[int]:
        """Encode free text that may contain marker tokens (target strings)."""
        ids = []
        for chunk in text.split():
            if chunk in self.vocab and (chunk in self.scheme.all_markers() or chunk in (PAD, UNK, BOS, EOS)):
                ids.append(self.vocab[chunk])
            else:
                for m in _WORD_RE.finditer(chunk):
                    ids.append(self.vocab.get(m.group().casefold(), self.unk_id))
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        skip = {self.pad_id, self.bos_id, self.eos_id}
        return " ".join(self.inverse.get(int(i), UNK) for i in ids if int(i) not in skip)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({"vocab": self.vocab, "scheme": self.scheme.to_json()}), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(obj["vocab"], SpecialTokenScheme.from_json(obj["scheme"]))


# ---------------------------------------------------------------------------
# tiny torch backbones


class TinyEncoder(nn.Module):
    """Small Transformer encoder; summary vector = hidden state at index 0."""

    def __init__(
        self,
        vocab_size: int,
        d_model: int = 96,
        nhead: int = 4,
        num_layers: int = 2,
        dim_feedforward: int = 192,
        max_len: int = 256,
        dropout: float = 0.0,
        pad_id: int = 0,
    ):
        super().__init__()
        self.pad_id = pad_id
        self.hidden_size = d_model
        self.embed = nn.Embedding(vocab_size, d_model, padding_idx=pad_id)
        self.pos = nn.Embedding(max_len, d_model)
        nn.init.normal_(self.embed.weight, std=0.02)
        nn.init.normal_(self.pos.weight, std=0.02)
        nn.init.zeros_(self.embed.weight[pad_id])
        layer = nn.TransformerEncoderLayer(
            d_model, nhead, dim_feedforward, dropout=dropout, batch_first=True, norm_first=True
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(d_model)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device).unsqueeze(0)
        x = self.embed(ids) + self.pos(positions)
        x = self.encoder(x, src_key_padding_mask=~mask)
        return self.norm(x)


class TinySeq2Seq(nn.Module):
    """Small Transformer encoder-decoder with greedy decoding."""

    def __init__(
        self,
        vocab_size: int,
        d_model: int = 96,
        nhead: int = 4,
        num_layers: int = 2,
        dim_feedforward: int = 192,
        max_len: int = 256,
        dropout: float = 0.0,
        pad_id: int = 0,
        bos_id: int = 2,
        eos_id: int = 3,
    ):
        super().__init__()
        self.pad_id, self.bos_id, self.eos_id = pad_id, bos_id, eos_id
        self.hidden_size = d_model
        self.embed = nn.Embedding(vocab_size, d_model, padding_idx=pad_id)
        self.pos = nn.Embedding(max_len, d_model)
        nn.init.normal_(self.embed.weight, std=0.02)
        nn.init.normal_(self.pos.weight, std=0.02)
        nn.init.zeros_(self.embed.weight[pad_id])
        self.transformer = nn.Transformer(
            d_model,
            nhead,
            num_encoder_layers=num_layers,
            num_decoder_layers=num_layers,
            dim_feedforward=dim_feedforward,
            dropout=dropout,
            batch_first=True,
            norm_first=True,
        )
        self.out = nn.Linear(d_model, vocab_size)

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device).unsqueeze(0)
        return self.embed(ids) + self.pos(positions)

    @staticmethod
    def _causal_mask(length: int, device) -> torch.Tensor:
        return torch.triu(torch.ones(length, length, dtype=torch.bool, device=device), diagonal=1)

    def forward(self, src: torch.Tensor, src_mask: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        causal = self._causal_mask(tgt_in.shape[1], src.device)
        hidden = self.transformer(
            self._embed(src),
            self._embed(tgt_in),
            tgt_mask=causal,
            src_key_padding_mask=~src_mask,
            memory_key_padding_mask=~src_mask,
            tgt_key_padding_mask=tgt_in.eq(self.pad_id),
        )
        return self.out(hidden)

    @torch.no_grad()
    def generate(self, src: torch.Tensor, src_mask: torch.Tensor, max_new_tokens: int = 64) -> list[list[int]]:
        self.eval()
        batch = src.shape[0]
        memory = self.transformer.encoder(self._embed(src), src_key_padding_mask=~src_mask)
        ids = torch.full((batch, 1), self.bos_id, dtype=torch.long, device=src.device)
        finished = torch.zeros(batch, dtype=torch.bool, device=src.device)
        for _ in range(max_new_tokens):
            causal = self._causal_mask(ids.shape[1], src.device)
            hidden = self.transformer.decoder(
                self._embed(ids), memory, tgt_mask=causal, memory_key_padding_mask=~src_mask
            )
            logits = self.out(hidden[:, -1])
            nxt = logits.argmax(dim=-1)
            nxt = torch.where(finished, torch.full_like(nxt, self.pad_id), nxt)
            ids = torch.cat([ids, nxt.unsqueeze(1)], dim=1)
            finished |= nxt.eq(self.eos_id)
            if bool(finished.all()):
                break
        out = []
        for row in ids[:, 1:].tolist():
            clean = []
            for tok in row:
                if tok == self.eos_id:
                    break
                if tok != self.pad_id:
                    clean.append(tok)
            out.append(clean)
        return out


# ---------------------------------------------------------------------------
# Hugging Face adapters (full-scale families; lazy imports)


class HFTokenizerAdapter:
    """Adapts a fast HF tokenizer to the Tokenizer protocol. Markers are
    registered as additional special tokens."""

    def __init__(self, name: str, scheme: SpecialTokenScheme):
        from transformers import AutoTokenizer

        self.scheme = scheme
        self.hf = AutoTokenizer.from_pretrained(name, use_fast=True)
        self.hf.add_special_tokens({"additional_special_tokens": list(scheme.all_markers())})
        self.pad_id = self.hf.pad_token_id if self.hf.pad_token_id is not None else 0

    def __len__(self) -> int:
        return len(self.hf)

    def marker_id(self, marker: str) -> int:
        tid = self.hf.convert_tokens_to_ids(marker)
        if tid is None or tid == self.hf.unk_token_id:
            raise KeyError(f"marker {marker!r} is not registered")
        return tid

    def encode_text(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        enc = self.hf(text, add_special_tokens=False, return_offsets_mapping=True)
        return list(enc["input_ids"]), [tuple(o) for o in enc["offset_mapping"]]

    def encode_string(self, text: str) -> list[int]:
        return list(self.hf(text, add_special_tokens=False)["input_ids"])

    def decode(self, ids: Iterable[int]) -> str:
        return self.hf.decode(list(ids), skip_special_tokens=False)


class HFEncoder(nn.Module):
    def __init__(self, name: str, vocab_size: int):
        super().__init__()
        from transformers import AutoModel

        self.model = AutoModel.from_pretrained(name)
        self.model.resize_token_embeddings(vocab_size)
        self.hidden_size = self.model.config.hidden_size

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.model(input_ids=ids, attention_mask=mask.long()).last_hidden_state


class HFSeq2Seq(nn.Module):
    def __init__(self, name: str, vocab_size: int, tokenizer: HFTokenizerAdapter):
        super().__init__()
        from transformers import AutoModelForSeq2SeqLM

        self.model = AutoModelForSeq2SeqLM.from_pretrained(name)
        self.model.resize_token_embeddings(vocab_size)
        self.tokenizer = tokenizer
        self.pad_id = tokenizer.pad_id
        self.hidden_size = self.model.config.d_model

    def forward(self, src, src_mask, tgt_in):
        return self.model(input_ids=src, attention_mask=src_mask.long(), decoder_input_ids=tgt_in).logits

    @torch.no_grad()
    def generate(self, src, src_mask, max_new_tokens: int = 64):
        out = self.model.generate(
            input_ids=src, attention_mask=src_mask.long(), max_new_tokens=max_new_tokens
        )
        return [list(row) for row in out.tolist()]


# ---------------------------------------------------------------------------
# family bundle


@dataclass
class FamilyBundle:
    """Everything a stage model needs from its checkpoint family."""

    name: str
    kind: str
    tokenizer: object
    backbone: nn.Module
    hidden_size: int

    @property
    def is_generative(self) -> bool:
        return self.kind == GENERATIVE


def build_family(
    name: str,
    scheme: SpecialTokenScheme,
    *,
    train_texts: Optional[Iterable[str]] = None,
    tokenizer: Optional[WordTokenizer] = None,
    max_len: int = 256,
    tiny_kwargs: Optional[dict] = None,
) -> FamilyBundle:
    """Instantiate a checkpoint family.

    Tiny families need either a prebuilt tokenizer or training texts to
    build the vocabulary from. HF families pull pretrained weights.
    """
    kind = family_kind(name)
    if name in ("tiny", "tiny-gen"):
        if tokenizer is None:
            if train_texts is None:
                raise ValueError(f"family {name!r} needs train_texts or a prebuilt tokenizer")
            tokenizer = WordTokenizer.build(train_texts, scheme)
        kwargs = dict(tiny_kwargs or {})
        kwargs.setdefault("max_len", max_len)
        if name == "tiny":
            backbone = TinyEncoder(len(tokenizer), pad_id=tokenizer.pad_id, **kwargs)
        else:
            backbone = TinySeq2Seq(
                len(tokenizer),
                pad_id=tokenizer.pad_id,
                bos_id=tokenizer.bos_id,
                eos_id=tokenizer.eos_id,
                **kwargs,
            )
        return FamilyBundle(name, kind, tokenizer, backbone, backbone.hidden_size)

    hf_tok = HFTokenizerAdapter(name, scheme)
    if kind == DISCRIMINATIVE:
        backbone = HFEncoder(name, len(hf_tok))
    else:
        backbone = HFSeq2Seq(name, len(hf_tok), hf_tok)
    return FamilyBundle(name, kind, hf_tok, backbone, backbone.hidden_size)


# ---------------------------------------------------------------------------
# batching + checkpoint IO helpers


def collate_ids(id_lists: list[tuple[int, ...]], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(ids) for ids in id_lists)
    batch = torch.full((len(id_lists), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(id_lists), width), dtype=torch.bool)
    for i, ids in enumerate(id_lists):
        batch[i, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        mask[i, : len(ids)] = True
    return batch, mask


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def atomic_torch_save(obj, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    torch.save(obj, tmp)
    os.replace(tmp, path)


def write_manifest(directory: Path, manifest: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    atomic_write_text(directory / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))


def read_manifest(directory: Path) -> dict:
    return json.loads((Path(directory) / "manifest.json").read_text(encoding="utf-8"))


def save_bundle(directory: Path, bundle: FamilyBundle, manifest: dict, nets: dict[str, nn.Module]) -> None:
    """Checkpoint layout: manifest.json + weights.pt (one state dict per
    named part) + tokenizer.json for the tiny families."""
    directory = Path(directory)
    write_manifest(directory, manifest)
    if isinstance(bundle.tokenizer, WordTokenizer):
        bundle.tokenizer.save(directory / "tokenizer.json")
    atomic_torch_save({name: net.state_dict() for name, net in nets.items()}, directory / "weights.pt")


def load_bundle(directory: Path) -> tuple[dict, FamilyBundle, dict]:
    """Rebuild the family recorded in a checkpoint manifest and return
    (manifest, bundle, part state dicts). Weights are not yet applied."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    scheme = SpecialTokenScheme.from_json(manifest["scheme"])
    name = manifest["family"]
    if name in ("tiny", "tiny-gen"):
        tokenizer = WordTokenizer.load(directory / "tokenizer.json")
        bundle = build_family(
            name,
            scheme,
            tokenizer=tokenizer,
            max_len=manifest["max_sequence_length"],
            tiny_kwargs=manifest.get("tiny_kwargs") or {},
        )
    else:
        bundle = build_family(name, scheme, max_len=manifest["max_sequence_length"])
    states = torch.load(directory / "weights.pt", map_location="cpu", weights_only=True)
    return manifest, bundle, states


def clone_backbone(bundle: FamilyBundle, manifest: dict) -> nn.Module:
    """Fresh backbone of the same architecture; multi-checkpoint strategies
    need one encoder per checkpoint."""
    fresh = build_family(
        bundle.name,
        SpecialTokenScheme.from_json(manifest["scheme"]),
        tokenizer=bundle.tokenizer if bundle.name in ("tiny", "tiny-gen") else None,
        max_len=manifest["max_sequence_length"],
        tiny_kwargs=manifest.get("tiny_kwargs") or {},
    )
    return fresh.backbone
