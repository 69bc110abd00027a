"""Checkpoint directories: weights.pt + config.json.

The config carries everything needed to rebuild the model and its
tokenizer: encoder hyperparameters, the span-tag label vocabulary (as a
JSON list for portability), relation/morphology vocabularies, window
sizes, and the tokenizer reference.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from . import spantags
from .coref_model import CorefModel
from .empty_node_model import EmptyNodeModel, EnodeVocabs, LabelVocab
from .encoder import TinyEncoder
from .one_stage import OneStageModel
from .tokenizers import tokenizer_from_config


class CheckpointError(ValueError):
    pass


def save_checkpoint(directory, model, tokenizer, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    config = {
        "variant": model.variant,
        "encoder": model.encoder.hparams,
        "tokenizer": tokenizer.config(),
    }
    if isinstance(model, EmptyNodeModel):
        config["head_dims"] = model.hparams
        config["vocabs"] = model.vocabs.to_config()
    else:
        config["label_cap"] = model.label_cap
        config["label_vocab"] = spantags.label_vocabulary(model.label_cap)
        config["link_dim"] = model.link_dim
        config["memory_limit"] = model.memory_limit
        if isinstance(model, OneStageModel):
            config["deprels"] = model.deprels.labels
    config.update(extra or {})
    (directory / "config.json").write_text(json.dumps(config, indent=1))
    torch.save(model.state_dict(), directory / "weights.pt")
    return directory


def load_checkpoint(directory):
    """Returns (model, tokenizer, config)."""
    directory = Path(directory)
    try:
        config = json.loads((directory / "config.json").read_text())
    except FileNotFoundError:
        raise CheckpointError(f"no config.json under {directory}")
    tokenizer = tokenizer_from_config(config["tokenizer"])
    encoder = TinyEncoder(**config["encoder"])
    variant = config["variant"]
    if variant == "enode":
        vocabs = EnodeVocabs.from_config(config["vocabs"])
        model = EmptyNodeModel(encoder, vocabs, **config["head_dims"])
    elif variant == "one_stage":
        model = OneStageModel(
            encoder, LabelVocab(list(config["deprels"])),
            label_cap=config["label_cap"], link_dim=config["link_dim"],
            memory_limit=config["memory_limit"],
        )
        expected = spantags.label_vocabulary(config["label_cap"])
        if config["label_vocab"] != expected:
            raise CheckpointError("tag label vocabulary mismatch")
    elif variant == "coref":
        model = CorefModel(
            encoder, label_cap=config["label_cap"],
            link_dim=config["link_dim"], memory_limit=config["memory_limit"],
        )
        expected = spantags.label_vocabulary(config["label_cap"])
        if config["label_vocab"] != expected:
            raise CheckpointError("tag label vocabulary mismatch")
    else:
        raise CheckpointError(f"unknown variant {variant!r}")
    state = torch.load(directory / "weights.pt", weights_only=True)
    try:
        model.load_state_dict(state)
    except RuntimeError as error:
        raise CheckpointError(
            f"weights do not fit the configured model: {error}"
        ) from error
    model.eval()
    return model, tokenizer, config


def ensure_same_tokenizer(configs: list[dict]) -> None:
    first = configs[0]["tokenizer"]
    for c in configs[1:]:
        if c["tokenizer"] != first:
            raise CheckpointError("ensemble members use different tokenizers")
