"""Training orchestration: corpus mixing, schedules, runs, ensembling.

Batches mix datasets with replacement, each element drawing its dataset
with probability proportional to the square root of the dataset's
sentence count.  The learning rate ramps linearly to its peak (one epoch
for the empty-node stage, the first 10% of steps otherwise) and then
follows cosine decay to zero.  A run directory records the resolved
config, per-step log, checkpoints, and dev scores.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import torch

from . import datasets as dataset_registry
from .checkpoint import load_checkpoint, save_checkpoint
from .conllu import Document, parse_conllu, strip_empty_nodes
from .coref_model import CorefModel, make_coref_targets, training_step
from .empty_node_model import (
    EmptyNodeModel,
    EnodeVocabs,
    make_enode_example,
    enode_training_step,
)
from .encoder import TinyEncoder
from .one_stage import OneStageModel, make_joint_targets, joint_training_step
from .optim import make_optimizer, set_lr
from .segments import build_segments
from .tokenizers import HashTokenizer


class DataError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Config and presets


@dataclass
class TrainConfig:
    stage: str  # "enode" | "coref" | "one_stage"
    datasets: list[str] = field(default_factory=list)
    excluded_languages: list[str] = field(default_factory=list)
    epochs: int = 15
    batches_per_epoch: int = 10_000
    batch_size: int = 8
    peak_lr: float = 6e-4
    warmup_fraction: Optional[float] = None
    max_len: int = 512
    infer_max_len: int = 2560
    lookahead: int = 50
    seed: int = 1
    optimizer: str = "adafactor"
    threshold: float = 0.5
    encoder: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)

    @property
    def total_steps(self) -> int:
        return self.epochs * self.batches_per_epoch

    def warmup_steps(self) -> int:
        if self.warmup_fraction is not None:
            return max(1, round(self.warmup_fraction * self.total_steps))
        if self.stage == "enode":
            return self.batches_per_epoch  # one epoch
        return max(1, round(0.10 * self.total_steps))

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


TOY_ENCODER = {"vocab_size": 512, "dim": 64, "layers": 2, "heads": 4,
               "ffn_mult": 2, "max_distance": 16, "dropout": 0.1}
TOY_ENODE_DIMS = {"cand_hidden": 128, "cand_dim": 64, "head_hidden": 128}

EMPTY_NODE_DATASETS = [
    d for d, info in dataset_registry.DATASETS.items()
    if info.get("has_empty_nodes") and not info.get("synthetic")
]


def _enode_recipe(batch_size: int) -> TrainConfig:
    # Stage-1 recipe: 20 epochs of 5000 batches, linear ramp to 1e-5 in
    # the first epoch, cosine decay, trained on the corpora with empty
    # nodes only.
    return TrainConfig(
        stage="enode", datasets=list(EMPTY_NODE_DATASETS), epochs=20,
        batches_per_epoch=5000, batch_size=batch_size, peak_lr=1e-5,
        optimizer="adam",
    )


def _coref_recipe(batch_size: int, peak_lr: float, stage: str = "coref") -> TrainConfig:
    return TrainConfig(
        stage=stage, datasets=list(dataset_registry.CRAC_DATASETS), epochs=15,
        batches_per_epoch=10_000, batch_size=batch_size, peak_lr=peak_lr,
        optimizer="adafactor",
    )


def _toy(stage: str, steps: int, batch_size: int, lr: float) -> TrainConfig:
    return TrainConfig(
        stage=stage, datasets=list(dataset_registry.SYNTHETIC_DATASETS),
        epochs=1, batches_per_epoch=steps, batch_size=batch_size, peak_lr=lr,
        warmup_fraction=0.1, optimizer="adam", encoder=dict(TOY_ENCODER),
        model=dict(TOY_ENODE_DIMS) if stage == "enode" else {},
        max_len=512, infer_max_len=2560,
    )


@dataclass
class ExperimentPreset:
    name: str
    variant: str  # "two_stage" | "one_stage" | "enode"
    coref: Optional[TrainConfig] = None
    enode: Optional[TrainConfig] = None


PRESETS: dict[str, ExperimentPreset] = {
    # Encoder-size rows: batch size and learning rate per model scale.
    "base":  ExperimentPreset("base", "two_stage",
                              coref=_coref_recipe(8, 6e-4), enode=_enode_recipe(64)),
    "large": ExperimentPreset("large", "two_stage",
                              coref=_coref_recipe(8, 6e-4), enode=_enode_recipe(64)),
    "xl":    ExperimentPreset("xl", "two_stage",
                              coref=_coref_recipe(6, 5e-4), enode=_enode_recipe(64)),
    "xxl":   ExperimentPreset("xxl", "two_stage",
                              coref=_coref_recipe(6, 5e-4), enode=_enode_recipe(64)),
    "enode-baseline": ExperimentPreset("enode-baseline", "enode",
                                       enode=_enode_recipe(64)),
    # The improved empty-node run differs only in batch size.
    "enode-improved": ExperimentPreset("enode-improved", "enode",
                                       enode=_enode_recipe(384)),
    "toy-two-stage": ExperimentPreset(
        "toy-two-stage", "two_stage",
        coref=_toy("coref", 450, 8, 2e-3),
        enode=_toy("enode", 300, 16, 2e-3),
    ),
    "toy-one-stage": ExperimentPreset(
        "toy-one-stage", "one_stage",
        coref=_toy("one_stage", 450, 8, 2e-3),
    ),
    "toy-enode": ExperimentPreset(
        "toy-enode", "enode", enode=_toy("enode", 300, 16, 2e-3),
    ),
}


# ---------------------------------------------------------------------------
# Sampling and schedule


@dataclass
class SamplingPlan:
    dataset_ids: list[str]
    probabilities: list[float]

    def sample(self, rng: random.Random) -> str:
        return rng.choices(self.dataset_ids, weights=self.probabilities, k=1)[0]


def build_sampler(sized_datasets: Sequence[tuple[str, int]]) -> SamplingPlan:
    """p_i proportional to sqrt(size_i); drawn with replacement per
    batch element."""
    if not sized_datasets:
        raise ValueError("no datasets to sample from")
    for name, size in sized_datasets:
        if size < 1:
            raise ValueError(f"dataset {name} has size {size}")
    weights = [math.sqrt(size) for _, size in sized_datasets]
    total = sum(weights)
    return SamplingPlan(
        dataset_ids=[name for name, _ in sized_datasets],
        probabilities=[w / total for w in weights],
    )


def lr_at(step: int, config: TrainConfig) -> float:
    total = config.total_steps
    warmup = config.warmup_steps()
    if step <= warmup:
        return config.peak_lr * step / warmup
    progress = (step - warmup) / (total - warmup)
    return config.peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def zero_shot_filter(dataset_ids: Sequence[str],
                     held_out_language: str) -> list[str]:
    kept = [d for d in dataset_ids
            if dataset_registry.language(d) != held_out_language]
    if not kept:
        raise ValueError(
            f"holding out {held_out_language!r} leaves no training datasets"
        )
    return kept


def apply_exclusions(config: TrainConfig) -> list[str]:
    ids = list(config.datasets)
    for language in config.excluded_languages:
        ids = zero_shot_filter(ids, language)
    return ids


def select_best(entries: Sequence[tuple[int, float]], k: int) -> list[int]:
    """Top-k by score; equal scores break toward the lower seed."""
    ranked = sorted(entries, key=lambda e: (-e[1], e[0]))
    return [seed for seed, _ in ranked[:k]]


# ---------------------------------------------------------------------------
# Corpus loading


def load_split(data_root, dataset_id: str, split: str) -> list[Document]:
    path = Path(data_root) / dataset_id / f"{split}.conllu"
    if not path.exists():
        raise DataError(f"missing corpus file {path}")
    return parse_conllu(path.read_text(), dataset_id)


def check_data_root(data_root, dataset_ids: Sequence[str]) -> None:
    missing = [
        str(Path(data_root) / d)
        for d in dataset_ids
        if not (Path(data_root) / d / "train.conllu").exists()
    ]
    if missing:
        raise DataError(
            "missing training data; expected dataset directories with "
            "train.conllu/dev.conllu:\n  " + "\n  ".join(missing)
        )


# ---------------------------------------------------------------------------
# Training loops


def _seed_everything(seed: int) -> random.Random:
    torch.manual_seed(seed)
    return random.Random(seed)


def _run_dir(run_dir, config: TrainConfig) -> Path:
    run_dir = Path(run_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (run_dir / f"config-{config.stage}.json").write_text(config.to_json())
    return run_dir


def train_enode(config: TrainConfig, data_root, run_dir,
                log_every: int = 50) -> Path:
    run_dir = _run_dir(run_dir, config)
    rng = _seed_everything(config.seed)
    dataset_ids = apply_exclusions(config)
    check_data_root(data_root, dataset_ids)
    tokenizer = HashTokenizer(config.encoder.get("vocab_size", 4096))

    vocabs = EnodeVocabs()
    examples: dict[str, list] = {}
    for dataset_id in dataset_ids:
        items = []
        for doc in load_split(data_root, dataset_id, "train"):
            result = strip_empty_nodes(doc)
            by_sentence: dict[int, list] = {}
            for target in result.targets:
                by_sentence.setdefault(target.sentence_index, []).append(target)
            for si, sent in enumerate(result.document.sentences):
                words = [t.form for t in sent.tokens]
                if not words:
                    continue
                items.append(make_enode_example(
                    words, by_sentence.get(si, []), dataset_id, tokenizer,
                    vocabs, observe=True,
                ))
        if not items:
            raise DataError(f"dataset {dataset_id} has no training sentences")
        examples[dataset_id] = items

    encoder = TinyEncoder(**config.encoder) if config.encoder else TinyEncoder(4096)
    model = EmptyNodeModel(encoder, vocabs, **config.model)
    optimizer = make_optimizer(config.optimizer, model.parameters(),
                               config.peak_lr)
    plan = build_sampler([(d, len(items)) for d, items in examples.items()])
    log_lines = ["step\tlr\tloss"]
    for step in range(1, config.total_steps + 1):
        set_lr(optimizer, lr_at(step, config))
        batch = [rng.choice(examples[plan.sample(rng)])
                 for _ in range(config.batch_size)]
        loss = enode_training_step(model, batch, optimizer)
        if step % log_every == 0 or step == config.total_steps:
            log_lines.append(f"{step}\t{lr_at(step, config):.3e}\t{loss:.6f}")
    (run_dir / "log-enode.tsv").write_text("\n".join(log_lines) + "\n")
    return save_checkpoint(run_dir / "checkpoints" / "enode", model, tokenizer)


def _coref_training_items(config: TrainConfig, data_root,
                          dataset_ids: Sequence[str], tokenizer,
                          deprels=None) -> dict[str, list]:
    one_stage = config.stage == "one_stage"
    items: dict[str, list] = {}
    for dataset_id in dataset_ids:
        segments = []
        for doc in load_split(data_root, dataset_id, "train"):
            if one_stage:
                stripped = strip_empty_nodes(doc).document
                segs = build_segments(stripped, tokenizer, config.max_len,
                                      config.lookahead)
                make_joint_targets(doc, segs, deprels)
            else:
                segs = build_segments(doc, tokenizer, config.max_len,
                                      config.lookahead)
                make_coref_targets(doc, segs)
            segments.extend(segs)
        if not segments:
            raise DataError(f"dataset {dataset_id} has no training sentences")
        items[dataset_id] = segments
    return items


def collect_deprels(data_root, dataset_ids: Sequence[str]):
    """Vocabulary of empty-node relations over the training data."""
    from .empty_node_model import LabelVocab

    deprels = LabelVocab()
    for dataset_id in dataset_ids:
        for doc in load_split(data_root, dataset_id, "train"):
            for target in strip_empty_nodes(doc).targets:
                deprels.add(target.deprel)
    return deprels


def train_coref(config: TrainConfig, data_root, run_dir,
                log_every: int = 50) -> Path:
    run_dir = _run_dir(run_dir, config)
    rng = _seed_everything(config.seed)
    dataset_ids = apply_exclusions(config)
    check_data_root(data_root, dataset_ids)
    tokenizer = HashTokenizer(config.encoder.get("vocab_size", 4096))
    one_stage = config.stage == "one_stage"

    deprels = collect_deprels(data_root, dataset_ids) if one_stage else None
    items = _coref_training_items(config, data_root, dataset_ids, tokenizer,
                                  deprels)
    encoder = TinyEncoder(**config.encoder) if config.encoder else TinyEncoder(4096)
    if one_stage:
        model = OneStageModel(encoder, deprels, **config.model)
        step_fn = joint_training_step
    else:
        model = CorefModel(encoder, **config.model)
        step_fn = training_step
    optimizer = make_optimizer(config.optimizer, model.parameters(),
                               config.peak_lr)
    plan = build_sampler([(d, len(segs)) for d, segs in items.items()])
    log_lines = ["step\tlr\tloss"]
    for step in range(1, config.total_steps + 1):
        set_lr(optimizer, lr_at(step, config))
        batch = [rng.choice(items[plan.sample(rng)])
                 for _ in range(config.batch_size)]
        loss = step_fn(model, batch, optimizer)
        if step % log_every == 0 or step == config.total_steps:
            log_lines.append(f"{step}\t{lr_at(step, config):.3e}\t{loss:.6f}")
    (run_dir / f"log-{config.stage}.tsv").write_text("\n".join(log_lines) + "\n")
    return save_checkpoint(run_dir / "checkpoints" / config.stage, model,
                           tokenizer)


# ---------------------------------------------------------------------------
# Dev evaluation and experiments


def evaluate_pipeline(run_dir, data_root, preset: ExperimentPreset,
                      split: str = "dev") -> dict[str, float]:
    """Predict the dev split and compute head-match CoNLL per dataset."""
    from . import coref_scoring
    from .enode_scoring import format_enode_table, score_empty_node_documents
    from .pipeline import predict_document, run_two_stage

    run_dir = Path(run_dir)
    scores: dict[str, float] = {}
    if preset.variant == "enode":
        model, tokenizer, _ = load_checkpoint(run_dir / "checkpoints" / "enode")
        from .empty_node_model import predict_empty_nodes

        tables = {}
        config = preset.enode
        for dataset_id in apply_exclusions(config):
            gold = load_split(data_root, dataset_id, split)
            stripped = [strip_empty_nodes(d).document for d in gold]
            pred = [predict_empty_nodes(model, d, tokenizer, config.threshold)
                    for d in stripped]
            stats = score_empty_node_documents(gold, pred)
            tables[dataset_id] = stats
            scores[dataset_id] = stats.f1("ARC") or 0.0
        (run_dir / "dev_enode.tsv").write_text(format_enode_table(tables))
    else:
        config = preset.coref
        stage = "one_stage" if preset.variant == "one_stage" else "coref"
        coref_model, tokenizer, _ = load_checkpoint(
            run_dir / "checkpoints" / stage
        )
        enode_model = enode_tokenizer = None
        if preset.variant == "two_stage" and preset.enode is not None:
            enode_model, enode_tokenizer, _ = load_checkpoint(
                run_dir / "checkpoints" / "enode"
            )
        for dataset_id in apply_exclusions(config):
            gold = load_split(data_root, dataset_id, split)
            stripped = [strip_empty_nodes(d).document for d in gold]
            max_len = dataset_registry.infer_max_len(
                dataset_id, config.infer_max_len
            )
            if preset.variant == "two_stage":
                pred = run_two_stage(
                    enode_model, [coref_model], stripped, tokenizer,
                    enode_tokenizer, config.threshold, max_len,
                    config.lookahead,
                )
            else:
                pred = [predict_document([coref_model], d, tokenizer, max_len,
                                         config.lookahead) for d in stripped]
            report = coref_scoring.score(gold, pred, mode="head",
                                         with_singletons=True)
            scores[dataset_id] = report.conll
    lines = ["dataset\tconll_head"]
    for dataset_id, value in scores.items():
        lines.append(f"{dataset_id}\t{value:.2f}")
    if scores:
        avg = sum(scores.values()) / len(scores)
        lines.append(f"avg\t{avg:.2f}")
    (run_dir / "dev_scores.tsv").write_text("\n".join(lines) + "\n")
    return scores


def run_experiment(preset_name: str, data_root, run_dir,
                   seed: Optional[int] = None) -> dict[str, float]:
    """Train every stage of a preset, then predict and score dev."""
    if preset_name not in PRESETS:
        raise ValueError(
            f"unknown preset {preset_name!r}; available: "
            + ", ".join(sorted(PRESETS))
        )
    preset = PRESETS[preset_name]
    preset = dataclasses.replace(
        preset,
        enode=dataclasses.replace(preset.enode) if preset.enode else None,
        coref=dataclasses.replace(preset.coref) if preset.coref else None,
    )
    if seed is not None:
        for config in (preset.enode, preset.coref):
            if config is not None:
                config.seed = seed
    run_dir = Path(run_dir)
    if preset.enode is not None:
        train_enode(preset.enode, data_root, run_dir)
    if preset.coref is not None:
        train_coref(preset.coref, data_root, run_dir)
    return evaluate_pipeline(run_dir, data_root, preset)


# ---------------------------------------------------------------------------
# Ensembling


def ensemble_predict(models: Sequence[CorefModel], segment):
    """Average post-softmax tag/candidate/antecedent distributions over
    the members, then decode once."""
    from .pipeline import predict_segment_ensemble

    return predict_segment_ensemble(models, segment)
