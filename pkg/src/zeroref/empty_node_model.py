"""Empty-node prediction: up to two candidate nodes per word.

Every word of a sentence (represented by its first subword embedding)
anchors two candidate slots, each word acting as a potential dependency
head.  Candidate 0 is a dense-ReLU-dropout-dense transform of the word;
candidate 1 applies the same shape to [candidate 0; word].  Eight heads
(own dense-ReLU-dropout each) predict existence, dependency relation,
five morphology columns, and the insertion point, the last one via
attention over positions 0..n (0 = sentence start).  Prediction is
non-autoregressive: no candidate sees another candidate's decision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch
from torch import nn

from .conllu import Document, EmptyNodeRecord, Token, insert_empty_nodes

MORPH_COLUMNS = ("form", "lemma", "upos", "xpos", "feats")
UNK = 0


@dataclass
class LabelVocab:
    labels: list[str] = field(default_factory=lambda: ["<unk>"])

    def __post_init__(self):
        self.index = {label: i for i, label in enumerate(self.labels)}

    def add(self, label: str) -> int:
        if label not in self.index:
            self.index[label] = len(self.labels)
            self.labels.append(label)
        return self.index[label]

    def get(self, label: str) -> int:
        return self.index.get(label, UNK)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class EnodeVocabs:
    """Global label spaces plus per-dataset allowed subsets.

    DEPREL (and UPOS) use one shared vocabulary; FORM/LEMMA/XPOS/FEATS
    are closed per-treebank sets, so decoding masks to the dataset's
    values.  A column with no allowed ids for a dataset is absent there
    and decodes to "_".
    """

    deprel: LabelVocab = field(default_factory=LabelVocab)
    columns: dict[str, LabelVocab] = field(
        default_factory=lambda: {c: LabelVocab() for c in MORPH_COLUMNS}
    )
    dataset_columns: dict[str, dict[str, set[int]]] = field(default_factory=dict)

    def observe(self, dataset_id: str, record: EmptyNodeRecord) -> None:
        self.deprel.add(record.deprel)
        per_dataset = self.dataset_columns.setdefault(
            dataset_id, {c: set() for c in MORPH_COLUMNS}
        )
        for col in MORPH_COLUMNS:
            value = getattr(record.token, col)
            if value != "_":
                per_dataset[col].add(self.columns[col].add(value))

    def column_present(self, dataset_id: str, col: str) -> bool:
        return bool(self.dataset_columns.get(dataset_id, {}).get(col))

    def to_config(self) -> dict:
        return {
            "deprel": self.deprel.labels,
            "columns": {c: v.labels for c, v in self.columns.items()},
            "dataset_columns": {
                d: {c: sorted(ids) for c, ids in cols.items()}
                for d, cols in self.dataset_columns.items()
            },
        }

    @classmethod
    def from_config(cls, config: dict) -> "EnodeVocabs":
        vocabs = cls(
            deprel=LabelVocab(list(config["deprel"])),
            columns={c: LabelVocab(list(v)) for c, v in config["columns"].items()},
        )
        vocabs.dataset_columns = {
            d: {c: set(ids) for c, ids in cols.items()}
            for d, cols in config["dataset_columns"].items()
        }
        return vocabs


@dataclass
class EnodeExample:
    """One stripped sentence with per-word, per-slot gold slots."""

    dataset_id: str
    subword_ids: list[int]
    word_starts: list[bool]
    n_words: int
    exist: torch.Tensor       # [n, 2] 0/1
    deprel: torch.Tensor      # [n, 2], -1 = ignore
    columns: dict[str, torch.Tensor]
    word_order: torch.Tensor  # [n, 2], -1 = ignore
    dropped: int = 0


def make_enode_example(words: Sequence[str], targets: Sequence[EmptyNodeRecord],
                       dataset_id: str, tokenizer, vocabs: EnodeVocabs,
                       observe: bool = False) -> EnodeExample:
    """Group gold nodes by dependency-head word; slots in word-order
    order; more than two per head are dropped (and counted)."""
    n = len(words)
    subword_ids, word_starts = tokenizer.encode_words(list(words))
    exist = torch.zeros(n, 2)
    deprel = torch.full((n, 2), -1, dtype=torch.long)
    columns = {c: torch.full((n, 2), -1, dtype=torch.long) for c in MORPH_COLUMNS}
    word_order = torch.full((n, 2), -1, dtype=torch.long)
    dropped = 0
    by_head: dict[int, list[EmptyNodeRecord]] = {}
    for rec in targets:
        if not rec.head.isdigit() or not (1 <= int(rec.head) <= n):
            dropped += 1
            continue
        by_head.setdefault(int(rec.head), []).append(rec)
    for head, recs in by_head.items():
        recs.sort(key=lambda r: (r.anchor, r.slot))
        if len(recs) > 2:
            dropped += len(recs) - 2
            recs = recs[:2]
        for slot, rec in enumerate(recs):
            if observe:
                vocabs.observe(dataset_id, rec)
            w = head - 1
            exist[w, slot] = 1.0
            deprel[w, slot] = vocabs.deprel.get(rec.deprel)
            word_order[w, slot] = rec.anchor
            for col in MORPH_COLUMNS:
                value = getattr(rec.token, col)
                if value != "_":
                    columns[col][w, slot] = vocabs.columns[col].get(value)
    return EnodeExample(
        dataset_id=dataset_id, subword_ids=subword_ids,
        word_starts=word_starts, n_words=n, exist=exist, deprel=deprel,
        columns=columns, word_order=word_order, dropped=dropped,
    )


class _Head(nn.Module):
    def __init__(self, cand_dim: int, hidden: int, out: int, dropout: float):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Linear(cand_dim, hidden), nn.ReLU(), nn.Dropout(dropout)
        )
        self.out = nn.Linear(hidden, out)

    def forward(self, x):
        return self.out(self.trunk(x))


class EmptyNodeModel(nn.Module):
    variant = "enode"

    def __init__(self, encoder, vocabs: EnodeVocabs, cand_hidden: int = 2048,
                 cand_dim: int = 512, head_hidden: int = 2048,
                 attn_dim: Optional[int] = None, dropout: float = 0.5):
        super().__init__()
        self.encoder = encoder
        self.vocabs = vocabs
        dim = encoder.dim
        self.hparams = {"cand_hidden": cand_hidden, "cand_dim": cand_dim,
                        "head_hidden": head_hidden, "attn_dim": attn_dim,
                        "dropout": dropout}
        self.attn_dim = attn_dim or dim

        def transform(in_dim):
            return nn.Sequential(
                nn.Linear(in_dim, cand_hidden), nn.ReLU(), nn.Dropout(dropout),
                nn.Linear(cand_hidden, cand_dim),
            )

        self.cand0 = transform(dim)
        self.cand1 = transform(cand_dim + dim)
        self.exist_head = _Head(cand_dim, head_hidden, 1, dropout)
        self.deprel_head = _Head(cand_dim, head_hidden, len(vocabs.deprel), dropout)
        self.column_heads = nn.ModuleDict({
            col: _Head(cand_dim, head_hidden, len(vocabs.columns[col]), dropout)
            for col in MORPH_COLUMNS
        })
        self.order_trunk = nn.Sequential(
            nn.Linear(cand_dim, head_hidden), nn.ReLU(), nn.Dropout(dropout)
        )
        self.order_query = nn.Linear(head_hidden, self.attn_dim)
        self.order_key = nn.Linear(dim, self.attn_dim)
        self.start_key = nn.Parameter(torch.zeros(self.attn_dim))

    # -- forward -------------------------------------------------------------

    def word_embeddings(self, examples: Sequence[EnodeExample]):
        """First-subword embedding per word, padded: [B, n_max, D]."""
        max_sub = max(len(e.subword_ids) for e in examples)
        ids = torch.zeros(len(examples), max_sub, dtype=torch.long)
        mask = torch.zeros(len(examples), max_sub, dtype=torch.bool)
        for i, e in enumerate(examples):
            ids[i, : len(e.subword_ids)] = torch.tensor(e.subword_ids)
            mask[i, : len(e.subword_ids)] = True
        encoded = self.encoder(ids, mask)
        n_max = max(e.n_words for e in examples)
        words = encoded.new_zeros(len(examples), n_max, self.encoder.dim)
        word_mask = torch.zeros(len(examples), n_max, dtype=torch.bool)
        for i, e in enumerate(examples):
            starts = [j for j, s in enumerate(e.word_starts) if s]
            words[i, : len(starts)] = encoded[i, starts]
            word_mask[i, : len(starts)] = True
        return words, word_mask

    def candidates(self, words: torch.Tensor):
        c0 = self.cand0(words)
        c1 = self.cand1(torch.cat([c0, words], dim=-1))
        return torch.stack([c0, c1], dim=words.dim() - 1)  # [..., n, 2, C]

    def head_outputs(self, cands: torch.Tensor, words: torch.Tensor,
                     word_mask: torch.Tensor) -> dict[str, torch.Tensor]:
        out = {
            "exist": self.exist_head(cands).squeeze(-1),
            "deprel": self.deprel_head(cands),
        }
        for col in MORPH_COLUMNS:
            out[col] = self.column_heads[col](cands)
        q = self.order_query(self.order_trunk(cands))  # [B, n, 2, A]
        keys = self.order_key(words)                   # [B, n, A]
        start = self.start_key.expand(words.shape[0], 1, self.attn_dim)
        keys = torch.cat([start, keys], dim=1)         # [B, n+1, A]
        logits = torch.einsum("bnsa,bka->bnsk", q, keys) / self.attn_dim**0.5
        pad = torch.cat(
            [torch.ones(words.shape[0], 1, dtype=torch.bool), word_mask], dim=1
        )
        out["word_order"] = logits.masked_fill(~pad[:, None, None, :], float("-inf"))
        return out

    def forward(self, examples: Sequence[EnodeExample]):
        words, word_mask = self.word_embeddings(examples)
        cands = self.candidates(words)
        return self.head_outputs(cands, words, word_mask), word_mask

    # -- prediction -----------------------------------------------------------

    def predict_sentence(self, words: Sequence[str], dataset_id: str,
                         tokenizer, threshold: float = 0.5,
                         sentence_index: int = 0) -> list[EmptyNodeRecord]:
        """Records for every (word, slot) whose existence probability
        clears the threshold.  A slot-1 firing without slot 0 is emitted
        on its own."""
        self.eval()
        subword_ids, word_starts = tokenizer.encode_words(list(words))
        example = EnodeExample(
            dataset_id=dataset_id, subword_ids=subword_ids,
            word_starts=word_starts, n_words=len(words),
            exist=torch.zeros(len(words), 2),
            deprel=torch.full((len(words), 2), -1, dtype=torch.long),
            columns={c: torch.full((len(words), 2), -1, dtype=torch.long)
                     for c in MORPH_COLUMNS},
            word_order=torch.full((len(words), 2), -1, dtype=torch.long),
        )
        with torch.no_grad():
            out, _ = self.forward([example])
        exist = torch.sigmoid(out["exist"][0])            # [n, 2]
        fired = []
        for w in range(len(words)):
            for slot in range(2):
                if float(exist[w, slot]) < threshold:
                    continue
                deprel_id = int(out["deprel"][0, w, slot].argmax())
                order = int(out["word_order"][0, w, slot].argmax())
                cols = {}
                for col in MORPH_COLUMNS:
                    allowed = self.vocabs.dataset_columns.get(
                        dataset_id, {}
                    ).get(col) or set()
                    if not allowed:
                        cols[col] = "_"
                        continue
                    logits = out[col][0, w, slot]
                    ids = sorted(allowed)
                    best = ids[int(logits[ids].argmax())]
                    cols[col] = self.vocabs.columns[col].labels[best]
                fired.append((w + 1, slot, order, deprel_id, cols))
        # Decimal ids count insertions per insertion point in (head, slot)
        # order.
        counter: dict[int, int] = {}
        records = []
        for head, slot, order, deprel_id, cols in sorted(
            fired, key=lambda f: (f[0], f[1])
        ):
            counter[order] = counter.get(order, 0) + 1
            deprel = self.vocabs.deprel.labels[deprel_id]
            token = Token(
                id=f"{order}.{counter[order]}", form=cols["form"],
                lemma=cols["lemma"], upos=cols["upos"], xpos=cols["xpos"],
                feats=cols["feats"], head=str(head), deprel=deprel,
            )
            records.append(EmptyNodeRecord(
                sentence_index=sentence_index, anchor=order,
                slot=counter[order] - 1, head=str(head), deprel=deprel,
                token=token,
            ))
        return records


def predict_empty_nodes(model: EmptyNodeModel, doc: Document, tokenizer,
                        threshold: float = 0.5) -> Document:
    """Insert predicted empty nodes into a copy of ``doc``."""
    records: list[EmptyNodeRecord] = []
    for si, sent in enumerate(doc.sentences):
        words = [t.form for t in sent.tokens if not t.is_empty]
        if not words:
            continue
        records.extend(model.predict_sentence(
            words, doc.dataset_id, tokenizer, threshold, sentence_index=si
        ))
    return insert_empty_nodes(doc, records)


def enode_training_step(model: EmptyNodeModel, batch: Sequence[EnodeExample],
                        optimizer) -> float:
    """Binary CE on existence everywhere plus per-column and insertion
    CE on gold-positive slots."""
    model.train()
    optimizer.zero_grad()
    out, word_mask = model.forward(batch)
    n_max = word_mask.shape[1]

    def pad(get, fill):
        rows = []
        for e in batch:
            t = get(e)
            rows.append(torch.cat([
                t, torch.full((n_max - e.n_words, 2), fill, dtype=t.dtype)
            ]))
        return torch.stack(rows)

    exist_gold = pad(lambda e: e.exist, 0)
    slot_mask = word_mask[:, :, None].expand_as(exist_gold)
    loss = nn.functional.binary_cross_entropy_with_logits(
        out["exist"][slot_mask], exist_gold[slot_mask]
    )

    def ce(logits, gold):
        flat_logits = logits.reshape(-1, logits.shape[-1])
        flat_gold = gold.reshape(-1)
        if (flat_gold >= 0).any():
            return nn.functional.cross_entropy(
                flat_logits, flat_gold, ignore_index=-1
            )
        return logits.sum() * 0.0

    loss = loss + ce(out["deprel"], pad(lambda e: e.deprel, -1))
    loss = loss + ce(out["word_order"], pad(lambda e: e.word_order, -1))
    for col in MORPH_COLUMNS:
        loss = loss + ce(out[col], pad(lambda e: e.columns[col], -1))
    if not torch.isfinite(loss):
        raise RuntimeError(
            f"non-finite empty-node loss on batch of {len(batch)} "
            f"({[e.dataset_id for e in batch]})"
        )
    loss.backward()
    optimizer.step()
    return float(loss.detach())
