"""Joint mention detection and coreference linking over segments.

Words of the current sentence get a distribution over span-tag labels;
detected mentions are represented as the concatenation of their first
and last word embeddings, and an attention-style head scores each
mention against every earlier mention plus itself, self-reference
marking the first mention of an entity.  Representations of mentions
that have scrolled out of the window are retained (detached, capped) as
extra antecedent columns during document decoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch
from torch import nn

from . import spantags
from .conllu import Document, Entity, Mention, default_head
from .segments import Segment

DEFAULT_MEMORY_LIMIT = 200


@dataclass
class CorefTargets:
    """Gold structures attached to a Segment for training.

    Candidates list context mentions (earlier sentences still inside the
    window) followed by the current sentence's mentions in document
    order; rows (the mentions being classified) are the current ones.
    """

    tag_ids: list[int]
    candidate_spans: list[tuple[int, int]]  # (first, last) word-start subwords
    candidate_entities: list[str]
    num_context: int
    antecedents: list[int]  # per row, index into candidates (self allowed)


@dataclass
class SegmentPrediction:
    segment: Segment
    tag_probs: torch.Tensor  # [current words, labels]
    mentions: list[tuple[int, int]]  # document-position spans, sorted
    link_probs: Optional[torch.Tensor]  # [rows, memory + rows]


class CorefModel(nn.Module):
    variant = "coref"

    def __init__(self, encoder, label_cap: int = spantags.DEFAULT_CAP,
                 link_dim: Optional[int] = None, dropout: float = 0.1,
                 memory_limit: int = DEFAULT_MEMORY_LIMIT):
        super().__init__()
        self.encoder = encoder
        self.label_cap = label_cap
        self.num_labels = (label_cap + 1) ** 3
        self.memory_limit = memory_limit
        dim = encoder.dim
        self.link_dim = link_dim or dim
        self.tag_head = nn.Sequential(
            nn.Linear(dim, dim), nn.ReLU(), nn.Dropout(dropout),
            nn.Linear(dim, self.num_labels),
        )
        self.link_query = nn.Linear(2 * dim, self.link_dim)
        self.link_key = nn.Linear(2 * dim, self.link_dim)

    # -- encoding -----------------------------------------------------------

    def encode_batch(self, segments: Sequence[Segment]):
        length = max(len(s) for s in segments)
        ids = torch.zeros(len(segments), length, dtype=torch.long)
        mask = torch.zeros(len(segments), length, dtype=torch.bool)
        for i, seg in enumerate(segments):
            ids[i, : len(seg)] = torch.tensor(seg.subword_ids)
            mask[i, : len(seg)] = True
        encoded = self.encoder(ids, mask)
        return self.token_reprs(encoded), mask

    def token_reprs(self, encoded: torch.Tensor) -> torch.Tensor:
        """Hook for variants that reshape encoder output per token."""
        return encoded

    # -- heads --------------------------------------------------------------

    def tag_logits(self, reprs: torch.Tensor, segment: Segment) -> torch.Tensor:
        subs = segment.current_word_subwords()
        return self.tag_head(reprs[subs])

    def mention_reprs(self, reprs: torch.Tensor,
                      spans: Sequence[tuple[int, int]]) -> torch.Tensor:
        if not spans:
            return reprs.new_zeros((0, 2 * reprs.shape[-1]))
        first = torch.tensor([s for s, _ in spans])
        last = torch.tensor([e for _, e in spans])
        return torch.cat([reprs[first], reprs[last]], dim=-1)

    def link_logits(self, mention_reprs: torch.Tensor,
                    memory_reprs: Optional[torch.Tensor] = None,
                    rows_from: int = 0) -> torch.Tensor:
        """Scores of rows (mentions rows_from..) against memory columns
        followed by all mention columns; later-mention columns masked."""
        m = mention_reprs.shape[0]
        memory = 0 if memory_reprs is None else memory_reprs.shape[0]
        keys_src = (mention_reprs if memory == 0
                    else torch.cat([memory_reprs, mention_reprs], dim=0))
        queries = self.link_query(mention_reprs[rows_from:])
        keys = self.link_key(keys_src)
        logits = queries @ keys.T / self.link_dim**0.5
        rows = m - rows_from
        col = torch.arange(memory + m)[None, :]
        limit = (memory + rows_from + torch.arange(rows))[:, None]
        return logits.masked_fill(col > limit, float("-inf"))

    # -- public prediction ops ----------------------------------------------

    def predict_tags(self, segment: Segment) -> torch.Tensor:
        """Label distribution at every word of the current sentence."""
        self.eval()
        with torch.no_grad():
            reprs, _ = self.encode_batch([segment])
            return torch.softmax(self.tag_logits(reprs[0], segment), dim=-1)

    def link_mentions(self, mention_reprs: torch.Tensor,
                      memory_reprs: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Row-stochastic antecedent scores; a lone mention self-refers
        with probability one."""
        self.eval()
        with torch.no_grad():
            logits = self.link_logits(mention_reprs, memory_reprs)
            return torch.softmax(logits, dim=-1)

    def predict_segment(self, segment: Segment) -> SegmentPrediction:
        """Decode one window in isolation: tags, mention spans of the
        current sentence, and their antecedent distribution."""
        self.eval()
        with torch.no_grad():
            reprs, _ = self.encode_batch([segment])
            row = reprs[0]
            tag_probs = torch.softmax(self.tag_logits(row, segment), dim=-1)
            spans = decode_segment_spans(
                segment, tag_probs.argmax(dim=-1).tolist(), self.label_cap
            )
            pos_to_sub = segment.position_to_subword()
            subs = [(pos_to_sub[s], pos_to_sub[e]) for s, e in spans]
            link = None
            if subs:
                reps = self.mention_reprs(row, subs)
                link = torch.softmax(self.link_logits(reps), dim=-1)
        return SegmentPrediction(segment=segment, tag_probs=tag_probs,
                                 mentions=spans, link_probs=link)

    # -- loss ----------------------------------------------------------------

    def segment_loss(self, reprs: torch.Tensor, segment: Segment) -> torch.Tensor:
        targets: CorefTargets = segment.targets
        logits = self.tag_logits(reprs, segment)
        loss = nn.functional.cross_entropy(
            logits, torch.tensor(targets.tag_ids)
        ) if targets.tag_ids else reprs.sum() * 0.0
        if targets.antecedents:
            reps = self.mention_reprs(reprs, targets.candidate_spans)
            link = self.link_logits(reps, rows_from=targets.num_context)
            loss = loss + nn.functional.cross_entropy(
                link, torch.tensor(targets.antecedents)
            )
        return loss


def training_step(model: CorefModel, batch: Sequence[Segment], optimizer) -> float:
    """One optimizer step over a batch of segments with attached targets."""
    model.train()
    optimizer.zero_grad()
    reprs, _ = model.encode_batch(batch)
    losses = [model.segment_loss(reprs[i], seg) for i, seg in enumerate(batch)]
    loss = torch.stack(losses).mean()
    if not torch.isfinite(loss):
        raise RuntimeError(
            f"non-finite loss {loss.item()} on batch of {len(batch)} segments "
            f"(doc ids: {[s.doc_id for s in batch]})"
        )
    loss.backward()
    optimizer.step()
    return float(loss.detach())


# ---------------------------------------------------------------------------
# Target construction


def mention_sentence(doc: Document, mention: Mention) -> Optional[int]:
    si = doc.sentence_of(mention.start)
    return si if doc.sentence_of(mention.end) == si else None


def make_coref_targets(doc: Document, segments: list[Segment],
                       cap: int = spantags.DEFAULT_CAP) -> int:
    """Attach CorefTargets to each segment; returns the number of gold
    mentions not representable (cross-sentence or crossing spans)."""
    offsets = doc.token_offsets()
    skipped = 0
    by_sentence: dict[int, list[tuple[Mention, str]]] = {}
    for ent in doc.entities:
        for m in ent.mentions:
            si = mention_sentence(doc, m)
            if si is None:
                skipped += 1
                continue
            by_sentence.setdefault(si, []).append((m, ent.id))

    # Tag-encodable mentions per sentence, already sorted document order.
    encodable: dict[int, list[tuple[tuple[int, int], str, int]]] = {}
    tag_ids_by_sentence: dict[int, list[int]] = {}
    for si, pairs in by_sentence.items():
        base = offsets[si]
        n_words = len(doc.sentences[si].tokens)
        pairs.sort(key=lambda p: p[0].sort_key())
        local = [(m.start - base + 1, m.end - base + 1) for m, _ in pairs]
        # Duplicate local spans (distinct entities sharing a span) cannot be
        # told apart by tags; keep the first.
        spans, kept = [], []
        seen = set()
        for idx, span in enumerate(local):
            if span in seen:
                skipped += 1
                continue
            seen.add(span)
            spans.append(span)
            kept.append(idx)
        tags, report = spantags.encode_spans(n_words, spans, cap)
        skipped += len(report.dropped)
        dropped = set(report.dropped)
        entries = []
        for idx, span in zip(kept, spans):
            if span in dropped:
                continue
            m, eid = pairs[idx]
            entries.append(((m.start, m.end), eid, si))
        encodable[si] = entries
        tag_ids_by_sentence[si] = [spantags.tag_to_id(t, cap) for t in tags]

    for segment in segments:
        si = segment.sentence_index
        n_words = len(doc.sentences[si].tokens)
        tag_ids = tag_ids_by_sentence.get(
            si, [spantags.tag_to_id(spantags.EMPTY_TAG, cap)] * n_words
        )
        pos_to_sub = segment.position_to_subword()
        context = []
        for sj in range(si):
            for entry in encodable.get(sj, []):
                (s, e), eid, _ = entry
                if s in pos_to_sub and e in pos_to_sub:
                    context.append(entry)
        context.sort(key=lambda entry: (entry[0][0], -entry[0][1]))
        spans_sub = []
        usable = []
        num_context = 0
        for is_context, entries in ((True, context), (False, encodable.get(si, []))):
            for (s, e), eid, _ in entries:
                if s in pos_to_sub and e in pos_to_sub:
                    spans_sub.append((pos_to_sub[s], pos_to_sub[e]))
                    usable.append(((s, e), eid))
                    num_context += is_context
        antecedents = []
        for r in range(num_context, len(usable)):
            eid = usable[r][1]
            target = r
            for c in range(r - 1, -1, -1):
                if usable[c][1] == eid:
                    target = c
                    break
            antecedents.append(target)
        # Words may be truncated from an overlong sentence; trim targets.
        n_current = len(segment.current_word_subwords())
        segment.targets = CorefTargets(
            tag_ids=tag_ids[:n_current],
            candidate_spans=spans_sub,
            candidate_entities=[eid for _, eid in usable],
            num_context=num_context,
            antecedents=antecedents,
        )
    return skipped


def decode_segment_spans(segment: Segment, tag_ids: list[int],
                         cap: int = spantags.DEFAULT_CAP) -> list[tuple[int, int]]:
    """Argmax tag ids of the current sentence to document-position spans."""
    tags = [spantags.tag_from_id(i, cap) for i in tag_ids]
    local = spantags.decode_tags(tags)
    positions = segment.current_word_positions()
    spans = [(positions[s - 1], positions[e - 1]) for s, e in local]
    return sorted(spans, key=lambda span: (span[0], -span[1]))


# ---------------------------------------------------------------------------
# Cluster decoding


class UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def decode_clusters(link_scores: torch.Tensor,
                    mentions: list[Mention]) -> list[Entity]:
    """Join each mention to its argmax antecedent; diagonal argmax seeds
    a new entity.  Entities are numbered by first-mention order and
    singletons are kept."""
    uf = UnionFind()
    for row in range(len(mentions)):
        col = int(link_scores[row, : row + 1].argmax())
        uf.union(row, col)
    groups: dict[int, list[int]] = {}
    for i in range(len(mentions)):
        groups.setdefault(uf.find(i), []).append(i)
    entities = []
    for root in sorted(groups, key=lambda r: min(groups[r])):
        eid = f"e{len(entities) + 1}"
        ms = []
        for i in sorted(groups[root]):
            m = mentions[i]
            ms.append(Mention(start=m.start, end=m.end, head=m.head,
                              entity_id=eid, open_payload=""))
        entities.append(Entity(id=eid, mentions=ms))
    return entities


def spans_to_mentions(doc: Document, spans: list[tuple[int, int]]) -> list[Mention]:
    """Document-position spans to Mention objects with recomputed heads."""
    tokens = doc.tokens()
    keys = []
    id_to_pos = {}
    sentences_of = []
    for si, sent in enumerate(doc.sentences):
        for tok in sent.tokens:
            id_to_pos[(si, tok.id)] = len(sentences_of)
            sentences_of.append(si)
    mentions = []
    for s, e in sorted(spans, key=lambda span: (span[0], -span[1])):
        head = default_head(list(range(s, e + 1)), tokens, id_to_pos, sentences_of)
        mentions.append(Mention(start=s, end=e, head=head, entity_id="?"))
    return mentions
