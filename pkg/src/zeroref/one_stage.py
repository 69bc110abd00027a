"""One-stage variant: empty nodes predicted jointly with coreference.

Encoder embeddings pass through a dense(4D)-ReLU-dropout-dense(3D)
projection split into three D-sized embeddings: the token representation
feeding the mention and linking heads, and two empty-node candidates per
word.  A shared dense-ReLU-dropout-classifier maps each candidate to
NONE or the dependency relation of a zero mention headed by that word.
Zero mentions are represented by repeating the candidate embedding twice
and take part in linking like any other mention, ordered immediately
after their anchor word (slot 0 first).

Only empty nodes that are themselves coreference mentions are predicted,
and only their head and relation; emitted nodes sit right after their
head word with bare morphology, which leaves head-match scoring
unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from torch import nn

from . import spantags
from .conllu import Document, EmptyNodeRecord, Mention, Token, insert_empty_nodes, strip_empty_nodes
from .coref_model import CorefModel, CorefTargets
from .empty_node_model import LabelVocab
from .segments import Segment

NONE_ID = 0  # candidate class 0 means "no empty node here"


@dataclass(frozen=True)
class SurfaceCandidate:
    first_subword: int
    last_subword: int


@dataclass(frozen=True)
class ZeroCandidate:
    word_subword: int  # word-start subword of the anchor (head) word
    slot: int


@dataclass
class JointTargets(CorefTargets):
    # Per current-sentence word: gold class for each of the two slots.
    candidate_ids: list[list[int]] = None  # type: ignore[assignment]


class OneStageModel(CorefModel):
    variant = "one_stage"

    def __init__(self, encoder, deprels: LabelVocab,
                 label_cap: int = spantags.DEFAULT_CAP,
                 link_dim: Optional[int] = None, dropout: float = 0.1,
                 memory_limit: int = 200):
        super().__init__(encoder, label_cap=label_cap, link_dim=link_dim,
                         dropout=dropout, memory_limit=memory_limit)
        self.deprels = deprels
        dim = encoder.dim
        self.split = nn.Sequential(
            nn.Linear(dim, 4 * dim), nn.ReLU(), nn.Dropout(dropout),
            nn.Linear(4 * dim, 3 * dim),
        )
        self.candidate_head = nn.Sequential(
            nn.Linear(dim, 4 * dim), nn.ReLU(), nn.Dropout(dropout),
            nn.Linear(4 * dim, len(deprels) + 1),
        )
        self._splits: Optional[torch.Tensor] = None

    # The base class consumes token_reprs(); stash the full split so the
    # candidate embeddings from the same forward pass stay available.
    def token_reprs(self, encoded: torch.Tensor) -> torch.Tensor:
        self._splits = self.split(encoded)
        return self._splits[..., : self.encoder.dim]

    def candidate_embeddings(self) -> tuple[torch.Tensor, torch.Tensor]:
        dim = self.encoder.dim
        return (self._splits[..., dim: 2 * dim],
                self._splits[..., 2 * dim:])

    def candidate_logits(self, cand0: torch.Tensor,
                         cand1: torch.Tensor) -> torch.Tensor:
        stacked = torch.stack([cand0, cand1], dim=-2)  # [..., 2, D]
        return self.candidate_head(stacked)

    def candidate_reprs(self, reprs: torch.Tensor, cand0: torch.Tensor,
                        cand1: torch.Tensor,
                        candidates: Sequence[object]) -> torch.Tensor:
        """Mention representations for a mixed candidate list."""
        rows = []
        for cand in candidates:
            if isinstance(cand, SurfaceCandidate):
                rows.append(torch.cat([
                    reprs[cand.first_subword], reprs[cand.last_subword]
                ]))
            else:
                emb = (cand0 if cand.slot == 0 else cand1)[cand.word_subword]
                rows.append(torch.cat([emb, emb]))
        if not rows:
            return reprs.new_zeros((0, 2 * reprs.shape[-1]))
        return torch.stack(rows)

    def segment_loss(self, reprs: torch.Tensor, segment: Segment) -> torch.Tensor:
        # reprs here are token representations; the matching candidate
        # embeddings come from the stashed split of the same batch row.
        raise NotImplementedError("use joint_training_step")

    def predict_joint(self, segment: Segment, force_none: bool = False):
        """Decode one window: tags, zero mentions from the candidate
        head, and antecedent scores over the merged mention list.  With
        ``force_none`` the candidate head is ignored, which must reduce
        the output to the plain mention/linking path."""
        from .coref_model import decode_segment_spans

        self.eval()
        with torch.no_grad():
            reprs, _ = self.encode_batch([segment])
            cand0, cand1 = self.candidate_embeddings()
            row, c0, c1 = reprs[0], cand0[0], cand1[0]
            tag_probs = torch.softmax(self.tag_logits(row, segment), dim=-1)
            spans = decode_segment_spans(
                segment, tag_probs.argmax(dim=-1).tolist(), self.label_cap
            )
            subs = segment.current_word_subwords()
            positions = segment.current_word_positions()
            cand_probs = torch.softmax(
                self.candidate_logits(c0[subs], c1[subs]), dim=-1
            )
            zeros: list[tuple[int, int, str]] = []  # (anchor doc pos, slot, deprel)
            if not force_none:
                best = cand_probs.argmax(dim=-1)  # [n, 2]
                for w in range(len(subs)):
                    for slot in range(2):
                        label = int(best[w, slot])
                        if label != NONE_ID:
                            zeros.append((positions[w], slot,
                                          self.deprels.labels[label - 1]))
            pos_to_sub = segment.position_to_subword()
            merged: list[tuple[tuple, object]] = []
            for s, e in spans:
                merged.append((surface_sort_key(s, e),
                               SurfaceCandidate(pos_to_sub[s], pos_to_sub[e])))
            for anchor_pos, slot, deprel in zeros:
                merged.append((zero_mention_sort_key(anchor_pos, slot),
                               ZeroCandidate(pos_to_sub[anchor_pos], slot)))
            merged.sort(key=lambda item: item[0])
            candidates = [c for _, c in merged]
            link = None
            if candidates:
                reps = self.candidate_reprs(row, c0, c1, candidates)
                link = torch.softmax(self.link_logits(reps), dim=-1)
        return tag_probs, spans, zeros, merged, link


def zero_mention_sort_key(anchor_position: int, slot: int) -> tuple:
    """Zero mentions order right after their anchor word."""
    return (anchor_position, 1, slot)


def surface_sort_key(start: int, end: int) -> tuple:
    return (start, 0, -end)


@dataclass
class GoldZeroMention:
    sentence_index: int
    anchor_word: int  # 1-based surface index of the dependency head
    slot: int
    deprel: str
    entity_id: str


def one_stage_structures(doc: Document):
    """Split a gold document into the stripped surface document, the
    surface-headed mentions (for tags), and gold zero mentions (empty
    nodes that head a mention).  Nodes headed by another empty node are
    uncovered and counted as dropped."""
    tokens = doc.tokens()
    result = strip_empty_nodes(doc)
    stripped = result.document
    offsets = doc.token_offsets()
    surface_mentions: list[tuple[tuple[int, int], str, int]] = []
    zero_raw: list[tuple[int, int, int, str, str]] = []
    dropped = 0
    for ent in doc.entities:
        for m in ent.mentions:
            head_tok = tokens[m.head]
            si = doc.sentence_of(m.head)
            if head_tok.is_empty:
                if not head_tok.head.isdigit() or head_tok.head == "0":
                    dropped += 1
                    continue
                zero_raw.append((si, int(head_tok.head), head_tok.anchor,
                                 head_tok.sub_index, ent.id, head_tok.deprel))
            else:
                surviving = [
                    p for p in range(m.start, m.end + 1)
                    if not tokens[p].is_empty
                ]
                if not surviving:
                    dropped += 1
                    continue
                start = stripped.position_of(doc.position_key(surviving[0]))
                end = stripped.position_of(doc.position_key(surviving[-1]))
                s_si = doc.sentence_of(surviving[0])
                surface_mentions.append(((start, end), ent.id, s_si))
    zero_mentions: list[GoldZeroMention] = []
    grouped: dict[tuple[int, int], list] = {}
    for si, head, order_anchor, order_sub, eid, deprel in zero_raw:
        grouped.setdefault((si, head), []).append(
            (order_anchor, order_sub, eid, deprel)
        )
    for (si, head), entries in sorted(grouped.items()):
        entries.sort()
        if len(entries) > 2:
            dropped += len(entries) - 2
            entries = entries[:2]
        for slot, (_, _, eid, deprel) in enumerate(entries):
            zero_mentions.append(GoldZeroMention(
                sentence_index=si, anchor_word=head, slot=slot,
                deprel=deprel, entity_id=eid,
            ))
    return stripped, surface_mentions, zero_mentions, dropped


def make_joint_targets(doc: Document, segments: list[Segment],
                       deprels: LabelVocab,
                       cap: int = spantags.DEFAULT_CAP) -> int:
    """Attach JointTargets to segments built over the stripped document.

    ``doc`` is the original gold document with empty nodes; ``segments``
    must come from its stripped counterpart."""
    stripped, surface_mentions, zero_mentions, dropped = one_stage_structures(doc)
    offsets = stripped.token_offsets()

    tag_ids_by_sentence: dict[int, list[int]] = {}
    encodable: dict[int, list[tuple[tuple[int, int], str]]] = {}
    by_sentence: dict[int, list[tuple[tuple[int, int], str]]] = {}
    for (span, eid, si) in surface_mentions:
        s_end = stripped.sentence_of(span[1])
        if s_end != si:
            dropped += 1
            continue
        by_sentence.setdefault(si, []).append((span, eid))
    for si, pairs in by_sentence.items():
        base = offsets[si]
        n_words = len(stripped.sentences[si].tokens)
        pairs.sort(key=lambda p: surface_sort_key(*p[0]))
        seen = set()
        spans, kept = [], []
        for idx, (span, eid) in enumerate(pairs):
            local = (span[0] - base + 1, span[1] - base + 1)
            if local in seen:
                dropped += 1
                continue
            seen.add(local)
            spans.append(local)
            kept.append(idx)
        tags, report = spantags.encode_spans(n_words, spans, cap)
        dropped += len(report.dropped)
        bad = set(report.dropped)
        encodable[si] = [
            (pairs[idx][0], pairs[idx][1])
            for idx, local in zip(kept, spans) if local not in bad
        ]
        tag_ids_by_sentence[si] = [spantags.tag_to_id(t, cap) for t in tags]

    zeros_by_sentence: dict[int, list[GoldZeroMention]] = {}
    for z in zero_mentions:
        zeros_by_sentence.setdefault(z.sentence_index, []).append(z)

    def merged(si: int):
        """(sort key, candidate descriptor, entity) for sentence si."""
        base = offsets[si]
        out = []
        for span, eid in encodable.get(si, []):
            out.append((surface_sort_key(*span), ("surface", span), eid))
        for z in zeros_by_sentence.get(si, []):
            anchor_pos = base + z.anchor_word - 1
            out.append((zero_mention_sort_key(anchor_pos, z.slot),
                        ("zero", anchor_pos, z.slot), z.entity_id))
        out.sort(key=lambda item: item[0])
        return out

    for segment in segments:
        si = segment.sentence_index
        n_words = len(stripped.sentences[si].tokens)
        empty_id = spantags.tag_to_id(spantags.EMPTY_TAG, cap)
        tag_ids = tag_ids_by_sentence.get(si, [empty_id] * n_words)
        pos_to_sub = segment.position_to_subword()

        candidate_ids = [[NONE_ID, NONE_ID] for _ in range(n_words)]
        for z in zeros_by_sentence.get(si, []):
            candidate_ids[z.anchor_word - 1][z.slot] = deprels.get(z.deprel) + 1

        def resolvable(descriptor) -> bool:
            if descriptor[0] == "surface":
                (s, e) = descriptor[1]
                return s in pos_to_sub and e in pos_to_sub
            return descriptor[1] in pos_to_sub

        def to_candidate(descriptor):
            if descriptor[0] == "surface":
                (s, e) = descriptor[1]
                return SurfaceCandidate(pos_to_sub[s], pos_to_sub[e])
            return ZeroCandidate(pos_to_sub[descriptor[1]], descriptor[2])

        usable: list[tuple[object, str]] = []
        num_context = 0
        for sj in range(si):
            for _, descriptor, eid in merged(sj):
                if resolvable(descriptor):
                    usable.append((to_candidate(descriptor), eid))
                    num_context += 1
        for _, descriptor, eid in merged(si):
            if resolvable(descriptor):
                usable.append((to_candidate(descriptor), eid))

        antecedents = []
        for r in range(num_context, len(usable)):
            eid = usable[r][1]
            target = r
            for c in range(r - 1, -1, -1):
                if usable[c][1] == eid:
                    target = c
                    break
            antecedents.append(target)
        n_current = len(segment.current_word_subwords())
        segment.targets = JointTargets(
            tag_ids=tag_ids[:n_current],
            candidate_spans=[c for c, _ in usable],
            candidate_entities=[eid for _, eid in usable],
            num_context=num_context,
            antecedents=antecedents,
            candidate_ids=candidate_ids[:n_current],
        )
    return dropped


def joint_training_step(model: OneStageModel, batch: Sequence[Segment],
                        optimizer) -> float:
    """Tag CE + candidate CE (NONE vs deprel) + antecedent CE."""
    model.train()
    optimizer.zero_grad()
    reprs, _ = model.encode_batch(batch)
    cand0, cand1 = model.candidate_embeddings()
    losses = []
    for i, segment in enumerate(batch):
        targets: JointTargets = segment.targets
        loss = reprs.sum() * 0.0
        logits = model.tag_logits(reprs[i], segment)
        if targets.tag_ids:
            loss = loss + nn.functional.cross_entropy(
                logits, torch.tensor(targets.tag_ids)
            )
        subs = segment.current_word_subwords()
        if subs:
            cand_logits = model.candidate_logits(
                cand0[i, subs], cand1[i, subs]
            )
            loss = loss + nn.functional.cross_entropy(
                cand_logits.reshape(-1, cand_logits.shape[-1]),
                torch.tensor(targets.candidate_ids).reshape(-1),
            )
        if targets.antecedents:
            reps = model.candidate_reprs(
                reprs[i], cand0[i], cand1[i], targets.candidate_spans
            )
            link = model.link_logits(reps, rows_from=targets.num_context)
            loss = loss + nn.functional.cross_entropy(
                link, torch.tensor(targets.antecedents)
            )
        losses.append(loss)
    total = torch.stack(losses).mean()
    if not torch.isfinite(total):
        raise RuntimeError(
            f"non-finite one-stage loss on batch of {len(batch)} segments"
        )
    total.backward()
    optimizer.step()
    return float(total.detach())


@dataclass
class PredictedZeroMention:
    sentence_index: int
    anchor_word: int  # 1-based surface index within the sentence
    slot: int
    deprel: str


def emit_empty_nodes(doc: Document,
                     zero_mentions: Sequence[PredictedZeroMention]) -> Document:
    """Materialize predicted zero mentions as empty-node tokens placed
    immediately after their anchor word with bare morphology."""
    records = []
    counters: dict[tuple[int, int], int] = {}
    for z in sorted(zero_mentions,
                    key=lambda z: (z.sentence_index, z.anchor_word, z.slot)):
        key = (z.sentence_index, z.anchor_word)
        counters[key] = counters.get(key, 0) + 1
        sub = counters[key]
        records.append(EmptyNodeRecord(
            sentence_index=z.sentence_index, anchor=z.anchor_word,
            slot=sub - 1, head=str(z.anchor_word), deprel=z.deprel,
            token=Token(
                id=f"{z.anchor_word}.{sub}", form="_", lemma="_", upos="_",
                xpos="_", feats="_", head=str(z.anchor_word), deprel=z.deprel,
            ),
        ))
    return insert_empty_nodes(doc, records)
