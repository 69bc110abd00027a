"""Document-level decoding for single models and ensembles.

Documents are decoded one segment at a time in order.  Mentions decoded
in earlier segments become antecedent candidates for later ones: while
their words are still inside the current window their representations
are recomputed from the fresh embeddings; once they scroll out, the
detached representations saved at decode time serve as a memory, capped
at the most recent 200 mentions.  Ensembles average the post-softmax tag,
candidate, and antecedent-row distributions across members and decode
once.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch

from .conllu import Document, Entity, Mention, default_head
from .coref_model import CorefModel, UnionFind, decode_segment_spans
from .empty_node_model import EmptyNodeModel
from .one_stage import (
    NONE_ID,
    OneStageModel,
    PredictedZeroMention,
    SurfaceCandidate,
    ZeroCandidate,
    emit_empty_nodes,
    surface_sort_key,
    zero_mention_sort_key,
)
from .segments import build_segments


class ModelMismatchError(ValueError):
    pass


def ensure_compatible(models: Sequence[CorefModel]) -> None:
    first = models[0]
    for m in models[1:]:
        if m.variant != first.variant:
            raise ModelMismatchError("ensemble members have different variants")
        if m.num_labels != first.num_labels or m.label_cap != first.label_cap:
            raise ModelMismatchError("ensemble members have different tag vocabularies")
        if getattr(m, "deprels", None) is not None or \
                getattr(first, "deprels", None) is not None:
            a = getattr(m, "deprels", None)
            b = getattr(first, "deprels", None)
            if a is None or b is None or a.labels != b.labels:
                raise ModelMismatchError(
                    "ensemble members have different relation vocabularies"
                )
        if m.encoder.hparams.get("vocab_size") != first.encoder.hparams.get("vocab_size"):
            raise ModelMismatchError("ensemble members have different subword vocabularies")


@dataclass
class _Tracked:
    kind: str                      # "surface" | "zero"
    span: tuple[int, int]          # input-document positions (zero: anchor, anchor)
    slot: int = 0
    deprel: str = ""
    sentence_index: int = 0
    sort_key: tuple = ()
    reprs: list[torch.Tensor] = field(default_factory=list)  # one per model


def _mean(stack: list[torch.Tensor]) -> torch.Tensor:
    return stack[0] if len(stack) == 1 else torch.stack(stack).mean(dim=0)


@dataclass
class EnsembleSegmentPrediction:
    tag_probs: torch.Tensor
    mentions: list[tuple[int, int]]
    zero_mentions: list[tuple[int, int, str]]  # (anchor position, slot, deprel)
    link_probs: Optional[torch.Tensor]


def predict_segment_ensemble(models: Sequence[CorefModel],
                             segment) -> EnsembleSegmentPrediction:
    """Average members' post-softmax tag, candidate, and antecedent-row
    distributions, then decode once.  A one-member ensemble reproduces
    that member's output exactly."""
    ensure_compatible(models)
    one_stage = isinstance(models[0], OneStageModel)
    for model in models:
        model.eval()
    with torch.no_grad():
        rows, cands = [], []
        for model in models:
            reprs, _ = model.encode_batch([segment])
            rows.append(reprs[0])
            if one_stage:
                c0, c1 = model.candidate_embeddings()
                cands.append((c0[0], c1[0]))
        tag_probs = _mean([
            torch.softmax(model.tag_logits(rows[i], segment), dim=-1)
            for i, model in enumerate(models)
        ])
        spans = decode_segment_spans(
            segment, tag_probs.argmax(dim=-1).tolist(), models[0].label_cap
        )
        subs = segment.current_word_subwords()
        positions = segment.current_word_positions()
        pos_to_sub = segment.position_to_subword()
        zeros: list[tuple[int, int, str]] = []
        if one_stage and subs:
            cand_probs = _mean([
                torch.softmax(model.candidate_logits(cands[i][0][subs],
                                                     cands[i][1][subs]), dim=-1)
                for i, model in enumerate(models)
            ])
            best = cand_probs.argmax(dim=-1)
            for w in range(len(subs)):
                for slot in range(2):
                    label = int(best[w, slot])
                    if label != NONE_ID:
                        zeros.append((positions[w], slot,
                                      models[0].deprels.labels[label - 1]))
        link = None
        if one_stage:
            merged = [(surface_sort_key(s, e),
                       SurfaceCandidate(pos_to_sub[s], pos_to_sub[e]))
                      for s, e in spans]
            merged += [(zero_mention_sort_key(pos, slot),
                        ZeroCandidate(pos_to_sub[pos], slot))
                       for pos, slot, _ in zeros]
            merged.sort(key=lambda item: item[0])
            candidates = [c for _, c in merged]
            if candidates:
                link = _mean([
                    torch.softmax(model.link_logits(model.candidate_reprs(
                        rows[i], cands[i][0], cands[i][1], candidates
                    )), dim=-1)
                    for i, model in enumerate(models)
                ])
        elif spans:
            subs_pairs = [(pos_to_sub[s], pos_to_sub[e]) for s, e in spans]
            link = _mean([
                torch.softmax(model.link_logits(
                    model.mention_reprs(rows[i], subs_pairs)
                ), dim=-1)
                for i, model in enumerate(models)
            ])
    return EnsembleSegmentPrediction(tag_probs=tag_probs, mentions=spans,
                                     zero_mentions=zeros, link_probs=link)


def predict_document(models: Sequence[CorefModel], doc: Document, tokenizer,
                     max_len: int = 2560, lookahead: int = 50) -> Document:
    """Decode coreference (and, for the one-stage variant, zero
    mentions) for one document; returns an annotated copy."""
    ensure_compatible(models)
    one_stage = isinstance(models[0], OneStageModel)
    segments = build_segments(doc, tokenizer, max_len, lookahead)
    memory_limit = models[0].memory_limit
    tracked: list[_Tracked] = []
    uf = UnionFind()

    for model in models:
        model.eval()
    with torch.no_grad():
        for segment in segments:
            rows_per_model = []
            cands_per_model = []
            for model in models:
                reprs, _ = model.encode_batch([segment])
                rows_per_model.append(reprs[0])
                if one_stage:
                    c0, c1 = model.candidate_embeddings()
                    cands_per_model.append((c0[0], c1[0]))

            subs = segment.current_word_subwords()
            positions = segment.current_word_positions()
            tag_probs = _mean([
                torch.softmax(model.tag_logits(rows_per_model[i], segment), dim=-1)
                for i, model in enumerate(models)
            ])
            spans = decode_segment_spans(
                segment, tag_probs.argmax(dim=-1).tolist(), models[0].label_cap
            )
            current: list[_Tracked] = [
                _Tracked(kind="surface", span=span,
                         sentence_index=segment.sentence_index,
                         sort_key=surface_sort_key(*span))
                for span in spans
            ]
            if one_stage and subs:
                cand_probs = _mean([
                    torch.softmax(
                        model.candidate_logits(cands_per_model[i][0][subs],
                                               cands_per_model[i][1][subs]),
                        dim=-1,
                    )
                    for i, model in enumerate(models)
                ])
                best = cand_probs.argmax(dim=-1)
                for w in range(len(subs)):
                    for slot in range(2):
                        label = int(best[w, slot])
                        if label != NONE_ID:
                            anchor = positions[w]
                            current.append(_Tracked(
                                kind="zero", span=(anchor, anchor), slot=slot,
                                deprel=models[0].deprels.labels[label - 1],
                                sentence_index=segment.sentence_index,
                                sort_key=zero_mention_sort_key(anchor, slot),
                            ))
            current.sort(key=lambda t: t.sort_key)

            pos_to_sub = segment.position_to_subword()

            def in_window(t: _Tracked) -> bool:
                if t.kind == "surface":
                    return t.span[0] in pos_to_sub and t.span[1] in pos_to_sub
                return t.span[0] in pos_to_sub

            def candidate_of(t: _Tracked):
                if t.kind == "surface":
                    return SurfaceCandidate(pos_to_sub[t.span[0]],
                                            pos_to_sub[t.span[1]])
                return ZeroCandidate(pos_to_sub[t.span[0]], t.slot)

            def reprs_of(model_index: int, items: list[_Tracked]) -> torch.Tensor:
                model = models[model_index]
                row = rows_per_model[model_index]
                if one_stage:
                    c0, c1 = cands_per_model[model_index]
                    return model.candidate_reprs(
                        row, c0, c1, [candidate_of(t) for t in items]
                    )
                return model.mention_reprs(
                    row, [(pos_to_sub[t.span[0]], pos_to_sub[t.span[1]])
                          for t in items]
                )

            fresh = [(i, t) for i, t in enumerate(tracked) if in_window(t)]
            stale = [(i, t) for i, t in enumerate(tracked)
                     if not in_window(t)][-memory_limit:]
            columns = sorted(stale + fresh, key=lambda item: item[1].sort_key)

            if current:
                link_probs = []
                for i in range(len(models)):
                    fresh_reprs = reprs_of(i, [t for _, t in columns
                                               if in_window(t)])
                    col_reprs = []
                    next_fresh = 0
                    for _, t in columns:
                        if in_window(t):
                            col_reprs.append(fresh_reprs[next_fresh])
                            next_fresh += 1
                        else:
                            col_reprs.append(t.reprs[i])
                    cur_reprs = reprs_of(i, current)
                    memory = (torch.stack(col_reprs) if col_reprs
                              else cur_reprs.new_zeros((0, cur_reprs.shape[-1])))
                    logits = models[i].link_logits(cur_reprs, memory_reprs=memory)
                    link_probs.append(torch.softmax(logits, dim=-1))
                    for k, t in enumerate(current):
                        t.reprs.append(cur_reprs[k].detach().clone())
                link = _mean(link_probs)
                base = len(tracked)
                offset = len(columns)
                for r in range(len(current)):
                    col = int(link[r, : offset + r + 1].argmax())
                    if col < offset:
                        uf.union(columns[col][0], base + r)
                    elif col - offset < r:
                        uf.union(base + col - offset, base + r)
                tracked.extend(current)

    return _assemble(doc, tracked, uf, one_stage)


def _assemble(doc: Document, tracked: list[_Tracked], uf: UnionFind,
              one_stage: bool) -> Document:
    out = copy.deepcopy(doc)
    out.entities = []
    if one_stage:
        zero_mentions = []
        offsets = doc.token_offsets()
        for t in tracked:
            if t.kind == "zero":
                local = t.span[0] - offsets[t.sentence_index] + 1
                zero_mentions.append(PredictedZeroMention(
                    sentence_index=t.sentence_index, anchor_word=local,
                    slot=t.slot, deprel=t.deprel,
                ))
        out = emit_empty_nodes(out, zero_mentions)

    # Translate tracked mentions into final-document coordinates.
    tokens = out.tokens()
    id_to_pos = {}
    sentences_of = []
    for si, sent in enumerate(out.sentences):
        for tok in sent.tokens:
            id_to_pos[(si, tok.id)] = len(sentences_of)
            sentences_of.append(si)
    zero_counters: dict[tuple[int, int], int] = {}

    def final_span(t: _Tracked) -> tuple[int, int, int]:
        if t.kind == "surface":
            start = out.position_of(doc.position_key(t.span[0]))
            end = out.position_of(doc.position_key(t.span[1]))
            head = default_head(list(range(start, end + 1)), tokens,
                                id_to_pos, sentences_of)
            return start, end, head
        offsets = doc.token_offsets()
        local = t.span[0] - offsets[t.sentence_index] + 1
        key = (t.sentence_index, local)
        zero_counters[key] = zero_counters.get(key, 0) + 1
        pos = out.position_of((t.sentence_index, f"{local}.{zero_counters[key]}"))
        return pos, pos, pos

    groups: dict[int, list[int]] = {}
    for i in range(len(tracked)):
        groups.setdefault(uf.find(i), []).append(i)
    entities = []
    for root in sorted(groups, key=lambda r: min(groups[r])):
        eid = f"e{len(entities) + 1}"
        mentions = []
        for i in groups[root]:
            start, end, head = final_span(tracked[i])
            mentions.append(Mention(start=start, end=end, head=head,
                                    entity_id=eid))
        mentions.sort(key=Mention.sort_key)
        entities.append(Entity(id=eid, mentions=mentions))
    out.entities = entities
    out.validate()
    return out


def run_two_stage(enode_model: Optional[EmptyNodeModel],
                  coref_models: Sequence[CorefModel], docs: list[Document],
                  tokenizer, enode_tokenizer=None, threshold: float = 0.5,
                  max_len: int = 2560, lookahead: int = 50) -> list[Document]:
    """Stage 1 inserts empty nodes, stage 2 annotates coreference."""
    from .empty_node_model import predict_empty_nodes

    out = []
    for doc in docs:
        staged = doc
        if enode_model is not None:
            staged = predict_empty_nodes(
                enode_model, doc, enode_tokenizer or tokenizer, threshold
            )
        out.append(predict_document(coref_models, staged, tokenizer,
                                    max_len, lookahead))
    return out
