"""CorefUD-style CoNLL-U reading and writing.

The object model is Document -> Sentence -> Token plus coreference
Entities made of Mentions.  Mentions address tokens by flat document
position (0-based over all tokens in file order, empty nodes included).
Entity annotations live in the MISC column as ``Entity=`` attributes
using bracket events: ``(payload`` opens a mention, ``eid)`` closes it,
``(payload)`` opens and closes a single-token mention.  The opening
payload is ``eid[-field-...]``; everything after the entity id is kept
verbatim so unknown sub-fields survive a round trip.  If the third
dash-field is an integer it names the mention head (1-based within the
span).

Serialization renders brackets from the mention objects, so the MISC
string stored on tokens never contains the Entity attribute itself,
only its position among the other MISC items.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional


class ConlluParseError(ValueError):
    """Malformed CoNLL-U input; carries the 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConlluSerializeError(ValueError):
    pass


_EMPTY_ID_RE = re.compile(r"^(\d+)\.(\d+)$")
_SURFACE_ID_RE = re.compile(r"^\d+$")
_RANGE_ID_RE = re.compile(r"^\d+-\d+$")


@dataclass
class Token:
    id: str
    form: str = "_"
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: str = "_"
    head: str = "_"
    deprel: str = "_"
    deps: str = "_"
    misc: str = "_"
    # Index among the MISC items where the Entity attribute sits (or is
    # inserted when the token acquires mentions); `misc` never holds it.
    entity_slot: int = 0

    @property
    def is_empty(self) -> bool:
        return "." in self.id

    @property
    def anchor(self) -> int:
        """For an empty node ``k.j``, the anchor k; for surface tokens, the id."""
        return int(self.id.split(".")[0])

    @property
    def sub_index(self) -> int:
        """For an empty node ``k.j``, j; 0 for surface tokens."""
        parts = self.id.split(".")
        return int(parts[1]) if len(parts) > 1 else 0

    def misc_items(self) -> list[str]:
        if self.misc == "_" or not self.misc:
            return []
        return self.misc.split("|")


@dataclass
class Mention:
    start: int
    end: int
    head: int
    entity_id: str
    # Verbatim opening-bracket payload (without parentheses); regenerated
    # for programmatically created mentions.
    open_payload: str = ""

    def sort_key(self) -> tuple[int, int, int]:
        return (self.start, -self.end, self.head)

    def __post_init__(self):
        if not (self.start <= self.head <= self.end):
            raise ValueError(
                f"mention head {self.head} outside span ({self.start}, {self.end})"
            )
        if not self.open_payload:
            self.open_payload = self.entity_id


@dataclass
class Entity:
    id: str
    mentions: list[Mention] = field(default_factory=list)


@dataclass
class Sentence:
    comments: list[str] = field(default_factory=list)
    tokens: list[Token] = field(default_factory=list)
    # Multiword-token lines carried verbatim, keyed by the surface id
    # they precede (range lines never carry entity annotations here).
    mwt_lines: dict[int, str] = field(default_factory=dict)

    def surface_tokens(self) -> list[Token]:
        return [t for t in self.tokens if not t.is_empty]


@dataclass
class Document:
    doc_id: str = ""
    sentences: list[Sentence] = field(default_factory=list)
    entities: list[Entity] = field(default_factory=list)
    dataset_id: str = ""
    language: str = ""

    def tokens(self) -> list[Token]:
        return [t for s in self.sentences for t in s.tokens]

    def token_offsets(self) -> list[int]:
        """Flat document position of each sentence's first token."""
        offsets, pos = [], 0
        for s in self.sentences:
            offsets.append(pos)
            pos += len(s.tokens)
        return offsets

    def sentence_of(self, position: int) -> int:
        offsets = self.token_offsets()
        for i in range(len(offsets) - 1, -1, -1):
            if position >= offsets[i]:
                return i
        raise IndexError(position)

    def position_key(self, position: int) -> tuple[int, str]:
        """Stable (sentence index, token id) key for a flat position."""
        sent = self.sentence_of(position)
        local = position - self.token_offsets()[sent]
        return (sent, self.sentences[sent].tokens[local].id)

    def position_of(self, key: tuple[int, str]) -> int:
        sent, tid = key
        base = self.token_offsets()[sent]
        for i, tok in enumerate(self.sentences[sent].tokens):
            if tok.id == tid:
                return base + i
        raise KeyError(key)

    def all_mentions(self) -> list[Mention]:
        out = [m for e in self.entities for m in e.mentions]
        out.sort(key=Mention.sort_key)
        return out

    def validate(self) -> None:
        n = len(self.tokens())
        for ent in self.entities:
            if not ent.mentions:
                raise ValueError(f"entity {ent.id} has no mentions")
            for m in ent.mentions:
                if not (0 <= m.start <= m.head <= m.end < n):
                    raise ValueError(
                        f"mention of {ent.id} out of range: ({m.start}, {m.end})"
                    )


def language_of(dataset_id: str) -> str:
    return dataset_id.split("_")[0] if dataset_id else ""


# ---------------------------------------------------------------------------
# Parsing


def _scan_entity_events(value: str, line_no: int) -> list[tuple[str, str]]:
    """Split an Entity attribute value into (kind, text) events.

    kind is "open", "close" or "single"; text is the payload (without
    parentheses) for opens/singles and the entity id for closes.
    """
    events = []
    i = 0
    n = len(value)
    while i < n:
        if value[i] == "(":
            j = i + 1
            while j < n and value[j] not in "()":
                j += 1
            payload = value[i + 1 : j]
            if not payload:
                raise ConlluParseError("empty entity bracket", line_no)
            if j < n and value[j] == ")":
                events.append(("single", payload))
                i = j + 1
            else:
                events.append(("open", payload))
                i = j
        elif value[i] == ")":
            raise ConlluParseError("entity close bracket without id", line_no)
        else:
            j = i
            while j < n and value[j] != ")":
                if value[j] == "(":
                    raise ConlluParseError(
                        f"malformed entity annotation {value!r}", line_no
                    )
                j += 1
            if j >= n:
                raise ConlluParseError(
                    f"unterminated entity close in {value!r}", line_no
                )
            events.append(("close", value[i:j]))
            i = j + 1
    return events


def _payload_head_index(payload: str) -> Optional[int]:
    fields = payload.split("-")
    if len(fields) >= 3 and fields[2].isdigit():
        return int(fields[2])
    return None


def default_head(doc_positions: list[int], tokens: list[Token],
                 id_to_pos: dict[tuple[int, str], int],
                 sentences_of: list[int]) -> int:
    """Head convention: first token whose dependency head lies outside the
    span; falls back to the span start."""
    span = set(doc_positions)
    for pos in doc_positions:
        tok = tokens[pos]
        head = tok.head
        if head in ("_", ""):
            return pos
        if head == "0":
            return pos
        key = (sentences_of[pos], head)
        head_pos = id_to_pos.get(key)
        if head_pos is None or head_pos not in span:
            return pos
    return doc_positions[0]


class _DocBuilder:
    def __init__(self, doc_id: str):
        self.doc = Document(doc_id=doc_id)
        self.open_stacks: dict[str, list[tuple[str, int, int]]] = {}
        self.mentions: list[Mention] = []
        self.entity_order: list[str] = []

    def add_event(self, kind: str, text: str, position: int, line_no: int) -> None:
        if kind == "open":
            eid = text.split("-")[0]
            stack = self.open_stacks.setdefault(eid, [])
            stack.append((text, position, line_no))
        elif kind == "close":
            stack = self.open_stacks.get(text)
            if not stack:
                raise ConlluParseError(
                    f"entity {text} closed without matching open", line_no
                )
            payload, start, _ = stack.pop()
            self._emit(payload, start, position, line_no)
        else:  # single
            self._emit(text, position, position, line_no)

    def _emit(self, payload: str, start: int, end: int, line_no: int) -> None:
        eid = payload.split("-")[0]
        if eid not in self.entity_order:
            self.entity_order.append(eid)
        self.mentions.append(
            Mention(start=start, end=end, head=start, entity_id=eid,
                    open_payload=payload)
        )
        # Head resolution is deferred until the document's tokens are final;
        # remember the source line for error reporting.
        self.mentions[-1]._line = line_no  # type: ignore[attr-defined]

    def finish(self) -> Document:
        for eid, stack in self.open_stacks.items():
            if stack:
                raise ConlluParseError(
                    f"entity {eid} still open at end of document "
                    f"(opened on line {stack[-1][2]})"
                )
        tokens = self.doc.tokens()
        sentences_of = []
        id_to_pos: dict[tuple[int, str], int] = {}
        for si, sent in enumerate(self.doc.sentences):
            for tok in sent.tokens:
                id_to_pos[(si, tok.id)] = len(sentences_of)
                sentences_of.append(si)
        by_entity: dict[str, Entity] = {}
        for m in self.mentions:
            line_no = getattr(m, "_line", None)
            head_idx = _payload_head_index(m.open_payload)
            span = list(range(m.start, m.end + 1))
            if head_idx is not None:
                if not (1 <= head_idx <= len(span)):
                    raise ConlluParseError(
                        f"mention head index {head_idx} of entity {m.entity_id} "
                        f"outside its {len(span)}-token span", line_no
                    )
                m.head = span[head_idx - 1]
            else:
                m.head = default_head(span, tokens, id_to_pos, sentences_of)
            by_entity.setdefault(m.entity_id, Entity(id=m.entity_id)).mentions.append(m)
        for eid in self.entity_order:
            ent = by_entity[eid]
            ent.mentions.sort(key=Mention.sort_key)
            self.doc.entities.append(ent)
        self.doc.entities.sort(key=lambda e: e.mentions[0].sort_key())
        self.doc.validate()
        return self.doc


def parse_conllu(text: str, dataset_id: str = "") -> list[Document]:
    """Parse CoNLL-U text into Documents.

    Documents are split on ``# newdoc`` comments; without one, the whole
    input forms a single document.
    """
    documents: list[Document] = []
    builder: Optional[_DocBuilder] = None
    sent: Optional[Sentence] = None
    position = 0
    expected_surface = 1
    expected_sub = 1
    last_anchor = -1
    pending_events: list[tuple[str, str, int, int]] = []

    def close_sentence(line_no: int) -> None:
        nonlocal sent, expected_surface, expected_sub, last_anchor, position
        if sent is None:
            return
        if not sent.tokens and not sent.comments:
            sent = None
            return
        if not sent.tokens:
            raise ConlluParseError("comments without token lines", line_no)
        builder.doc.sentences.append(sent)
        position += len(sent.tokens)
        sent = None
        expected_surface = 1
        expected_sub = 1
        last_anchor = -1

    def close_document() -> None:
        nonlocal builder, position, pending_events
        if builder is None:
            return
        for kind, text_, pos, line_no in pending_events:
            builder.add_event(kind, text_, pos, line_no)
        pending_events = []
        if builder.doc.sentences:
            builder.doc.dataset_id = dataset_id
            builder.doc.language = language_of(dataset_id)
            documents.append(builder.finish())
        builder = None
        position = 0

    lines = text.split("\n")
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            close_sentence(line_no)
            continue
        if line.startswith("#"):
            if line.startswith("# newdoc"):
                close_sentence(line_no)
                close_document()
                m = re.match(r"#\s*newdoc\s+id\s*=\s*(.*)$", line)
                builder = _DocBuilder(m.group(1).strip() if m else "")
            if builder is None:
                builder = _DocBuilder("")
            if sent is None:
                sent = Sentence()
            sent.comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(
                f"expected 10 tab-separated columns, got {len(cols)}", line_no
            )
        if builder is None:
            builder = _DocBuilder("")
        if sent is None:
            sent = Sentence()
        tid = cols[0]
        if _RANGE_ID_RE.match(tid):
            if "Entity=" in cols[9]:
                raise ConlluParseError(
                    "entity annotation on a multiword-token range line", line_no
                )
            sent.mwt_lines[int(tid.split("-")[0])] = line
            continue
        if _SURFACE_ID_RE.match(tid):
            if int(tid) != expected_surface:
                raise ConlluParseError(
                    f"surface id {tid} out of sequence (expected {expected_surface})",
                    line_no,
                )
            expected_surface += 1
            expected_sub = 1
            last_anchor = -1
        elif _EMPTY_ID_RE.match(tid):
            anchor, sub = (int(x) for x in tid.split("."))
            if anchor != expected_surface - 1:
                raise ConlluParseError(
                    f"empty node {tid} not anchored at preceding token "
                    f"{expected_surface - 1}", line_no
                )
            if anchor != last_anchor:
                expected_sub = 1
                last_anchor = anchor
            if sub != expected_sub:
                raise ConlluParseError(
                    f"empty node {tid} out of sequence (expected "
                    f"{anchor}.{expected_sub})", line_no
                )
            expected_sub += 1
        else:
            raise ConlluParseError(f"malformed token id {tid!r}", line_no)

        misc_raw = cols[9]
        entity_value = None
        entity_slot = 0
        items = [] if misc_raw == "_" else misc_raw.split("|")
        kept = []
        for idx, item in enumerate(items):
            if item.startswith("Entity="):
                if entity_value is not None:
                    raise ConlluParseError("duplicate Entity attribute", line_no)
                entity_value = item[len("Entity="):]
                entity_slot = len(kept)
            else:
                kept.append(item)
        token = Token(
            id=tid, form=cols[1], lemma=cols[2], upos=cols[3], xpos=cols[4],
            feats=cols[5], head=cols[6], deprel=cols[7], deps=cols[8],
            misc="|".join(kept) if kept else "_", entity_slot=entity_slot,
        )
        tok_position = position + len(sent.tokens)
        sent.tokens.append(token)
        if entity_value is not None:
            for kind, text_ in _scan_entity_events(entity_value, line_no):
                pending_events.append((kind, text_, tok_position, line_no))

    close_sentence(len(lines))
    close_document()
    return documents


# ---------------------------------------------------------------------------
# Serialization


def _render_entity_value(doc: Document) -> dict[int, str]:
    """Bracket events per flat token position.

    Canonical order at a token: closes of earlier-opened mentions first
    (innermost first), then opens ordered outermost first, single-token
    mentions last among opens.  Closes-first keeps per-entity stacks
    correct when one mention of an entity ends where another starts.
    """
    opens: dict[int, list[Mention]] = {}
    closes: dict[int, list[Mention]] = {}
    for ent in doc.entities:
        if not ent.mentions:
            raise ConlluSerializeError(f"entity {ent.id} has no mentions")
        for i, a in enumerate(ent.mentions):
            for b in ent.mentions[i + 1:]:
                if (a.start < b.start <= a.end < b.end
                        or b.start < a.start <= b.end < a.end):
                    # LIFO bracket matching per entity cannot express two
                    # crossing mentions of one entity.
                    raise ConlluSerializeError(
                        f"entity {ent.id} has crossing mentions "
                        f"({a.start}, {a.end}) and ({b.start}, {b.end})"
                    )
        for m in ent.mentions:
            opens.setdefault(m.start, []).append(m)
            if m.end != m.start:
                closes.setdefault(m.end, []).append(m)
    values: dict[int, str] = {}
    for pos in set(opens) | set(closes):
        parts = []
        for m in sorted(closes.get(pos, []), key=lambda m: (-m.start, m.entity_id)):
            parts.append(f"{m.entity_id})")
        for m in sorted(opens.get(pos, []), key=lambda m: (-m.end, m.entity_id)):
            if m.end == m.start:
                parts.append(f"({m.open_payload})")
            else:
                parts.append(f"({m.open_payload}")
        values[pos] = "".join(parts)
    return values


def serialize_document(doc: Document) -> str:
    entity_values = _render_entity_value(doc)
    lines: list[str] = []
    position = 0
    for sent in doc.sentences:
        lines.extend(sent.comments)
        for tok in sent.tokens:
            if not tok.is_empty and tok.anchor in sent.mwt_lines:
                lines.append(sent.mwt_lines[tok.anchor])
            items = tok.misc_items()
            value = entity_values.get(position)
            if value is not None:
                slot = min(tok.entity_slot, len(items))
                items = items[:slot] + [f"Entity={value}"] + items[slot:]
            misc = "|".join(items) if items else "_"
            lines.append("\t".join([
                tok.id, tok.form, tok.lemma, tok.upos, tok.xpos,
                tok.feats, tok.head, tok.deprel, tok.deps, misc,
            ]))
            position += 1
        lines.append("")
    return "\n".join(lines) + "\n" if lines else ""


def serialize_conllu(docs: Iterable[Document]) -> str:
    return "".join(serialize_document(d) for d in docs)


# ---------------------------------------------------------------------------
# Empty-node extraction and re-insertion


@dataclass
class EmptyNodeRecord:
    """A gold empty node lifted out of a document.

    ``anchor``/``slot`` describe the insertion point (token ``k.j`` sits
    after surface word k, slot j-1); ``head``/``deprel`` come from the
    dependency columns.  The full token keeps all other columns.
    """

    sentence_index: int
    anchor: int
    slot: int
    head: str
    deprel: str
    token: Token

    @property
    def word_order(self) -> int:
        return self.anchor


@dataclass
class MentionPatch:
    """Restores one mention touched by empty-node removal.

    Keys are stable (sentence index, token id) pairs.  ``surface_*`` name
    the re-indexed mention in the stripped document (None when the whole
    mention was dropped because it consisted solely of empty nodes).
    """

    entity_id: str
    start_key: tuple[int, str]
    end_key: tuple[int, str]
    head_key: tuple[int, str]
    open_payload: str
    surface_start_key: Optional[tuple[int, str]] = None
    surface_end_key: Optional[tuple[int, str]] = None

    @property
    def dropped(self) -> bool:
        return self.surface_start_key is None


@dataclass
class StripResult:
    document: Document
    targets: list[EmptyNodeRecord]
    patches: list[MentionPatch]


def _position_keys(doc: Document) -> list[tuple[int, str]]:
    keys = []
    for si, sent in enumerate(doc.sentences):
        for tok in sent.tokens:
            keys.append((si, tok.id))
    return keys


def strip_empty_nodes(doc: Document) -> StripResult:
    """Remove all empty nodes, returning supervision targets.

    Mentions consisting solely of empty nodes are dropped from the
    stripped document; mentions whose span or head touched an empty node
    are re-indexed.  Both kinds are recorded as patches so that
    ``insert_empty_nodes`` reconstructs the original exactly.
    """
    targets: list[EmptyNodeRecord] = []
    patches: list[MentionPatch] = []
    old_tokens = doc.tokens()
    old_keys = _position_keys(doc)

    new_sentences: list[Sentence] = []
    old_to_new: dict[int, Optional[int]] = {}
    old_pos = 0
    new_pos = 0
    for si, sent in enumerate(doc.sentences):
        new_tokens = []
        for tok in sent.tokens:
            if tok.is_empty:
                targets.append(
                    EmptyNodeRecord(
                        sentence_index=si,
                        anchor=tok.anchor,
                        slot=tok.sub_index - 1,
                        head=tok.head,
                        deprel=tok.deprel,
                        token=replace(tok),
                    )
                )
                old_to_new[old_pos] = None
            else:
                old_to_new[old_pos] = new_pos
                new_tokens.append(replace(tok))
                new_pos += 1
            old_pos += 1
        new_sentences.append(
            Sentence(comments=list(sent.comments), tokens=new_tokens,
                     mwt_lines=dict(sent.mwt_lines))
        )
    new_doc = Document(
        doc_id=doc.doc_id, sentences=new_sentences, entities=[],
        dataset_id=doc.dataset_id, language=doc.language,
    )
    new_keys = _position_keys(new_doc)
    new_id_to_pos = {key: i for i, key in enumerate(new_keys)}
    new_sentences_of = [key[0] for key in new_keys]

    for ent in doc.entities:
        new_mentions = []
        for m in ent.mentions:
            touched = any(old_tokens[p].is_empty for p in range(m.start, m.end + 1))
            surviving = [
                old_to_new[p]
                for p in range(m.start, m.end + 1)
                if old_to_new[p] is not None
            ]
            if touched:
                patch = MentionPatch(
                    entity_id=ent.id,
                    start_key=old_keys[m.start],
                    end_key=old_keys[m.end],
                    head_key=old_keys[m.head],
                    open_payload=m.open_payload,
                )
                if surviving:
                    patch.surface_start_key = new_keys[surviving[0]]
                    patch.surface_end_key = new_keys[surviving[-1]]
                patches.append(patch)
            if not surviving:
                continue
            head = old_to_new[m.head]
            if head is None:
                head = default_head(
                    list(range(surviving[0], surviving[-1] + 1)),
                    new_doc.tokens(), new_id_to_pos, new_sentences_of,
                )
            new_mentions.append(
                Mention(start=surviving[0], end=surviving[-1], head=head,
                        entity_id=ent.id, open_payload=m.open_payload)
            )
        if new_mentions:
            new_doc.entities.append(Entity(id=ent.id, mentions=new_mentions))
    return StripResult(document=new_doc, targets=targets, patches=patches)


def insert_empty_nodes(doc: Document, targets: list[EmptyNodeRecord],
                       patches: Optional[list[MentionPatch]] = None) -> Document:
    """Insert empty-node tokens (inverse of strip_empty_nodes).

    Tokens are placed after surface word ``anchor`` (0 = sentence start)
    ordered by slot.  Patches, when given, restore the original spans of
    re-indexed mentions and re-create the ones dropped with their nodes.
    """
    new_sentences = []
    for si, sent in enumerate(doc.sentences):
        by_anchor: dict[int, list[EmptyNodeRecord]] = {}
        for t in sorted(
            (t for t in targets if t.sentence_index == si),
            key=lambda t: (t.anchor, t.slot),
        ):
            by_anchor.setdefault(t.anchor, []).append(t)
        new_tokens: list[Token] = []
        for rec in by_anchor.get(0, []):
            new_tokens.append(replace(rec.token))
        for tok in sent.tokens:
            new_tokens.append(replace(tok))
            if not tok.is_empty:
                for rec in by_anchor.get(tok.anchor, []):
                    new_tokens.append(replace(rec.token))
        new_sentences.append(
            Sentence(comments=list(sent.comments), tokens=new_tokens,
                     mwt_lines=dict(sent.mwt_lines))
        )
    new_doc = Document(
        doc_id=doc.doc_id, sentences=new_sentences, entities=[],
        dataset_id=doc.dataset_id, language=doc.language,
    )
    position = {key: i for i, key in enumerate(_position_keys(new_doc))}
    src_keys = _position_keys(doc)

    # Index surviving-mention patches by what the stripped mention looks like.
    pending: dict[tuple, list[MentionPatch]] = {}
    for p in patches or []:
        if not p.dropped:
            key = (p.entity_id, p.surface_start_key, p.surface_end_key,
                   p.open_payload)
            pending.setdefault(key, []).append(p)

    entities: dict[str, Entity] = {}
    order: list[str] = []

    def add(eid: str, mention: Mention) -> None:
        if eid not in entities:
            entities[eid] = Entity(id=eid)
            order.append(eid)
        entities[eid].mentions.append(mention)

    for ent in doc.entities:
        for m in ent.mentions:
            key = (ent.id, src_keys[m.start], src_keys[m.end], m.open_payload)
            stack = pending.get(key)
            if stack:
                p = stack.pop(0)
                add(ent.id, Mention(
                    start=position[p.start_key], end=position[p.end_key],
                    head=position[p.head_key], entity_id=ent.id,
                    open_payload=p.open_payload,
                ))
            else:
                add(ent.id, Mention(
                    start=position[src_keys[m.start]],
                    end=position[src_keys[m.end]],
                    head=position[src_keys[m.head]],
                    entity_id=ent.id, open_payload=m.open_payload,
                ))
    for p in patches or []:
        if p.dropped:
            add(p.entity_id, Mention(
                start=position[p.start_key], end=position[p.end_key],
                head=position[p.head_key], entity_id=p.entity_id,
                open_payload=p.open_payload,
            ))
    for eid in order:
        entities[eid].mentions.sort(key=Mention.sort_key)
        new_doc.entities.append(entities[eid])
    new_doc.entities.sort(key=lambda e: e.mentions[0].sort_key())
    new_doc.validate()
    return new_doc
