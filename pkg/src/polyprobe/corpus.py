"""Data model, validation, normalization and on-disk I/O for language packs.

A language pack holds, per relation, the cloze templates (with [X]/[Y]
placeholders), the subject-object tuples, and the canonical candidate list
derived from the tuples. All values are immutable after construction and
safe to share across threads.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field

from .errors import InputError

logger = logging.getLogger(__name__)

SUBJECT_PLACEHOLDER = "[X]"
OBJECT_PLACEHOLDER = "[Y]"

# Sentence-final marks across scripts; configurable wherever stripping applies.
DEFAULT_FINAL_PUNCTUATION = (".", "。", "．", "!", "?", "？", "！", "।", "؟", "።")

# Relation cap; packs are at most this many relations.
MAX_RELATIONS_PER_PACK = 38

REVIEW_STATUSES = ("unreviewed", "correct", "amended", "wrong")


def normalize(text: str) -> str:
    """Trim outer whitespace and collapse internal runs to single spaces."""
    return " ".join(text.split())


def validate_template(text: str) -> str | None:
    """Check placeholder grammar; return an error kind or None when valid.

    Error kinds: "empty", "missing_x", "duplicate_placeholder", "missing_y".
    The first failing check names the error.
    """
    normalized = normalize(text)
    if not normalized:
        return "empty"
    n_x = normalized.count(SUBJECT_PLACEHOLDER)
    if n_x == 0:
        return "missing_x"
    if n_x > 1:
        return "duplicate_placeholder"
    n_y = normalized.count(OBJECT_PLACEHOLDER)
    if n_y == 0:
        return "missing_y"
    if n_y > 1:
        return "duplicate_placeholder"
    return None


def strip_final_punctuation(text: str, punctuation: tuple[str, ...] = DEFAULT_FINAL_PUNCTUATION) -> str:
    """Strip trailing sentence-final marks until a fixed point, re-trimming."""
    marks = set(punctuation)
    out = text
    while out and out[-1] in marks:
        out = out[:-1].rstrip()
    return out


@dataclass(frozen=True)
class Template:
    """One cloze pattern with provenance."""

    id: str
    relation_id: str
    language: str
    text: str
    sources: frozenset[str]
    review_status: str = "unreviewed"
    extras: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class FactTuple:
    """A subject-object entity pair with per-language surface labels."""

    sub_uri: str
    obj_uri: str
    sub_label: str
    obj_label: str
    relation_id: str
    language: str
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def key(self) -> tuple[str, str]:
        return (self.sub_uri, self.obj_uri)


@dataclass(frozen=True)
class CandidateEntry:
    index: int
    label: str
    uri: str


def build_candidates(tuples: tuple[FactTuple, ...]) -> tuple[CandidateEntry, ...]:
    """Canonical candidate list: sorted unique (obj_label, obj_uri) pairs.

    Order is lexicographic by codepoints, so the list is a pure function of
    the tuple multiset.
    """
    pairs = sorted({(t.obj_label, t.obj_uri) for t in tuples})
    return tuple(CandidateEntry(index=i, label=label, uri=uri) for i, (label, uri) in enumerate(pairs))


@dataclass(frozen=True)
class Relation:
    id: str
    templates: tuple[Template, ...]
    tuples: tuple[FactTuple, ...]
    candidates: tuple[CandidateEntry, ...]

    @classmethod
    def build(cls, relation_id: str, templates: list[Template], tuples: list[FactTuple]) -> "Relation":
        return cls(
            id=relation_id,
            templates=tuple(templates),
            tuples=tuple(tuples),
            candidates=build_candidates(tuple(tuples)),
        )

    def candidate_index(self, label: str, uri: str) -> int | None:
        for entry in self.candidates:
            if entry.label == label and entry.uri == uri:
                return entry.index
        return None


@dataclass(frozen=True)
class LanguagePack:
    language: str
    relations: dict[str, Relation]
    metadata: dict = field(default_factory=dict, compare=False)

    def phrase_count(self) -> int:
        return sum(len(r.templates) * len(r.tuples) for r in self.relations.values())


def relation_violations(relation_id: str, templates: list[Template], tuples: list[FactTuple]) -> list[str]:
    """Reasons a relation fails its invariants (empty list = valid)."""
    reasons = []
    texts = [t.text for t in templates]
    if len(set(texts)) < 2:
        reasons.append("fewer_than_two_distinct_templates")
    by_sub: dict[str, set[str]] = {}
    for t in tuples:
        by_sub.setdefault(t.sub_uri, set()).add(t.obj_uri)
    if any(len(objs) > 1 for objs in by_sub.values()):
        reasons.append("conflicting_subjects")
    return reasons


def template_id(language: str, relation_id: str, text: str) -> str:
    """Stable content-derived template id."""
    digest = hashlib.sha1(f"{language}|{relation_id}|{text}".encode("utf-8")).hexdigest()
    return f"{relation_id}-{digest[:10]}"


def pack_fingerprint(pack: LanguagePack) -> str:
    """Deterministic hash of a pack's probe-relevant content."""
    payload = {
        "language": pack.language,
        "relations": {
            rid: {
                "templates": [[t.id, t.text] for t in rel.templates],
                "tuples": [[t.sub_uri, t.obj_uri, t.sub_label, t.obj_label] for t in rel.tuples],
                "candidates": [[c.label, c.uri] for c in rel.candidates],
            }
            for rid, rel in sorted(pack.relations.items())
        },
    }
    blob = json.dumps(payload, ensure_ascii=False, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# --- on-disk layout -------------------------------------------------------
#
# patterns/<lang>/<relation>.jsonl  {"id","pattern","sources","review_status"}
# tuples/<lang>/<relation>.jsonl    {"sub_uri","obj_uri","sub_label","obj_label"}
# meta/<lang>.json                  builder provenance (optional)

_TEMPLATE_KEYS = ("id", "pattern", "sources", "review_status")
_TUPLE_KEYS = ("sub_uri", "obj_uri", "sub_label", "obj_label")


def _read_jsonl(path: str) -> list[tuple[int, dict]]:
    """Parse a JSONL file into (lineno, record) pairs, skipping blank lines."""
    records = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"io_error: cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(rec, dict):
                raise InputError(f"{path}:{lineno}: malformed record: expected an object")
            records.append((lineno, rec))
    return records


def _write_jsonl_atomic(path: str, records: list[dict]) -> None:
    try:
        os.makedirs(os.path.dirname(path), exist_ok=True)
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise InputError(f"io_error: cannot write {path}: {exc}") from exc


def _require_keys(rec: dict, keys: tuple[str, ...], path: str, lineno: int) -> None:
    for key in keys:
        if not isinstance(rec.get(key), str):
            raise InputError(f"{path}:{lineno}: malformed record: missing or invalid key {key!r}")


def load_language_pack(root: str, language: str) -> tuple[LanguagePack, list[dict]]:
    """Load one language from the corpus layout, enforcing all invariants.

    Returns (pack, drop_records); relations violating invariants are dropped
    with a reason rather than failing the load. Raises InputError with kind
    "language_missing" when the language has no pattern files at all.
    """
    patterns_dir = os.path.join(root, "patterns", language)
    tuples_dir = os.path.join(root, "tuples", language)
    if not os.path.isdir(patterns_dir) or not os.listdir(patterns_dir):
        raise InputError(f"language_missing: no patterns for {language!r} under {root}")

    drops: list[dict] = []
    relations: dict[str, Relation] = {}
    for fname in sorted(os.listdir(patterns_dir)):
        if not fname.endswith(".jsonl"):
            continue
        relation_id = fname[: -len(".jsonl")]
        ppath = os.path.join(patterns_dir, fname)
        templates: list[Template] = []
        seen_texts = set()
        for lineno, rec in _read_jsonl(ppath):
            _require_keys(rec, ("pattern",), ppath, lineno)
            text = normalize(rec["pattern"])
            err = validate_template(text)
            if err is not None:
                drops.append({"language": language, "relation": relation_id, "kind": "invalid_template", "reason": err, "pattern": rec["pattern"]})
                continue
            if text in seen_texts:
                logger.warning("%s: duplicate template text dropped: %r", ppath, text)
                continue
            seen_texts.add(text)
            sources = frozenset(rec.get("sources") or [])
            if not sources:
                drops.append({"language": language, "relation": relation_id, "kind": "invalid_template", "reason": "no_sources", "pattern": rec["pattern"]})
                continue
            status = rec.get("review_status", "unreviewed")
            if status not in REVIEW_STATUSES:
                drops.append({"language": language, "relation": relation_id, "kind": "invalid_template", "reason": "bad_review_status", "pattern": rec["pattern"]})
                continue
            extras = {k: v for k, v in rec.items() if k not in _TEMPLATE_KEYS}
            templates.append(Template(
                id=rec.get("id") or template_id(language, relation_id, text),
                relation_id=relation_id,
                language=language,
                text=text,
                sources=sources,
                review_status=status,
                extras=extras,
            ))

        tuples: list[FactTuple] = []
        seen_keys = set()
        tpath = os.path.join(tuples_dir, fname)
        if os.path.exists(tpath):
            for lineno, rec in _read_jsonl(tpath):
                _require_keys(rec, _TUPLE_KEYS, tpath, lineno)
                if not rec["sub_label"] or not rec["obj_label"]:
                    drops.append({"language": language, "relation": relation_id, "kind": "invalid_tuple", "reason": "empty_label", "sub_uri": rec["sub_uri"], "obj_uri": rec["obj_uri"]})
                    continue
                key = (rec["sub_uri"], rec["obj_uri"])
                if key in seen_keys:
                    logger.warning("%s:%d: duplicate tuple %s dropped", tpath, lineno, key)
                    continue
                seen_keys.add(key)
                extras = {k: v for k, v in rec.items() if k not in _TUPLE_KEYS}
                tuples.append(FactTuple(
                    sub_uri=rec["sub_uri"],
                    obj_uri=rec["obj_uri"],
                    sub_label=rec["sub_label"],
                    obj_label=rec["obj_label"],
                    relation_id=relation_id,
                    language=language,
                    extras=extras,
                ))

        reasons = relation_violations(relation_id, templates, tuples)
        if reasons:
            drops.append({"language": language, "relation": relation_id, "kind": "relation_dropped", "reason": ",".join(reasons)})
            logger.info("dropping relation %s/%s: %s", language, relation_id, reasons)
            continue
        relations[relation_id] = Relation.build(relation_id, templates, tuples)

    if len(relations) > MAX_RELATIONS_PER_PACK:
        raise InputError(f"{language}: pack has {len(relations)} relations, cap is {MAX_RELATIONS_PER_PACK}")

    metadata = {}
    meta_path = os.path.join(root, "meta", f"{language}.json")
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            metadata = json.load(fh)

    return LanguagePack(language=language, relations=relations, metadata=metadata), drops


def save_language_pack(pack: LanguagePack, root: str) -> None:
    """Write a pack in the corpus layout (atomic per file, unknown keys kept)."""
    for relation_id, rel in sorted(pack.relations.items()):
        trecords = []
        for t in rel.templates:
            rec = {"id": t.id, "pattern": t.text, "sources": sorted(t.sources), "review_status": t.review_status}
            rec.update(t.extras)
            trecords.append(rec)
        _write_jsonl_atomic(os.path.join(root, "patterns", pack.language, f"{relation_id}.jsonl"), trecords)

        drecords = []
        for d in rel.tuples:
            rec = {"sub_uri": d.sub_uri, "obj_uri": d.obj_uri, "sub_label": d.sub_label, "obj_label": d.obj_label}
            rec.update(d.extras)
            drecords.append(rec)
        _write_jsonl_atomic(os.path.join(root, "tuples", pack.language, f"{relation_id}.jsonl"), drecords)

    if pack.metadata:
        meta_path = os.path.join(root, "meta", f"{pack.language}.json")
        os.makedirs(os.path.dirname(meta_path), exist_ok=True)
        tmp = meta_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(pack.metadata, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, meta_path)


def available_languages(root: str) -> list[str]:
    patterns_root = os.path.join(root, "patterns")
    if not os.path.isdir(patterns_root):
        return []
    return sorted(d for d in os.listdir(patterns_root) if os.path.isdir(os.path.join(patterns_root, d)))
