"""Construct validated language packs from raw translation output.

Pipeline per language: validate translation candidates, vote on agreement,
join subject-object pairs with entity labels, filter conflicting tuples,
apply human-review patches, then keep only languages clearing the relation-
and phrase-coverage thresholds against the English reference pack.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass

from . import corpus
from .corpus import (
    DEFAULT_FINAL_PUNCTUATION,
    FactTuple,
    LanguagePack,
    Relation,
    Template,
    normalize,
    template_id,
    validate_template,
)
from .errors import InputError

MLAMA_SOURCE = "mlama"
REVIEW_SUGGESTION_SOURCE = "review-suggestion"
PATCH_VERDICTS = ("correct", "wrong", "amended", "suggestion")


@dataclass(frozen=True)
class TranslationCandidate:
    relation_id: str
    language: str
    text: str
    translator: str
    trusted: bool = False


@dataclass(frozen=True)
class ReviewPatch:
    language: str
    relation_id: str
    verdict: str
    template_id: str | None = None
    pattern: str | None = None
    replacement: str | None = None


@dataclass(frozen=True)
class BuildConfig:
    min_relation_coverage: float = 0.60
    min_phrase_coverage: float = 0.20
    min_agreement: int = 2
    trusted_translators: frozenset[str] = frozenset({"microsoft"})
    punctuation_set: tuple[str, ...] = DEFAULT_FINAL_PUNCTUATION
    total_relations: int = 38

    def __post_init__(self):
        if not 0.0 <= self.min_relation_coverage <= 1.0:
            raise InputError(f"min_relation_coverage out of [0,1]: {self.min_relation_coverage}")
        if not 0.0 <= self.min_phrase_coverage <= 1.0:
            raise InputError(f"min_phrase_coverage out of [0,1]: {self.min_phrase_coverage}")
        if self.min_agreement < 1:
            raise InputError(f"min_agreement must be >= 1: {self.min_agreement}")

    @classmethod
    def from_dict(cls, raw: dict) -> "BuildConfig":
        kwargs = dict(raw)
        if "trusted_translators" in kwargs:
            kwargs["trusted_translators"] = frozenset(kwargs["trusted_translators"])
        if "punctuation_set" in kwargs:
            kwargs["punctuation_set"] = tuple(kwargs["punctuation_set"])
        unknown = set(kwargs) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InputError(f"unknown build config keys: {sorted(unknown)}")
        return cls(**kwargs)


@dataclass(frozen=True)
class VotedTemplate:
    text: str
    sources: frozenset[str]
    agreement: int


def vote_agreement(candidates: list[TranslationCandidate], config: BuildConfig) -> list[VotedTemplate]:
    """Accept translations by multi-translator agreement.

    A normalized text is accepted when produced by >= min_agreement distinct
    translators, or by any trusted translator, or when tagged as coming from
    the mLAMA set (unconditional, counting as one source). Output is
    deduplicated by text and sorted, so it is independent of input order.
    """
    producers: dict[str, set[str]] = {}
    trusted_hit: dict[str, bool] = {}
    for cand in candidates:
        text = normalize(cand.text)
        producers.setdefault(text, set()).add(cand.translator)
        trusted_hit[text] = trusted_hit.get(text, False) or cand.trusted

    accepted = []
    for text in sorted(producers):
        tags = producers[text]
        agreement = len(tags)
        if MLAMA_SOURCE in tags or trusted_hit[text] or agreement >= config.min_agreement:
            accepted.append(VotedTemplate(text=text, sources=frozenset(tags), agreement=agreement))
    return accepted


def filter_tuples(tuples: list[FactTuple]) -> list[FactTuple]:
    """Drop tuples whose subject maps to several objects, and empty labels.

    Idempotent; never adds tuples; preserves input order.
    """
    objs_per_sub: dict[str, set[str]] = {}
    for t in tuples:
        objs_per_sub.setdefault(t.sub_uri, set()).add(t.obj_uri)
    return [
        t for t in tuples
        if len(objs_per_sub[t.sub_uri]) == 1 and t.sub_label and t.obj_label
    ]


def _match_patch_target(templates: list[Template], patch: ReviewPatch) -> tuple[Template | None, str | None]:
    if patch.template_id:
        matches = [t for t in templates if t.id == patch.template_id]
    elif patch.pattern is not None:
        wanted = normalize(patch.pattern)
        matches = [t for t in templates if t.text == wanted]
    else:
        return None, "patch_target_not_found"
    if not matches:
        return None, "patch_target_not_found"
    if len(matches) > 1:
        return None, "ambiguous_target"
    return matches[0], None


def _merge_template(existing: list[Template], new: Template) -> list[Template]:
    # Keep the distinct-text invariant: same text means union of sources.
    out = []
    merged = False
    for t in existing:
        if t.text == new.text:
            out.append(dataclasses.replace(t, sources=t.sources | new.sources))
            merged = True
        else:
            out.append(t)
    if not merged:
        out.append(new)
    return out


def apply_review_patches(pack: LanguagePack, patches: list[ReviewPatch]) -> tuple[LanguagePack, list[dict]]:
    """Apply native-speaker verdicts; returns the patched pack and issues.

    wrong removes the template, amended replaces its text, suggestion appends
    a new template, correct only updates review_status. Relations left with
    fewer than two templates are dropped.
    """
    issues: list[dict] = []
    templates_by_rel = {rid: list(rel.templates) for rid, rel in pack.relations.items()}

    for patch in patches:
        if patch.verdict not in PATCH_VERDICTS:
            issues.append({"kind": "unknown_verdict", "relation": patch.relation_id, "verdict": patch.verdict})
            continue
        if patch.relation_id not in templates_by_rel:
            issues.append({"kind": "patch_target_not_found", "relation": patch.relation_id, "detail": "relation not in pack"})
            continue
        templates = templates_by_rel[patch.relation_id]

        if patch.verdict == "suggestion":
            if patch.replacement is None or validate_template(patch.replacement) is not None:
                issues.append({"kind": "invalid_replacement", "relation": patch.relation_id, "replacement": patch.replacement})
                continue
            text = normalize(patch.replacement)
            suggestion = Template(
                id=template_id(pack.language, patch.relation_id, text),
                relation_id=patch.relation_id,
                language=pack.language,
                text=text,
                sources=frozenset({REVIEW_SUGGESTION_SOURCE}),
                review_status="correct",
            )
            templates_by_rel[patch.relation_id] = _merge_template(templates, suggestion)
            continue

        target, err = _match_patch_target(templates, patch)
        if err is not None:
            issues.append({"kind": err, "relation": patch.relation_id, "template_id": patch.template_id, "pattern": patch.pattern})
            continue

        if patch.verdict == "correct":
            templates_by_rel[patch.relation_id] = [
                dataclasses.replace(t, review_status="correct") if t.id == target.id else t
                for t in templates
            ]
        elif patch.verdict == "wrong":
            templates_by_rel[patch.relation_id] = [t for t in templates if t.id != target.id]
        elif patch.verdict == "amended":
            if patch.replacement is None or validate_template(patch.replacement) is not None:
                issues.append({"kind": "invalid_replacement", "relation": patch.relation_id, "replacement": patch.replacement})
                continue
            text = normalize(patch.replacement)
            amended = dataclasses.replace(
                target,
                id=template_id(pack.language, patch.relation_id, text),
                text=text,
                review_status="amended",
            )
            remaining = [t for t in templates if t.id != target.id]
            templates_by_rel[patch.relation_id] = _merge_template(remaining, amended)

    relations: dict[str, Relation] = {}
    for rid, rel in pack.relations.items():
        templates = templates_by_rel[rid]
        if len({t.text for t in templates}) < 2:
            issues.append({"kind": "relation_dropped", "relation": rid, "reason": "below_min_templates_after_review"})
            continue
        relations[rid] = Relation.build(rid, templates, list(rel.tuples))

    return LanguagePack(language=pack.language, relations=relations, metadata=pack.metadata), issues


def _qualifying_relations(pack: LanguagePack) -> int:
    return sum(1 for rel in pack.relations.values() if len(rel.templates) >= 2 and len(rel.tuples) >= 1)


def select_languages(
    packs: dict[str, LanguagePack],
    reference: LanguagePack,
    config: BuildConfig,
) -> tuple[dict[str, LanguagePack], list[dict]]:
    """Keep languages clearing both coverage thresholds (inclusive).

    Relation coverage is qualifying relations / total_relations; phrase
    coverage is the pack's phrase count over the reference pack's. The
    reference language is always retained.
    """
    ref_phrases = reference.phrase_count()
    retained: dict[str, LanguagePack] = {}
    trace: list[dict] = []
    for lang in sorted(packs):
        pack = packs[lang]
        qualifying = _qualifying_relations(pack)
        relation_coverage = qualifying / config.total_relations
        phrase_coverage = pack.phrase_count() / ref_phrases if ref_phrases else 0.0
        reasons = []
        if relation_coverage < config.min_relation_coverage:
            reasons.append("below_relation_coverage")
        if phrase_coverage < config.min_phrase_coverage:
            reasons.append("below_phrase_coverage")
        is_reference = lang == reference.language
        keep = is_reference or not reasons
        trace.append({
            "language": lang,
            "qualifying_relations": qualifying,
            "relation_coverage": relation_coverage,
            "phrase_count": pack.phrase_count(),
            "phrase_coverage": phrase_coverage,
            "retained": keep,
            "reason": "reference" if is_reference else ("ok" if keep else ",".join(reasons)),
        })
        if keep:
            retained[lang] = pack
    return retained, trace


# --- statistics -----------------------------------------------------------

def levenshtein(a: str, b: str) -> int:
    """Character-level edit distance, O(min(len)) space."""
    if len(a) > len(b):
        a, b = b, a
    previous = list(range(len(a) + 1))
    for i, cb in enumerate(b, start=1):
        current = [i] + [0] * len(a)
        for j, ca in enumerate(a, start=1):
            cost = 0 if ca == cb else 1
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
        previous = current
    return previous[len(a)]


@dataclass(frozen=True)
class PackStats:
    language: str
    relation_count: int
    total_patterns: int
    min_patterns: int | None
    max_patterns: int | None
    avg_patterns: float | None
    avg_string_distance: float | None
    phrase_count: int


def _relation_mean_distance(rel: Relation) -> float | None:
    texts = [t.text for t in rel.templates]
    if len(texts) < 2:
        return None
    distances = []
    for i in range(len(texts)):
        for j in range(i + 1, len(texts)):
            distances.append(levenshtein(texts[i], texts[j]))
    return sum(distances) / len(distances)


def compute_stats(pack: LanguagePack) -> PackStats:
    """Pattern counts and macro-averaged pairwise template edit distance."""
    counts = [len(rel.templates) for rel in pack.relations.values()]
    rel_distances = [d for rel in pack.relations.values() if (d := _relation_mean_distance(rel)) is not None]
    return PackStats(
        language=pack.language,
        relation_count=len(pack.relations),
        total_patterns=sum(counts),
        min_patterns=min(counts) if counts else None,
        max_patterns=max(counts) if counts else None,
        avg_patterns=sum(counts) / len(counts) if counts else None,
        avg_string_distance=sum(rel_distances) / len(rel_distances) if rel_distances else None,
        phrase_count=pack.phrase_count(),
    )


# --- raw input pipeline ---------------------------------------------------
#
# translations/<lang>/<relation>.jsonl  {"pattern","translator"}
# entities/<lang>.jsonl                 {"uri","label"}
# mlama/<lang>/<relation>.jsonl         {"pattern"}
# reviews/<lang>.jsonl                  {"relation","template_id","pattern","verdict","replacement"}
# tuples/<relation>.jsonl               {"sub_uri","obj_uri"}   (language independent)

def _build_timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    stamp = int(epoch) if epoch is not None else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(stamp))


def _relation_files(dirpath: str) -> dict[str, str]:
    if not os.path.isdir(dirpath):
        return {}
    return {
        fname[: -len(".jsonl")]: os.path.join(dirpath, fname)
        for fname in sorted(os.listdir(dirpath))
        if fname.endswith(".jsonl")
    }


def _load_entities(raw_root: str, language: str) -> dict[str, str]:
    path = os.path.join(raw_root, "entities", f"{language}.jsonl")
    labels: dict[str, str] = {}
    if os.path.exists(path):
        for lineno, rec in corpus._read_jsonl(path):
            if not isinstance(rec.get("uri"), str) or not isinstance(rec.get("label"), str):
                raise InputError(f"{path}:{lineno}: malformed record: expected uri/label strings")
            labels[rec["uri"]] = rec["label"]
    return labels


def _load_base_tuples(raw_root: str) -> dict[str, list[tuple[str, str]]]:
    pairs: dict[str, list[tuple[str, str]]] = {}
    for relation_id, path in _relation_files(os.path.join(raw_root, "tuples")).items():
        seen = set()
        rows = []
        for lineno, rec in corpus._read_jsonl(path):
            if not isinstance(rec.get("sub_uri"), str) or not isinstance(rec.get("obj_uri"), str):
                raise InputError(f"{path}:{lineno}: malformed record: expected sub_uri/obj_uri strings")
            key = (rec["sub_uri"], rec["obj_uri"])
            if key in seen:
                continue
            seen.add(key)
            rows.append(key)
        pairs[relation_id] = rows
    return pairs


def _load_review_patches(raw_root: str, language: str) -> list[ReviewPatch]:
    path = os.path.join(raw_root, "reviews", f"{language}.jsonl")
    patches = []
    if os.path.exists(path):
        for lineno, rec in corpus._read_jsonl(path):
            if not isinstance(rec.get("relation"), str) or not isinstance(rec.get("verdict"), str):
                raise InputError(f"{path}:{lineno}: malformed record: expected relation/verdict strings")
            patches.append(ReviewPatch(
                language=language,
                relation_id=rec["relation"],
                verdict=rec["verdict"],
                template_id=rec.get("template_id"),
                pattern=rec.get("pattern"),
                replacement=rec.get("replacement"),
            ))
    return patches


def build_language(raw_root: str, language: str, config: BuildConfig,
                   base_tuples: dict[str, list[tuple[str, str]]] | None = None) -> tuple[LanguagePack, dict]:
    """Build one language pack from the raw layout; returns (pack, report)."""
    if base_tuples is None:
        base_tuples = _load_base_tuples(raw_root)
    entities = _load_entities(raw_root, language)
    translation_files = _relation_files(os.path.join(raw_root, "translations", language))
    mlama_files = _relation_files(os.path.join(raw_root, "mlama", language))
    relation_ids = sorted(set(translation_files) | set(mlama_files))
    if not relation_ids:
        raise InputError(f"language_missing: no translations or mlama input for {language!r} under {raw_root}")

    rejected: list[dict] = []
    relations: dict[str, Relation] = {}
    dropped_relations: list[dict] = []

    for relation_id in relation_ids:
        candidates: list[TranslationCandidate] = []
        if relation_id in translation_files:
            for lineno, rec in corpus._read_jsonl(translation_files[relation_id]):
                if not isinstance(rec.get("pattern"), str) or not isinstance(rec.get("translator"), str) or not rec["translator"]:
                    raise InputError(f"{translation_files[relation_id]}:{lineno}: malformed record: expected pattern/translator strings")
                err = validate_template(rec["pattern"])
                if err is not None:
                    rejected.append({"relation": relation_id, "translator": rec["translator"], "pattern": rec["pattern"], "reason": err})
                    continue
                candidates.append(TranslationCandidate(
                    relation_id=relation_id,
                    language=language,
                    text=rec["pattern"],
                    translator=rec["translator"],
                    trusted=rec["translator"] in config.trusted_translators,
                ))
        if relation_id in mlama_files:
            for lineno, rec in corpus._read_jsonl(mlama_files[relation_id]):
                if not isinstance(rec.get("pattern"), str):
                    raise InputError(f"{mlama_files[relation_id]}:{lineno}: malformed record: expected pattern string")
                err = validate_template(rec["pattern"])
                if err is not None:
                    rejected.append({"relation": relation_id, "translator": MLAMA_SOURCE, "pattern": rec["pattern"], "reason": err})
                    continue
                candidates.append(TranslationCandidate(
                    relation_id=relation_id,
                    language=language,
                    text=rec["pattern"],
                    translator=MLAMA_SOURCE,
                ))

        voted = vote_agreement(candidates, config)
        templates = [
            Template(
                id=template_id(language, relation_id, v.text),
                relation_id=relation_id,
                language=language,
                text=v.text,
                sources=v.sources,
                review_status="unreviewed",
            )
            for v in voted
        ]

        tuples: list[FactTuple] = []
        for sub_uri, obj_uri in base_tuples.get(relation_id, []):
            sub_label = entities.get(sub_uri, "")
            obj_label = entities.get(obj_uri, "")
            tuples.append(FactTuple(
                sub_uri=sub_uri,
                obj_uri=obj_uri,
                sub_label=sub_label,
                obj_label=obj_label,
                relation_id=relation_id,
                language=language,
            ))
        tuples = filter_tuples(tuples)

        if len({t.text for t in templates}) < 2:
            dropped_relations.append({"relation": relation_id, "reason": "below_min_templates"})
            continue
        relations[relation_id] = Relation.build(relation_id, templates, tuples)

    pack = LanguagePack(language=language, relations=relations, metadata={})
    patches = _load_review_patches(raw_root, language)
    pack, patch_issues = apply_review_patches(pack, patches)

    metadata = {
        "language": language,
        "thresholds": {
            "min_relation_coverage": config.min_relation_coverage,
            "min_phrase_coverage": config.min_phrase_coverage,
            "min_agreement": config.min_agreement,
            "total_relations": config.total_relations,
        },
        "trusted_translators": sorted(config.trusted_translators),
        "source_root": os.path.basename(os.path.abspath(raw_root)),
        "timestamp": _build_timestamp(),
    }
    pack = LanguagePack(language=pack.language, relations=pack.relations, metadata=metadata)

    failed_patches = sum(1 for i in patch_issues if i["kind"] != "relation_dropped")
    report = {
        "language": language,
        "relations_built": sorted(pack.relations),
        "relations_dropped": dropped_relations,
        "rejected_translations": rejected,
        "patch_issues": patch_issues,
        "patches_applied": len(patches) - failed_patches,
    }
    return pack, report


def build_all(raw_root: str, out_root: str, config: BuildConfig,
              languages: list[str] | None = None, reference_language: str = "en") -> dict:
    """Build every language, select by coverage, write retained packs.

    Returns the build report (also written to <out_root>/build_report.json).
    """
    discovered = sorted(os.listdir(os.path.join(raw_root, "translations"))) if os.path.isdir(os.path.join(raw_root, "translations")) else []
    langs = sorted(set(languages) if languages else set(discovered))
    if reference_language not in langs:
        langs.append(reference_language)
        langs.sort()

    base_tuples = _load_base_tuples(raw_root)
    packs: dict[str, LanguagePack] = {}
    reports: dict[str, dict] = {}
    for lang in langs:
        pack, report = build_language(raw_root, lang, config, base_tuples=base_tuples)
        packs[lang] = pack
        reports[lang] = report

    if reference_language not in packs:
        raise InputError(f"reference language {reference_language!r} could not be built")
    retained, trace = select_languages(packs, packs[reference_language], config)

    os.makedirs(out_root, exist_ok=True)
    for lang in sorted(retained):
        corpus.save_language_pack(retained[lang], out_root)

    build_report = {
        "reference_language": reference_language,
        "config": {
            "min_relation_coverage": config.min_relation_coverage,
            "min_phrase_coverage": config.min_phrase_coverage,
            "min_agreement": config.min_agreement,
            "trusted_translators": sorted(config.trusted_translators),
            "total_relations": config.total_relations,
        },
        "languages": reports,
        "selection": trace,
        "retained": sorted(retained),
    }
    report_path = os.path.join(out_root, "build_report.json")
    tmp = report_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(build_report, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, report_path)
    return build_report
