"""Query orchestration: render cloze contexts, score candidates, and keep a
resumable append-only prediction cache.

One cell = (relation, template, tuple). Cells are independent work items;
the cache writer is serialized, so parallel probing is safe and, for a
deterministic scorer, equivalent to a sequential run.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

from .corpus import (
    DEFAULT_FINAL_PUNCTUATION,
    FactTuple,
    LanguagePack,
    Relation,
    SUBJECT_PLACEHOLDER,
    Template,
    normalize,
    pack_fingerprint,
    strip_final_punctuation,
)
from .errors import InputError, PolyprobeError, ScorerError, StateMismatchError
from .scorer import CandidateScorer, ScoreRequest

logger = logging.getLogger(__name__)

PUNCTUATION_POLICIES = ("keep", "strip")

CellKey = tuple[str, str, str, str]  # (relation_id, template_id, sub_uri, obj_uri)


@dataclass(frozen=True)
class Prediction:
    relation_id: str
    template_id: str
    sub_uri: str
    obj_uri: str
    pred_idx: int
    pred_score: float
    gold_idx: int

    @property
    def key(self) -> CellKey:
        return (self.relation_id, self.template_id, self.sub_uri, self.obj_uri)


@dataclass
class PredictionSet:
    language: str
    model_tag: str
    policy: str
    pack_hash: str
    predictions: dict[CellKey, Prediction] = field(default_factory=dict)
    skipped: dict[CellKey, str] = field(default_factory=dict)

    def missing_cells(self, pack: LanguagePack) -> list[CellKey]:
        missing = []
        for key in iter_cell_keys(pack):
            if key not in self.predictions and key not in self.skipped:
                missing.append(key)
        return missing


def render_query(template: Template | str, subject_label: str, policy: str,
                 punctuation: tuple[str, ...] = DEFAULT_FINAL_PUNCTUATION) -> str:
    """Substitute the subject, keep the object slot, apply the punctuation policy.

    Stripping happens on the template before substitution so a subject label
    ending in a period is never clipped.
    """
    if policy not in PUNCTUATION_POLICIES:
        raise InputError(f"unknown punctuation policy {policy!r}")
    if not subject_label:
        raise InputError("subject_label must be non-empty")
    text = template.text if isinstance(template, Template) else template
    if policy == "strip":
        text = strip_final_punctuation(text, punctuation)
    return normalize(text.replace(SUBJECT_PLACEHOLDER, subject_label))


def predict_cell(relation: Relation, template: Template, fact: FactTuple,
                 scorer: CandidateScorer, policy: str,
                 punctuation: tuple[str, ...] = DEFAULT_FINAL_PUNCTUATION) -> Prediction:
    """Score every relation candidate for one cell and take the argmax.

    Ties break toward the smallest candidate index; candidates the scorer
    skipped are excluded from the argmax.
    """
    if not relation.candidates:
        raise InputError(f"relation {relation.id} has no candidates")
    gold_idx = relation.candidate_index(fact.obj_label, fact.obj_uri)
    if gold_idx is None:
        raise PolyprobeError(
            f"gold_missing: tuple ({fact.sub_uri},{fact.obj_uri}) object not in candidates of {relation.id}")

    context = render_query(template, fact.sub_label, policy, punctuation)
    request = ScoreRequest(context=context, candidates=tuple(c.label for c in relation.candidates))
    response = scorer.score_candidates(request)

    skipped = set(response.skipped)
    best_idx = None
    for idx, score in enumerate(response.scores):
        if idx in skipped:
            continue
        if best_idx is None or score > response.scores[best_idx]:
            best_idx = idx
    if best_idx is None:
        raise ScorerError(f"all candidates skipped for cell ({relation.id},{template.id},{fact.sub_uri})")

    return Prediction(
        relation_id=relation.id,
        template_id=template.id,
        sub_uri=fact.sub_uri,
        obj_uri=fact.obj_uri,
        pred_idx=best_idx,
        pred_score=response.scores[best_idx],
        gold_idx=gold_idx,
    )


def iter_cells(pack: LanguagePack):
    for relation_id in sorted(pack.relations):
        rel = pack.relations[relation_id]
        for template in rel.templates:
            for fact in rel.tuples:
                yield rel, template, fact


def iter_cell_keys(pack: LanguagePack):
    for rel, template, fact in iter_cells(pack):
        yield (rel.id, template.id, fact.sub_uri, fact.obj_uri)


# --- cache ----------------------------------------------------------------
#
# JSON-lines; first record is the header
#   {"language","model_tag","policy","pack_hash"}
# followed by one record per cell, either a prediction
#   {"relation","template_id","sub_uri","obj_uri","pred_idx","pred_score","gold_idx"}
# or a skip record (same keys minus scores, plus "skipped": reason).

_HEADER_KEYS = ("language", "model_tag", "policy", "pack_hash")


def _prediction_record(pred: Prediction) -> dict:
    return {
        "relation": pred.relation_id,
        "template_id": pred.template_id,
        "sub_uri": pred.sub_uri,
        "obj_uri": pred.obj_uri,
        "pred_idx": pred.pred_idx,
        "pred_score": pred.pred_score,
        "gold_idx": pred.gold_idx,
    }


def _parse_cache(path: str) -> tuple[dict, list[dict]]:
    """Read header + records, tolerating a partial final line (cut-off write)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = None
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            if lineno == len(lines):
                logger.warning("%s:%d: dropping partial trailing record", path, lineno)
                break
            raise InputError(f"{path}:{lineno}: malformed cache record: {exc}") from exc
        if header is None:
            if not all(k in rec for k in _HEADER_KEYS):
                raise InputError(f"{path}:1: cache header missing keys {_HEADER_KEYS}")
            header = rec
        else:
            records.append(rec)
    if header is None:
        raise InputError(f"{path}: empty cache file")
    return header, records


def load_prediction_set(path: str, pack: LanguagePack | None = None) -> PredictionSet:
    """Load a persisted cache; verifies the pack fingerprint when given."""
    header, records = _parse_cache(path)
    pset = PredictionSet(
        language=header["language"],
        model_tag=header["model_tag"],
        policy=header["policy"],
        pack_hash=header["pack_hash"],
    )
    if pack is not None and pack_fingerprint(pack) != pset.pack_hash:
        raise StateMismatchError(
            f"pack_mismatch: cache {path} was built for pack hash {pset.pack_hash[:12]}..., "
            f"current pack differs")
    for rec in records:
        key = (rec["relation"], rec["template_id"], rec["sub_uri"], rec["obj_uri"])
        if "skipped" in rec:
            pset.skipped[key] = rec["skipped"]
        else:
            pset.predictions[key] = Prediction(
                relation_id=rec["relation"],
                template_id=rec["template_id"],
                sub_uri=rec["sub_uri"],
                obj_uri=rec["obj_uri"],
                pred_idx=rec["pred_idx"],
                pred_score=rec["pred_score"],
                gold_idx=rec["gold_idx"],
            )
    return pset


def run_probe(pack: LanguagePack, scorer: CandidateScorer, policy: str, cache_path: str,
              jobs: int = 1, resume: bool = False, cell_retries: int = 2,
              punctuation: tuple[str, ...] = DEFAULT_FINAL_PUNCTUATION) -> PredictionSet:
    """Probe every cell of the pack, appending predictions to the cache.

    With resume=True, completed cells in an existing cache are skipped and
    the header must match (a differing pack_hash is a hard error). Per-cell
    scorer failures after retries land in the skip-ledger instead of
    aborting the run.
    """
    if policy not in PUNCTUATION_POLICIES:
        raise InputError(f"unknown punctuation policy {policy!r}")
    header = {
        "language": pack.language,
        "model_tag": scorer.model_tag,
        "policy": policy,
        "pack_hash": pack_fingerprint(pack),
    }

    pset = PredictionSet(**header)
    fresh = True
    if os.path.exists(cache_path) and os.path.getsize(cache_path) > 0:
        if resume:
            existing = load_prediction_set(cache_path)
            for key in _HEADER_KEYS:
                if getattr(existing, key) != header[key]:
                    raise StateMismatchError(
                        f"cache {cache_path} header mismatch on {key!r}: "
                        f"cache has {getattr(existing, key)!r}, run wants {header[key]!r}")
            pset = existing
            fresh = False
        else:
            os.remove(cache_path)

    pending = [
        (rel, template, fact)
        for rel, template, fact in iter_cells(pack)
        if (rel.id, template.id, fact.sub_uri, fact.obj_uri) not in pset.predictions
        and (rel.id, template.id, fact.sub_uri, fact.obj_uri) not in pset.skipped
    ]
    logger.info("probing %s: %d cells pending (%d cached)", pack.language, len(pending), len(pset.predictions))

    def work(cell) -> tuple[CellKey, Prediction | None, str | None]:
        rel, template, fact = cell
        key = (rel.id, template.id, fact.sub_uri, fact.obj_uri)
        last = None
        for _ in range(cell_retries + 1):
            try:
                return key, predict_cell(rel, template, fact, scorer, policy, punctuation), None
            except ScorerError as exc:
                last = str(exc)
        return key, None, last

    cache_dir = os.path.dirname(os.path.abspath(cache_path))
    os.makedirs(cache_dir, exist_ok=True)
    try:
        out = open(cache_path, "a", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"io_error: cannot open cache {cache_path}: {exc}") from exc

    with out:
        if fresh:
            out.write(json.dumps(header, ensure_ascii=False) + "\n")
            out.flush()

        def record(key: CellKey, pred: Prediction | None, fail: str | None):
            if pred is not None:
                pset.predictions[key] = pred
                out.write(json.dumps(_prediction_record(pred), ensure_ascii=False) + "\n")
            else:
                pset.skipped[key] = fail or "scorer_failure"
                rec = {"relation": key[0], "template_id": key[1], "sub_uri": key[2], "obj_uri": key[3], "skipped": fail}
                out.write(json.dumps(rec, ensure_ascii=False) + "\n")
            out.flush()

        if jobs <= 1:
            for cell in pending:
                record(*work(cell))
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(work, cell) for cell in pending]
                for fut in as_completed(futures):
                    record(*fut.result())

    missing = pset.missing_cells(pack)
    if missing:
        raise PolyprobeError(f"probe incomplete: {len(missing)} cells missing, first {missing[0]}")
    return pset
