"""Consistency, accuracy, and consistency-accuracy per relation plus macro
averages, computed from a prediction set.

Per relation with template set T and tuple set D, predictions keyed by
candidate index:

  consistency          = (1/|D|) sum_d  [pairs of templates agreeing on d] / C(|T|,2)
  accuracy             = correct cells / (|D| * |T|)
  consistency-accuracy = like consistency, but a pair only counts when the
                         shared prediction equals the tuple's gold index.

All reductions run in double precision with sorted-key summation order, so
results are reproducible across runs and worker counts.
"""

from __future__ import annotations

import csv
import json
import os
import re
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Mapping

from .corpus import LanguagePack, pack_fingerprint
from .errors import InputError, StateMismatchError
from .prober import PredictionSet

Cell = tuple[str, Hashable]  # (template_id, tuple_key)


def _grid(predictions: Mapping[Cell, int], min_templates: int = 1) -> tuple[list[str], list]:
    """Sorted template/tuple axes; raises incomplete_cells on a missing cell."""
    if not predictions:
        raise InputError("incomplete_cells: no predictions")
    templates = sorted({t for t, _ in predictions})
    tuples = sorted({d for _, d in predictions})
    if len(templates) < min_templates:
        raise InputError(f"need at least {min_templates} templates, got {len(templates)}")
    for t in templates:
        for d in tuples:
            if (t, d) not in predictions:
                raise InputError(f"incomplete_cells: missing cell ({t!r}, {d!r})")
    return templates, tuples


def relation_consistency(predictions: Mapping[Cell, int]) -> float:
    """Fraction of template pairs agreeing per tuple, averaged over tuples."""
    templates, tuples = _grid(predictions, min_templates=2)
    total_pairs = len(templates) * (len(templates) - 1) // 2
    acc = 0.0
    for d in tuples:
        counts = Counter(predictions[(t, d)] for t in templates)
        agreeing = sum(k * (k - 1) // 2 for k in counts.values())
        acc += agreeing / total_pairs
    return acc / len(tuples)


def relation_accuracy(predictions: Mapping[Cell, int], golds: Mapping[Hashable, int]) -> float:
    """Correct cells over all (template, tuple) cells."""
    templates, tuples = _grid(predictions)
    correct = 0
    for d in tuples:
        for t in templates:
            if predictions[(t, d)] == golds[d]:
                correct += 1
    return correct / (len(templates) * len(tuples))


def relation_consistency_accuracy(predictions: Mapping[Cell, int], golds: Mapping[Hashable, int]) -> float:
    """Consistency restricted to pairs whose shared prediction is correct."""
    templates, tuples = _grid(predictions, min_templates=2)
    total_pairs = len(templates) * (len(templates) - 1) // 2
    acc = 0.0
    for d in tuples:
        gold = golds[d]
        k = sum(1 for t in templates if predictions[(t, d)] == gold)
        acc += (k * (k - 1) // 2) / total_pairs
    return acc / len(tuples)


def macro_average(values: list[float]) -> float:
    """Unweighted mean across relations."""
    if not values:
        raise InputError("empty_input: no relation values to average")
    return sum(values) / len(values)


@dataclass(frozen=True)
class RelationMetrics:
    relation_id: str
    consistency: float
    accuracy: float
    consistency_accuracy: float
    n_templates: int
    n_tuples: int


@dataclass(frozen=True)
class MetricsReport:
    language: str
    model_tag: str
    policy: str
    per_relation: tuple[RelationMetrics, ...]
    macro: dict[str, float]
    excluded: tuple[dict, ...] = ()


def evaluate(prediction_set: PredictionSet, pack: LanguagePack) -> MetricsReport:
    """Compute all relation metrics and macros for one prediction set.

    Relations with fewer than 2 templates or no tuples, or with cells in the
    skip-ledger, are excluded from the macro (recorded, not zero-filled).
    """
    if prediction_set.pack_hash != pack_fingerprint(pack):
        raise StateMismatchError("pack_mismatch: prediction set was built against a different pack")

    skipped_relations = {key[0] for key in prediction_set.skipped}
    per_relation: list[RelationMetrics] = []
    excluded: list[dict] = []
    for relation_id in sorted(pack.relations):
        rel = pack.relations[relation_id]
        if len(rel.templates) < 2 or len(rel.tuples) < 1:
            excluded.append({"relation": relation_id, "reason": "insufficient_data"})
            continue
        if relation_id in skipped_relations:
            excluded.append({"relation": relation_id, "reason": "skipped_cells"})
            continue
        predictions: dict[Cell, int] = {}
        golds: dict[Hashable, int] = {}
        for template in rel.templates:
            for fact in rel.tuples:
                key = (relation_id, template.id, fact.sub_uri, fact.obj_uri)
                if key not in prediction_set.predictions:
                    raise InputError(f"incomplete_cells: missing cell {key}")
                pred = prediction_set.predictions[key]
                predictions[(template.id, fact.key)] = pred.pred_idx
                golds[fact.key] = pred.gold_idx
        per_relation.append(RelationMetrics(
            relation_id=relation_id,
            consistency=relation_consistency(predictions),
            accuracy=relation_accuracy(predictions, golds),
            consistency_accuracy=relation_consistency_accuracy(predictions, golds),
            n_templates=len(rel.templates),
            n_tuples=len(rel.tuples),
        ))

    macro = {}
    if per_relation:
        macro = {
            "consistency": macro_average([m.consistency for m in per_relation]),
            "accuracy": macro_average([m.accuracy for m in per_relation]),
            "consistency_accuracy": macro_average([m.consistency_accuracy for m in per_relation]),
        }
    return MetricsReport(
        language=prediction_set.language,
        model_tag=prediction_set.model_tag,
        policy=prediction_set.policy,
        per_relation=tuple(per_relation),
        macro=macro,
        excluded=tuple(excluded),
    )


# --- serialization --------------------------------------------------------

def report_to_dict(report: MetricsReport) -> dict:
    return {
        "language": report.language,
        "model_tag": report.model_tag,
        "policy": report.policy,
        "macro": report.macro,
        "per_relation": [
            {
                "relation": m.relation_id,
                "consistency": m.consistency,
                "accuracy": m.accuracy,
                "consistency_accuracy": m.consistency_accuracy,
                "n_templates": m.n_templates,
                "n_tuples": m.n_tuples,
            }
            for m in report.per_relation
        ],
        "excluded": list(report.excluded),
    }


def report_from_dict(raw: dict) -> MetricsReport:
    return MetricsReport(
        language=raw["language"],
        model_tag=raw["model_tag"],
        policy=raw["policy"],
        per_relation=tuple(
            RelationMetrics(
                relation_id=m["relation"],
                consistency=m["consistency"],
                accuracy=m["accuracy"],
                consistency_accuracy=m["consistency_accuracy"],
                n_templates=m["n_templates"],
                n_tuples=m["n_tuples"],
            )
            for m in raw["per_relation"]
        ),
        macro=dict(raw["macro"]),
        excluded=tuple(raw.get("excluded", [])),
    )


def _safe_tag(tag: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", tag)


def report_basename(report: MetricsReport) -> str:
    return f"metrics_{_safe_tag(report.model_tag)}_{report.language}_{report.policy}"


def write_metrics_json(report: MetricsReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def write_metrics_csv(report: MetricsReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["language", "relation", "consistency", "accuracy", "consistency_accuracy",
                         "n_templates", "n_tuples"])
        for m in report.per_relation:
            writer.writerow([report.language, m.relation_id, repr(m.consistency), repr(m.accuracy),
                             repr(m.consistency_accuracy), m.n_templates, m.n_tuples])


def load_metrics_json(path: str) -> MetricsReport:
    try:
        with open(path, encoding="utf-8") as fh:
            return report_from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"cannot load metrics report {path}: {exc}") from exc


def write_report_files(report: MetricsReport, out_dir: str) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, report_basename(report))
    write_metrics_json(report, base + ".json")
    write_metrics_csv(report, base + ".csv")
    return base + ".json", base + ".csv"
