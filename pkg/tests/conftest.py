import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from polyprobe.corpus import FactTuple, LanguagePack, Relation, Template, template_id
from polyprobe.scorer import ReferenceScorer

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
RAW_FIXTURE = os.path.join(DATA_DIR, "raw_fixture")
REFERENCE_MODEL = os.path.join(DATA_DIR, "reference_model.json")
CONFORMANCE_REQUESTS = os.path.join(DATA_DIR, "conformance", "requests.json")
BUILD_CONFIG = os.path.join(DATA_DIR, "build_config.json")
GOLDEN_PACK = os.path.join(DATA_DIR, "golden_pack")


def make_template(relation_id, text, language="en", sources=("g", "m2m"), status="unreviewed"):
    return Template(
        id=template_id(language, relation_id, text),
        relation_id=relation_id,
        language=language,
        text=text,
        sources=frozenset(sources),
        review_status=status,
    )


def make_tuple(relation_id, sub_uri, obj_uri, sub_label, obj_label, language="en"):
    return FactTuple(
        sub_uri=sub_uri,
        obj_uri=obj_uri,
        sub_label=sub_label,
        obj_label=obj_label,
        relation_id=relation_id,
        language=language,
    )


def make_pack(language="en", relations=None):
    return LanguagePack(language=language, relations=relations or {}, metadata={})


@pytest.fixture
def toy_pack():
    """One relation, 2 templates, 3 tuples (6 cells)."""
    templates = [
        make_template("P19", "[X] was born in [Y]"),
        make_template("P19", "[X] is originally from [Y]"),
    ]
    tuples = [
        make_tuple("P19", "Q1", "Q10", "Ada", "Paris"),
        make_tuple("P19", "Q2", "Q11", "Bob", "Rome"),
        make_tuple("P19", "Q3", "Q10", "Cid", "Paris"),
    ]
    rel = Relation.build("P19", templates, tuples)
    return make_pack(relations={"P19": rel})


@pytest.fixture
def reference_scorer():
    return ReferenceScorer.from_json(REFERENCE_MODEL)


class CountingScorer:
    """Wraps a scorer and counts score_candidates calls."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self.model_tag = inner.model_tag

    def score_candidates(self, request):
        self.calls += 1
        return self.inner.score_candidates(request)


class SimulatedInterrupt(RuntimeError):
    pass


class FailingAfter:
    """Raises (simulating an interrupt) after a fixed number of calls."""

    def __init__(self, inner, allowed):
        self.inner = inner
        self.allowed = allowed
        self.calls = 0
        self.model_tag = inner.model_tag

    def score_candidates(self, request):
        if self.calls >= self.allowed:
            raise SimulatedInterrupt("simulated interruption")
        self.calls += 1
        return self.inner.score_candidates(request)
