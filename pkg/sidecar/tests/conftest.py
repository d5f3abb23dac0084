import os

import pytest
import torch
from transformers import BertConfig, BertForMaskedLM, BertTokenizer

from polyprobe_sidecar.app import create_app

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
CONFORMANCE_REQUESTS = os.path.join(REPO_ROOT, "tests", "data", "conformance", "requests.json")

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "ada", "was", "born", "in", "paris", "rome", "berlin", "new", "york", "bob",
    "gil", "plays", "the", "piano", "violin", "eve", "works", "for", "ibm", "nasa",
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A local random-weight BERT small enough for fast CPU tests."""
    model_dir = str(tmp_path_factory.mktemp("tinybert"))
    vocab_path = os.path.join(model_dir, "vocab.txt")
    with open(vocab_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(VOCAB) + "\n")
    tokenizer = BertTokenizer(vocab_path)
    tokenizer.save_pretrained(model_dir)
    torch.manual_seed(0)
    config = BertConfig(vocab_size=len(VOCAB), hidden_size=32, num_hidden_layers=2,
                        num_attention_heads=4, intermediate_size=64,
                        max_position_embeddings=64)
    BertForMaskedLM(config).save_pretrained(model_dir)
    return model_dir


@pytest.fixture(scope="session")
def app(tiny_model_dir):
    return create_app(model_name=tiny_model_dir, max_masks=4)


@pytest.fixture(scope="session")
def client(app):
    from fastapi.testclient import TestClient

    with TestClient(app) as tc:
        yield tc
