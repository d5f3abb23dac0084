"""Multi-mask candidate scoring against a masked language model.

A candidate spanning l tokens is scored by replacing the "[Y]" slot with l
mask tokens, running one forward pass, and averaging the candidate's
per-token probabilities at the mask positions: (1/l) * sum_i p(m_i = w_i).
Candidates are grouped by token count so each distinct l costs exactly one
forward pass per request.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import torch
from transformers import AutoModelForMaskedLM, AutoTokenizer

OBJECT_SLOT = "[Y]"
MASK_JOINS = ("space", "none")


class ScoringError(Exception):
    def __init__(self, detail: str, status: int = 422):
        super().__init__(detail)
        self.detail = detail
        self.status = status


@dataclass
class LoadedModel:
    model_name: str
    tokenizer: object
    model: object
    mask_token: str
    mask_token_id: int
    max_masks: int
    device: str
    mask_join: str
    _forward_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def join_masks(self, count: int) -> str:
        sep = " " if self.mask_join == "space" else ""
        return sep.join([self.mask_token] * count)


def load_model(model_name: str, device: str = "cpu", max_masks: int = 10,
               mask_join: str = "space") -> LoadedModel:
    if max_masks < 1:
        raise ValueError(f"max_masks must be >= 1, got {max_masks}")
    if mask_join not in MASK_JOINS:
        raise ValueError(f"mask_join must be one of {MASK_JOINS}, got {mask_join!r}")
    tokenizer = AutoTokenizer.from_pretrained(model_name)
    model = AutoModelForMaskedLM.from_pretrained(model_name)
    model.to(device)
    model.eval()
    mask_token = tokenizer.mask_token
    if mask_token is None or tokenizer.mask_token_id is None:
        raise ValueError(f"tokenizer for {model_name} has no mask token")
    return LoadedModel(
        model_name=model_name,
        tokenizer=tokenizer,
        model=model,
        mask_token=mask_token,
        mask_token_id=tokenizer.mask_token_id,
        max_masks=max_masks,
        device=device,
        mask_join=mask_join,
    )


def _slot_distributions(loaded: LoadedModel, context: str, n_masks: int) -> torch.Tensor:
    """Softmax over the vocabulary at each of the n mask slots: (n, vocab)."""
    rendered = context.replace(OBJECT_SLOT, loaded.join_masks(n_masks))
    encoded = loaded.tokenizer(rendered, return_tensors="pt").to(loaded.device)
    positions = (encoded["input_ids"][0] == loaded.mask_token_id).nonzero(as_tuple=True)[0]
    if len(positions) != n_masks:
        raise ScoringError(
            f"context renders to {len(positions)} mask slots, expected {n_masks} "
            f"(does the context already contain {loaded.mask_token!r}?)")
    with loaded._forward_lock, torch.no_grad():
        logits = loaded.model(**encoded).logits[0]
    return torch.softmax(logits[positions].float(), dim=-1)


def score_candidates(loaded: LoadedModel, context: str,
                     candidates: list[str]) -> tuple[list[float], list[int], list[int]]:
    """Returns (scores, token_counts, skipped_indices) in candidate order."""
    token_ids: list[list[int]] = []
    for candidate in candidates:
        ids = loaded.tokenizer(candidate, add_special_tokens=False)["input_ids"]
        if not ids:
            raise ScoringError(f"candidate {candidate!r} tokenizes to zero tokens")
        token_ids.append(ids)

    skipped = [i for i, ids in enumerate(token_ids) if len(ids) > loaded.max_masks]
    needed_lengths = sorted({len(ids) for i, ids in enumerate(token_ids) if i not in set(skipped)})
    distributions = {l: _slot_distributions(loaded, context, l) for l in needed_lengths}

    scores: list[float] = []
    counts: list[int] = []
    skip_set = set(skipped)
    for i, ids in enumerate(token_ids):
        counts.append(len(ids))
        if i in skip_set:
            scores.append(0.0)
            continue
        dist = distributions[len(ids)]
        probs = [dist[slot, token_id].item() for slot, token_id in enumerate(ids)]
        scores.append(sum(probs) / len(probs))
    return scores, counts, skipped
