"""Consensus (MBR) reranking over multi-checkpoint hypothesis pools.

Each hypothesis is scored by its mean utility against every *other* pool
member used as a pseudo-reference; the best-scoring one is selected, ties
going to the lowest pool index.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .corpus import DATASET_TAGS, Hypothesis, NBestList
from .metrics import UtilityMetric


class UtilityCache:
    """Memoizes prepared texts and pairwise utilities for one metric.

    Shared across sentences and across pools during combination search,
    where the same texts are compared many times.
    """

    def __init__(self, utility: UtilityMetric):
        self.utility = utility
        self._prepared: dict = {}
        self._pairs: dict = {}

    def prepared(self, text: str):
        p = self._prepared.get(text)
        if p is None:
            p = self._prepared[text] = self.utility.prepare(text)
        return p

    def __call__(self, hyp: str, ref: str) -> float:
        key = (hyp, ref)
        v = self._pairs.get(key)
        if v is None:
            v = self.utility.compare(self.prepared(hyp), self.prepared(ref))
            self._pairs[key] = v
            if self.utility.symmetric:
                self._pairs[(ref, hyp)] = v
        return v


def consensus_scores(texts: Sequence[str], utility, cache: Optional[UtilityCache] = None) -> list:
    """Mean utility of each text against all the others (1.0 for a singleton)."""
    n = len(texts)
    if n == 0:
        raise ValueError("empty hypothesis pool")
    if n == 1:
        return [1.0]
    if cache is None:
        cache = UtilityCache(utility)
    # fsum is correctly rounded, so scores do not depend on pool order and exact ties stay exact
    return [math.fsum(cache(hyp, ref) for j, ref in enumerate(texts) if j != i) / (n - 1)
            for i, hyp in enumerate(texts)]


def mbr_select(pool_sentence: Sequence, utility: UtilityMetric,
               cache: Optional[UtilityCache] = None) -> tuple:
    """Return ``(index, consensus_score)`` of the consensus hypothesis."""
    texts = [h.text if isinstance(h, Hypothesis) else h for h in pool_sentence]
    scores = consensus_scores(texts, utility, cache)
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best, scores[best]


@dataclass(frozen=True)
class HypothesisPool:
    """Per-sentence concatenation of n-best lists from several checkpoints.

    ``origins`` lists ``(checkpoint_id, block_type)`` in concatenation order.
    """

    sentences: tuple
    origins: tuple

    def __post_init__(self):
        sentences = tuple(tuple(s) for s in self.sentences)
        if not sentences:
            raise ValueError("pool has no sentences")
        ids = {o[0] for o in self.origins}
        for i, s in enumerate(sentences):
            if not s:
                raise ValueError(f"sentence {i} has an empty pool")
            if ids and {h.origin for h in s} != ids:
                raise ValueError(f"sentence {i} does not draw on every pooled checkpoint")
        object.__setattr__(self, "sentences", sentences)
        object.__setattr__(self, "origins", tuple(tuple(o) for o in self.origins))

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)

    @classmethod
    def from_nbest(cls, lists: Sequence[NBestList], block_types: Optional[Sequence[str]] = None):
        if not lists:
            raise ValueError("no n-best lists")
        sizes = {nb.num_sentences for nb in lists}
        if len(sizes) != 1:
            raise ValueError(f"n-best lists cover different sentence counts: {sorted(sizes)}")
        origins = [nb.origin for nb in lists]
        if None in origins or len(set(origins)) != len(origins):
            raise ValueError("n-best lists need distinct origins")
        block_types = block_types or [None] * len(lists)
        sentences = [tuple(h if h.origin == nb.origin else dataclasses.replace(h, origin=nb.origin)
                           for nb in lists for h in nb.sentences[i])
                     for i in range(sizes.pop())]
        return cls(tuple(sentences), tuple(zip(origins, block_types)))


@dataclass(frozen=True)
class MbrResult:
    chosen: tuple
    chosen_index: tuple
    consensus: tuple
    utility_rows: Optional[tuple] = None

    @property
    def corpus_score(self) -> float:
        return math.fsum(self.consensus) / len(self.consensus)

    @property
    def translations(self) -> list:
        return [h.text for h in self.chosen]


def mbr_rerank(pool: HypothesisPool, utility: UtilityMetric,
               cache: Optional[UtilityCache] = None) -> MbrResult:
    cache = cache or UtilityCache(utility)
    chosen, index, consensus = [], [], []
    for hyps in pool.sentences:
        i, score = mbr_select(hyps, utility, cache)
        chosen.append(hyps[i])
        index.append(i)
        consensus.append(score)
    return MbrResult(tuple(chosen), tuple(index), tuple(consensus))


# --- pool construction and search -----------------------------------------

@dataclass(frozen=True)
class CombinationSpec:
    """How many of the best checkpoints to take from each block type."""

    counts: tuple
    available: Mapping = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != len(DATASET_TAGS):
            raise ValueError("counts must be (n_auth, n_bt, n_ft)")
        if any(c < 0 for c in counts) or sum(counts) < 1:
            raise ValueError(f"invalid counts {counts}: need non-negative counts summing to >= 1")
        object.__setattr__(self, "counts", counts)
        for tag, c in zip(DATASET_TAGS, counts):
            have = len(self.available.get(tag, ()))
            if c > have:
                raise ValueError(f"{c} {tag} checkpoints requested, {have} available")

    def selected(self) -> list:
        return [ckpt for tag, c in zip(DATASET_TAGS, self.counts) for ckpt in self.available[tag][:c]]

    def __str__(self):
        return "({},{},{})".format(*self.counts)


def rank_checkpoints(block_types: Mapping[str, str], scores: Optional[Mapping[str, float]] = None) -> dict:
    """Group checkpoint ids by block type, best external score first.

    Without scores (or on ties) the input order is kept.
    """
    ranked = {tag: [] for tag in DATASET_TAGS}
    for ckpt, tag in block_types.items():
        if tag not in ranked:
            raise ValueError(f"checkpoint {ckpt} has block type {tag!r}; pooling needs auth/bt/ft")
        ranked[tag].append(ckpt)
    if scores is not None:
        missing = [c for c in block_types if c not in scores]
        if missing:
            raise ValueError(f"no score for checkpoint(s): {', '.join(missing)}")
        for tag in ranked:
            ranked[tag].sort(key=lambda c: -scores[c])
    return {tag: tuple(ids) for tag, ids in ranked.items()}


def build_pool(spec: CombinationSpec, nbest_store: Mapping[str, NBestList]) -> HypothesisPool:
    lists = []
    types = []
    for tag, c in zip(DATASET_TAGS, spec.counts):
        for ckpt in spec.available[tag][:c]:
            if ckpt not in nbest_store:
                raise ValueError(f"no n-best list for checkpoint {ckpt}")
            lists.append(nbest_store[ckpt])
            types.append(tag)
    return HypothesisPool.from_nbest(lists, types)


def enumerate_compositions(available: Mapping[str, Sequence], total_k: int,
                           allow_fewer: bool = False) -> list:
    """All (a, c, e) with a + c + e == total_k (or 1..total_k) within availability."""
    if total_k < 1:
        raise ValueError("total_k must be >= 1")
    caps = [len(available.get(tag, ())) for tag in DATASET_TAGS]
    sizes = range(1, total_k + 1) if allow_fewer else (total_k,)
    out = []
    for a, c in itertools.product(range(caps[0], -1, -1), range(caps[1], -1, -1)):
        for k in sizes:
            e = k - a - c
            if 0 <= e <= caps[2]:
                out.append((a, c, e))
    return out


def combination_search(available: Mapping[str, Sequence], total_k: int,
                       nbest_store: Mapping[str, NBestList], utility: UtilityMetric,
                       eval_refs: Optional[Sequence[str]] = None, allow_fewer: bool = False) -> list:
    """Rerank every composition's pool and rank compositions by score.

    The score is the mean utility of the reranked output against
    ``eval_refs`` when given, else the mean consensus utility. Ties are
    ordered by ascending ``(a, c, e)``.
    """
    compositions = enumerate_compositions(available, total_k, allow_fewer)
    if not compositions:
        raise ValueError(f"no composition of {total_k} fits the available checkpoints")
    cache = UtilityCache(utility)
    results = []
    for counts in compositions:
        spec = CombinationSpec(counts, available)
        pool = build_pool(spec, nbest_store)
        rr = mbr_rerank(pool, utility, cache)
        if eval_refs is not None:
            if len(eval_refs) != pool.num_sentences:
                raise ValueError(f"{len(eval_refs)} references for {pool.num_sentences} sentences")
            score = math.fsum(cache(h, r) for h, r in zip(rr.translations, eval_refs)) / len(eval_refs)
        else:
            score = rr.corpus_score
        results.append((spec, score))
    results.sort(key=lambda item: (-item[1], item[0].counts))
    return results
