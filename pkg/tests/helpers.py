"""Shared fixture builders and brute-force oracles for the test suite."""

import itertools
import math

import numpy as np

from blockbt.corpus import Hypothesis, NBestList
from blockbt.metrics import chrf

WORDS = ["kočka", "pes", "dům", "restaurace", "u", "Karla", "na", "Letné", "jídlo", "je", "dobré",
         "the", "cat", "dog", "house", "near", "river", "old", "town", "."]


def synthetic_nbest_lists(num_lists=12, nbest=6, num_sentences=50, seed=0):
    """Random n-best lists that share vocabulary so utilities are non-trivial (and sometimes tied)."""
    rng = np.random.default_rng(seed)
    bases = [" ".join(rng.choice(WORDS, size=rng.integers(3, 8))) for _ in range(num_sentences)]
    lists = []
    for k in range(num_lists):
        sentences = []
        for i, base in enumerate(bases):
            hyps = []
            for j in range(nbest):
                words = base.split()
                for _ in range(rng.integers(0, 3)):
                    words[rng.integers(len(words))] = str(rng.choice(WORDS))
                hyps.append(Hypothesis(i, " ".join(words), -float(j), f"ck{k}"))
            sentences.append(tuple(hyps))
        lists.append(NBestList(tuple(sentences), f"ck{k}"))
    return lists


def brute_force_mbr(texts, utility=chrf):
    """Direct double loop: argmax of mean utility against the others, lowest index on ties."""
    n = len(texts)
    if n == 1:
        return 0, 1.0
    best_i, best = None, None
    for i in range(n):
        row = []
        for j in range(n):
            if i != j:
                row.append(utility(texts[i], texts[j]))
        score = math.fsum(row) / (n - 1)
        if best is None or score > best:
            best_i, best = i, score
    return best_i, best


# complementary-errors fixture: every block type makes its own characteristic mistake,
# and the correct translation only appears lower in each checkpoint's n-best list
DIVERSITY_REFS = [
    "the red house stands on the hill",
    "we ate dinner at U Karla yesterday",
    "the old bridge crosses the wide river",
    "my sister reads books every evening",
]

_SWAPS = {
    "auth": [("red", "blue"), ("dinner", "lunch"), ("old", "new"), ("sister", "brother")],
    "bt": [("house", "home"), ("yesterday", "today"), ("bridge", "road"), ("books", "papers")],
    "ft": [("hill", "mountain"), ("ate", "had"), ("wide", "long"), ("every", "each")],
}


def _error(ref, swap, second=False):
    wrong, right = swap[1], swap[0]
    out = ref.replace(right, wrong)
    if second:
        # a near variant of the same mistake
        words = out.split()
        words[-1] = words[-1] + "s"
        out = " ".join(words)
    return out


def diversity_fixture(per_type=3):
    """Return (available, nbest_store, refs) for the complementary-errors search."""
    available, store = {}, {}
    for tag in ("auth", "bt", "ft"):
        ids = [f"{tag}{k}" for k in range(per_type)]
        available[tag] = tuple(ids)
        for ck in ids:
            sentences = []
            for i, ref in enumerate(DIVERSITY_REFS):
                swap = _SWAPS[tag][i]
                texts = [_error(ref, swap), _error(ref, swap, second=True), ref]
                sentences.append(tuple(Hypothesis(i, t, -float(r), ck) for r, t in enumerate(texts)))
            store[ck] = NBestList(tuple(sentences), ck)
    return available, store, list(DIVERSITY_REFS)


def brute_force_search(available, total_k, store, refs, utility=chrf):
    """Independent search: enumerate by itertools, pool by hand, rerank with the brute-force oracle."""
    results = []
    caps = [len(available[t]) for t in ("auth", "bt", "ft")]
    for counts in itertools.product(*(range(c + 1) for c in caps)):
        if sum(counts) != total_k:
            continue
        ckpts = [ck for tag, c in zip(("auth", "bt", "ft"), counts) for ck in available[tag][:c]]
        chosen = []
        for i in range(len(refs)):
            texts = [h.text for ck in ckpts for h in store[ck].sentences[i]]
            chosen.append(texts[brute_force_mbr(texts, utility)[0]])
        score = sum(utility(h, r) for h, r in zip(chosen, refs)) / len(refs)
        results.append((counts, score))
    results.sort(key=lambda item: (-item[1], item[0]))
    return results


def composition_count(total_k, caps):
    """Compositions of total_k into len(caps) parts with part i <= caps[i], by inclusion-exclusion."""
    from math import comb

    parts = len(caps)
    count = 0
    for r in range(parts + 1):
        for subset in itertools.combinations(caps, r):
            rest = total_k - sum(c + 1 for c in subset)
            if rest >= 0:
                count += (-1) ** r * comb(rest + parts - 1, parts - 1)
    return count


# --- toy phenomenology measurements ---------------------------------------

def toy_block_run(seed, block=200, cycles=4, lr=0.05, alpha=0.01, avg_k=8, ci=50, eval_every=10):
    from blockbt.schedule import compile_block_schedule
    from blockbt.toytrain import ToyTrainer, make_domains

    manifest = compile_block_schedule(block, block * 4 * cycles, ci)
    trainer = ToyTrainer(make_domains(seed=seed), manifest, lr, 8, alpha, avg_k, eval_every, seed)
    return manifest, trainer.run()


def block_pairs(manifest, curve):
    """(wins, total) over pairs (own-domain block, other block) after the first cycle.

    A pair wins when the domain's mean raw eval loss inside its own block is
    below the mean inside the other block.
    """
    from blockbt.toytrain import curve_series

    wins = total = 0
    for tag in ("auth", "bt", "ft"):
        updates, losses = curve_series(curve, "raw", tag)
        means = []
        for e in manifest.entries[4:]:
            inside = (updates > e.start) & (updates <= e.end)
            means.append((e.dataset, losses[inside].mean()))
        own = [v for d, v in means if d == tag]
        other = [v for d, v in means if d != tag]
        for a in own:
            for b in other:
                total += 1
                wins += a < b
    return wins, total


def second_half_variance_ratio(curve, variant):
    """Worst per-domain ratio var(variant) / var(raw) over the second half of evaluations."""
    from blockbt.toytrain import curve_series

    ratios = []
    for tag in ("auth", "bt", "ft"):
        _, raw = curve_series(curve, "raw", tag)
        _, other = curve_series(curve, variant, tag)
        half = len(raw) // 2
        ratios.append(other[half:].var() / raw[half:].var())
    return max(ratios)


def final_mixed_losses(curve):
    """(exp, raw) mean loss over the three domain eval sets at the last evaluation."""
    from blockbt.toytrain import curve_series

    return curve_series(curve, "exp")[1][-1], curve_series(curve, "raw")[1][-1]
