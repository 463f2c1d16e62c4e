"""Sentence and corpus-level MT metrics.

chrF and sentence BLEU double as MBR utilities. Both are split into a
``*_stats`` function (n-gram counts for one text, cacheable) and a scorer
over two stats objects, so that a pool of N hypotheses costs N
extractions instead of N**2.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

from .corpus import FormatError, NeTestCase

# 13a tokenization (mteval-v13a as used by WMT), no lowercasing
_TOK_RULES = (
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),
)


@lru_cache(maxsize=2**16)
def tokenize_13a(line: str) -> tuple:
    line = line.replace("<skipped>", "").replace("-\n", "").replace("\n", " ")
    if "&" in line:
        line = (line.replace("&quot;", '"').replace("&amp;", "&")
                .replace("&lt;", "<").replace("&gt;", ">"))
    line = f" {line} "
    for pattern, repl in _TOK_RULES:
        line = pattern.sub(repl, line)
    return tuple(line.split())


def _ngrams(seq, n: int) -> Counter:
    return Counter(tuple(seq[i:i + n]) if not isinstance(seq, str) else seq[i:i + n]
                   for i in range(len(seq) - n + 1))


# --- chrF -----------------------------------------------------------------

@lru_cache(maxsize=2**16)
def chrf_stats(text: str, max_n: int = 6) -> tuple:
    chars = "".join(text.split())
    return tuple(_ngrams(chars, n) for n in range(1, max_n + 1))


def chrf_from_stats(hyp_stats: tuple, ref_stats: tuple, beta: float = 2.0) -> float:
    """Mean over n-gram orders of the F-beta score.

    Orders where neither side has any n-gram are skipped; an order where
    only one side has n-grams contributes 0.
    """
    factor = beta * beta
    total = 0.0
    orders = 0
    for hyp, ref in zip(hyp_stats, ref_stats):
        n_hyp = sum(hyp.values())
        n_ref = sum(ref.values())
        if n_hyp == 0 and n_ref == 0:
            continue
        orders += 1
        if n_hyp == 0 or n_ref == 0:
            continue
        if len(hyp) > len(ref):
            hyp, ref = ref, hyp
        match = sum(min(c, ref[g]) for g, c in hyp.items() if g in ref)
        if match == 0:
            continue
        prec = match / n_hyp
        rec = match / n_ref
        total += (1 + factor) * prec * rec / (factor * prec + rec)
    if orders == 0:
        return 0.0
    return total / orders


def chrf(hypothesis: str, reference: str, max_n: int = 6, beta: float = 2.0) -> float:
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    return chrf_from_stats(chrf_stats(hypothesis, max_n), chrf_stats(reference, max_n), beta)


# --- BLEU -----------------------------------------------------------------

@lru_cache(maxsize=2**16)
def bleu_stats(text: str, max_n: int = 4) -> tuple:
    """(token count, per-order n-gram Counters) of the 13a-tokenized text."""
    tokens = tokenize_13a(text)
    return len(tokens), tuple(_ngrams(tokens, n) for n in range(1, max_n + 1))


def _clipped_matches(hyp: Counter, ref: Counter) -> int:
    return sum(min(c, ref[g]) for g, c in hyp.items() if g in ref)


def sentence_bleu_from_stats(hyp_stats: tuple, ref_stats: tuple) -> float:
    hyp_len, hyp_grams = hyp_stats
    ref_len, ref_grams = ref_stats
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for n, (h, r) in enumerate(zip(hyp_grams, ref_grams), start=1):
        matches = _clipped_matches(h, r)
        total = sum(h.values())
        if n == 1:
            if matches == 0:
                return 0.0
            log_sum += math.log(matches / total)
        else:
            # add-one smoothing
            log_sum += math.log((matches + 1) / (total + 1))
    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / hyp_len)
    return bp * math.exp(log_sum / len(hyp_grams))


def sentence_bleu(hypothesis: str, reference: str, max_n: int = 4) -> float:
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    return sentence_bleu_from_stats(bleu_stats(hypothesis, max_n), bleu_stats(reference, max_n))


def corpus_bleu(hypotheses: Sequence[str], references: Sequence[str], max_n: int = 4) -> float:
    """Corpus BLEU on a 0-100 scale (13a tokens, no smoothing)."""
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * max_n
    totals = [0] * max_n
    sys_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h_len, h_grams = bleu_stats(hyp, max_n)
        r_len, r_grams = bleu_stats(ref, max_n)
        sys_len += h_len
        ref_len += r_len
        for n in range(max_n):
            matches[n] += _clipped_matches(h_grams[n], r_grams[n])
            totals[n] += sum(h_grams[n].values())
    # orders with no hypothesis n-grams at all (very short corpora) are left out
    orders = [(m, t) for m, t in zip(matches, totals) if t > 0]
    if sys_len == 0 or any(m == 0 for m, _ in orders):
        return 0.0
    log_prec = sum(math.log(m / t) for m, t in orders) / len(orders)
    bp = 1.0 if sys_len >= ref_len else math.exp(1 - ref_len / sys_len)
    return 100.0 * bp * math.exp(log_prec)


# --- utility wrapper ------------------------------------------------------

@dataclass(frozen=True)
class UtilityMetric:
    """A sentence-level similarity U(hypothesis, reference) in [0, 1].

    ``prepare`` maps a text to whatever ``compare`` consumes; both default to
    the identity/plain call for simple metrics.
    """

    name: str
    compare: Callable
    prepare: Callable = lambda text: text
    symmetric: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, hypothesis: str, reference: str) -> float:
        return self.compare(self.prepare(hypothesis), self.prepare(reference))


def exact_match(hypothesis: str, reference: str) -> float:
    return 1.0 if hypothesis == reference else 0.0


def make_utility(name: str, **params) -> UtilityMetric:
    if name == "chrf":
        max_n = params.get("max_n", 6)
        beta = params.get("beta", 2.0)
        return UtilityMetric("chrf", lambda h, r: chrf_from_stats(h, r, beta),
                             lambda t: chrf_stats(t, max_n), False, {"max_n": max_n, "beta": beta})
    if name == "sbleu":
        max_n = params.get("max_n", 4)
        return UtilityMetric("sbleu", sentence_bleu_from_stats, lambda t: bleu_stats(t, max_n), False,
                             {"max_n": max_n, "smoothing": "add-one", "tokenize": "13a"})
    if name == "exact":
        return UtilityMetric("exact", exact_match, symmetric=True)
    raise ValueError(f"unknown utility {name!r}")


# --- NE accuracy ----------------------------------------------------------

def contains_entity(hypothesis: str, entity: str) -> bool:
    """Case-sensitive match of ``entity`` not glued to word characters on either side."""
    pattern = r"(?<!\w)" + re.escape(entity) + r"(?!\w)"
    return re.search(pattern, hypothesis) is not None


def ne_hits(hypotheses: Sequence[str], cases: Sequence[NeTestCase]) -> list:
    if len(hypotheses) != len(cases):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(cases)} test cases")
    return [contains_entity(h, c.entity) for h, c in zip(hypotheses, cases)]


def ne_accuracy(hypotheses: Sequence[str], cases: Sequence[NeTestCase]) -> float:
    hits = ne_hits(hypotheses, cases)
    if not hits:
        raise ValueError("no test cases")
    return sum(hits) / len(hits)


# --- reports --------------------------------------------------------------

@dataclass(frozen=True)
class ScoreReport:
    metric: str
    corpus_score: float
    per_sentence: tuple
    checkpoint: Optional[str] = None


def load_external_scores(path, checkpoint: Optional[str] = None) -> ScoreReport:
    """Read one score per line. ``# metric=<name>`` names the metric; other ``#`` lines are comments."""
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"invalid UTF-8 ({exc.reason})", path) from None
    metric = "external"
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("#"):
            m = re.match(r"#\s*metric\s*=\s*(\S+)", stripped)
            if m:
                metric = m.group(1)
            continue
        try:
            value = float(stripped)
        except ValueError:
            raise FormatError(f"non-numeric score {stripped!r}", path, lineno) from None
        if not math.isfinite(value):
            raise FormatError(f"non-finite score {stripped!r}", path, lineno)
        values.append(value)
    if not values:
        raise FormatError("no scores in file", path)
    return ScoreReport(metric, math.fsum(values) / len(values), tuple(values), checkpoint)
