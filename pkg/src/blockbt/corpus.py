"""Data model and loaders for parallel corpora, n-best lists and NE test sets.

File formats (all UTF-8, one record per line):

* parallel corpus: ``source<TAB>target``
* n-best list: ``index ||| text ||| score`` with zero-based, contiguous indices
* NE test set: ``source<TAB>reference<TAB>entity``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

DATASET_TAGS = ("auth", "bt", "ft")
NBEST_SEP = " ||| "


class FormatError(ValueError):
    """Malformed input file. Carries the path and 1-based line number when known."""

    def __init__(self, message: str, path=None, line: Optional[int] = None):
        self.path = str(path) if path is not None else None
        self.line = line
        prefix = ""
        if self.path is not None:
            prefix += f"{self.path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


def check_tag(tag: str) -> str:
    if tag not in DATASET_TAGS:
        raise ValueError(f"unknown dataset tag {tag!r}, expected one of {DATASET_TAGS}")
    return tag


@dataclass(frozen=True)
class SentencePair:
    source: str
    target: str
    dataset: str

    def __post_init__(self):
        check_tag(self.dataset)
        if not self.source.strip() or not self.target.strip():
            raise ValueError("source and target must be non-empty")


@dataclass(frozen=True)
class Corpus:
    id: str
    dataset: str
    pairs: tuple

    def __post_init__(self):
        check_tag(self.dataset)
        object.__setattr__(self, "pairs", tuple(self.pairs))
        for p in self.pairs:
            if p.dataset != self.dataset:
                raise ValueError(f"pair tagged {p.dataset!r} in {self.dataset!r} corpus")

    @property
    def size(self) -> int:
        return len(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self) -> Iterator[SentencePair]:
        return iter(self.pairs)


@dataclass(frozen=True)
class Hypothesis:
    sentence_index: int
    text: str
    model_score: float
    origin: Optional[str] = None


@dataclass(frozen=True)
class NBestList:
    """Candidate translations grouped by source sentence.

    ``sentences[i]`` holds the hypotheses of sentence ``i`` in file order,
    which is also non-increasing model-score order.
    """

    sentences: tuple
    origin: Optional[str] = None
    n: int = field(init=False)

    def __post_init__(self):
        groups = tuple(tuple(g) for g in self.sentences)
        if not groups:
            raise ValueError("n-best list has no sentences")
        for i, group in enumerate(groups):
            if not group:
                raise ValueError(f"sentence {i} has no hypotheses")
            for h in group:
                if h.sentence_index != i:
                    raise ValueError(f"hypothesis for sentence {h.sentence_index} filed under {i}")
            for a, b in zip(group, group[1:]):
                if b.model_score > a.model_score:
                    raise ValueError(f"sentence {i}: scores not in non-increasing order")
        object.__setattr__(self, "sentences", groups)
        object.__setattr__(self, "n", max(len(g) for g in groups))

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)

    @property
    def hypotheses(self) -> list:
        return [h for group in self.sentences for h in group]

    def __getitem__(self, index: int) -> tuple:
        return self.sentences[index]


@dataclass(frozen=True)
class NeTestCase:
    source: str
    reference: str
    entity: str

    def __post_init__(self):
        if not self.entity or self.entity not in self.reference:
            raise ValueError(f"entity {self.entity!r} is not a substring of the reference")


def _read_lines(path) -> list:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        # report the line holding the bad byte
        raw = path.read_bytes()
        line = raw[: exc.start].count(b"\n") + 1
        raise FormatError(f"invalid UTF-8 ({exc.reason})", path, line) from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty file", path)
    return [ln[:-1] if ln.endswith("\r") else ln for ln in lines]


def load_parallel(path, tag: str, corpus_id: Optional[str] = None) -> Corpus:
    check_tag(tag)
    pairs = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        fields = line.split("\t")
        if len(fields) != 2:
            raise FormatError(f"expected 2 fields, got {len(fields)}", path, lineno)
        try:
            pairs.append(SentencePair(fields[0], fields[1], tag))
        except ValueError as exc:
            raise FormatError(str(exc), path, lineno) from None
    return Corpus(corpus_id or Path(path).stem, tag, tuple(pairs))


def load_nbest(path, origin: Optional[str] = None) -> NBestList:
    """Read an n-best file. ``origin`` defaults to the file stem."""
    origin = origin if origin is not None else Path(path).stem
    groups: list = []
    last_score = None
    for lineno, line in enumerate(_read_lines(path), start=1):
        fields = [f.strip() for f in line.split("|||")]
        if len(fields) != 3:
            raise FormatError(f"expected 3 '|||'-separated fields, got {len(fields)}", path, lineno)
        try:
            index = int(fields[0])
        except ValueError:
            raise FormatError(f"non-numeric sentence index {fields[0]!r}", path, lineno) from None
        try:
            score = float(fields[2])
        except ValueError:
            raise FormatError(f"non-numeric score {fields[2]!r}", path, lineno) from None
        if not math.isfinite(score):
            raise FormatError(f"non-finite score {fields[2]!r}", path, lineno)
        if index == len(groups):
            groups.append([])
            last_score = None
        elif index != len(groups) - 1:
            expected = len(groups)
            raise FormatError(f"sentence index {index} out of sequence (expected {expected - 1} or {expected})",
                              path, lineno)
        if last_score is not None and score > last_score:
            raise FormatError("scores must be non-increasing within a sentence", path, lineno)
        last_score = score
        groups[-1].append(Hypothesis(index, fields[1], score, origin))
    return NBestList(tuple(tuple(g) for g in groups), origin)


def load_ne_testset(path) -> list:
    cases = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError(f"expected 3 fields, got {len(fields)}", path, lineno)
        try:
            cases.append(NeTestCase(*fields))
        except ValueError as exc:
            raise FormatError(str(exc), path, lineno) from None
    return cases


def format_parallel(pairs: Iterable[SentencePair]) -> str:
    return "".join(f"{p.source}\t{p.target}\n" for p in pairs)


def format_nbest(nbest: NBestList) -> str:
    return "".join(f"{h.sentence_index}{NBEST_SEP}{h.text}{NBEST_SEP}{h.model_score!r}\n"
                   for h in nbest.hypotheses)


def format_ne_testset(cases: Sequence[NeTestCase]) -> str:
    return "".join(f"{c.source}\t{c.reference}\t{c.entity}\n" for c in cases)


def write_parallel(path, corpus: Corpus) -> None:
    Path(path).write_text(format_parallel(corpus.pairs), encoding="utf-8")


def write_nbest(path, nbest: NBestList) -> None:
    Path(path).write_text(format_nbest(nbest), encoding="utf-8")


def write_ne_testset(path, cases: Sequence[NeTestCase]) -> None:
    Path(path).write_text(format_ne_testset(cases), encoding="utf-8")


def read_lines(path) -> list:
    """Plain text, one segment per line (blank lines kept as empty segments)."""
    return _read_lines(path)
