"""Block-BT and mixed-BT training schedules.

A schedule maps every update index in ``[0, total_updates)`` to the
dataset it trains on. In the block regime the dataset cycles through
``auth, bt, auth, ft`` in equally long blocks; in the mixed regime all
data is shuffled together under the single tag ``mixed``.

Checkpoints are saved every ``checkpoint_interval`` updates. A checkpoint
at update ``u`` is attributed to the entry with ``start <= u < end``, so a
checkpoint sitting exactly on a block boundary belongs to the later
block. The final checkpoint (``u == total_updates``) belongs to the last
entry.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Optional

import numpy as np

from .corpus import DATASET_TAGS, Corpus, FormatError

BLOCK_CYCLE = ("auth", "bt", "auth", "ft")
MIXED = "mixed"
REGIMES = ("block", "mixed")


@dataclass(frozen=True)
class ScheduleEntry:
    start: int
    end: int
    dataset: str
    block_index: int

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class CheckpointTag:
    checkpoint_id: str
    update: int
    block_type: str
    block_index: int
    spans_boundary: bool = False


def checkpoint_id(update: int) -> str:
    return f"ckpt-{update}"


@dataclass(frozen=True)
class ScheduleManifest:
    regime: str
    block_size: int
    total_updates: int
    checkpoint_interval: int
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        self.validate()

    def validate(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        for name in ("block_size", "total_updates", "checkpoint_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.entries:
            raise ValueError("manifest has no entries")
        pos = 0
        for k, e in enumerate(self.entries):
            if e.start != pos or e.end <= e.start:
                raise ValueError(f"entry {k} [{e.start},{e.end}) breaks the partition at {pos}")
            if e.block_index != k:
                raise ValueError(f"entry {k} has block_index {e.block_index}")
            if self.regime == "block":
                if e.dataset != BLOCK_CYCLE[k % 4]:
                    raise ValueError(f"entry {k} is {e.dataset!r}, cycle requires {BLOCK_CYCLE[k % 4]!r}")
            elif e.dataset != MIXED:
                raise ValueError(f"mixed manifest entry tagged {e.dataset!r}")
            last = k == len(self.entries) - 1
            if e.length > self.block_size or (not last and e.length != self.block_size):
                raise ValueError(f"entry {k} has length {e.length}, block size is {self.block_size}")
            pos = e.end
        if pos != self.total_updates:
            raise ValueError(f"entries cover [0,{pos}) but total_updates is {self.total_updates}")

    @property
    def datasets(self) -> tuple:
        """Distinct dataset tags in order of first appearance."""
        return tuple(dict.fromkeys(e.dataset for e in self.entries))

    def entry_index_at(self, update: int) -> int:
        if not 0 <= update <= self.total_updates:
            raise ValueError(f"update {update} outside [0, {self.total_updates}]")
        if update == self.total_updates:
            return len(self.entries) - 1
        if self.regime == "mixed":
            return 0
        return update // self.block_size

    def entry_at(self, update: int) -> ScheduleEntry:
        return self.entries[self.entry_index_at(update)]

    def checkpoints(self) -> list:
        tags = []
        for u in range(self.checkpoint_interval, self.total_updates + 1, self.checkpoint_interval):
            e = self.entry_at(u)
            tags.append(CheckpointTag(checkpoint_id(u), u, e.dataset, e.block_index))
        return tags


def _check_positive(**values) -> None:
    for name, v in values.items():
        if int(v) != v or v <= 0:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")


def compile_block_schedule(block_size: int, total_updates: int,
                           checkpoint_interval: int = 5000) -> ScheduleManifest:
    _check_positive(block_size=block_size, total_updates=total_updates,
                    checkpoint_interval=checkpoint_interval)
    if checkpoint_interval > block_size:
        warnings.warn(f"checkpoint interval {checkpoint_interval} exceeds block size {block_size}; "
                      "some blocks will hold no checkpoint", stacklevel=2)
    entries = []
    for k, start in enumerate(range(0, total_updates, block_size)):
        end = min(start + block_size, total_updates)
        entries.append(ScheduleEntry(start, end, BLOCK_CYCLE[k % 4], k))
    return ScheduleManifest("block", block_size, total_updates, checkpoint_interval, tuple(entries))


def compile_mixed_schedule(total_updates: int, checkpoint_interval: int = 5000) -> ScheduleManifest:
    _check_positive(total_updates=total_updates, checkpoint_interval=checkpoint_interval)
    return ScheduleManifest("mixed", total_updates, total_updates, checkpoint_interval,
                            (ScheduleEntry(0, total_updates, MIXED, 0),))


# --- sampling -------------------------------------------------------------

def epoch_permutation(size: int, seed: int, epoch: int) -> np.ndarray:
    """Visiting order of ``range(size)`` in the given epoch."""
    return np.random.default_rng(seed + epoch).permutation(size)


class EpochSampler:
    """Draws indices from a seeded permutation, reshuffling with ``seed + epoch`` when exhausted."""

    def __init__(self, size: int, seed: int):
        if size <= 0:
            raise ValueError("cannot sample from an empty dataset")
        self.size = size
        self.seed = seed
        self.epoch = 0
        self.cursor = 0
        self._perm = epoch_permutation(size, seed, 0)

    def take(self, count: int) -> np.ndarray:
        out = []
        while count > 0:
            if self.cursor == self.size:
                self.epoch += 1
                self.cursor = 0
                self._perm = epoch_permutation(self.size, self.seed, self.epoch)
            chunk = self._perm[self.cursor:self.cursor + count]
            self.cursor += len(chunk)
            count -= len(chunk)
            out.append(chunk)
        return np.concatenate(out) if len(out) > 1 else out[0]


def index_stream(manifest: ScheduleManifest, sizes: Mapping[str, int], batch_size: int,
                 seed: int) -> Iterator[tuple]:
    """Yield ``(update, [(dataset, index), ...])`` for every update of the manifest.

    In the block regime each dataset keeps its own sampler, so its cursor
    carries over between blocks of the same type. In the mixed regime the
    datasets are concatenated in ``auth, bt, ft`` order and sampled as one.
    """
    _check_positive(batch_size=batch_size)
    if manifest.regime == "mixed":
        missing = [t for t in DATASET_TAGS if t not in sizes]
    else:
        missing = [t for t in manifest.datasets if t not in sizes]
    if missing:
        raise ValueError(f"no corpus for scheduled dataset(s): {', '.join(missing)}")
    for tag in (DATASET_TAGS if manifest.regime == "mixed" else manifest.datasets):
        if sizes[tag] <= 0:
            raise ValueError(f"corpus for {tag!r} is empty")
    return _index_stream(manifest, dict(sizes), batch_size, seed)


def _index_stream(manifest, sizes, batch_size, seed):
    if manifest.regime == "mixed":
        offsets = []
        for tag in DATASET_TAGS:
            offsets.extend((tag, i) for i in range(sizes[tag]))
        sampler = EpochSampler(len(offsets), seed)
        for u in range(manifest.total_updates):
            yield u, [offsets[i] for i in sampler.take(batch_size)]
        return
    samplers = {tag: EpochSampler(sizes[tag], seed) for tag in manifest.datasets}
    for entry in manifest.entries:
        sampler = samplers[entry.dataset]
        for u in range(entry.start, entry.end):
            yield u, [(entry.dataset, int(i)) for i in sampler.take(batch_size)]


def batch_stream(manifest: ScheduleManifest, corpora: Mapping[str, Corpus], batch_size: int,
                 seed: int) -> Iterator[tuple]:
    """Yield ``(update, tuple of SentencePair)``; validates inputs before the first batch."""
    indices = index_stream(manifest, {t: c.size for t, c in corpora.items()}, batch_size, seed)
    return ((u, tuple(corpora[t].pairs[i] for t, i in batch)) for u, batch in indices)


# --- file formats ---------------------------------------------------------

_HEADER = re.compile(r"#regime=(\w+) block_size=(\d+) ckpt_interval=(\d+)$")


def format_manifest(manifest: ScheduleManifest) -> str:
    lines = [f"#regime={manifest.regime} block_size={manifest.block_size} "
             f"ckpt_interval={manifest.checkpoint_interval}"]
    lines += [f"{e.start}\t{e.end}\t{e.dataset}\t{e.block_index}" for e in manifest.entries]
    return "\n".join(lines) + "\n"


def read_manifest(path) -> ScheduleManifest:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError("empty manifest", path)
    m = _HEADER.match(lines[0].strip())
    if not m:
        raise FormatError("bad manifest header", path, 1)
    regime, block_size, interval = m.group(1), int(m.group(2)), int(m.group(3))
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 4:
            raise FormatError(f"expected 4 fields, got {len(fields)}", path, lineno)
        try:
            entries.append(ScheduleEntry(int(fields[0]), int(fields[1]), fields[2], int(fields[3])))
        except ValueError:
            raise FormatError("non-integer field", path, lineno) from None
    if not entries:
        raise FormatError("manifest has no entries", path)
    try:
        return ScheduleManifest(regime, block_size, entries[-1].end, interval, tuple(entries))
    except ValueError as exc:
        raise FormatError(str(exc), path) from None


def format_checkpoint_tags(tags) -> str:
    return "".join(f"{t.checkpoint_id}\t{t.update}\t{t.block_type}\t{t.block_index}\n" for t in tags)


def read_checkpoint_tags(path) -> list:
    tags = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise FormatError(f"expected 4 fields, got {len(fields)}", path, lineno)
        if fields[2] not in DATASET_TAGS + (MIXED,):
            raise FormatError(f"unknown block type {fields[2]!r}", path, lineno)
        try:
            tags.append(CheckpointTag(fields[0], int(fields[1]), fields[2], int(fields[3])))
        except ValueError:
            raise FormatError("non-integer field", path, lineno) from None
    if not tags:
        raise FormatError("no checkpoint tags", path)
    return tags


def write_manifest(path, manifest: ScheduleManifest) -> None:
    Path(path).write_text(format_manifest(manifest), encoding="utf-8")


def write_checkpoint_tags(path, tags) -> None:
    Path(path).write_text(format_checkpoint_tags(tags), encoding="utf-8")
