"""Parameter snapshots, exponential smoothing and consecutive-checkpoint averaging.

Arithmetic is carried out in float64; snapshots store float32.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import FormatError
from .schedule import CheckpointTag

SNAPSHOT_MAGIC = b"PSNAP1\n"


@dataclass(frozen=True, eq=False)
class ParamSnapshot:
    values: np.ndarray
    update: int
    tag: Optional[CheckpointTag] = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32).reshape(-1)
        if values.size == 0:
            raise ValueError("snapshot has no parameters")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"snapshot at update {self.update} has non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, ParamSnapshot):
            return NotImplemented
        return (self.update == other.update and self.tag == other.tag
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True, eq=False)
class SmoothingState:
    """Running exponential average of parameters.

    With ``bias_correction`` the average starts from zero and is read out
    divided by ``1 - (1 - alpha) ** updates_seen``; otherwise it starts at
    the first parameters seen.
    """

    alpha: float
    smoothed: Optional[np.ndarray] = None
    updates_seen: int = 0
    bias_correction: bool = False
    allow_alpha_one: bool = False

    def __post_init__(self):
        upper_ok = self.alpha < 1 or (self.allow_alpha_one and self.alpha == 1)
        if not (0 < self.alpha and upper_ok):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.smoothed is not None:
            arr = np.array(self.smoothed, dtype=np.float64).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, "smoothed", arr)

    @property
    def dim(self) -> Optional[int]:
        return None if self.smoothed is None else self.smoothed.size

    def value(self) -> np.ndarray:
        if self.smoothed is None:
            raise ValueError("smoothing state is empty")
        if self.bias_correction and self.updates_seen:
            return self.smoothed / (1.0 - (1.0 - self.alpha) ** self.updates_seen)
        return self.smoothed

    def snapshot(self, update: int, tag: Optional[CheckpointTag] = None) -> ParamSnapshot:
        return ParamSnapshot(self.value(), update, tag)


def smooth_step(state: SmoothingState, theta) -> SmoothingState:
    x = np.asarray(theta.values if isinstance(theta, ParamSnapshot) else theta, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite parameters passed to smoothing")
    if state.smoothed is None:
        prev = np.zeros_like(x) if state.bias_correction else x
    else:
        if x.size != state.smoothed.size:
            raise ValueError(f"dimension mismatch: state has {state.smoothed.size}, input has {x.size}")
        prev = state.smoothed
    new = state.alpha * x + (1.0 - state.alpha) * prev
    return dataclasses.replace(state, smoothed=new, updates_seen=state.updates_seen + 1)


def average_consecutive(snapshots: Sequence[ParamSnapshot], k: int) -> ParamSnapshot:
    """Mean of the last ``k`` snapshots, stamped with the newest one's update and tag.

    If the window covers checkpoints from more than one block the result's
    tag has ``spans_boundary`` set.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(snapshots) < k:
        raise ValueError(f"need {k} snapshots, got {len(snapshots)}")
    window = list(snapshots[-k:])
    dims = {s.dim for s in window}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch among snapshots: {sorted(dims)}")
    for a, b in zip(window, window[1:]):
        if b.update <= a.update:
            raise ValueError("snapshots must be ordered by update")
    mean = np.mean(np.stack([s.values for s in window]), axis=0, dtype=np.float64)
    newest = window[-1]
    tag = newest.tag
    if tag is not None:
        blocks = {s.tag.block_index for s in window if s.tag is not None}
        if len(blocks) > 1:
            tag = dataclasses.replace(tag, spans_boundary=True)
    return ParamSnapshot(mean, newest.update, tag)


def replay_smoothing(stream: Iterable[ParamSnapshot], alpha: float, emit_every: int, *,
                     bias_correction: bool = False, allow_alpha_one: bool = False) -> list:
    """Smooth a per-update parameter stream, emitting the average at every multiple of ``emit_every``."""
    if emit_every < 1:
        raise ValueError("emit_every must be >= 1")
    state = SmoothingState(alpha, bias_correction=bias_correction, allow_alpha_one=allow_alpha_one)
    emitted = []
    last = None
    for snap in stream:
        if last is not None and snap.update != last + 1:
            raise ValueError(f"stream out of order: update {snap.update} after {last}")
        last = snap.update
        state = smooth_step(state, snap)
        if snap.update % emit_every == 0:
            emitted.append(state.snapshot(snap.update, snap.tag))
    return emitted


# --- snapshot files -------------------------------------------------------

def _format_tag(tag: Optional[CheckpointTag]) -> str:
    if tag is None:
        return "-"
    parts = [tag.checkpoint_id, str(tag.update), tag.block_type, str(tag.block_index)]
    if tag.spans_boundary:
        parts.append("span")
    return ",".join(parts)


def _parse_tag(text: str) -> Optional[CheckpointTag]:
    if text == "-":
        return None
    parts = text.split(",")
    if len(parts) not in (4, 5) or (len(parts) == 5 and parts[4] != "span"):
        raise ValueError(f"bad tag {text!r}")
    return CheckpointTag(parts[0], int(parts[1]), parts[2], int(parts[3]), len(parts) == 5)


def encode_snapshot(snap: ParamSnapshot) -> bytes:
    header = f"dim={snap.dim} update={snap.update} tag={_format_tag(snap.tag)}\n"
    return SNAPSHOT_MAGIC + header.encode("ascii") + snap.values.astype("<f4").tobytes()


def decode_snapshot(data: bytes, path=None) -> ParamSnapshot:
    if not data.startswith(SNAPSHOT_MAGIC):
        raise FormatError("not a PSNAP1 snapshot", path)
    end = data.find(b"\n", len(SNAPSHOT_MAGIC))
    if end < 0:
        raise FormatError("truncated header", path)
    header = data[len(SNAPSHOT_MAGIC):end].decode("ascii", errors="replace")
    m = re.fullmatch(r"dim=(\d+) update=(-?\d+) tag=(\S+)", header)
    if not m:
        raise FormatError(f"bad header {header!r}", path)
    dim, update = int(m.group(1)), int(m.group(2))
    try:
        tag = _parse_tag(m.group(3))
    except ValueError as exc:
        raise FormatError(str(exc), path) from None
    payload = data[end + 1:]
    if len(payload) != 4 * dim:
        raise FormatError(f"expected {4 * dim} payload bytes, got {len(payload)}", path)
    try:
        return ParamSnapshot(np.frombuffer(payload, dtype="<f4"), update, tag)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None


def write_snapshot(path, snap: ParamSnapshot) -> None:
    Path(path).write_bytes(encode_snapshot(snap))


def read_snapshot(path) -> ParamSnapshot:
    return decode_snapshot(Path(path).read_bytes(), path)
