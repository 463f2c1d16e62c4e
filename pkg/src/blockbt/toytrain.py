"""Desk-scale block/mixed training on synthetic regression domains.

A linear model is fit by minibatch SGD on squared loss. Three domains
(auth, bt, ft) share a base weight vector and differ by controllable
offsets, so switching between blocks pulls the weights back and forth the
same way switching between authentic and synthetic data does for an NMT
model. Four parameter variants are evaluated along the way:

``raw``       current SGD weights
``exp``       exponentially smoothed weights, updated after every step
``avgk``      mean of the last ``avg_k`` saved raw checkpoints
``exp+avgk``  mean of the last ``avg_k`` saved smoothed checkpoints

Before ``avg_k`` checkpoints exist the averaged variants use all the
checkpoints saved so far, and before the first checkpoint they fall back
to the current raw/smoothed weights.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import DATASET_TAGS
from .params import ParamSnapshot, SmoothingState, average_consecutive, smooth_step
from .schedule import ScheduleManifest, checkpoint_id, CheckpointTag, index_stream

VARIANTS = ("raw", "exp", "avgk", "exp+avgk")
DIVERGENCE_LIMIT = 1e12


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SyntheticDomain:
    id: str
    w_star: np.ndarray
    noise_sigma: float = 0.1
    input_scale: float = 1.0
    train_size: int = 2000
    eval_size: int = 500
    seed: int = 0

    def _draw(self, size: int, stream: int):
        rng = np.random.default_rng([self.seed, stream])
        x = rng.normal(0.0, self.input_scale, size=(size, len(self.w_star)))
        y = x @ self.w_star + rng.normal(0.0, self.noise_sigma, size=size)
        return x, y

    def train_set(self):
        return self._draw(self.train_size, 0)

    def eval_set(self):
        # separate seed stream, so never overlapping the training draw
        return self._draw(self.eval_size, 1)


def make_domains(dim: int = 8, shift: float = 1.0, noise: float = 0.1, seed: int = 0,
                 train_size: int = 2000, eval_size: int = 500) -> list:
    """auth at a random base vector; bt and ft offset from it by ``shift`` in random directions."""
    rng = np.random.default_rng([seed, 99])
    base = rng.normal(size=dim)
    domains = []
    for k, tag in enumerate(DATASET_TAGS):
        w = base.copy()
        if k:
            d = rng.normal(size=dim)
            w += shift * d / np.linalg.norm(d)
        domains.append(SyntheticDomain(tag, w, noise, 1.0, train_size, eval_size, seed * 10 + k))
    return domains


@dataclass(frozen=True)
class CurvePoint:
    update: int
    variant: str
    losses: dict

    @property
    def mean_loss(self) -> float:
        return float(np.mean([self.losses[t] for t in DATASET_TAGS if t in self.losses]))


@dataclass
class ToyTrainer:
    domains: Sequence[SyntheticDomain]
    manifest: ScheduleManifest
    lr: float = 0.05
    batch_size: int = 8
    alpha: float = 0.01
    avg_k: int = 8
    eval_every: int = 50
    seed: int = 0
    allow_alpha_one: bool = False
    record_trajectory: bool = False

    curve: list = field(default_factory=list, init=False)
    raw_snapshots: list = field(default_factory=list, init=False)
    exp_snapshots: list = field(default_factory=list, init=False)
    trajectory: list = field(default_factory=list, init=False)

    def __post_init__(self):
        tags = [d.id for d in self.domains]
        if sorted(tags) != sorted(DATASET_TAGS):
            raise ValueError(f"need one domain per tag {DATASET_TAGS}, got {tags}")
        dims = {len(d.w_star) for d in self.domains}
        if len(dims) != 1:
            raise ValueError("domains disagree on dimension")
        if self.lr <= 0 or self.batch_size < 1 or self.avg_k < 1 or self.eval_every < 1:
            raise ValueError("lr, batch_size, avg_k and eval_every must be positive")
        ci = self.manifest.checkpoint_interval
        if ci % self.eval_every and self.eval_every % ci:
            raise ValueError(f"eval_every {self.eval_every} and checkpoint interval {ci} "
                             "must divide one another")
        SmoothingState(self.alpha, allow_alpha_one=self.allow_alpha_one)

    def evaluate(self, w: np.ndarray) -> dict:
        out = {}
        for tag, (x, y) in self._eval.items():
            r = x @ w - y
            out[tag] = float(r @ r / len(y))
        return out

    def _variant_weights(self, w, state):
        k = self.avg_k

        def avg(snaps, fallback):
            if not snaps:
                return fallback
            return average_consecutive(snaps, min(k, len(snaps))).values.astype(np.float64)

        smoothed = state.value()
        return {"raw": w, "exp": smoothed,
                "avgk": avg(self.raw_snapshots, w),
                "exp+avgk": avg(self.exp_snapshots, smoothed)}

    def run(self) -> list:
        self.curve, self.raw_snapshots, self.exp_snapshots, self.trajectory = [], [], [], []
        train = {d.id: d.train_set() for d in self.domains}
        self._eval = {d.id: d.eval_set() for d in self.domains}
        sizes = {t: len(y) for t, (_, y) in train.items()}
        dim = len(self.domains[0].w_star)
        w = np.zeros(dim)
        state = SmoothingState(self.alpha, allow_alpha_one=self.allow_alpha_one)
        interval = self.manifest.checkpoint_interval

        for u, batch in index_stream(self.manifest, sizes, self.batch_size, self.seed):
            x = np.stack([train[t][0][i] for t, i in batch])
            y = np.array([train[t][1][i] for t, i in batch])
            w = w - self.lr * (x.T @ (x @ w - y)) / len(y)
            if not np.all(np.isfinite(w)) or np.abs(w).max() > DIVERGENCE_LIMIT:
                raise DivergenceError(f"training diverged at update {u + 1}; try a smaller lr than {self.lr}")
            state = smooth_step(state, w)
            step = u + 1
            if self.record_trajectory:
                self.trajectory.append(w.copy())
            if step % interval == 0:
                e = self.manifest.entry_at(step)
                tag = CheckpointTag(checkpoint_id(step), step, e.dataset, e.block_index)
                self.raw_snapshots.append(ParamSnapshot(w, step, tag))
                self.exp_snapshots.append(state.snapshot(step, tag))
            if step % self.eval_every == 0:
                for variant, weights in self._variant_weights(w, state).items():
                    losses = self.evaluate(weights)
                    for loss in losses.values():
                        if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                            raise DivergenceError(f"eval loss blew up at update {step}; "
                                                  f"try a smaller lr than {self.lr}")
                    self.curve.append(CurvePoint(step, variant, losses))
        return self.curve


def run_toy_experiment(domains: Sequence[SyntheticDomain], manifest: ScheduleManifest, lr: float,
                       batch_size: int, alpha: float, avg_k: int, eval_every: int, seed: int) -> list:
    return ToyTrainer(domains, manifest, lr, batch_size, alpha, avg_k, eval_every, seed).run()


def curve_series(curve: Sequence[CurvePoint], variant: str, domain: Optional[str] = None):
    """(updates, losses) arrays for one variant; ``domain=None`` gives the mean over domains."""
    pts = [p for p in curve if p.variant == variant]
    updates = np.array([p.update for p in pts])
    losses = np.array([p.mean_loss if domain is None else p.losses[domain] for p in pts])
    return updates, losses


def format_curve_csv(curve: Sequence[CurvePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["update", "variant", "domain", "loss"])
    for p in curve:
        for tag in DATASET_TAGS:
            writer.writerow([p.update, p.variant, tag, repr(p.losses[tag])])
        writer.writerow([p.update, p.variant, "mixed", repr(p.mean_loss)])
    return buf.getvalue()


def early_stop(scores: Sequence[float], patience: int = 30, mode: str = "max") -> Optional[int]:
    """Index at which ``patience`` consecutive evaluations have failed to beat the best so far."""
    if patience < 1:
        raise ValueError("patience must be >= 1")
    if mode not in ("max", "min"):
        raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
    best = None
    stale = 0
    for i, s in enumerate(scores):
        if best is None or (s > best if mode == "max" else s < best):
            best = s
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                return i
    return None
