"""Command-line entry point.

Every command accepts ``--config FILE`` with ``key = value`` lines using the
flag names (``block-size = 20000``); flags given on the command line win.
Outputs are staged and only renamed into place once the whole command has
succeeded. A single ``key=value`` summary line goes to stdout.

Exit status: 0 ok, 1 invalid input or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from . import __version__, FORMAT_VERSIONS
from .corpus import DATASET_TAGS, load_ne_testset, load_nbest, load_parallel, read_lines
from .mbr import HypothesisPool, combination_search, mbr_rerank, rank_checkpoints
from .metrics import ScoreReport, chrf, corpus_bleu, load_external_scores, make_utility, ne_hits, sentence_bleu
from .params import (SmoothingState, average_consecutive, encode_snapshot, read_snapshot, smooth_step)
from .schedule import (compile_block_schedule, compile_mixed_schedule, format_checkpoint_tags,
                       format_manifest, batch_stream, read_checkpoint_tags, read_manifest)
from .toytrain import DivergenceError, ToyTrainer, early_stop, format_curve_csv, make_domains


class ConfigError(ValueError):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


@dataclass(frozen=True)
class Option:
    name: str
    type: Callable = str
    default: Any = None
    required: bool = False
    choices: Optional[tuple] = None
    multiple: bool = False
    help: str = ""

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")

    def convert(self, raw):
        items = raw if isinstance(raw, list) else ([raw] if not self.multiple else str(raw).split())
        out = []
        for item in items:
            try:
                value = self.type(item)
            except (TypeError, ValueError):
                raise ConfigError(f"{self.name}: expected {self.type.__name__}, got {item!r}") from None
            if self.choices and value not in self.choices:
                raise ConfigError(f"{self.name}: {value!r} is not one of {', '.join(map(str, self.choices))}")
            out.append(value)
        if self.multiple:
            return out
        if len(out) != 1:
            raise ConfigError(f"{self.name}: expected a single value")
        return out[0]


@dataclass
class RunConfig:
    command: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0

    def __getitem__(self, key):
        return self.parameters[key.replace("-", "_")]


COMMANDS: dict = {}


def command(name: str, *options: Option, help: str = ""):
    def register(fn):
        COMMANDS[name] = (options, fn, help)
        return fn
    return register


# --- config ---------------------------------------------------------------

def parse_config_file(path) -> dict:
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("_", "-")] = value
    return values


def resolve_config(command_name: str, file_values: dict, flag_values: dict) -> RunConfig:
    if command_name not in COMMANDS:
        raise ConfigError(f"unknown command {command_name!r}")
    options = {o.name: o for o in COMMANDS[command_name][0]}
    file_values = dict(file_values)
    in_file = file_values.pop("command", command_name)
    if in_file != command_name:
        raise ConfigError(f"command: config file is for {in_file!r}, not {command_name!r}")
    for key in list(file_values) + list(flag_values):
        if key not in options:
            raise ConfigError(f"{key}: unknown parameter for {command_name}")
    params = {}
    for name, opt in options.items():
        if name in flag_values:
            value = opt.convert(flag_values[name])
        elif name in file_values:
            value = opt.convert(file_values[name])
        elif opt.required:
            raise ConfigError(f"{name}: required parameter missing")
        else:
            value = opt.default
        params[opt.dest] = value
    return RunConfig(command_name, params, params.get("seed") or 0)


def load_config(path, command_name: str, overrides: Optional[dict] = None) -> RunConfig:
    return resolve_config(command_name, parse_config_file(path) if path else {}, overrides or {})


# --- output staging -------------------------------------------------------

class Outputs:
    """Collects output files and writes them all at once via temp file + rename."""

    def __init__(self):
        self.files: dict = {}

    def add(self, path, data) -> None:
        if path is None:
            return
        self.files[Path(path)] = data.encode("utf-8") if isinstance(data, str) else data

    def commit(self) -> None:
        staged = []
        try:
            for path, data in self.files.items():
                path.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
                staged.append((tmp, path))
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
        except BaseException:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, path in staged:
            os.replace(tmp, path)


# --- commands -------------------------------------------------------------

@command("schedule",
         Option("regime", str, "block", choices=("block", "mixed")),
         Option("block-size", int),
         Option("total", int, required=True),
         Option("ckpt-interval", int, 5000),
         Option("output", Path, Path("manifest.tsv")),
         Option("tags", Path, help="also write the checkpoint tag file here"),
         help="compile a block or mixed training schedule")
def cmd_schedule(cfg: RunConfig, out: Outputs) -> dict:
    if cfg["regime"] == "block":
        if cfg["block_size"] is None:
            raise ConfigError("block-size: required for the block regime")
        manifest = compile_block_schedule(cfg["block_size"], cfg["total"], cfg["ckpt_interval"])
    else:
        manifest = compile_mixed_schedule(cfg["total"], cfg["ckpt_interval"])
    tags = manifest.checkpoints()
    out.add(cfg["output"], format_manifest(manifest))
    out.add(cfg["tags"], format_checkpoint_tags(tags))
    return {"regime": manifest.regime, "entries": len(manifest.entries), "checkpoints": len(tags),
            "output": cfg["output"]}


@command("stream",
         Option("manifest", Path, required=True),
         *(Option(tag, Path, help=f"{tag} corpus (source<TAB>target)") for tag in DATASET_TAGS),
         Option("batch-size", int, required=True),
         Option("seed", int, 0),
         Option("max-updates", int),
         Option("output", Path, required=True),
         help="expand a manifest into the deterministic batch stream")
def cmd_stream(cfg: RunConfig, out: Outputs) -> dict:
    manifest = read_manifest(cfg["manifest"])
    corpora = {tag: load_parallel(cfg[tag], tag) for tag in DATASET_TAGS if cfg[tag] is not None}
    lines = []
    updates = 0
    for u, batch in batch_stream(manifest, corpora, cfg["batch_size"], cfg["seed"]):
        if cfg["max_updates"] is not None and u >= cfg["max_updates"]:
            break
        lines.extend(f"{u}\t{p.dataset}\t{p.source}\t{p.target}\n" for p in batch)
        updates += 1
    out.add(cfg["output"], "".join(lines))
    return {"updates": updates, "pairs": len(lines), "output": cfg["output"]}


@command("smooth",
         Option("input", Path, required=True, multiple=True, help="per-update snapshots, in order"),
         Option("alpha", float, 0.001),
         Option("emit-every", int, required=True),
         Option("bias-correction", _bool, False),
         Option("output-dir", Path, required=True),
         help="replay exponential smoothing over a snapshot stream")
def cmd_smooth(cfg: RunConfig, out: Outputs) -> dict:
    if cfg["emit_every"] < 1:
        raise ConfigError("emit-every: must be >= 1")
    state = SmoothingState(cfg["alpha"], bias_correction=cfg["bias_correction"])
    last = None
    emitted = 0
    for path in cfg["input"]:
        snap = read_snapshot(path)
        if last is not None and snap.update != last + 1:
            raise ConfigError(f"input: {path} has update {snap.update}, expected {last + 1}")
        last = snap.update
        state = smooth_step(state, snap)
        if snap.update % cfg["emit_every"] == 0:
            out.add(cfg["output_dir"] / f"smoothed-{snap.update}.psnap",
                    encode_snapshot(state.snapshot(snap.update, snap.tag)))
            emitted += 1
    return {"inputs": len(cfg["input"]), "emitted": emitted, "output_dir": cfg["output_dir"]}


@command("avgk",
         Option("input", Path, required=True, multiple=True, help="checkpoint snapshots, oldest first"),
         Option("k", int, 8),
         Option("output", Path, required=True),
         help="average the last k checkpoint snapshots")
def cmd_avgk(cfg: RunConfig, out: Outputs) -> dict:
    snaps = [read_snapshot(p) for p in cfg["input"]]
    avg = average_consecutive(snaps, cfg["k"])
    out.add(cfg["output"], encode_snapshot(avg))
    spans = bool(avg.tag and avg.tag.spans_boundary)
    return {"k": cfg["k"], "update": avg.update, "dim": avg.dim, "spans_boundary": int(spans),
            "output": cfg["output"]}


def _load_pool_inputs(cfg: RunConfig):
    lists = [load_nbest(p) for p in cfg["nbest"]]
    block_types = None
    if cfg["tags"] is not None:
        tags = {t.checkpoint_id: t.block_type for t in read_checkpoint_tags(cfg["tags"])}
        missing = [nb.origin for nb in lists if nb.origin not in tags]
        if missing:
            raise ConfigError(f"tags: no entry for n-best origin(s) {', '.join(missing)}")
        block_types = [tags[nb.origin] for nb in lists]
    return lists, block_types


_POOL_OPTIONS = (
    Option("nbest", Path, required=True, multiple=True, help="n-best files; file stem = checkpoint id"),
    Option("tags", Path),
    Option("utility", str, "chrf", choices=("chrf", "sbleu")),
)


@command("mbr", *_POOL_OPTIONS,
         Option("output", Path, required=True),
         Option("dump-scores", Path),
         help="consensus-rerank the concatenated n-best lists")
def cmd_mbr(cfg: RunConfig, out: Outputs) -> dict:
    lists, block_types = _load_pool_inputs(cfg)
    pool = HypothesisPool.from_nbest(lists, block_types)
    result = mbr_rerank(pool, make_utility(cfg["utility"]))
    out.add(cfg["output"], "".join(t + "\n" for t in result.translations))
    if cfg["dump_scores"] is not None:
        rows = [f"{i}\t{j}\t{s!r}\n" for i, (j, s) in enumerate(zip(result.chosen_index, result.consensus))]
        out.add(cfg["dump_scores"], "sentence_index\tchosen_pool_index\tconsensus\n" + "".join(rows))
    return {"sentences": pool.num_sentences, "lists": len(lists), "utility": cfg["utility"],
            "consensus": f"{result.corpus_score:.6f}", "output": cfg["output"]}


@command("combsearch", *_POOL_OPTIONS,
         Option("total-k", int, required=True),
         Option("scores", Path, help="one external score per --nbest file, same order"),
         Option("refs", Path),
         Option("allow-fewer", _bool, False),
         Option("output", Path, required=True),
         help="search block-type compositions of pooled checkpoints")
def cmd_combsearch(cfg: RunConfig, out: Outputs) -> dict:
    lists, block_types = _load_pool_inputs(cfg)
    if block_types is None:
        raise ConfigError("tags: required to group checkpoints by block type")
    scores = None
    if cfg["scores"] is not None:
        report = load_external_scores(cfg["scores"])
        if len(report.per_sentence) != len(lists):
            raise ConfigError(f"scores: {len(report.per_sentence)} values for {len(lists)} n-best files")
        scores = {nb.origin: s for nb, s in zip(lists, report.per_sentence)}
    available = rank_checkpoints({nb.origin: t for nb, t in zip(lists, block_types)}, scores)
    refs = read_lines(cfg["refs"]) if cfg["refs"] is not None else None
    ranked = combination_search(available, cfg["total_k"], {nb.origin: nb for nb in lists},
                                make_utility(cfg["utility"]), refs, cfg["allow_fewer"])
    rows = ["rank\tn_auth\tn_bt\tn_ft\tscore\n"]
    rows += [f"{r}\t{s.counts[0]}\t{s.counts[1]}\t{s.counts[2]}\t{v!r}\n"
             for r, (s, v) in enumerate(ranked, start=1)]
    out.add(cfg["output"], "".join(rows))
    best, best_score = ranked[0]
    return {"specs": len(ranked), "best": "{},{},{}".format(*best.counts),
            "score": f"{best_score:.6f}", "output": cfg["output"]}


@command("score",
         Option("hyp", Path, required=True),
         Option("ref", Path, required=True),
         Option("metric", str, "bleu", choices=("bleu", "chrf", "sbleu")),
         Option("output", Path, help="per-sentence scores"),
         help="score hypotheses against references")
def cmd_score(cfg: RunConfig, out: Outputs) -> dict:
    hyps, refs = read_lines(cfg["hyp"]), read_lines(cfg["ref"])
    if len(hyps) != len(refs):
        raise ConfigError(f"hyp: {len(hyps)} lines but ref has {len(refs)}")
    metric = cfg["metric"]
    sentence_fn = chrf if metric == "chrf" else sentence_bleu
    per = tuple(sentence_fn(h, r) for h, r in zip(hyps, refs))
    corpus = corpus_bleu(hyps, refs) if metric == "bleu" else sum(per) / len(per)
    report = ScoreReport(metric, corpus, per)
    out.add(cfg["output"], "".join(f"{s!r}\n" for s in report.per_sentence))
    return {"metric": metric, "sentences": len(per), "score": f"{report.corpus_score:.6f}"}


@command("ne-acc",
         Option("hyp", Path, required=True),
         Option("testset", Path, required=True),
         Option("output", Path, help="per-case 1/0 hits"),
         help="named-entity translation accuracy")
def cmd_ne_acc(cfg: RunConfig, out: Outputs) -> dict:
    hits = ne_hits(read_lines(cfg["hyp"]), load_ne_testset(cfg["testset"]))
    out.add(cfg["output"], "".join(f"{int(h)}\n" for h in hits))
    return {"accuracy": f"{sum(hits) / len(hits):.6f}", "hits": sum(hits), "cases": len(hits)}


@command("toytrain",
         Option("regime", str, "block", choices=("block", "mixed")),
         Option("block-size", int, 200),
         Option("total", int, 3200),
         Option("ckpt-interval", int, 50),
         Option("lr", float, 0.05),
         Option("batch-size", int, 8),
         Option("alpha", float, 0.01),
         Option("avg-k", int, 8),
         Option("eval-every", int, 10),
         Option("seed", int, 0),
         Option("dim", int, 8),
         Option("shift", float, 1.0, help="distance of bt/ft weights from auth"),
         Option("noise", float, 0.1),
         Option("output", Path, required=True, help="curve CSV"),
         Option("manifest-out", Path),
         Option("snapshot-dir", Path),
         help="train the synthetic toy model and write eval curves")
def cmd_toytrain(cfg: RunConfig, out: Outputs) -> dict:
    if cfg["regime"] == "block":
        manifest = compile_block_schedule(cfg["block_size"], cfg["total"], cfg["ckpt_interval"])
    else:
        manifest = compile_mixed_schedule(cfg["total"], cfg["ckpt_interval"])
    domains = make_domains(cfg["dim"], cfg["shift"], cfg["noise"], cfg["seed"])
    trainer = ToyTrainer(domains, manifest, cfg["lr"], cfg["batch_size"], cfg["alpha"], cfg["avg_k"],
                         cfg["eval_every"], cfg["seed"])
    curve = trainer.run()
    out.add(cfg["output"], format_curve_csv(curve))
    out.add(cfg["manifest_out"], format_manifest(manifest))
    if cfg["snapshot_dir"] is not None:
        for kind, snaps in (("raw", trainer.raw_snapshots), ("exp", trainer.exp_snapshots)):
            for s in snaps:
                out.add(cfg["snapshot_dir"] / f"{kind}-{s.update}.psnap", encode_snapshot(s))
    summary = {"points": len(curve)}
    for p in curve[-4:]:
        summary[f"final_{p.variant}"] = f"{p.mean_loss:.6g}"
    summary["output"] = cfg["output"]
    return summary


@command("early-stop",
         Option("scores", Path, required=True, help="one validation score per line"),
         Option("patience", int, 30),
         Option("mode", str, "max", choices=("max", "min")),
         help="find where patience-based early stopping triggers")
def cmd_early_stop(cfg: RunConfig, out: Outputs) -> dict:
    values = load_external_scores(cfg["scores"]).per_sentence
    stop = early_stop(values, cfg["patience"], cfg["mode"])
    pick = max if cfg["mode"] == "max" else min
    considered = values if stop is None else values[:stop + 1]
    best = considered.index(pick(considered))
    return {"evaluations": len(values), "stop_index": "none" if stop is None else stop, "best_index": best}


# --- entry point ----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    versions = " ".join(f"{k}={v}" for k, v in FORMAT_VERSIONS.items())
    parser = _Parser(prog="blockbt", description="block-BT pipeline toolkit")
    parser.add_argument("--version", action="version", version=f"blockbt {__version__} ({versions})")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (options, _, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="key = value file; flags override it")
        for opt in options:
            kwargs = dict(dest=opt.dest, default=argparse.SUPPRESS, help=opt.help or None)
            if opt.multiple:
                kwargs.update(nargs="+", action="extend")
            elif opt.type is _bool:
                kwargs.update(nargs="?", const="true")
            p.add_argument(f"--{opt.name}", **kwargs)
    return parser


def run(config: RunConfig) -> dict:
    outputs = Outputs()
    summary = COMMANDS[config.command][1](config, outputs)
    outputs.commit()
    return summary


def format_summary(command_name: str, summary: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in {"command": command_name, **summary}.items())


def main(argv=None) -> int:
    try:
        args = vars(build_parser().parse_args(argv))
        name = args.pop("command")
        if name is None:
            raise ConfigError("no command given (see --help)")
        config_path = args.pop("config", None)
        names = {o.dest: o.name for o in COMMANDS[name][0]}
        flags = {names[k]: v for k, v in args.items()}
        cfg = load_config(config_path, name, flags)
        summary = run(cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(format_summary(name, summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
