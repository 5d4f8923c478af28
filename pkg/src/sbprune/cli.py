"""Command-line front end.

Machine interface: one JSON report on stdout per successful run; human
summaries and timings go to stderr so stdout stays byte-stable for a given
seed.  Exit codes: 0 success, 1 usage problem (bad flags, unknown config
key), 2 data or model problem (parse errors, bad checkpoints, impossible
plans).  Failure exits write no files: outputs are staged to temp names
and renamed only after everything computed.

Randomness fans out from the single --seed value s:
  s   model init          s+4 nli training         s+6 experiment-arm nli
  s+1 nli corpus          s+5 sts training         s+7 experiment-arm sts
  s+2 sts train corpus                             s+8 scratch-arm init
  s+3 sts test corpus

A config file is flat ``key=value`` lines (``#`` comments allowed); keys
are the long flag names without dashes, flags given on the command line
win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data import build_vocab, gen_synthetic, load_dataset, save_dataset
from .encoder import EncoderConfig, encoder_init
from .errors import SbpruneError
from .evaluation import eval_knn, eval_sts
from .experiments import ExperimentData, compare_strategies, pruned_vs_scratch
from .pruning import STRATEGIES, plan_prune, prune_model, verify_prune
from .training import TrainConfig, train_phase, two_phase_pipeline


class CliUsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Merged per-command parameters: flags over config file over defaults."""
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None


def _parse_bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    low = str(raw).strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# ---------------------------------------------------------------------------
# parser construction
#
# Every option is declared through _opt with argparse default None; the real
# default lives in the per-command table so a config file can fill anything
# the command line left out, and required-ness is checked after the merge.


def _opt(parser, table, flag, *, type=str, default=None, required=False,
         help="", choices=None):
    dest = "in_path" if flag == "--in" else flag.lstrip("-").replace("-", "_")
    kwargs = {"dest": dest, "default": None, "help": help, "type": type}
    if choices:
        kwargs["choices"] = choices
    parser.add_argument(flag, **kwargs)
    table[dest] = (flag, type, default, required, choices)


def _add_model_dims(p, t):
    _opt(p, t, "--hidden-dim", type=int, default=32, help="embedding width")
    _opt(p, t, "--num-layers", type=int, default=4, help="encoder depth")
    _opt(p, t, "--num-heads", type=int, default=4, help="attention heads")
    _opt(p, t, "--ffn-dim", type=int, default=64, help="feed-forward width")
    _opt(p, t, "--max-seq-len", type=int, default=32, help="token positions")
    _opt(p, t, "--vocab-size", type=int, default=100,
         help="vocabulary cap including pad and oov")


def _add_gen(p, t, test_split=True):
    _opt(p, t, "--n-nli", type=int, default=2000, help="generated nli examples")
    _opt(p, t, "--n-sts", type=int, default=2000, help="generated sts pairs")
    if test_split:
        _opt(p, t, "--n-sts-test", type=int, default=200,
             help="generated held-out sts pairs")
    _opt(p, t, "--gen-vocab-size", type=int, default=60,
         help="generator word-pool size")
    _opt(p, t, "--num-topics", type=int, default=3, help="generator topics")
    _opt(p, t, "--nli", help="nli jsonl file instead of generation")
    _opt(p, t, "--sts", help="sts tsv file instead of generation")
    if test_split:
        _opt(p, t, "--sts-test", help="held-out sts tsv instead of generation")


def _add_train_hyper(p, t, two_phase):
    if two_phase:
        _opt(p, t, "--nli-epochs", type=int, default=3, help="phase-1 epochs")
        _opt(p, t, "--sts-epochs", type=int, default=5, help="phase-2 epochs")
    _opt(p, t, "--batch-size", type=int, default=16, help="minibatch size")
    _opt(p, t, "--learning-rate", type=float, default=1e-3, help="adam step size")
    _opt(p, t, "--shuffle", type=_parse_bool, default=True,
         help="reshuffle each epoch (true/false)")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sbprune",
        description="sentence-embedding training, layer pruning, evaluation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    registry = {}

    def cmd(name, help):
        p = sub.add_parser(name, help=help, description=help)
        table = {}
        p.add_argument("--config", default=None,
                       help="flat key=value file; explicit flags override it")
        registry[name] = (p, table)
        return p, table

    p, t = cmd("init", "build a vocabulary from data files and write a fresh model")
    _opt(p, t, "--out", required=True, help="checkpoint path to write")
    _opt(p, t, "--seed", type=int, default=0, help="init seed")
    _opt(p, t, "--nli", help="nli jsonl for the vocabulary")
    _opt(p, t, "--sts", help="sts tsv for the vocabulary")
    _opt(p, t, "--cls", help="classification jsonl for the vocabulary")
    _add_model_dims(p, t)

    p, t = cmd("gen-data", "write a synthetic dataset file")
    _opt(p, t, "--kind", required=True, choices=("nli", "sts", "cls"),
         help="dataset flavor")
    _opt(p, t, "--n", type=int, default=2000, help="examples to generate")
    _opt(p, t, "--seed", type=int, default=0, help="generator seed")
    _opt(p, t, "--vocab-size", type=int, default=60, help="generator word-pool size")
    _opt(p, t, "--num-topics", type=int, default=3, help="generator topics")
    _opt(p, t, "--out", required=True, help="dataset path to write")

    for name, objective, epochs in (("train-nli", "nli", 3), ("train-sts", "sts", 5)):
        p, t = cmd(name, f"run the {objective} fine-tuning phase on a checkpoint")
        _opt(p, t, "--model", required=True, help="input checkpoint")
        _opt(p, t, "--data", required=True, help=f"{objective} dataset file")
        _opt(p, t, "--out", required=True, help="checkpoint path to write")
        _opt(p, t, "--epochs", type=int, default=epochs, help="training epochs")
        _opt(p, t, "--seed", type=int, default=0, help="training seed")
        _opt(p, t, "--max-seq-len", type=int, default=None,
             help="override tokenization length (at most the model limit)")
        _add_train_hyper(p, t, two_phase=False)
        _opt(p, t, "--report", help="also write the JSON report here")

    p, t = cmd("pipeline", "two-phase training end to end on a synthetic corpus")
    _opt(p, t, "--seed", type=int, default=0, help="master seed; see module help")
    _opt(p, t, "--out", default="model.ckpt", help="checkpoint path to write")
    _opt(p, t, "--report", help="also write the JSON report here")
    _add_model_dims(p, t)
    _add_gen(p, t)
    _add_train_hyper(p, t, two_phase=True)

    p, t = cmd("prune", "remove layers from a checkpoint by strategy")
    _opt(p, t, "--in", required=True, help="input checkpoint")
    _opt(p, t, "--strategy", required=True, choices=STRATEGIES,
         help="which depth region to remove")
    _opt(p, t, "--k", type=int, required=True, help="layers to remove")
    _opt(p, t, "--out", required=True, help="checkpoint path to write")

    p, t = cmd("verify-prune", "audit a pruned checkpoint against its source")
    _opt(p, t, "--original", required=True, help="source checkpoint")
    _opt(p, t, "--pruned", required=True, help="pruned checkpoint")
    _opt(p, t, "--strategy", required=True, choices=STRATEGIES,
         help="strategy the pruned model claims")
    _opt(p, t, "--k", type=int, required=True, help="layers claimed removed")

    p, t = cmd("eval-sts", "similarity correlation of a model on scored pairs")
    _opt(p, t, "--model", required=True, help="checkpoint to evaluate")
    _opt(p, t, "--data", required=True, help="sts tsv file")
    _opt(p, t, "--report", help="also write the JSON report here")

    p, t = cmd("eval-knn", "nearest-neighbor accuracy on labeled texts")
    _opt(p, t, "--model", required=True, help="checkpoint to evaluate")
    _opt(p, t, "--train", required=True, help="classification jsonl, neighbors")
    _opt(p, t, "--test", required=True, help="classification jsonl, queries")
    _opt(p, t, "--k", type=int, default=5, help="neighbors per query")
    _opt(p, t, "--report", help="also write the JSON report here")

    p, t = cmd("compare-strategies",
               "prune by each strategy, fine-tune identically, score all three")
    _opt(p, t, "--k", type=int, required=True, help="layers to remove")
    _opt(p, t, "--seed", type=int, default=0, help="master seed")
    _opt(p, t, "--model", help="pretrained base checkpoint; default trains one")
    _opt(p, t, "--report", help="also write the JSON report here")
    _add_model_dims(p, t)
    _add_gen(p, t)
    _add_train_hyper(p, t, two_phase=True)

    p, t = cmd("pruned-vs-scratch",
               "pruned-and-finetuned against scratch-trained at equal depth")
    _opt(p, t, "--target-layers", type=int, default=None,
         help="layers both arms end with; default half the base depth")
    _opt(p, t, "--seed", type=int, default=0, help="master seed")
    _opt(p, t, "--model", help="pretrained base checkpoint; default trains one")
    _opt(p, t, "--report", help="also write the JSON report here")
    _add_model_dims(p, t)
    _add_gen(p, t)
    _add_train_hyper(p, t, two_phase=True)

    return parser, registry


def _read_config_file(path):
    entries = {}
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise CliUsageError(f"cannot read config file: {e}")
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise CliUsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        if key in entries:
            raise CliUsageError(f"{path}:{lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _merge_config(ns, registry) -> RunConfig:
    _parser, table = registry[ns.command]
    file_values = {}
    if ns.config is not None:
        raw = _read_config_file(ns.config)
        key_to_dest = {flag.lstrip("-"): dest
                       for dest, (flag, *_r) in table.items()}
        for key, text in raw.items():
            if key not in key_to_dest:
                raise CliUsageError(
                    f"unknown config key {key!r} for command {ns.command!r}")
            dest = key_to_dest[key]
            flag, typ, _default, _req, choices = table[dest]
            try:
                value = typ(text) if typ is not None else text
            except (ValueError, TypeError):
                raise CliUsageError(f"bad value for config key {key!r}: {text!r}")
            if choices and value not in choices:
                raise CliUsageError(
                    f"config key {key!r} must be one of {choices}, got {text!r}")
            file_values[dest] = value
    values = {}
    for dest, (flag, _typ, default, required, _choices) in table.items():
        v = getattr(ns, dest)
        if v is None:
            v = file_values.get(dest, default)
        if v is None and required:
            raise CliUsageError(f"missing required option {flag}")
        values[dest] = v
    return RunConfig(command=ns.command, values=values)


# ---------------------------------------------------------------------------
# staged output


class _Writes:
    """Collects outputs, then renames them into place all at once."""

    def __init__(self):
        self._ops = []

    def checkpoint(self, model, path):
        self._ops.append(("ckpt", model, path))

    def text(self, content, path):
        self._ops.append(("text", content, path))

    def commit(self):
        staged = []
        try:
            for kind, payload, path in self._ops:
                target = os.path.abspath(path)
                fd, tmp = tempfile.mkstemp(dir=os.path.dirname(target) or ".",
                                           prefix=".stage-")
                os.close(fd)
                staged.append((tmp, target))
                if kind == "ckpt":
                    save_checkpoint(payload, tmp)
                else:
                    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
                        f.write(payload)
            for tmp, target in staged:
                os.replace(tmp, target)
        except BaseException:
            for tmp, _target in staged:
                try:
                    os.unlink(tmp)
                except OSError:
                    pass
            raise


def _dump(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _note(msg):
    print(msg, file=sys.stderr)


def _sim_summary(report) -> dict:
    return {"spearman": report.spearman, "pearson": report.pearson,
            "n_pairs": report.n_pairs}


def _fan(seed: int) -> dict:
    return {"init": seed, "gen_nli": seed + 1, "gen_sts": seed + 2,
            "gen_sts_test": seed + 3, "train_nli": seed + 4,
            "train_sts": seed + 5, "arm_nli": seed + 6, "arm_sts": seed + 7,
            "scratch_init": seed + 8}


def _corpus(a, fan):
    """Train and test sets, loaded from files when given, generated otherwise."""
    if a.nli is not None:
        nli = load_dataset(a.nli, "nli")
    else:
        nli = gen_synthetic("nli", a.n_nli, fan["gen_nli"],
                            a.gen_vocab_size, a.num_topics)
    if a.sts is not None:
        sts = load_dataset(a.sts, "sts")
    else:
        sts = gen_synthetic("sts", a.n_sts, fan["gen_sts"],
                            a.gen_vocab_size, a.num_topics)
    if a.sts_test is not None:
        sts_test = load_dataset(a.sts_test, "sts")
    else:
        sts_test = gen_synthetic("sts", a.n_sts_test, fan["gen_sts_test"],
                                 a.gen_vocab_size, a.num_topics)
    source = "files" if (a.nli or a.sts or a.sts_test) else "generated"
    return nli, sts, sts_test, source


def _vocab_from(nli=(), sts=(), cls=()):
    texts = []
    for ex in nli:
        texts.append(ex.premise)
        texts.append(ex.hypothesis)
    for ex in sts:
        texts.append(ex.sentence1)
        texts.append(ex.sentence2)
    for ex in cls:
        texts.append(ex.text)
    return texts


def _init_model(a, vocab, seed):
    config = EncoderConfig(vocab_size=len(vocab), hidden_dim=a.hidden_dim,
                           num_layers=a.num_layers, num_heads=a.num_heads,
                           ffn_dim=a.ffn_dim, max_seq_len=a.max_seq_len,
                           seed=seed)
    model = encoder_init(config)
    model.vocab = vocab
    return model


def _train_cfg(a, epochs, seed):
    return TrainConfig(epochs=epochs, batch_size=a.batch_size,
                       learning_rate=a.learning_rate, seed=seed,
                       shuffle=a.shuffle)


def _base_model(a, fan, nli, sts, sts_test):
    """Load the base model, or train one on the corpus like `pipeline` does."""
    if a.model is not None:
        return load_checkpoint(a.model), "checkpoint"
    vocab = build_vocab(_vocab_from(nli=nli, sts=sts), a.vocab_size)
    model = _init_model(a, vocab, fan["init"])
    cfg_nli = _train_cfg(a, a.nli_epochs, fan["train_nli"])
    cfg_sts = _train_cfg(a, a.sts_epochs, fan["train_sts"])
    model, _report = two_phase_pipeline(model, nli, sts, cfg_nli, cfg_sts)
    return model, "trained-internally"


# ---------------------------------------------------------------------------
# handlers: compute everything, then write, then return (report, exit code)


def _cmd_init(a):
    sources = [("nli", a.nli), ("sts", a.sts), ("cls", a.cls)]
    present = [(kind, path) for kind, path in sources if path is not None]
    if not present:
        raise CliUsageError(
            "init needs at least one of --nli/--sts/--cls to build a vocabulary")
    texts = []
    counts = {}
    for kind, path in present:
        data = load_dataset(path, kind)
        counts[kind] = len(data)
        texts.extend(_vocab_from(**{kind: data}))
    vocab = build_vocab(texts, a.vocab_size)
    model = _init_model(a, vocab, a.seed)
    w = _Writes()
    w.checkpoint(model, a.out)
    w.commit()
    _note(f"wrote {a.out}: {model.param_count()} parameters, "
          f"vocab {len(vocab)} tokens")
    return {"command": "init", "out": a.out, "seed": a.seed,
            "config": model.config.to_dict(), "param_count": model.param_count(),
            "vocab_tokens": len(vocab), "dataset_sizes": counts}, 0


def _cmd_gen_data(a):
    data = gen_synthetic(a.kind, a.n, a.seed, a.vocab_size, a.num_topics)
    w = _Writes()
    w.text(_render_dataset(data, a.kind), a.out)
    w.commit()
    _note(f"wrote {a.out}: {len(data)} {a.kind} examples")
    return {"command": "gen-data", "kind": a.kind, "n": len(data),
            "seed": a.seed, "vocab_size": a.vocab_size,
            "num_topics": a.num_topics, "out": a.out}, 0


def _render_dataset(examples, kind) -> str:
    # reuse the canonical writer by serializing through a temp path
    fd, tmp = tempfile.mkstemp(prefix=".render-")
    os.close(fd)
    try:
        save_dataset(tmp, examples, kind)
        with open(tmp, encoding="utf-8") as f:
            return f.read()
    finally:
        os.unlink(tmp)


def _cmd_train(a, objective):
    model = load_checkpoint(a.model)
    data = load_dataset(a.data, objective)
    cfg = TrainConfig(epochs=a.epochs, batch_size=a.batch_size,
                      learning_rate=a.learning_rate, seed=a.seed,
                      max_seq_len=a.max_seq_len, shuffle=a.shuffle)
    t0 = time.perf_counter()
    trained, _head, hist = train_phase(model, None, data, objective, cfg)
    dt = time.perf_counter() - t0
    report = {"command": f"train-{objective}", "model": a.model, "data": a.data,
              "out": a.out, "examples": len(data),
              "train": {"epochs": cfg.epochs, "batch_size": cfg.batch_size,
                        "learning_rate": cfg.learning_rate, "seed": cfg.seed,
                        "shuffle": cfg.shuffle},
              "history": hist.to_dict(include_timing=False)}
    w = _Writes()
    w.checkpoint(trained, a.out)
    if a.report:
        w.text(_dump(report), a.report)
    w.commit()
    _note(f"{objective} phase: {len(data)} examples, "
          f"final epoch mean loss {hist.epoch_mean_losses[-1]:.6f}, {dt:.1f}s")
    return report, 0


def _cmd_pipeline(a):
    fan = _fan(a.seed)
    t0 = time.perf_counter()
    nli, sts, sts_test, source = _corpus(a, fan)
    vocab = build_vocab(_vocab_from(nli=nli, sts=sts), a.vocab_size)
    model = _init_model(a, vocab, fan["init"])
    baseline = eval_sts(model, sts_test)
    cfg_nli = _train_cfg(a, a.nli_epochs, fan["train_nli"])
    cfg_sts = _train_cfg(a, a.sts_epochs, fan["train_sts"])
    trained, phases = two_phase_pipeline(model, nli, sts, cfg_nli, cfg_sts)
    final = eval_sts(trained, sts_test)
    dt = time.perf_counter() - t0
    report = {"command": "pipeline", "seed": a.seed, "out": a.out,
              "config": trained.config.to_dict(),
              "data": {"source": source, "nli_train": len(nli),
                       "sts_train": len(sts), "sts_test": len(sts_test)},
              "training": phases.to_dict(include_timing=False),
              "baseline_sts": _sim_summary(baseline),
              "final_sts": _sim_summary(final),
              "spearman_improvement": final.spearman - baseline.spearman}
    w = _Writes()
    w.checkpoint(trained, a.out)
    if a.report:
        w.text(_dump(report), a.report)
    w.commit()
    _note(f"pipeline: spearman {baseline.spearman:.4f} -> {final.spearman:.4f} "
          f"on {len(sts_test)} held-out pairs, {dt:.1f}s")
    return report, 0


def _cmd_prune(a):
    model = load_checkpoint(a.in_path)
    plan = plan_prune(model.config.num_layers, a.strategy, a.k)
    pruned = prune_model(model, plan)
    w = _Writes()
    w.checkpoint(pruned, a.out)
    w.commit()
    _note(f"pruned {a.strategy} k={a.k}: {model.config.num_layers} -> "
          f"{pruned.config.num_layers} layers")
    return {"command": "prune", "in": a.in_path, "out": a.out,
            "strategy": a.strategy, "k": a.k, "plan": plan.to_dict(),
            "layers_before": model.config.num_layers,
            "layers_after": pruned.config.num_layers,
            "param_count_before": model.param_count(),
            "param_count_after": pruned.param_count()}, 0


def _cmd_verify_prune(a):
    original = load_checkpoint(a.original)
    pruned = load_checkpoint(a.pruned)
    plan = plan_prune(original.config.num_layers, a.strategy, a.k)
    result = verify_prune(original, pruned, plan)
    report = {"command": "verify-prune", "original": a.original,
              "pruned": a.pruned, "strategy": a.strategy, "k": a.k,
              **result.to_dict()}
    _note("verification ok" if result.ok else "verification FAILED")
    return report, 0 if result.ok else 2


def _cmd_eval_sts(a):
    model = load_checkpoint(a.model)
    data = load_dataset(a.data, "sts")
    result = eval_sts(model, data)
    report = {"command": "eval-sts", "model": a.model, "data": a.data,
              **result.to_dict()}
    w = _Writes()
    if a.report:
        w.text(_dump(report), a.report)
    w.commit()
    _note(f"eval-sts: spearman {result.spearman:.4f}, "
          f"pearson {result.pearson:.4f} on {result.n_pairs} pairs")
    return report, 0


def _cmd_eval_knn(a):
    model = load_checkpoint(a.model)
    train = load_dataset(a.train, "cls")
    test = load_dataset(a.test, "cls")
    result = eval_knn(model, train, test, a.k)
    report = {"command": "eval-knn", "model": a.model, "train": a.train,
              "test": a.test, **result.to_dict()}
    w = _Writes()
    if a.report:
        w.text(_dump(report), a.report)
    w.commit()
    _note(f"eval-knn: accuracy {result.accuracy:.4f} at k={result.k} "
          f"on {result.n_test} queries")
    return report, 0


def _cmd_compare(a):
    fan = _fan(a.seed)
    t0 = time.perf_counter()
    nli, sts, sts_test, _source = _corpus(a, fan)
    base, base_source = _base_model(a, fan, nli, sts, sts_test)
    data = ExperimentData(nli_train=nli, sts_train=sts, sts_test=sts_test)
    cfg_nli = _train_cfg(a, a.nli_epochs, fan["arm_nli"])
    cfg_sts = _train_cfg(a, a.sts_epochs, fan["arm_sts"])
    result = compare_strategies(base, a.k, data, cfg_nli, cfg_sts)
    base_eval = eval_sts(base, sts_test)
    dt = time.perf_counter() - t0
    report = {"command": "compare-strategies", "seed": a.seed,
              "base": {"source": base_source,
                       "layers": base.config.num_layers,
                       "sts": _sim_summary(base_eval)},
              **result.to_dict()}
    w = _Writes()
    if a.report:
        w.text(_dump(report), a.report)
    w.commit()
    scores = ", ".join(f"{s}={result.reports[s].spearman:.4f}" for s in STRATEGIES)
    _note(f"compare-strategies k={a.k}: {scores} "
          f"(top_is_best={result.top_is_best}), {dt:.1f}s")
    return report, 0


def _cmd_pvs(a):
    fan = _fan(a.seed)
    t0 = time.perf_counter()
    nli, sts, sts_test, _source = _corpus(a, fan)
    base, base_source = _base_model(a, fan, nli, sts, sts_test)
    target = a.target_layers
    if target is None:
        target = base.config.num_layers // 2
    data = ExperimentData(nli_train=nli, sts_train=sts, sts_test=sts_test)
    cfg_nli = _train_cfg(a, a.nli_epochs, fan["arm_nli"])
    cfg_sts = _train_cfg(a, a.sts_epochs, fan["arm_sts"])
    result = pruned_vs_scratch(base, target, data, cfg_nli, cfg_sts,
                               scratch_seed=fan["scratch_init"])
    dt = time.perf_counter() - t0
    report = {"command": "pruned-vs-scratch", "seed": a.seed,
              "base": {"source": base_source, "layers": base.config.num_layers},
              **result.to_dict()}
    w = _Writes()
    if a.report:
        w.text(_dump(report), a.report)
    w.commit()
    _note(f"pruned-vs-scratch at {target} layers: "
          f"pruned {result.pruned.spearman:.4f} vs "
          f"scratch {result.scratch.spearman:.4f} -> {result.winner}, {dt:.1f}s")
    return report, 0


_HANDLERS = {
    "init": _cmd_init,
    "gen-data": _cmd_gen_data,
    "train-nli": lambda a: _cmd_train(a, "nli"),
    "train-sts": lambda a: _cmd_train(a, "sts"),
    "pipeline": _cmd_pipeline,
    "prune": _cmd_prune,
    "verify-prune": _cmd_verify_prune,
    "eval-sts": _cmd_eval_sts,
    "eval-knn": _cmd_eval_knn,
    "compare-strategies": _cmd_compare,
    "pruned-vs-scratch": _cmd_pvs,
}


def run(argv) -> int:
    parser, registry = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        a = _merge_config(ns, registry)
        report, code = _HANDLERS[ns.command](a)
    except CliUsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (SbpruneError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    sys.stdout.write(_dump(report))
    return code


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
