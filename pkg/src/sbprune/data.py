"""Datasets, vocabulary, tokenization, and the synthetic corpus generator.

File formats:
  - NLI and classification sets are JSON lines; one object per line with
    fields {"premise", "hypothesis", "label"} or {"text", "label"}.
  - STS sets are tab-separated: sentence1 <TAB> sentence2 <TAB> score,
    score a decimal in [0, 5].
  - Loaders accept LF and CRLF and error with a line number on anything
    outside the grammar; writers emit LF.

The generator's randomness is SplitMix64 in pure integer arithmetic, so
two machines with the same spec produce byte-identical corpora (numpy's
bit generators are stable too, but pinning our own keeps the corpus format
independent of the numerics stack).
"""

from __future__ import annotations

import json
import os
import tempfile
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParseError

NLI_LABEL_NAMES = ("entailment", "contradiction", "neutral")
_NLI_LABEL_IDS = {name: i for i, name in enumerate(NLI_LABEL_NAMES)}

PAD_ID = 0
OOV_ID = 1

# sentence-shape constants for the generator; documented in the README
_NLI_PREMISE_LEN = 8
_NLI_HYP_LEN = 4
_STS_LEN = 6
_CLS_LEN = 6
# shared-word count per gold level g solves round(5*s/(2K-s)) == g for K=6
_STS_SHARED = (0, 2, 3, 4, 5, 6)


@dataclass(frozen=True)
class NliExample:
    premise: str
    hypothesis: str
    label: int  # 0=entailment, 1=contradiction, 2=neutral


@dataclass(frozen=True)
class StsExample:
    sentence1: str
    sentence2: str
    score: float  # gold in [0, 5]


@dataclass(frozen=True)
class ClsExample:
    text: str
    label: str


# ---------------------------------------------------------------------------
# vocabulary and tokenization


class Vocab:
    """Token to id map; id 0 is PAD, id 1 is OOV, real tokens from 2 up."""

    def __init__(self, tokens):
        self._tokens = ["<pad>", "<oov>"] + list(tokens)
        if len(set(self._tokens)) != len(self._tokens):
            raise InputError("vocabulary tokens must be unique")
        self._ids = {t: i for i, t in enumerate(self._tokens)}

    def __len__(self):
        return len(self._tokens)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self._tokens == other._tokens

    def lookup(self, token: str) -> int:
        return self._ids.get(token, OOV_ID)

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def to_list(self):
        """Real tokens only (ids 2..); pairs with the class constructor."""
        return list(self._tokens[2:])


def build_vocab(texts, size: int) -> Vocab:
    """Most frequent tokens win; frequency ties break lexicographically."""
    if size < 3:
        raise InputError(f"vocab size must be at least 3 (PAD, OOV, one token), got {size}")
    counts = Counter()
    for text in texts:
        counts.update(text.lower().split())
    if not counts:
        raise InputError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab([tok for tok, _ in ranked[: size - 2]])


def tokenize(text: str, vocab: Vocab, max_len: int):
    """(ids, mask), both length max_len exactly.

    Whitespace split, lowercased, OOV fallback, truncation, zero padding.
    Empty text becomes a single OOV token so downstream pooling always has
    one unmasked position.
    """
    if max_len < 1:
        raise InputError(f"max_len must be positive, got {max_len}")
    words = text.lower().split()
    ids = [vocab.lookup(w) for w in words[:max_len]] or [OOV_ID]
    n = len(ids)
    out = np.zeros(max_len, dtype=np.int64)
    out[:n] = ids
    mask = np.zeros(max_len, dtype=np.int64)
    mask[:n] = 1
    return out, mask


# ---------------------------------------------------------------------------
# dataset files


def _atomic_write_text(path, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require_text(value, field, lineno):
    if not isinstance(value, str) or not value.strip():
        raise ParseError(f"field {field!r} must be a non-empty string", line=lineno)
    return value


def _parse_jsonl_line(raw, lineno, fields):
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line=lineno) from None
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", line=lineno)
    missing = [f for f in fields if f not in obj]
    if missing:
        raise ParseError(f"missing field {missing[0]!r}", line=lineno)
    unknown = [k for k in obj if k not in fields]
    if unknown:
        raise ParseError(f"unknown field {unknown[0]!r}", line=lineno)
    return obj


def _load_lines(path):
    with open(path, "r", encoding="utf-8", newline="") as f:
        raw = f.read()
    # accept CRLF transparently; splitlines drops the trailing newline only
    return raw.splitlines()


def load_dataset(path, kind: str):
    """Parse a dataset file into validated examples, in file order."""
    if kind not in ("nli", "sts", "cls"):
        raise InputError(f"unknown dataset kind {kind!r}")
    examples = []
    for lineno, line in enumerate(_load_lines(path), start=1):
        if not line.strip():
            raise ParseError("blank line", line=lineno)
        if kind == "nli":
            obj = _parse_jsonl_line(line, lineno, ("premise", "hypothesis", "label"))
            label = obj["label"]
            if label not in _NLI_LABEL_IDS:
                raise ParseError(
                    f"label must be one of {NLI_LABEL_NAMES}, got {label!r}", line=lineno
                )
            examples.append(NliExample(
                premise=_require_text(obj["premise"], "premise", lineno),
                hypothesis=_require_text(obj["hypothesis"], "hypothesis", lineno),
                label=_NLI_LABEL_IDS[label],
            ))
        elif kind == "cls":
            obj = _parse_jsonl_line(line, lineno, ("text", "label"))
            examples.append(ClsExample(
                text=_require_text(obj["text"], "text", lineno),
                label=_require_text(obj["label"], "label", lineno),
            ))
        else:
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    f"expected sentence1<TAB>sentence2<TAB>score, got {len(parts)} fields",
                    line=lineno,
                )
            s1, s2, score_str = parts
            _require_text(s1, "sentence1", lineno)
            _require_text(s2, "sentence2", lineno)
            try:
                score = float(score_str)
            except ValueError:
                raise ParseError(f"score is not a number: {score_str!r}", line=lineno) from None
            if not np.isfinite(score) or not 0.0 <= score <= 5.0:
                raise ParseError(f"score out of range [0, 5]: {score_str}", line=lineno)
            examples.append(StsExample(sentence1=s1, sentence2=s2, score=score))
    if not examples:
        raise InputError(f"empty dataset: {path}")
    return examples


def save_dataset(path, examples, kind: str) -> None:
    """Inverse of load_dataset; load(save(x)) == x."""
    if kind not in ("nli", "sts", "cls"):
        raise InputError(f"unknown dataset kind {kind!r}")
    lines = []
    for ex in examples:
        if kind == "nli":
            lines.append(json.dumps({
                "premise": ex.premise,
                "hypothesis": ex.hypothesis,
                "label": NLI_LABEL_NAMES[ex.label],
            }, ensure_ascii=False))
        elif kind == "cls":
            lines.append(json.dumps({"text": ex.text, "label": ex.label},
                                    ensure_ascii=False))
        else:
            for field in (ex.sentence1, ex.sentence2):
                if "\t" in field or "\n" in field or "\r" in field:
                    raise InputError("STS sentences cannot contain tabs or newlines")
            lines.append(f"{ex.sentence1}\t{ex.sentence2}\t{float(ex.score)!r}")
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


# ---------------------------------------------------------------------------
# portable PRNG for corpus generation


class SplitMix64:
    """SplitMix64; constants 0x9E3779B97F4A7C15, 0xBF58476D1CE4E5B9,
    0x94D049BB133111EB.  Pure integer arithmetic, identical on every
    platform."""

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self._MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self._MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def randint(self, n: int) -> int:
        """Uniform-ish integer in [0, n); modulo bias is irrelevant at toy n."""
        return self.next_u64() % n

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def sample(self, seq, k: int):
        """k distinct elements, partial Fisher-Yates order."""
        pool = list(seq)
        for i in range(k):
            j = i + self.randint(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]


# ---------------------------------------------------------------------------
# synthetic corpus


def _topic_pools(vocab_size: int, num_topics: int):
    per = vocab_size // num_topics
    return [[f"t{t}w{j}" for j in range(per)] for t in range(num_topics)]


def _check_gen_spec(kind, n, seed, vocab_size, num_topics):
    if kind not in ("nli", "sts", "cls"):
        raise InputError(f"unknown dataset kind {kind!r}")
    if n < 1:
        raise InputError(f"n must be positive, got {n}")
    if seed < 0:
        raise InputError(f"seed must be non-negative, got {seed}")
    if num_topics < 2:
        raise InputError(f"need at least 2 topics for cross-topic negatives, got {num_topics}")
    if vocab_size < _NLI_PREMISE_LEN * num_topics:
        raise InputError(
            f"vocab_size must be at least {_NLI_PREMISE_LEN * num_topics} "
            f"for {num_topics} topics, got {vocab_size}"
        )


def gen_synthetic(kind: str, n: int, seed: int, vocab_size: int = 60,
                  num_topics: int = 3):
    """Deterministic topic-structured corpus.

    Topics own disjoint word pools.  NLI: entailment samples the hypothesis
    from the premise's words, contradiction from another topic, neutral
    half-and-half; labels cycle so class counts balance within one.  STS:
    sentence pairs are built with a controlled word overlap per level
    i mod 6 and the gold score is recomputed as round(5 * Jaccard), which
    lands exactly on 0..5 and produces heavy rank ties.  CLS: text from one
    topic pool, label "topic<t>".
    """
    _check_gen_spec(kind, n, seed, vocab_size, num_topics)
    prng = SplitMix64(seed)
    pools = _topic_pools(vocab_size, num_topics)

    def other_topic(t):
        o = prng.randint(num_topics - 1)
        return o + 1 if o >= t else o

    out = []
    for i in range(n):
        if kind == "nli":
            label = i % 3
            t = prng.randint(num_topics)
            premise = prng.sample(pools[t], _NLI_PREMISE_LEN)
            if label == 0:
                hyp = prng.sample(premise, _NLI_HYP_LEN)
            elif label == 1:
                hyp = prng.sample(pools[other_topic(t)], _NLI_HYP_LEN)
            else:
                half = _NLI_HYP_LEN // 2
                hyp = prng.sample(premise, half) + \
                    prng.sample(pools[other_topic(t)], _NLI_HYP_LEN - half)
                prng.shuffle(hyp)
            out.append(NliExample(" ".join(premise), " ".join(hyp), label))
        elif kind == "sts":
            level = i % 6
            t = prng.randint(num_topics)
            s1 = prng.sample(pools[t], _STS_LEN)
            shared = _STS_SHARED[level]
            if shared == _STS_LEN:
                s2 = list(s1)  # identical sentence, gold 5
            else:
                s2 = prng.sample(s1, shared) + \
                    prng.sample(pools[other_topic(t)], _STS_LEN - shared)
                prng.shuffle(s2)
            jac = shared / (2 * _STS_LEN - shared)
            gold = float(int(5.0 * jac + 0.5))
            out.append(StsExample(" ".join(s1), " ".join(s2), gold))
        else:
            t = i % num_topics
            words = prng.sample(pools[t], _CLS_LEN)
            out.append(ClsExample(" ".join(words), f"topic{t}"))
    return out
