"""Read-only evaluation: rank correlation of cosine similarities on scored
sentence pairs, and nearest-neighbor classification on pooled embeddings.

Everything here runs outside any autodiff tape.  Cosines are computed in
float64 as dot / sqrt((u.u)(v.v)); with a bitwise-identical pair that
denominator is exactly the numerator, so identical sentences score 1.0
exactly, not 1 - epsilon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ClsExample, StsExample, tokenize
from .encoder import EncoderModel, encode_batch, pool_mean_batch
from .errors import DimensionError, InputError, UndefinedMetricError

_EMBED_CHUNK = 256


def _as_1d_f64(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionError(f"{name} must be 1-d, got shape {a.shape}")
    if a.size and not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite values")
    return a


def average_ranks(x) -> np.ndarray:
    """1-based ranks; a run of equal values shares the mean of its span."""
    a = _as_1d_f64(x, "values")
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson(x, y) -> float:
    a, b = _as_1d_f64(x, "x"), _as_1d_f64(y, "y")
    if a.size != b.size:
        raise InputError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise InputError(f"need at least 2 values, got {a.size}")
    ac, bc = a - a.mean(), b - b.mean()
    sa, sb = float(np.sqrt(ac @ ac)), float(np.sqrt(bc @ bc))
    if sa == 0.0 or sb == 0.0:
        raise UndefinedMetricError("correlation undefined for constant input")
    return float((ac @ bc) / (sa * sb))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    a, b = _as_1d_f64(x, "x"), _as_1d_f64(y, "y")
    if a.size != b.size:
        raise InputError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise InputError(f"need at least 2 values, got {a.size}")
    return pearson(average_ranks(a), average_ranks(b))


def embed_texts(model: EncoderModel, texts, batch_size: int = _EMBED_CHUNK) -> np.ndarray:
    """Mean-pooled embedding per text, [n, hidden_dim] in the model dtype.

    All texts in one call run at one padded width (longest real sequence),
    so duplicate texts embed to bit-identical rows no matter which chunk
    they land in.
    """
    if model.vocab is None:
        raise InputError("model has no vocabulary; tokenization is impossible")
    if batch_size < 1:
        raise InputError(f"batch_size must be positive, got {batch_size}")
    n = len(texts)
    max_len = model.config.max_seq_len
    ids = np.empty((n, max_len), dtype=np.int64)
    mask = np.empty((n, max_len), dtype=np.int64)
    for i, text in enumerate(texts):
        ids[i], mask[i] = tokenize(text, model.vocab, max_len)
    cols = np.flatnonzero(mask.any(axis=0))
    w = int(cols[-1]) + 1 if cols.size else 1
    ids, mask = ids[:, :w], mask[:, :w]
    chunks = []
    for start in range(0, n, batch_size):
        sl = slice(start, start + batch_size)
        hidden = encode_batch(model, ids[sl], mask[sl])
        chunks.append(pool_mean_batch(hidden, mask[sl]).data)
    return np.concatenate(chunks, axis=0)


def _cosine_rows_f64(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    a = u.astype(np.float64, copy=False)
    b = v.astype(np.float64, copy=False)
    num = (a * b).sum(axis=1)
    den = np.sqrt((a * a).sum(axis=1) * (b * b).sum(axis=1))
    out = np.zeros(num.shape, dtype=np.float64)
    nz = den > 0.0
    out[nz] = num[nz] / den[nz]
    return out


@dataclass
class SimilarityReport:
    spearman: float
    pearson: float
    n_pairs: int
    cosines: list

    def to_dict(self) -> dict:
        return {"spearman": self.spearman, "pearson": self.pearson,
                "n_pairs": self.n_pairs, "cosines": [float(c) for c in self.cosines]}


def eval_sts(model: EncoderModel, pairs) -> SimilarityReport:
    """Spearman and Pearson of embedding cosines against gold scores.

    A degenerate set (all cosines equal, or all golds equal) has no defined
    rank correlation and raises UndefinedMetricError.
    """
    if len(pairs) == 0:
        raise InputError("test set is empty")
    for i, ex in enumerate(pairs):
        if not isinstance(ex, StsExample):
            raise InputError(f"example {i} is {type(ex).__name__}, expected StsExample")
    # one embed call for both sides: identical sentences then share a padded
    # width and embed bit-identically, which keeps their cosine exactly 1.0
    n = len(pairs)
    both = embed_texts(model, [ex.sentence1 for ex in pairs]
                       + [ex.sentence2 for ex in pairs])
    u, v = both[:n], both[n:]
    cos = _cosine_rows_f64(u, v)
    golds = np.array([ex.score for ex in pairs], dtype=np.float64)
    return SimilarityReport(spearman=spearman(cos, golds),
                            pearson=pearson(cos, golds),
                            n_pairs=len(pairs), cosines=[float(c) for c in cos])


def _unit_rows(x: np.ndarray) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    norms = np.sqrt((a * a).sum(axis=1, keepdims=True))
    # zero rows stay zero: cosine 0 against everything
    return np.divide(a, norms, out=np.zeros_like(a), where=norms > 0.0)


def knn_classify(train_embeddings, train_labels, test_embeddings, k: int):
    """Majority label of the k nearest training rows by cosine distance.

    Equal distances rank by lower training index (stable sort).  A tied
    vote goes to the tied label whose nearest member is closest.
    """
    X = np.asarray(train_embeddings, dtype=np.float64)
    Q = np.asarray(test_embeddings, dtype=np.float64)
    if X.ndim != 2 or Q.ndim != 2:
        raise DimensionError(
            f"embeddings must be 2-d, got {np.asarray(train_embeddings).shape} "
            f"and {np.asarray(test_embeddings).shape}")
    if X.shape[1] != Q.shape[1]:
        raise DimensionError(
            f"dimension mismatch: train {X.shape[1]} vs test {Q.shape[1]}")
    labels = list(train_labels)
    if len(labels) != X.shape[0]:
        raise InputError(f"{X.shape[0]} training rows but {len(labels)} labels")
    if k < 1:
        raise InputError(f"k must be at least 1, got {k}")
    if k > X.shape[0]:
        raise InputError(f"k={k} exceeds the {X.shape[0]} training examples")

    dist = 1.0 - _unit_rows(Q) @ _unit_rows(X).T    # [m, n]
    out = []
    for row in dist:
        order = np.argsort(row, kind="stable")[:k]
        counts: dict = {}
        for idx in order:
            lab = labels[idx]
            counts[lab] = counts.get(lab, 0) + 1
        best = max(counts.values())
        tied = {lab for lab, c in counts.items() if c == best}
        # first neighbor (nearest wins; index order breaks exact ties)
        # carrying a tied label decides
        for idx in order:
            if labels[idx] in tied:
                out.append(labels[idx])
                break
    return out


@dataclass
class KnnReport:
    k: int
    accuracy: float
    confusion: dict     # confusion[true_label][predicted_label] = count
    labels: list
    n_train: int
    n_test: int

    def to_dict(self) -> dict:
        return {"k": self.k, "accuracy": self.accuracy, "confusion": self.confusion,
                "labels": list(self.labels), "n_train": self.n_train,
                "n_test": self.n_test}


def eval_knn(model: EncoderModel, train_set, test_set, k: int = 5) -> KnnReport:
    """Embed both sets, classify the test set, report accuracy and the full
    confusion table over the training label space."""
    if len(train_set) == 0 or len(test_set) == 0:
        raise InputError("train and test sets must both be non-empty")
    for name, ds in (("train", train_set), ("test", test_set)):
        for i, ex in enumerate(ds):
            if not isinstance(ex, ClsExample):
                raise InputError(
                    f"{name} example {i} is {type(ex).__name__}, expected ClsExample")
    train_labels = [ex.label for ex in train_set]
    space = sorted(set(train_labels))
    for i, ex in enumerate(test_set):
        if ex.label not in space:
            raise InputError(
                f"test example {i} has label {ex.label!r} absent from the "
                f"training label space")
    emb_train = embed_texts(model, [ex.text for ex in train_set])
    emb_test = embed_texts(model, [ex.text for ex in test_set])
    preds = knn_classify(emb_train, train_labels, emb_test, k)
    confusion = {t: {p: 0 for p in space} for t in space}
    hits = 0
    for ex, pred in zip(test_set, preds):
        confusion[ex.label][pred] += 1
        hits += int(pred == ex.label)
    return KnnReport(k=k, accuracy=hits / len(test_set), confusion=confusion,
                     labels=space, n_train=len(train_set), n_test=len(test_set))
