"""Seeded synthetic sequence-classification tasks."""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Iterator

import numpy as np

PAD_ID = 0
CLS_ID = 1
FIRST_CONTENT = 2

KINDS = ("parity", "majority", "pattern")


@dataclass(frozen=True)
class SyntheticTask:
    """Description of a toy task.

    ``kind`` is one of ``parity`` (parity of marked tokens), ``majority``
    (class token occurring most often) or ``pattern`` (contains a fixed
    bigram).  Lengths include the leading CLS token.
    """

    kind: str = "parity"
    vocab_size: int = 16
    min_len: int = 4
    max_len: int = 16
    n_classes: int = 2
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 400
    seed: int = 0
    max_marked: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}; expected one of {KINDS}")
        if self.min_len < 2 or self.max_len < self.min_len:
            raise ValueError("need 2 <= min_len <= max_len")
        if min(self.n_train, self.n_dev, self.n_test) <= 0:
            raise ValueError("split sizes must be positive")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.kind in ("parity", "pattern") and self.n_classes != 2:
            raise ValueError(f"{self.kind} task is binary")
        if self.kind == "parity" and self.max_marked > self.min_len - 1:
            raise ValueError("max_marked must fit into the shortest sequence")
        if self.kind == "majority" and self.vocab_size < FIRST_CONTENT + self.n_classes + 1:
            raise ValueError("vocab too small for majority task")
        if self.kind == "majority" and self.min_len - 1 < 2 * self.n_classes:
            raise ValueError("min_len too short for majority task")
        if self.vocab_size < FIRST_CONTENT + 3:
            raise ValueError("vocab_size too small")

    @property
    def task_id(self) -> str:
        return f"{self.kind}-s{self.seed}"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    tokens: np.ndarray  # (N, max_len) int64, PAD-filled
    lengths: np.ndarray  # (N,)
    labels: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.int64)
        return Dataset(self.tokens[idx], self.lengths[idx], self.labels[idx])

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(np.concatenate([self.tokens, other.tokens]),
                       np.concatenate([self.lengths, other.lengths]),
                       np.concatenate([self.labels, other.labels]))

    @property
    def max_len(self) -> int:
        return self.tokens.shape[1]


@dataclass
class Splits:
    train: Dataset
    dev: Dataset
    test: Dataset


# ---------------------------------------------------------------- labelling
MARK_ID = FIRST_CONTENT


def parity_label(seq: np.ndarray) -> int:
    return int(np.count_nonzero(seq == MARK_ID) % 2)


def majority_label(seq: np.ndarray, n_classes: int) -> int:
    counts = [np.count_nonzero(seq == FIRST_CONTENT + c) for c in range(n_classes)]
    return int(np.argmax(counts))


PATTERN = (FIRST_CONTENT, FIRST_CONTENT + 1)


def contains_pattern(seq: np.ndarray) -> int:
    a, b = PATTERN
    return int(np.any((seq[:-1] == a) & (seq[1:] == b)))


def label_of(task: SyntheticTask, seq: np.ndarray) -> int:
    """Ground-truth rule applied to the content tokens (CLS/PAD ignored)."""
    seq = seq[(seq != PAD_ID) & (seq != CLS_ID)]
    if task.kind == "parity":
        return parity_label(seq)
    if task.kind == "majority":
        return majority_label(seq, task.n_classes)
    return contains_pattern(seq)


# --------------------------------------------------------------- generation
def _parity_seq(task, rng, n, label):
    filler = np.arange(FIRST_CONTENT + 1, task.vocab_size)
    seq = rng.choice(filler, size=n)
    ks = [k for k in range(task.max_marked + 1) if k % 2 == label and k <= n]
    k = int(rng.choice(ks))
    seq[rng.choice(n, size=k, replace=False)] = MARK_ID
    return seq


def _majority_seq(task, rng, n, label):
    C = task.n_classes
    filler = np.arange(FIRST_CONTENT + C, task.vocab_size)
    seq = rng.choice(filler, size=n)
    # class tokens occupy a random prefix-free subset; the winner gets a strict lead
    n_cls = int(rng.integers(C + 1, n + 1))
    others = [c for c in range(C) if c != label]
    counts = np.zeros(C, dtype=int)
    top = int(rng.integers((n_cls + C - 1) // C + 1, n_cls + 1)) if n_cls > C else n_cls
    top = max(top, 1)
    counts[label] = top
    rest = n_cls - top
    for _ in range(rest):
        c = others[int(rng.integers(len(others)))]
        if counts[c] + 1 < counts[label]:
            counts[c] += 1
    pos = rng.permutation(n)
    j = 0
    for c in range(C):
        for _ in range(counts[c]):
            seq[pos[j]] = FIRST_CONTENT + c
            j += 1
    return seq


def _pattern_seq(task, rng, n, label):
    a, b = PATTERN
    pool = np.arange(FIRST_CONTENT, task.vocab_size)
    while True:
        seq = rng.choice(pool, size=n)
        if label == 1:
            i = int(rng.integers(n - 1))
            seq[i], seq[i + 1] = a, b
            return seq
        hits = np.nonzero((seq[:-1] == a) & (seq[1:] == b))[0]
        for i in hits:
            seq[i + 1] = FIRST_CONTENT + 2
        if not contains_pattern(seq):
            return seq


_MAKERS = {"parity": _parity_seq, "majority": _majority_seq, "pattern": _pattern_seq}


def _make_split(task: SyntheticTask, rng: np.random.Generator, size: int) -> Dataset:
    labels = np.arange(size) % task.n_classes
    rng.shuffle(labels)
    lengths = rng.integers(task.min_len, task.max_len + 1, size=size)
    tokens = np.full((size, task.max_len), PAD_ID, dtype=np.int64)
    for i in range(size):
        n = int(lengths[i])
        tokens[i, 0] = CLS_ID
        tokens[i, 1:n] = _MAKERS[task.kind](task, rng, n - 1, int(labels[i]))
    return Dataset(tokens, lengths.astype(np.int64), labels.astype(np.int64))


def gen_task(task: SyntheticTask) -> Splits:
    """Deterministic train/dev/test splits; no sequence is shared between splits."""
    rng = np.random.default_rng(task.seed)
    total = task.n_train + task.n_dev + task.n_test
    full = _make_split(task, rng, total)
    # drop cross-split duplicates by keeping first occurrences, then refill
    _, first = np.unique(full.tokens, axis=0, return_index=True)
    keep = np.sort(first)
    while len(keep) < total:
        extra = _make_split(task, rng, total - len(keep))
        full = full.subset(keep).concat(extra)
        _, first = np.unique(full.tokens, axis=0, return_index=True)
        keep = np.sort(first)
    full = full.subset(keep)
    a, b = task.n_train, task.n_train + task.n_dev
    return Splits(full.subset(np.arange(a)), full.subset(np.arange(a, b)),
                  full.subset(np.arange(b, total)))


def iter_batches(ds: Dataset, batch_size: int, dynamic_length: bool = True,
                 order: np.ndarray | None = None) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """Yield ``(tokens, mask, labels, index)`` batches.

    With ``dynamic_length`` each batch is cut to its own longest sequence;
    otherwise every batch keeps the full padded width.
    """
    idx = np.arange(len(ds)) if order is None else np.asarray(order)
    for start in range(0, len(idx), batch_size):
        b = idx[start:start + batch_size]
        width = int(ds.lengths[b].max()) if dynamic_length else ds.max_len
        tok = ds.tokens[b, :width]
        mask = np.arange(width)[None, :] < ds.lengths[b][:, None]
        yield tok, mask, ds.labels[b], b
