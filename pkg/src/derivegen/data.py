"""Dataset construction from lemma-pair tables and a tokenized corpus.

File formats (UTF-8, LF, tab-separated):
  lemma pairs:  base \t derived \t suffix_label \t pos
  inflections:  lemma \t form1,form2,...
  corpus:       one pre-tokenized sentence per line, space-separated
  instances:    left tokens \t target_form \t right tokens \t base \t pos \t suffix_label
  embeddings:   word v1 ... vD   (optional leading "count dim" header line)
"""

from __future__ import annotations

import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

NULL_SUFFIX = "NULL"
POS_TAGS = ("NOUN", "VERB")
MIN_SENTENCE_TOKENS = 3
MAX_SENTENCE_TOKENS = 50
RARE_SUFFIX_MAX_PAIRS = 5  # suffixes with this many pairs or fewer are dropped


class DataFormatError(ValueError):
    """Malformed input row; the message carries file and line number."""


class EmptyDatasetError(ValueError):
    """No usable data remained after parsing and filtering."""


class InsufficientDataError(ValueError):
    """Too little data for the requested split."""


@dataclass(frozen=True)
class LemmaPair:
    base: str
    derived: str
    suffix_label: str
    pos: str
    base_inflections: tuple[str, ...] = ()
    derived_inflections: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.suffix_label == NULL_SUFFIX) != (self.base == self.derived):
            raise DataFormatError(
                f"pair ({self.base}, {self.derived}): suffix {self.suffix_label!r} is "
                f"inconsistent (NULL iff base == derived)")
        if self.pos not in POS_TAGS:
            raise DataFormatError(f"pair ({self.base}, {self.derived}): bad POS {self.pos!r}")


@dataclass(frozen=True)
class Instance:
    """One training/evaluation example: the derived form removed from its
    sentence, to be regenerated from the base lemma and the context."""

    left_tokens: tuple[str, ...]
    right_tokens: tuple[str, ...]
    base: str
    target: str
    pos: str
    suffix_label: str
    pair_id: "int | None" = None

    @property
    def sentence_length(self) -> int:
        return len(self.left_tokens) + 1 + len(self.right_tokens)

    def sentence_tokens(self, slot: str) -> tuple[str, ...]:
        return self.left_tokens + (slot,) + self.right_tokens


def load_inflections(path) -> dict[str, tuple[str, ...]]:
    table: dict[str, tuple[str, ...]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DataFormatError(f"{path}:{lineno}: expected 'lemma<TAB>forms', got {len(fields)} fields")
            lemma, forms = fields
            table[lemma] = tuple(f for f in forms.split(",") if f)
    return table


def _inflections_for(lemma: str, table: "dict[str, tuple[str, ...]] | None") -> tuple[str, ...]:
    forms = (table or {}).get(lemma, ())
    if lemma not in forms:
        forms = (lemma,) + tuple(forms)
    return forms


def load_lemma_pairs(path, inflections: "dict[str, tuple[str, ...]] | None" = None,
                     add_verb_verb: bool = True) -> list[LemmaPair]:
    """Parse the lemma-pair TSV, drop rare suffixes, and add one verb-verb
    identity pair per distinct base verb that lacks one."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, got {len(fields)}")
            base, derived, suffix, pos = fields
            try:
                rows.append(LemmaPair(
                    base=base, derived=derived, suffix_label=suffix, pos=pos,
                    base_inflections=_inflections_for(base, inflections),
                    derived_inflections=_inflections_for(derived, inflections)))
            except DataFormatError as err:
                raise DataFormatError(f"{path}:{lineno}: {err}") from None

    suffix_counts = Counter(p.suffix_label for p in rows if p.suffix_label != NULL_SUFFIX)
    pairs = [p for p in rows
             if p.suffix_label == NULL_SUFFIX or suffix_counts[p.suffix_label] > RARE_SUFFIX_MAX_PAIRS]

    if add_verb_verb:
        have_identity = {p.base for p in pairs if p.suffix_label == NULL_SUFFIX}
        for base in sorted({p.base for p in pairs} - have_identity):
            pairs.append(LemmaPair(
                base=base, derived=base, suffix_label=NULL_SUFFIX, pos="VERB",
                base_inflections=_inflections_for(base, inflections),
                derived_inflections=_inflections_for(base, inflections)))

    if not pairs:
        raise EmptyDatasetError(f"{path}: no lemma pairs left after filtering rare suffixes")
    return pairs


def extract_contexts(sentences, pairs: list[LemmaPair],
                     min_tokens: int = MIN_SENTENCE_TOKENS,
                     max_tokens: int = MAX_SENTENCE_TOKENS) -> list[Instance]:
    """Turn every occurrence of an inflected derived form into an Instance.

    Sentences outside the length bounds are skipped. A surface form claimed
    by several pairs goes to the pair listed first.
    """
    surface_to_pair: dict[str, int] = {}
    for idx, pair in enumerate(pairs):
        for form in pair.derived_inflections or (pair.derived,):
            surface_to_pair.setdefault(form, idx)

    instances = []
    for tokens in sentences:
        tokens = tuple(tokens)
        if not (min_tokens <= len(tokens) <= max_tokens):
            continue
        for i, tok in enumerate(tokens):
            pair_idx = surface_to_pair.get(tok)
            if pair_idx is None:
                continue
            pair = pairs[pair_idx]
            instances.append(Instance(
                left_tokens=tokens[:i], right_tokens=tokens[i + 1:],
                base=pair.base, target=tok, pos=pair.pos,
                suffix_label=pair.suffix_label, pair_id=pair_idx))
    return instances


def dampen_contexts(instances: list[Instance], alpha: float = 5.0,
                    seed: int = 0) -> list[Instance]:
    """Cap each (lemma pair, surface form) group at ceil(alpha * ln(1 + n))
    instances, sampled uniformly. Deterministic for a fixed seed; groups
    already within quota pass through untouched."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, inst in enumerate(instances):
        key = (inst.pair_id if inst.pair_id is not None else (inst.base, inst.suffix_label),
               inst.target)
        groups[key].append(i)
    rng = np.random.default_rng(seed)
    keep: set[int] = set()
    for key in sorted(groups, key=repr):
        members = groups[key]
        n = len(members)
        quota = min(n, math.ceil(alpha * math.log1p(n)))
        if quota >= n:
            keep.update(members)
        else:
            chosen = rng.choice(n, size=quota, replace=False)
            keep.update(members[j] for j in chosen)
    return [inst for i, inst in enumerate(instances) if i in keep]


def _cut_points(n: int, ratios) -> tuple[int, int]:
    r_train, r_dev, r_test = ratios
    n_train = int(round(n * r_train))
    n_dev = int(round(n * r_dev))
    n_train = min(n_train, n)
    n_dev = min(n_dev, n - n_train)
    return n_train, n_train + n_dev


def split_dataset(instances: list[Instance], mode: str, ratios=(0.8, 0.1, 0.1),
                  seed: int = 0) -> tuple[list[Instance], list[Instance], list[Instance]]:
    """Deterministic train/dev/test split.

    shared: instances are split at random, then any stem that shows up in dev
    or test without a training instance has one moved into train, so that
    every evaluated stem is attested in training.
    split: base lemmas are partitioned disjointly and carry all their
    instances with them, so evaluation stems are unseen in training.
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be non-negative and sum to 1, got {ratios}")
    if mode not in ("shared", "split"):
        raise ValueError(f"mode must be 'shared' or 'split', got {mode!r}")
    rng = np.random.default_rng(seed)

    if mode == "split":
        lemmas = sorted({inst.base for inst in instances})
        if len(lemmas) < 3:
            raise InsufficientDataError(
                f"split-lexicon mode needs at least 3 distinct base lemmas, got {len(lemmas)}")
        order = [lemmas[i] for i in rng.permutation(len(lemmas))]
        a, b = _cut_points(len(order), ratios)
        assignment = {}
        for lemma in order[:a]:
            assignment[lemma] = 0
        for lemma in order[a:b]:
            assignment[lemma] = 1
        for lemma in order[b:]:
            assignment[lemma] = 2
        buckets: tuple[list, list, list] = ([], [], [])
        for inst in instances:
            buckets[assignment[inst.base]].append(inst)
        return buckets

    order = rng.permutation(len(instances))
    a, b = _cut_points(len(instances), ratios)
    labels = np.empty(len(instances), dtype=int)
    labels[order[:a]] = 0
    labels[order[a:b]] = 1
    labels[order[b:]] = 2
    train_stems = {instances[i].base for i in range(len(instances)) if labels[i] == 0}
    for i in range(len(instances)):
        if labels[i] != 0 and instances[i].base not in train_stems:
            labels[i] = 0
            train_stems.add(instances[i].base)
    buckets = ([], [], [])
    for i, inst in enumerate(instances):
        buckets[labels[i]].append(inst)
    return buckets


def save_instances(path, instances: list[Instance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write("\t".join([
                " ".join(inst.left_tokens), inst.target, " ".join(inst.right_tokens),
                inst.base, inst.pos, inst.suffix_label]) + "\n")


def load_instances(path) -> list[Instance]:
    instances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 6:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 6 tab-separated fields, got {len(fields)}")
            left, target, right, base, pos, suffix = fields
            if pos not in POS_TAGS:
                raise DataFormatError(f"{path}:{lineno}: bad POS {pos!r}")
            inst = Instance(
                left_tokens=tuple(left.split()), right_tokens=tuple(right.split()),
                base=base, target=target, pos=pos, suffix_label=suffix)
            if not (MIN_SENTENCE_TOKENS <= inst.sentence_length <= MAX_SENTENCE_TOKENS):
                raise DataFormatError(
                    f"{path}:{lineno}: sentence length {inst.sentence_length} outside "
                    f"[{MIN_SENTENCE_TOKENS}, {MAX_SENTENCE_TOKENS}]")
            instances.append(inst)
    return instances


def dataset_stats(pairs: "list[LemmaPair] | None", instances: list[Instance]) -> dict:
    stats = {
        "instances": len(instances),
        "instance_suffixes": len({i.suffix_label for i in instances}),
        "stems": len({i.base for i in instances}),
    }
    if pairs is not None:
        stats["lemma_pairs"] = len(pairs)
        stats["pair_suffixes"] = len({p.suffix_label for p in pairs})
    return stats


_SENTINEL_SEED = 0x5E17  # fixed; sentinel vectors must not vary across runs


class EmbeddingTable:
    """Fixed (never trained) word vectors with unknown-word fallback and
    begin/end-of-sentence sentinel vectors for empty context sides."""

    def __init__(self, dim: int, vectors: dict[str, np.ndarray],
                 unk_vector: "np.ndarray | None" = None):
        self.dim = dim
        self.vectors = {w: np.asarray(v, dtype=np.float64) for w, v in vectors.items()}
        for w, v in self.vectors.items():
            if v.shape != (dim,):
                raise DataFormatError(f"embedding for {w!r} has shape {v.shape}, expected ({dim},)")
        if unk_vector is None:
            if self.vectors:
                unk_vector = np.mean(list(self.vectors.values()), axis=0)
            else:
                warnings.warn("embedding table is empty; all lookups will return the zero vector")
                unk_vector = np.zeros(dim)
        self.unk_vector = np.asarray(unk_vector, dtype=np.float64)
        rng = np.random.default_rng(_SENTINEL_SEED)
        self.bos_vector = rng.normal(0.0, 0.1, size=dim)
        self.eos_vector = rng.normal(0.0, 0.1, size=dim)

    def lookup(self, word: str) -> np.ndarray:
        return self.vectors.get(word, self.unk_vector)

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    @classmethod
    def load(cls, path, vocab: "set[str] | None" = None,
             dim: "int | None" = None) -> "EmbeddingTable":
        """Read text word-vector format; keeps only vocab words when given.
        A leading "count dim" header line is accepted and skipped."""
        vectors: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split(" ")
                if lineno == 1 and len(parts) == 2:
                    try:
                        int(parts[0]), int(parts[1])
                        continue  # header
                    except ValueError:
                        pass
                if len(parts) < 2:
                    continue
                word, values = parts[0], parts[1:]
                if dim is None:
                    dim = len(values)
                elif len(values) != dim:
                    raise DataFormatError(
                        f"{path}:{lineno}: expected {dim} components, got {len(values)}")
                if vocab is not None and word not in vocab:
                    continue
                try:
                    vectors[word] = np.array([float(v) for v in values])
                except ValueError as err:
                    raise DataFormatError(f"{path}:{lineno}: {err}") from None
        if dim is None:
            raise DataFormatError(f"{path}: no embedding rows found")
        if vocab is not None and not vectors:
            warnings.warn(f"{path}: no overlap with the {len(vocab)}-word vocabulary; "
                          "all context tokens will map to the unknown vector")
        return cls(dim, vectors)

    @classmethod
    def random(cls, vocab, dim: int, seed: int = 0, scale: float = 0.1) -> "EmbeddingTable":
        """Deterministic random vectors for runs without pretrained embeddings."""
        rng = np.random.default_rng(seed)
        vectors = {w: rng.normal(0.0, scale, size=dim) for w in sorted(set(vocab))}
        return cls(dim, vectors)


def context_vocabulary(instances: list[Instance]) -> set[str]:
    vocab: set[str] = set()
    for inst in instances:
        vocab.update(inst.left_tokens)
        vocab.update(inst.right_tokens)
    return vocab
