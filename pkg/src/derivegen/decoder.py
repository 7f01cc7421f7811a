"""Character-by-character generation of the derived form.

Each step scores the next character as R*embed(prev_char) +
max(B*o, S*embed(base_char)) + bias, where the elementwise max lets the model
switch between copying the aligned base character and generating from
context. The base character fed at output position k is the base form's k-th
character, continuing with the end-of-word symbol once the base is exhausted,
so a pure copy is always position-aligned.

An optional recurrent mode replaces embed(prev_char) in the R term with the
hidden state of a small LSTM cell driven by the previous characters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter, Tensor, add, affine, lookup, pairwise_max, softmax_xent
from .lstm import LstmLayerParams, lstm_step

BOW = "<w>"
EOW = "</w>"
UNK_CHAR = "<?>"


class VocabularyError(ValueError):
    """A character index falls outside the alphabet."""


class Alphabet:
    """Character inventory: begin/end-of-word and unknown sentinels first,
    then the characters observed in training data, sorted."""

    def __init__(self, chars):
        reserved = (BOW, EOW, UNK_CHAR)
        chars = sorted(set(chars) - set(reserved))
        self.symbols: tuple[str, ...] = reserved + tuple(chars)
        self._index = {s: i for i, s in enumerate(self.symbols)}

    BOW_INDEX = 0
    EOW_INDEX = 1
    UNK_INDEX = 2

    @classmethod
    def from_words(cls, words) -> "Alphabet":
        chars = set()
        for w in words:
            chars.update(w)
        return cls(chars)

    def __len__(self) -> int:
        return len(self.symbols)

    def encode(self, word: str) -> list[int]:
        return [self._index.get(ch, self.UNK_INDEX) for ch in word]

    def decode(self, indices) -> str:
        out = []
        for i in indices:
            if not 0 <= i < len(self.symbols):
                raise VocabularyError(f"character index {i} outside alphabet of size {len(self.symbols)}")
            if i == self.UNK_INDEX:
                out.append("?")
            elif i >= 3:
                out.append(self.symbols[i])
        return "".join(out)


@dataclass
class DecoderParams:
    char_table: Parameter          # (|alphabet|, d_c), shared by prev-char and base-char inputs
    r_mat: Parameter               # (|alphabet|, d_c)
    b_mat: Parameter               # (|alphabet|, ctx_dim)
    s_mat: Parameter               # (|alphabet|, d_c)
    bias: Parameter                # (|alphabet|,)
    cell: "LstmLayerParams | None" = field(default=None)  # recurrent mode only

    @classmethod
    def init(cls, n_symbols: int, d_c: int, ctx_dim: int, rng: np.random.Generator,
             recurrent: bool = False, scale: float = 0.08) -> "DecoderParams":
        return cls(
            char_table=Parameter.uniform((n_symbols, d_c), rng, scale),
            r_mat=Parameter.uniform((n_symbols, d_c), rng, scale),
            b_mat=Parameter.uniform((n_symbols, ctx_dim), rng, scale),
            s_mat=Parameter.uniform((n_symbols, d_c), rng, scale),
            bias=Parameter.zeros(n_symbols),
            cell=LstmLayerParams.init(d_c, d_c, rng, scale) if recurrent else None,
        )

    @property
    def n_symbols(self) -> int:
        return self.char_table.shape[0]

    @property
    def recurrent(self) -> bool:
        return self.cell is not None

    def named_parameters(self) -> dict[str, Parameter]:
        out = {"char_table": self.char_table, "r_mat": self.r_mat,
               "b_mat": self.b_mat, "s_mat": self.s_mat, "bias": self.bias}
        if self.cell is not None:
            for name, p in self.cell.named_parameters().items():
                out[f"cell.{name}"] = p
        return out

    def _check_index(self, idx: int, what: str) -> None:
        if not 0 <= idx < self.n_symbols:
            raise VocabularyError(f"{what} index {idx} outside alphabet of size {self.n_symbols}")


def base_prefix_char(base: list[int], position: int) -> int:
    """Base character aligned with output position (0-based); end-of-word
    once the base form is exhausted."""
    if position < 0:
        raise IndexError(f"negative position {position}")
    if position < len(base):
        return base[position]
    return Alphabet.EOW_INDEX


def decode_step(c_j: int, o: Tensor, l_next: int, params: DecoderParams) -> Tensor:
    """Next-character logits from (previous char, context vector, aligned
    base char). Softmax is applied by the caller."""
    params._check_index(c_j, "previous character")
    params._check_index(l_next, "base character")
    prev = lookup(params.char_table, c_j)
    copy_or_generate = pairwise_max(affine(params.b_mat, o),
                                    affine(params.s_mat, lookup(params.char_table, l_next)))
    return add(add(affine(params.r_mat, prev), copy_or_generate), params.bias)


def _step(prev_term: Tensor, o: Tensor, l_next: int, params: DecoderParams) -> Tensor:
    copy_or_generate = pairwise_max(affine(params.b_mat, o),
                                    affine(params.s_mat, lookup(params.char_table, l_next)))
    return add(add(affine(params.r_mat, prev_term), copy_or_generate), params.bias)


class _PrevEncoder:
    """Produces the R-term input per step: the previous character's embedding,
    or the hidden state of the decoder cell in recurrent mode."""

    def __init__(self, params: DecoderParams):
        self.params = params
        if params.recurrent:
            d = params.cell.d_out
            self.h = Tensor(np.zeros(d))
            self.c = Tensor(np.zeros(d))

    def consume(self, char_index: int) -> Tensor:
        self.params._check_index(char_index, "previous character")
        emb = lookup(self.params.char_table, char_index)
        if not self.params.recurrent:
            return emb
        self.h, self.c = lstm_step(self.params.cell, emb, self.h, self.c)
        return self.h


def teacher_forced_loss(base: list[int], target: list[int], o: Tensor,
                        params: DecoderParams) -> Tensor:
    """Summed cross-entropy over the gold character sequence plus the final
    end-of-word step, with gold previous characters fed back."""
    if not target:
        raise ValueError("target derived form must be non-empty")
    prev_enc = _PrevEncoder(params)
    total = None
    prev = Alphabet.BOW_INDEX
    for k in range(len(target) + 1):
        gold = target[k] if k < len(target) else Alphabet.EOW_INDEX
        params._check_index(gold, "target character")
        logits = _step(prev_enc.consume(prev), o, base_prefix_char(base, k), params)
        loss, _ = softmax_xent(logits, gold)
        total = loss if total is None else add(total, loss)
        prev = gold
    return total


def generate_greedy(base: list[int], o: Tensor, params: DecoderParams,
                    max_len: int) -> tuple[list[int], bool]:
    """Greedy argmax decoding. Returns (characters, terminated); terminated
    is False when the output was cut off at max_len. Ties break toward the
    lowest character index; the begin-of-word and unknown sentinels are never
    emitted."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    for idx in base:
        params._check_index(idx, "base character")
    mask = np.zeros(params.n_symbols)
    mask[Alphabet.BOW_INDEX] = -np.inf
    mask[Alphabet.UNK_INDEX] = -np.inf
    prev_enc = _PrevEncoder(params)
    out: list[int] = []
    prev = Alphabet.BOW_INDEX
    for k in range(max_len):
        logits = _step(prev_enc.consume(prev), o, base_prefix_char(base, k), params)
        choice = int(np.argmax(logits.data + mask))
        if choice == Alphabet.EOW_INDEX:
            return out, True
        out.append(choice)
        prev = choice
    return out, False
