"""The trainable derivation generator, wired as a fit/predict estimator.

Per instance, the forward pass runs directional LSTM stacks over the left
context, the right context, and the base form's characters (which stacks
exist depends on the variant), fuses their final states into a context
vector, and scores the derived form character-by-character with the
copy-or-generate decoder. Training is plain per-instance SGD with momentum
and early stopping on dev exact-match accuracy.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .autodiff import Parameter, Tape, Tensor, backward, lookup, sgd_momentum_step
from .data import EmbeddingTable, Instance, context_vocabulary
from .decoder import Alphabet, DecoderParams, generate_greedy, teacher_forced_loss
from .encoder import ConfigurationError, EncoderParams, VariantConfig, encode, resolve_variant
from .lstm import LstmStack, run_stack


def validate_instances(X, require_target: bool = True) -> list[Instance]:
    """Check that X is a non-empty list of well-formed instances."""
    X = list(X)
    if not X:
        raise ValueError("no instances given")
    for i, inst in enumerate(X):
        if not isinstance(inst, Instance):
            raise TypeError(f"item {i} is {type(inst).__name__}, expected Instance")
        if not inst.base:
            raise ValueError(f"instance {i} has an empty base form")
        if require_target and not inst.target:
            raise ValueError(f"instance {i} has an empty target form")
    return X


class ModelParams:
    """All trainable weights of one model variant."""

    def __init__(self, variant: VariantConfig, h: int, l: int, d_c: int, d_pos: int,
                 emb_dim: int, n_chars: int, n_pos: int, decoder_recurrent: bool,
                 rng: np.random.Generator):
        self.decoder = DecoderParams.init(n_chars, d_c, h * l, rng,
                                          recurrent=decoder_recurrent)
        self.stacks: dict[str, LstmStack] = {}
        for slot in variant.state_slots():
            d_in = d_c if slot.startswith("base") else emb_dim
            direction = "forward" if slot.endswith("fwd") else "backward"
            self.stacks[slot] = LstmStack.init(d_in, h, l, direction, rng)
        self.encoder = EncoderParams.init(variant, h, l, rng,
                                          n_pos=n_pos if variant.use_pos else 0,
                                          d_pos=d_pos)

    def named_parameters(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for slot, stack in self.stacks.items():
            for name, p in stack.named_parameters().items():
                out[f"stack.{slot}.{name}"] = p
        for name, p in self.encoder.named_parameters().items():
            out[f"encoder.{name}"] = p
        for name, p in self.decoder.named_parameters().items():
            out[f"decoder.{name}"] = p
        return out


class DerivationGenerator(BaseEstimator):
    """Character-level encoder-decoder that derives a context-appropriate
    word form from a base lemma.

    Defaults follow the reference setup: 3-layer bidirectional LSTMs with
    hidden size 100, character embeddings of 100, fixed 300-dim word
    embeddings, SGD with momentum. `variant` is a VariantConfig or one of
    the names in encoder.VARIANT_NAMES. `embeddings` is an EmbeddingTable;
    when None, a deterministic random table is built from the training
    vocabulary (word vectors are never trained either way).
    """

    def __init__(self, variant="ctx+bs", h=100, l=3, d_c=100, d_pos=16, emb_dim=300,
                 lr=0.1, momentum=0.9, epochs=50, patience=5, max_len_extra=10,
                 clip_norm=None, decoder_recurrent=False, seed=0, embeddings=None,
                 verbose=False):
        self.variant = variant
        self.h = h
        self.l = l
        self.d_c = d_c
        self.d_pos = d_pos
        self.emb_dim = emb_dim
        self.lr = lr
        self.momentum = momentum
        self.epochs = epochs
        self.patience = patience
        self.max_len_extra = max_len_extra
        self.clip_norm = clip_norm
        self.decoder_recurrent = decoder_recurrent
        self.seed = seed
        self.embeddings = embeddings
        self.verbose = verbose

    # -- forward pieces ----------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this DerivationGenerator has not been fitted yet")

    def _pos_index(self, pos: str) -> "int | None":
        if not self.variant_.use_pos:
            return None
        try:
            return self.pos_tags_.index(pos)
        except ValueError:
            raise ConfigurationError(
                f"POS tag {pos!r} was not seen during training (known: {self.pos_tags_})") from None

    def _word_sequence(self, tokens, empty_sentinel) -> list[Tensor]:
        if tokens:
            return [Tensor(self.embeddings_.lookup(w)) for w in tokens]
        return [Tensor(empty_sentinel)]

    def _encode_instance(self, inst: Instance, base_idx: list[int]) -> Tensor:
        cfg = self.variant_
        states: dict[str, Tensor] = {}
        if cfg.use_context:
            if "left_fwd" in self.params_.stacks:
                left = self._word_sequence(inst.left_tokens, self.embeddings_.bos_vector)
                states["left_fwd"] = run_stack(self.params_.stacks["left_fwd"], left)
                if "left_bwd" in self.params_.stacks:
                    states["left_bwd"] = run_stack(self.params_.stacks["left_bwd"], left)
            right = self._word_sequence(inst.right_tokens, self.embeddings_.eos_vector)
            states["right_bwd"] = run_stack(self.params_.stacks["right_bwd"], right)
            if "right_fwd" in self.params_.stacks:
                states["right_fwd"] = run_stack(self.params_.stacks["right_fwd"], right)
        if cfg.use_base:
            chars = [lookup(self.params_.decoder.char_table, i) for i in base_idx]
            states["base_fwd"] = run_stack(self.params_.stacks["base_fwd"], chars)
            states["base_bwd"] = run_stack(self.params_.stacks["base_bwd"], chars)
        return encode(states, self._pos_index(inst.pos), cfg, self.params_.encoder)

    def _instance_loss(self, inst: Instance) -> Tensor:
        base_idx = self.alphabet_.encode(inst.base)
        target_idx = self.alphabet_.encode(inst.target)
        o = self._encode_instance(inst, base_idx)
        return teacher_forced_loss(base_idx, target_idx, o, self.params_.decoder)

    # -- estimator API -----------------------------------------------------

    def fit(self, X, dev=None) -> "DerivationGenerator":
        X = validate_instances(X)
        if dev is not None:
            dev = validate_instances(dev)
        self.variant_ = resolve_variant(self.variant)
        rng = np.random.default_rng(self.seed)
        self.alphabet_ = Alphabet.from_words(
            [i.base for i in X] + [i.target for i in X])
        self.pos_tags_ = tuple(sorted({i.pos for i in X}))
        if self.embeddings is not None:
            self.embeddings_ = self.embeddings
            if self.embeddings_.dim != self.emb_dim:
                raise ConfigurationError(
                    f"embedding table has dim {self.embeddings_.dim}, expected emb_dim={self.emb_dim}")
        else:
            self.embeddings_ = EmbeddingTable.random(
                context_vocabulary(X), self.emb_dim, seed=self.seed)
        self.params_ = ModelParams(
            self.variant_, self.h, self.l, self.d_c, self.d_pos, self.emb_dim,
            len(self.alphabet_), len(self.pos_tags_), self.decoder_recurrent, rng)
        params = list(self.params_.named_parameters().values())

        self.history_ = []
        best_acc = -1.0
        best_snapshot = None
        stall = 0
        epochs_run = 0
        for epoch in range(self.epochs):
            order = rng.permutation(len(X))
            total = 0.0
            for idx in order:
                with Tape() as tape:
                    loss = self._instance_loss(X[idx])
                backward(loss, tape)
                sgd_momentum_step(params, self.lr, self.momentum,
                                 max_grad_norm=self.clip_norm)
                total += loss.item()
            epochs_run = epoch + 1
            record = {"epoch": epochs_run, "train_loss": total / len(X)}
            if dev is not None:
                acc = self.score(dev)
                record["dev_accuracy"] = acc
                if acc > best_acc:
                    best_acc = acc
                    best_snapshot = {n: p.value.copy()
                                     for n, p in self.params_.named_parameters().items()}
                    stall = 0
                else:
                    stall += 1
            self.history_.append(record)
            if self.verbose:
                dev_part = f"  dev_acc={record.get('dev_accuracy', float('nan')):.4f}" \
                    if dev is not None else ""
                print(f"epoch {epochs_run:3d}  loss={record['train_loss']:.4f}{dev_part}")
            if dev is not None and stall >= self.patience:
                break
            if dev is not None and best_acc == 1.0:
                break
        if best_snapshot is not None:
            named = self.params_.named_parameters()
            for name, value in best_snapshot.items():
                named[name].value[:] = value
        self.n_epochs_ = epochs_run
        self.best_dev_accuracy_ = best_acc if dev is not None else None
        return self

    def generate(self, X) -> list[tuple[str, bool]]:
        """Greedy predictions with termination flags (False = cut at max length)."""
        self._check_fitted()
        X = validate_instances(X, require_target=False)
        out = []
        for inst in X:
            base_idx = self.alphabet_.encode(inst.base)
            o = self._encode_instance(inst, base_idx)
            symbols, terminated = generate_greedy(
                base_idx, o, self.params_.decoder,
                max_len=len(base_idx) + self.max_len_extra)
            out.append((self.alphabet_.decode(symbols), terminated))
        return out

    def predict(self, X) -> list[str]:
        return [form for form, _ in self.generate(X)]

    def score(self, X, y=None) -> float:
        """Exact-match accuracy against the instances' target forms."""
        X = validate_instances(X)
        preds = self.predict(X)
        return sum(p == inst.target for p, inst in zip(preds, X)) / len(X)

    def loss(self, inst: Instance) -> float:
        """Teacher-forced loss of one instance under the current weights."""
        self._check_fitted()
        return self._instance_loss(inst).item()

    def save(self, path) -> None:
        from . import checkpoint
        checkpoint.save_checkpoint(path, self)

    @classmethod
    def load(cls, path) -> "DerivationGenerator":
        from . import checkpoint
        return checkpoint.load_checkpoint(path)
