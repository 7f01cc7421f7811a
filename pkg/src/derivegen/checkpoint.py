"""Versioned, self-describing checkpoint files.

Layout: an 8-byte magic, an 8-byte little-endian header length, a canonical
JSON header (sorted keys), then the raw little-endian float64 arrays
concatenated in the order listed under header["arrays"]. Nothing volatile
(timestamps, paths) goes into the file, so identical models serialize to
identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .data import EmbeddingTable
from .decoder import Alphabet
from .encoder import VariantConfig, resolve_variant

MAGIC = b"DGENCKP1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """The file is not a readable checkpoint of a supported version."""


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, model) -> None:
    model._check_fitted()
    config = {k: v for k, v in model.get_params().items() if k != "embeddings"}
    if not isinstance(config["variant"], str):
        v = config["variant"]
        config["variant"] = {"use_context": v.use_context, "use_base": v.use_base,
                             "bidirectional_context": v.bidirectional_context,
                             "use_pos": v.use_pos}
    emb = model.embeddings_
    emb_words = sorted(emb.vectors)
    arrays: dict[str, np.ndarray] = dict(
        sorted((n, p.value) for n, p in model.params_.named_parameters().items()))
    arrays["embeddings/matrix"] = (
        np.stack([emb.vectors[w] for w in emb_words])
        if emb_words else np.zeros((0, emb.dim)))
    arrays["embeddings/unk"] = emb.unk_vector
    header = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "alphabet": list(model.alphabet_.symbols[3:]),
        "pos_tags": list(model.pos_tags_),
        "embedding_words": emb_words,
        "embedding_dim": emb.dim,
        "metadata": {
            "epochs_trained": model.n_epochs_,
            "dev_accuracy": model.best_dev_accuracy_,
        },
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays.items()],
    }
    blob = _canonical_json(header)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    from .model import DerivationGenerator, ModelParams

    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {header.get('format_version')}")

    config = dict(header["config"])
    if isinstance(config["variant"], dict):
        config["variant"] = VariantConfig(**config["variant"])
    model = DerivationGenerator(**config)
    model.variant_ = resolve_variant(config["variant"])
    model.alphabet_ = Alphabet(header["alphabet"])
    model.pos_tags_ = tuple(header["pos_tags"])

    offset = 16 + header_len
    loaded: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        loaded[spec["name"]] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after declared arrays")

    words = header["embedding_words"]
    matrix = loaded.pop("embeddings/matrix")
    unk = loaded.pop("embeddings/unk")
    model.embeddings_ = EmbeddingTable(
        header["embedding_dim"], {w: matrix[i] for i, w in enumerate(words)},
        unk_vector=unk)

    model.params_ = ModelParams(
        model.variant_, model.h, model.l, model.d_c, model.d_pos, model.emb_dim,
        len(model.alphabet_), len(model.pos_tags_), model.decoder_recurrent,
        np.random.default_rng(0))
    named = model.params_.named_parameters()
    missing = set(named) - set(loaded)
    extra = set(loaded) - set(named)
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter mismatch (missing {sorted(missing)}, extra {sorted(extra)})")
    for name, p in named.items():
        if p.value.shape != loaded[name].shape:
            raise CheckpointError(
                f"{path}: array {name} has shape {loaded[name].shape}, expected {p.value.shape}")
        p.value[:] = loaded[name]
    model.n_epochs_ = header["metadata"]["epochs_trained"]
    model.best_dev_accuracy_ = header["metadata"]["dev_accuracy"]
    model.history_ = []
    return model
