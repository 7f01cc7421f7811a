"""Synthetic rule-based datasets for desk-scale training and probing.

Each suffix rule owns a cue word; a sentence's cue word fully determines
which derived form of the stem fills the slot, so context carries exactly
the information the model must learn to read. Stems are pronounceable
CV-pattern nonsense strings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Instance

CONSONANTS = "bdfglmnprst"
VOWELS = "aeiou"

_FILLERS = ("mira", "tobo", "kena", "suli", "vado", "pire", "nolu", "fema")
_END_TOKENS = (".", "!")


@dataclass(frozen=True)
class SuffixRule:
    label: str
    suffix: str
    pos: str
    cue: str


DEFAULT_RULES = (
    SuffixRule("-ation", "ation", "NOUN", "taf"),
    SuffixRule("-er", "er", "NOUN", "luma"),
    SuffixRule("-ment", "ment", "NOUN", "dovi"),
    SuffixRule("NULL", "", "VERB", "kess"),
)


def pronounceable_stem(rng: np.random.Generator, min_syllables: int = 2,
                       max_syllables: int = 3) -> str:
    n = int(rng.integers(min_syllables, max_syllables + 1))
    out = []
    for _ in range(n):
        out.append(CONSONANTS[rng.integers(len(CONSONANTS))])
        out.append(VOWELS[rng.integers(len(VOWELS))])
    return "".join(out)


def random_stems(n: int, seed: int = 0, exclude=()) -> list[str]:
    """n distinct pronounceable stems, deterministic for a seed."""
    rng = np.random.default_rng(seed)
    seen = set(exclude)
    stems = []
    while len(stems) < n:
        s = pronounceable_stem(rng)
        if s not in seen:
            seen.add(s)
            stems.append(s)
    return stems


def rule_instances(stems, rules=DEFAULT_RULES, contexts_per_form: int = 3,
                   seed: int = 0) -> list[Instance]:
    """Cue-word sentences for every (stem, rule) combination.

    Sentence shape: [filler cue] SLOT [filler end]; fillers vary per
    sentence, the cue word determines the suffix.
    """
    rng = np.random.default_rng(seed)
    instances = []
    for stem in stems:
        for rule in rules:
            for _ in range(contexts_per_form):
                left = (_FILLERS[rng.integers(len(_FILLERS))], rule.cue)
                right = (_FILLERS[rng.integers(len(_FILLERS))],
                         _END_TOKENS[rng.integers(len(_END_TOKENS))])
                instances.append(Instance(
                    left_tokens=left, right_tokens=right,
                    base=stem, target=stem + rule.suffix,
                    pos=rule.pos, suffix_label=rule.label))
    return instances


def hold_out_contexts(instances: list[Instance], per_group: int = 1
                      ) -> tuple[list[Instance], list[Instance]]:
    """Shared-lexicon split: the last per_group instances of every
    (stem, suffix) group become the evaluation set, the rest train."""
    groups: dict[tuple[str, str], list[Instance]] = {}
    for inst in instances:
        groups.setdefault((inst.base, inst.suffix_label), []).append(inst)
    train, held = [], []
    for key in sorted(groups):
        members = groups[key]
        if len(members) <= per_group:
            raise ValueError(f"group {key} has only {len(members)} instances; "
                             f"cannot hold out {per_group}")
        train.extend(members[:-per_group])
        held.extend(members[-per_group:])
    return train, held
