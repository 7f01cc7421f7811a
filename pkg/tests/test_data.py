import math

import numpy as np
import pytest

from derivegen.data import (
    DataFormatError,
    EmbeddingTable,
    EmptyDatasetError,
    Instance,
    InsufficientDataError,
    LemmaPair,
    context_vocabulary,
    dampen_contexts,
    dataset_stats,
    extract_contexts,
    load_inflections,
    load_instances,
    load_lemma_pairs,
    save_instances,
    split_dataset,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def pairs_file(tmp_path):
    # -ion occurs 6 times (kept), -age occurs once (dropped: <= 5 pairs)
    rows = [
        ("succeed", "succession", "-ion", "NOUN"),
        ("discuss", "discussion", "-ion", "NOUN"),
        ("decide", "decision", "-ion", "NOUN"),
        ("confess", "confession", "-ion", "NOUN"),
        ("impress", "impression", "-ion", "NOUN"),
        ("express", "expression", "-ion", "NOUN"),
        ("stop", "stoppage", "-age", "NOUN"),
    ]
    text = "".join("\t".join(r) + "\n" for r in rows)
    return write(tmp_path / "pairs.tsv", text)


class TestLoadLemmaPairs:
    def test_basic_parse(self, pairs_file):
        pairs = load_lemma_pairs(pairs_file)
        by_derived = {p.derived: p for p in pairs}
        assert by_derived["succession"].suffix_label == "-ion"
        assert by_derived["succession"].pos == "NOUN"

    def test_rare_suffix_dropped(self, pairs_file):
        pairs = load_lemma_pairs(pairs_file)
        assert all(p.suffix_label != "-age" for p in pairs)

    def test_exactly_five_pairs_dropped(self, tmp_path):
        rows = [(f"verb{i}", f"verb{i}x", "-x", "NOUN") for i in range(5)]
        path = write(tmp_path / "p.tsv", "".join("\t".join(r) + "\n" for r in rows))
        with pytest.raises(EmptyDatasetError):
            load_lemma_pairs(path, add_verb_verb=False)

    def test_six_pairs_kept(self, tmp_path):
        rows = [(f"verb{i}", f"verb{i}x", "-x", "NOUN") for i in range(6)]
        path = write(tmp_path / "p.tsv", "".join("\t".join(r) + "\n" for r in rows))
        assert len(load_lemma_pairs(path, add_verb_verb=False)) == 6

    def test_verb_verb_pairs_synthesized(self, pairs_file):
        pairs = load_lemma_pairs(pairs_file)
        identity = {p.base for p in pairs if p.suffix_label == "NULL"}
        assert "express" in identity
        explain = [p for p in pairs if p.base == "express" and p.suffix_label == "NULL"][0]
        assert explain.derived == "express" and explain.pos == "VERB"

    def test_malformed_row_names_line(self, tmp_path):
        path = write(tmp_path / "p.tsv", "a\tb\t-x\n")
        with pytest.raises(DataFormatError, match=":1:"):
            load_lemma_pairs(path)

    def test_null_consistency_enforced(self, tmp_path):
        path = write(tmp_path / "p.tsv", "run\trunner\tNULL\tNOUN\n")
        with pytest.raises(DataFormatError):
            load_lemma_pairs(path)

    def test_inflections_attached(self, tmp_path, pairs_file):
        infl = write(tmp_path / "infl.tsv", "succession\tsuccessions\nsucceed\tsucceeds,succeeded\n")
        pairs = load_lemma_pairs(pairs_file, inflections=load_inflections(infl))
        p = [p for p in pairs if p.derived == "succession"][0]
        assert set(p.derived_inflections) == {"succession", "successions"}
        assert set(p.base_inflections) == {"succeed", "succeeds", "succeeded"}


class TestExtractContexts:
    def make_pairs(self):
        return [LemmaPair("succeed", "succession", "-ion", "NOUN",
                          ("succeed",), ("succession", "successions")),
                LemmaPair("succeed", "success", "-ss", "NOUN",
                          ("succeed",), ("success",))]

    def test_basic_construction(self):
        sents = [["the", "play", "was", "a", "great", "success", "."]]
        out = extract_contexts(sents, self.make_pairs())
        assert len(out) == 1
        inst = out[0]
        assert inst.left_tokens == ("the", "play", "was", "a", "great")
        assert inst.right_tokens == (".",)
        assert inst.base == "succeed"
        assert inst.target == "success"

    def test_inflected_surface_matched(self):
        sents = [["several", "successions", "followed", "."]]
        out = extract_contexts(sents, self.make_pairs())
        assert out[0].target == "successions"
        assert out[0].base == "succeed"

    def test_short_sentence_skipped(self):
        assert extract_contexts([["great", "success"]], self.make_pairs()) == []

    def test_long_sentence_skipped(self):
        sent = ["pad"] * 50 + ["success"]
        assert extract_contexts([sent], self.make_pairs()) == []
        assert len(extract_contexts([["pad"] * 49 + ["success"]], self.make_pairs())) == 1

    def test_unmatched_sentences_skipped(self):
        assert extract_contexts([["nothing", "to", "see", "here"]], self.make_pairs()) == []


class TestDampenContexts:
    def make_instances(self, n, target="success"):
        return [Instance(("a", "b"), (str(i),), "succeed", target, "NOUN", "-ss", 0)
                for i in range(n)]

    def test_small_group_untouched(self):
        out = dampen_contexts(self.make_instances(1), alpha=5.0, seed=0)
        assert len(out) == 1

    def test_formula_for_large_group(self):
        out = dampen_contexts(self.make_instances(10000), alpha=5.0, seed=0)
        assert len(out) == 47  # ceil(5 * ln(10001))

    def test_deterministic_for_fixed_seed(self):
        insts = self.make_instances(500)
        a = dampen_contexts(insts, alpha=2.0, seed=42)
        b = dampen_contexts(insts, alpha=2.0, seed=42)
        assert a == b

    def test_never_increases(self):
        insts = self.make_instances(200)
        once = dampen_contexts(insts, alpha=3.0, seed=7)
        assert len(once) <= 200
        assert len(dampen_contexts(once, alpha=3.0, seed=7)) <= len(once)

    def test_within_quota_group_is_untouched(self):
        insts = self.make_instances(5)  # quota ceil(3*ln(6)) = 6 >= 5
        assert dampen_contexts(insts, alpha=3.0, seed=7) == insts

    def test_groups_are_independent(self):
        insts = self.make_instances(100) + self.make_instances(100, target="succession")
        out = dampen_contexts(insts, alpha=2.0, seed=0)
        by_target = {}
        for inst in out:
            by_target.setdefault(inst.target, []).append(inst)
        expected = min(100, math.ceil(2.0 * math.log1p(100)))
        assert len(by_target["success"]) == expected
        assert len(by_target["succession"]) == expected

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            dampen_contexts(self.make_instances(3), alpha=0.0)


def synthetic_instances(n_lemmas=10, per_lemma=6):
    out = []
    for k in range(n_lemmas):
        base = f"verb{k}"
        for j in range(per_lemma):
            out.append(Instance((f"tok{j}", "the"), ("here", "."), base,
                                base + "ation", "NOUN", "-ation", k))
    return out


class TestSplitDataset:
    def test_split_mode_stems_disjoint(self):
        train, dev, test = split_dataset(synthetic_instances(), "split", (0.6, 0.2, 0.2), seed=1)
        train_stems = {i.base for i in train}
        assert train_stems.isdisjoint({i.base for i in test})
        assert train_stems.isdisjoint({i.base for i in dev})
        assert len(train) + len(dev) + len(test) == 60

    def test_shared_mode_every_eval_stem_in_train(self):
        insts = synthetic_instances(12, 4)
        train, dev, test = split_dataset(insts, "shared", (0.7, 0.15, 0.15), seed=3)
        train_stems = {i.base for i in train}
        for inst in dev + test:
            assert inst.base in train_stems
        assert len(train) + len(dev) + len(test) == len(insts)

    def test_degenerate_ratio_all_train(self):
        insts = synthetic_instances(5, 3)
        train, dev, test = split_dataset(insts, "shared", (1.0, 0.0, 0.0), seed=0)
        assert len(train) == len(insts) and not dev and not test

    def test_split_needs_three_lemmas(self):
        with pytest.raises(InsufficientDataError):
            split_dataset(synthetic_instances(2), "split")

    def test_bad_ratios_rejected(self):
        with pytest.raises(ValueError):
            split_dataset(synthetic_instances(), "shared", (0.5, 0.2, 0.2))

    def test_deterministic(self):
        insts = synthetic_instances()
        assert split_dataset(insts, "split", seed=9) == split_dataset(insts, "split", seed=9)


class TestInstanceRoundTrip:
    def test_round_trip_structurally_identical(self, tmp_path):
        insts = [
            Instance(("the", "big"), ("ended", "."), "succeed", "succession", "NOUN", "-ion"),
            Instance((), ("was", "fine", "."), "explain", "explain", "VERB", "NULL"),
        ]
        path = tmp_path / "inst.tsv"
        save_instances(path, insts)
        assert load_instances(path) == insts

    def test_bad_field_count_names_line(self, tmp_path):
        path = write(tmp_path / "x.tsv", "a b\tc\td e\tf\tNOUN\n")
        with pytest.raises(DataFormatError, match=":1:"):
            load_instances(path)

    def test_length_bounds_enforced_on_load(self, tmp_path):
        path = write(tmp_path / "x.tsv", "\tword\t\tbase\tNOUN\t-x\n")
        with pytest.raises(DataFormatError, match="length"):
            load_instances(path)

    def test_stats_match_recount(self):
        insts = synthetic_instances(4, 3)
        stats = dataset_stats(None, insts)
        assert stats["instances"] == sum(1 for _ in insts)
        assert stats["stems"] == len({i.base for i in insts})


class TestEmbeddingTable:
    def test_load_and_unknown_fallback(self, tmp_path):
        path = write(tmp_path / "vec.txt", "cat 1 2 3\ndog 3 4 5\n")
        table = EmbeddingTable.load(path)
        np.testing.assert_array_equal(table.lookup("cat"), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(table.lookup("missing"), [2.0, 3.0, 4.0])  # mean

    def test_header_line_skipped(self, tmp_path):
        path = write(tmp_path / "vec.txt", "2 3\ncat 1 2 3\ndog 3 4 5\n")
        assert len(EmbeddingTable.load(path)) == 2

    def test_every_lookup_has_declared_dimension(self, tmp_path):
        path = write(tmp_path / "vec.txt", "cat " + " ".join(["0.5"] * 300) + "\n")
        table = EmbeddingTable.load(path)
        assert table.dim == 300
        assert table.lookup("cat").shape == (300,)
        assert table.lookup("zzz").shape == (300,)

    def test_dimension_inconsistency_rejected(self, tmp_path):
        path = write(tmp_path / "vec.txt", "cat 1 2 3\ndog 1 2\n")
        with pytest.raises(DataFormatError, match=":2:"):
            EmbeddingTable.load(path)

    def test_vocab_restriction(self, tmp_path):
        path = write(tmp_path / "vec.txt", "cat 1 2\ndog 3 4\nfox 5 6\n")
        table = EmbeddingTable.load(path, vocab={"dog"})
        assert "dog" in table and "cat" not in table

    def test_empty_vocab_intersection_warns_but_works(self, tmp_path):
        path = write(tmp_path / "vec.txt", "cat 1 2\n")
        with pytest.warns(UserWarning):
            table = EmbeddingTable.load(path, vocab={"zebra"})
        assert table.lookup("zebra").shape == (2,)

    def test_random_table_deterministic(self):
        a = EmbeddingTable.random({"b", "a"}, dim=8, seed=5)
        b = EmbeddingTable.random({"a", "b"}, dim=8, seed=5)
        np.testing.assert_array_equal(a.lookup("a"), b.lookup("a"))
        assert not np.array_equal(a.lookup("a"), a.lookup("b"))

    def test_sentinels_fixed_and_distinct(self):
        a = EmbeddingTable.random({"x"}, dim=4, seed=1)
        b = EmbeddingTable.random({"y"}, dim=4, seed=2)
        np.testing.assert_array_equal(a.bos_vector, b.bos_vector)
        assert not np.array_equal(a.bos_vector, a.eos_vector)

    def test_context_vocabulary(self):
        insts = synthetic_instances(2, 2)
        vocab = context_vocabulary(insts)
        assert "the" in vocab and "here" in vocab
