import pytest
from hypothesis import given, settings, strategies as st

from blockbt.corpus import (Corpus, FormatError, Hypothesis, NBestList, NeTestCase, SentencePair,
                            format_nbest, load_ne_testset, load_nbest, load_parallel, write_nbest,
                            write_ne_testset, write_parallel)


class TestLoadParallel:
    def test_two_lines(self, write):
        path = write("auth.tsv", "Ahoj.\tHello.\nDobrý den.\tGood day.\n")
        corpus = load_parallel(path, "auth")
        assert corpus.size == 2
        assert corpus.dataset == "auth"
        assert corpus.pairs[1] == SentencePair("Dobrý den.", "Good day.", "auth")

    def test_single_field(self, write):
        with pytest.raises(FormatError, match="line 1"):
            load_parallel(write("bad.tsv", "only-one-field\n"), "auth")

    def test_three_fields_message(self, write):
        path = write("bad.tsv", "x\ty\na\tb\tc\nz\tw\n")
        with pytest.raises(FormatError, match="line 2: expected 2 fields, got 3") as info:
            load_parallel(path, "bt")
        assert info.value.line == 2

    def test_empty_file(self, write):
        with pytest.raises(FormatError, match="empty"):
            load_parallel(write("empty.tsv", ""), "auth")

    def test_invalid_utf8_is_hard_error(self, write):
        path = write("latin1.tsv", "ok\tok\n".encode() + "kočka\tcat\n".encode("iso8859_2"))
        with pytest.raises(FormatError, match="line 2: invalid UTF-8"):
            load_parallel(path, "auth")

    def test_blank_side_rejected(self, write):
        with pytest.raises(FormatError, match="line 1"):
            load_parallel(write("blank.tsv", "  \tcat\n"), "auth")

    def test_unknown_tag(self, write):
        with pytest.raises(ValueError):
            load_parallel(write("c.tsv", "a\tb\n"), "csmono")

    def test_corpus_tag_consistency(self):
        with pytest.raises(ValueError):
            Corpus("c", "auth", (SentencePair("a", "b", "bt"),))


class TestLoadNbest:
    def test_two_hypotheses(self, write):
        nb = load_nbest(write("ck.nbest", "0 ||| a ||| -1.0\n0 ||| b ||| -2.0\n"))
        assert nb.num_sentences == 1
        assert [h.text for h in nb[0]] == ["a", "b"]
        assert nb.origin == "ck"
        assert all(h.origin == "ck" for h in nb.hypotheses)

    def test_missing_score(self, write):
        with pytest.raises(FormatError, match="line 1"):
            load_nbest(write("x.nbest", "0 ||| a\n"))

    def test_six_best_shape(self, write):
        lines = [f"{i} ||| hyp {i} {j} ||| {-float(j)}\n" for i in range(2) for j in range(6)]
        nb = load_nbest(write("x.nbest", "".join(lines)))
        assert (nb.n, nb.num_sentences) == (6, 2)

    def test_index_gap(self, write):
        with pytest.raises(FormatError, match="line 2"):
            load_nbest(write("x.nbest", "0 ||| a ||| -1\n2 ||| b ||| -1\n"))

    def test_must_start_at_zero(self, write):
        with pytest.raises(FormatError, match="line 1"):
            load_nbest(write("x.nbest", "1 ||| a ||| -1\n"))

    def test_decreasing_index(self, write):
        with pytest.raises(FormatError, match="line 3"):
            load_nbest(write("x.nbest", "0 ||| a ||| -1\n1 ||| b ||| -1\n0 ||| c ||| -1\n"))

    @pytest.mark.parametrize("line", ["x ||| a ||| -1", "0 ||| a ||| nope", "0 ||| a ||| nan"])
    def test_non_numeric(self, write, line):
        with pytest.raises(FormatError, match="line 1"):
            load_nbest(write("x.nbest", line + "\n"))

    def test_unsorted_scores(self, write):
        with pytest.raises(FormatError, match="line 2"):
            load_nbest(write("x.nbest", "0 ||| a ||| -3\n0 ||| b ||| -1\n"))

    def test_empty_hypothesis_text_allowed(self, write):
        nb = load_nbest(write("x.nbest", "0 |||  ||| -1\n"))
        assert nb[0][0].text == ""

    def test_partition(self, write):
        lines = ["0 ||| a ||| -1", "0 ||| b ||| -2", "1 ||| c ||| 0", "2 ||| d ||| -1", "2 ||| e ||| -1"]
        nb = load_nbest(write("x.nbest", "\n".join(lines) + "\n"))
        flat = [(h.sentence_index, h.text) for group in nb.sentences for h in group]
        assert sorted(flat) == sorted((int(l[0]), l.split(" ||| ")[1]) for l in lines)
        assert sum(len(g) for g in nb.sentences) == len(lines)


class TestNeTestset:
    def test_valid(self, write):
        cases = load_ne_testset(write("ne.tsv", "Jídlo v U Karla.\tFood at U Karla.\tU Karla\n"))
        assert cases == [NeTestCase("Jídlo v U Karla.", "Food at U Karla.", "U Karla")]

    def test_entity_not_in_reference(self, write):
        with pytest.raises(FormatError, match="line 1"):
            load_ne_testset(write("ne.tsv", "src\tFood at Y\tX\n"))

    def test_ten_lines_in_order(self, write):
        rows = [f"Restaurace R{i} je blízko.\tThe R{i} restaurant is nearby.\tR{i}" for i in range(10)]
        cases = load_ne_testset(write("ne.tsv", "\n".join(rows) + "\n"))
        assert len(cases) == 10
        assert [c.entity for c in cases] == [f"R{i}" for i in range(10)]


# --- round trips ----------------------------------------------------------

_text = st.text(st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp")), min_size=1, max_size=20)
_side = _text.filter(lambda s: s.strip() and "\t" not in s)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(_side, _side), min_size=1, max_size=8))
def test_parallel_round_trip(tmp_path_factory, pairs):
    corpus = Corpus("c", "ft", tuple(SentencePair(s, t, "ft") for s, t in pairs))
    path = tmp_path_factory.mktemp("rt") / "c.tsv"
    write_parallel(path, corpus)
    assert load_parallel(path, "ft", "c") == corpus


_hyp_text = st.text(st.sampled_from("abc čšž|.-1 "), max_size=12).map(str.strip).filter(lambda s: "|||" not in s)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.tuples(_hyp_text, st.floats(-50, 5, allow_nan=False)), min_size=1, max_size=4),
                min_size=1, max_size=5))
def test_nbest_round_trip(tmp_path_factory, groups):
    sentences = []
    for i, group in enumerate(groups):
        group = sorted(group, key=lambda t: -t[1])
        sentences.append(tuple(Hypothesis(i, text, score, "ck") for text, score in group))
    nb = NBestList(tuple(sentences), "ck")
    path = tmp_path_factory.mktemp("rt") / "ck.nbest"
    write_nbest(path, nb)
    assert load_nbest(path) == nb
    assert format_nbest(load_nbest(path)) == format_nbest(nb)


def test_ne_round_trip(tmp_path):
    cases = [NeTestCase("Jídlo v U Karla.", "Food at U Karla.", "U Karla"),
             NeTestCase("Sejdeme se na Letné.", "Let's meet at Letná.", "Letná")]
    write_ne_testset(tmp_path / "ne.tsv", cases)
    assert load_ne_testset(tmp_path / "ne.tsv") == cases
