import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tagrank.corpus import (SynonymLexicon, Taxonomy, Vocabulary, dataset_to_json,
                            feature_matrix_bytes, load_dataset, load_feature_matrix, load_lexicon,
                            load_taxonomy, parse_dataset, read_feature_bytes, save_dataset,
                            save_feature_matrix, save_lexicon, split_dataset)
from tagrank.errors import FormatError, ValidationError


def _doc():
    return {
        "vocabulary": {"objects": ["dog", "bicycle"], "scenes": ["street"]},
        "images": [
            {"id": "a", "width": 40, "height": 30, "tags": ["dog", "bicycle"], "scene": "street",
             "instances": [{"category": "dog", "bbox": [0, 0, 10, 10]},
                           {"category": "bicycle", "bbox": [5, 5, 40, 30]}],
             "sentences": [{"tree": "(S (NP (DT a) (NN dog)) (VP (VBZ rides) (NP (DT a) (NN bicycle))))"}],
             "feature_row": 0},
            {"id": "b", "width": 10, "height": 10, "tags": ["dog"],
             "instances": [{"category": "dog", "bbox": [1, 1, 9, 9]}],
             "sentences": [], "feature_row": 1},
        ],
    }


def test_parse_valid_two_images():
    vocab, recs = parse_dataset(_doc())
    assert [r.id for r in recs] == ["a", "b"]
    assert vocab.object_categories == ("dog", "bicycle")
    assert vocab.scene_categories == ("street",)
    assert recs[0].sentences[0].tokens == ("a", "dog", "rides", "a", "bicycle")
    assert recs[1].scene_tag is None


def test_instance_category_not_in_tags():
    doc = _doc()
    doc["images"][1]["instances"][0]["category"] = "bicycle"
    with pytest.raises(ValidationError, match="'b'"):
        parse_dataset(doc)


def test_bbox_outside_width():
    doc = _doc()
    doc["images"][0]["instances"][1]["bbox"] = [5, 5, 41, 30]
    with pytest.raises(ValidationError, match="'a'"):
        parse_dataset(doc)


@pytest.mark.parametrize("mutate", [
    lambda d: d["images"][0].update(tags=["dog", "dog"]),
    lambda d: d["images"][0].update(tags=["cat"]),
    lambda d: d["images"][0].update(scene="beach"),
    lambda d: d["images"][0].update(width=0),
    lambda d: d["images"][1].update(id="a"),
    lambda d: d["images"][0]["sentences"][0].update(tree="(S (NP"),
    lambda d: d["images"][0]["sentences"][0].update(tokens=["wrong"]),
    lambda d: d["images"][0]["instances"][0].update(bbox=[3, 3, 3, 5]),
    lambda d: d.pop("vocabulary"),
])
def test_invalid_documents(mutate):
    doc = _doc()
    mutate(doc)
    with pytest.raises(ValidationError):
        parse_dataset(doc)


def test_feature_row_out_of_range():
    with pytest.raises(IndexError):
        parse_dataset(_doc(), n_feature_rows=1)


def test_dataset_round_trip(tmp_path):
    vocab, recs = parse_dataset(_doc())
    path = tmp_path / "d.json"
    save_dataset(path, vocab, recs)
    vocab2, recs2 = load_dataset(path, n_feature_rows=2)
    assert vocab2 == vocab and recs2 == recs
    assert dataset_to_json(vocab2, recs2) == dataset_to_json(vocab, recs)


def test_invalid_json_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ValidationError):
        load_dataset(p)


def test_vocabulary_layout():
    v = Vocabulary(("a", "b"), ("s",))
    assert v.tags == ("a", "b", "s")
    assert v.tag_index("s") == 2
    assert v.order(["s", "b", "a", "b"]) == ("a", "b", "s")
    with pytest.raises(KeyError):
        v.tag_index("zzz")
    with pytest.raises(ValidationError):
        Vocabulary(("a",), ("a",))
    assert v.digest() != Vocabulary(("b", "a"), ("s",)).digest()


# --- feature matrices ------------------------------------------------------------


def _header(n, d, magic=b"TGRK", version=1):
    return struct.pack("<4sIQQ", magic, version, n, d)


def test_feature_header_and_payload():
    vals = np.arange(12, dtype="<f8")
    m = read_feature_bytes(_header(3, 4) + vals.tobytes())
    assert m.values.shape == (3, 4)
    np.testing.assert_array_equal(m.values.ravel(), vals)


def test_feature_truncated_payload():
    with pytest.raises(FormatError, match="truncated"):
        read_feature_bytes(_header(3, 4) + np.zeros(11).tobytes())


def test_feature_nan_offset():
    vals = np.zeros(12)
    vals[5] = np.nan
    with pytest.raises(FormatError) as exc:
        read_feature_bytes(_header(3, 4) + vals.tobytes())
    assert exc.value.offset == 5
    assert "element 5" in str(exc.value)


@pytest.mark.parametrize("data", [b"TG", _header(1, 1, magic=b"XXXX") + bytes(8),
                                  _header(1, 1, version=9) + bytes(8), _header(1, 1) + bytes(16)])
def test_feature_bad_headers(data):
    with pytest.raises(FormatError):
        read_feature_bytes(data)


@given(st.integers(0, 6), st.integers(0, 5), st.integers(0, 2**31))
def test_feature_round_trip(n, d, seed):
    vals = np.random.default_rng(seed).normal(size=(n, d)) * 1e6
    m = read_feature_bytes(feature_matrix_bytes(vals))
    assert m.values.shape == (n, d)
    assert m.values.tobytes() == vals.tobytes()


def test_feature_file_round_trip(tmp_path, rng):
    vals = rng.normal(size=(5, 3))
    save_feature_matrix(tmp_path / "f.bin", vals)
    assert load_feature_matrix(tmp_path / "f.bin").values.tobytes() == vals.tobytes()


# --- taxonomy / lexicon ----------------------------------------------------------


def test_taxonomy_depths_and_cycles(tmp_path):
    t = Taxonomy({"A": "root", "B": "A", "C": "A"})
    assert t.root == "root" and t.depth("root") == 1 and t.depth("B") == 3
    assert t.ancestors("C") == ["C", "A", "root"]
    with pytest.raises(ValidationError):
        Taxonomy({"A": "B", "B": "A", "C": "root"})
    with pytest.raises(ValidationError):
        Taxonomy({"A": "r1", "B": "r2"})
    p = tmp_path / "tax.tsv"
    p.write_text("# child\tparent\nA\troot\nB\tA\n")
    assert load_taxonomy(p).depth("B") == 3


def test_lexicon_round_trip(tmp_path):
    vocab = Vocabulary(("person", "motorbike"))
    lex = SynonymLexicon({"man": frozenset({"person"}), "scooter": frozenset({"motorbike"})})
    save_lexicon(tmp_path / "l.tsv", lex)
    assert load_lexicon(tmp_path / "l.tsv", vocab) == lex


def test_lexicon_lowercases_and_checks_targets(tmp_path):
    p = tmp_path / "l.tsv"
    p.write_text("Man\tperson\n")
    assert load_lexicon(p).targets("man") == frozenset({"person"})
    with pytest.raises(ValidationError):
        load_lexicon(p, Vocabulary(("dog",)))


# --- split -------------------------------------------------------------------------


def test_split_counts_from_fractions():
    q, tr, rest = split_dataset(list(range(100)), 0.1, 0.5, seed=7)
    assert (len(q), len(tr), len(rest)) == (10, 45, 45)
    assert split_dataset(list(range(100)), 0.1, 0.5, seed=7) == (q, tr, rest)


@pytest.mark.parametrize("qf,tf", [(1.0, 0.5), (0.0, 0.5), (0.1, 1.0), (-0.1, 0.5)])
def test_split_rejects_fractions(qf, tf):
    with pytest.raises(ValueError):
        split_dataset(list(range(10)), qf, tf, seed=0)


@given(st.integers(0, 300), st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.integers(0, 2**32 - 1))
def test_split_is_deterministic_partition(n, qf, tf, seed):
    items = list(range(n))
    parts = split_dataset(items, qf, tf, seed)
    assert parts == split_dataset(items, qf, tf, seed)
    merged = sorted(parts[0] + parts[1] + parts[2])
    assert merged == items
