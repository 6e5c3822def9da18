import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import make_record
from tagrank.corpus import BoundingBox, Instance, Vocabulary
from tagrank.errors import DataError, FormatError, PreconditionError
from tagrank.features import (AREA, LOCATION, LOG_AREA, MEAN_DIST_CENTER, REL_SALIENCY, VISUAL_DIM,
                              bbox_location_features, build_mrf_instance, importance_to_levels,
                              load_instances, n_object_pairs, object_context_feature,
                              object_scene_context_feature, object_visual_features, pair_index,
                              save_instances, semantic_onehot)
from tagrank.saliency import SaliencyMap


def _brute_location(box, w, h):
    """Loop over pixel centers; thirds-box distance via explicit clamping."""
    diag = math.hypot(w, h)
    cols = {"c": [], "v": [], "h": [], "t": []}
    x0, x1, y0, y1 = w / 3, 2 * w / 3, h / 3, 2 * h / 3
    for y in range(box.y_min, box.y_max):
        for x in range(box.x_min, box.x_max):
            px, py = x + 0.5, y + 0.5
            cols["c"].append(math.hypot(px - w / 2, py - h / 2))
            cols["v"].append(abs(px - w / 2))
            cols["h"].append(abs(py - h / 2))
            qx, qy = min(max(px, x0), x1), min(max(py, y0), y1)
            cols["t"].append(math.hypot(px - qx, py - qy))
    out = []
    for k in "cvht":
        d = np.array(cols[k])
        out += [d.max(), d.min(), d.mean()]
    return np.array(out) / diag


@st.composite
def boxes(draw):
    w, h = draw(st.integers(1, 40)), draw(st.integers(1, 40))
    x0 = draw(st.integers(0, w - 1))
    y0 = draw(st.integers(0, h - 1))
    x1 = draw(st.integers(x0 + 1, w))
    y1 = draw(st.integers(y0 + 1, h))
    return BoundingBox(x0, y0, x1, y1), w, h


@given(boxes())
def test_location_matches_lattice_oracle(case):
    box, w, h = case
    np.testing.assert_allclose(bbox_location_features(box, w, h), _brute_location(box, w, h), atol=1e-12)


def test_location_examples():
    f = bbox_location_features(BoundingBox(0, 0, 2, 2), 2, 2)
    assert f[MEAN_DIST_CENTER - 2] == pytest.approx(0.25)
    whole = bbox_location_features(BoundingBox(0, 0, 9, 9), 9, 9)
    assert whole[1] < 1e-12                          # center pixel sits on the center
    inner = bbox_location_features(BoundingBox(4, 4, 5, 5), 9, 9)
    np.testing.assert_array_equal(inner[9:12], 0.0)  # inside the thirds box


def _inst(cat, *bb):
    return Instance(cat, BoundingBox(*bb))


def test_visual_features_examples():
    f = object_visual_features([_inst("a", 0, 0, 10, 10)], SaliencyMap.uniform(10, 10), 10, 10)
    assert f.shape == (VISUAL_DIM,)
    assert f[AREA] == 1.0 and f[REL_SALIENCY] == pytest.approx(1.0)
    assert f[LOG_AREA] == pytest.approx(math.log(1 + 1e-8))
    g = object_visual_features([_inst("a", 0, 0, 10, 2), _inst("a", 0, 8, 10, 10)], None, 10, 10)
    assert g[AREA] == pytest.approx(0.4)


def test_visual_features_location_is_minimum():
    center, corner = _inst("a", 8, 8, 12, 12), _inst("a", 0, 0, 3, 3)
    f = object_visual_features([center, corner], None, 20, 20)
    alone = bbox_location_features(center.bbox, 20, 20)
    np.testing.assert_allclose(f[LOCATION], np.minimum(alone, bbox_location_features(corner.bbox, 20, 20)))
    np.testing.assert_allclose(f[LOCATION][[1, 2]], alone[[1, 2]])


def test_overlaps_counted_once_and_area_clamped():
    a, b = _inst("a", 0, 0, 10, 10), _inst("a", 0, 0, 10, 10)
    f = object_visual_features([a, b], None, 10, 10)
    assert f[AREA] == 1.0 and f[REL_SALIENCY] == pytest.approx(1.0)


@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(2, 30))
def test_saliency_fractions_over_partition_sum_to_one(seed, w, h):
    rng = np.random.default_rng(seed)
    sal = SaliencyMap(rng.random((h, w)))
    cut = int(rng.integers(1, w))
    left = object_visual_features([_inst("a", 0, 0, cut, h)], sal, w, h)[REL_SALIENCY]
    right = object_visual_features([_inst("a", cut, 0, w, h)], sal, w, h)[REL_SALIENCY]
    assert left + right == pytest.approx(1.0, abs=1e-9)


@given(boxes())
def test_resolution_doubling(case):
    box, w, h = case
    big = BoundingBox(2 * box.x_min, 2 * box.y_min, 2 * box.x_max, 2 * box.y_max)
    f1 = object_visual_features([Instance("a", box)], None, w, h)
    f2 = object_visual_features([Instance("a", big)], None, 2 * w, 2 * h)
    assert np.all(np.isfinite(f1))
    np.testing.assert_allclose(f1[[AREA, LOG_AREA, REL_SALIENCY]], f2[[AREA, LOG_AREA, REL_SALIENCY]], atol=1e-6)
    # lattice points move by at most half a pixel, i.e. 1/diagonal after normalization
    assert np.max(np.abs(f1[LOCATION] - f2[LOCATION])) <= 1 / math.hypot(w, h) + 1e-12


def test_semantic_onehot():
    np.testing.assert_array_equal(semantic_onehot("a", ["a", "b", "c"]), [1, 0, 0])
    np.testing.assert_array_equal(semantic_onehot("c", ["a", "b", "c"]), [0, 0, 1])
    with pytest.raises(KeyError):
        semantic_onehot("z", ["a"])


def test_pair_index_is_combinations_order():
    from itertools import combinations
    for n in range(2, 8):
        for k, (i, j) in enumerate(combinations(range(n), 2)):
            assert pair_index(i, j, n) == k == pair_index(j, i, n)
        assert n_object_pairs(n) == n * (n - 1) // 2


VOC5 = Vocabulary(("a", "b", "c", "d", "e"), ("s", "t"))


def _vis(area, dist):
    v = np.zeros(VISUAL_DIM)
    v[AREA], v[MEAN_DIST_CENTER] = area, dist
    return v


def test_object_context_examples():
    assert not object_context_feature("a", "b", _vis(0.3, 0.2), _vis(0.3, 0.2), VOC5).any()
    # pair (a, e) is index 3, pair (b, c) is index 4 of 10
    g = object_context_feature("b", "c", _vis(0.5, 0.1), _vis(0.2, 0.2), VOC5)
    assert g.shape == (20,)
    assert np.flatnonzero(g).tolist() == [4, 14]
    assert g[4] == pytest.approx(0.3) and g[14] == pytest.approx(-0.1)
    np.testing.assert_array_equal(g, object_context_feature("c", "b", _vis(0.2, 0.2), _vis(0.5, 0.1), VOC5))


def test_object_scene_context_examples():
    voc = Vocabulary(("a", "b", "c"), ("s", "t"))
    assert not object_scene_context_feature("a", "s", _vis(0.0, 0.1), voc).any()
    g = object_scene_context_feature("b", "s", _vis(0.5, 0.1), voc)
    assert np.flatnonzero(g).tolist() == [2] and g[2] == 0.5
    g2 = object_scene_context_feature("b", "s", _vis(0.25, 0.1), voc)
    np.testing.assert_array_equal(np.flatnonzero(g2), np.flatnonzero(g))


VOC = Vocabulary(("person", "dog", "bicycle", "kite"), ("beach", "street"))


def _image(tags, scene):
    inst = [Instance(t, BoundingBox(k, k, 10 + k, 8 + k)) for k, t in enumerate(tags)]
    return make_record(tags=tags, scene=scene, instances=inst, width=30, height=20)


def test_instance_graph_sizes():
    inst = build_mrf_instance(_image(("kite", "dog", "person"), "beach"), None, np.ones(3), VOC)
    assert inst.object_tags == ("person", "dog", "kite")        # vocabulary order
    assert inst.tags[-1] == "beach" and inst.n_nodes == 4
    assert len(inst.edges) == 3 and inst.edge_features.shape == (3, 2 * 6)
    assert inst.scene_edge_features.shape == (3, 8)
    assert inst.node_features.shape == (3, 4 + VISUAL_DIM)
    assert inst.scene_features.shape == (2 + 3,)
    single = build_mrf_instance(_image(("dog",), None), None, None, VOC)
    assert single.edges == () and single.edge_features.shape == (0, 12)


def test_instance_errors():
    with pytest.raises(PreconditionError):
        build_mrf_instance(_image((), None), None, None, VOC)
    with pytest.raises(DataError):
        build_mrf_instance(_image(("dog",), "beach"), None, None, VOC)
    no_box = make_record(tags=("dog",), instances=())
    with pytest.raises(DataError):
        build_mrf_instance(no_box, None, None, VOC)


def test_labels_from_importance():
    imp = {"person": 0.25, "dog": 0.05, "beach": 0.7}
    inst = build_mrf_instance(_image(("dog", "person"), "beach"), None, np.zeros(2), VOC, importance=imp)
    assert inst.labels.tolist() == [3, 1, 7]
    assert importance_to_levels(imp, ("person", "kite"), binary=True).tolist() == [1, 0]


def test_instance_archive_round_trip(tmp_path):
    insts = [build_mrf_instance(_image(("dog", "person"), "beach"), None, np.arange(3.0), VOC,
                                importance={"dog": 0.3, "person": 0.2, "beach": 0.5}),
             build_mrf_instance(_image(("kite",), None), None, None, VOC)]
    save_instances(tmp_path / "i.bin", insts, VOC)
    vocab, back = load_instances(tmp_path / "i.bin")
    assert vocab == VOC and len(back) == 2
    for a, b in zip(insts, back):
        assert (a.image_id, a.object_tags, a.scene_tag, a.edges) == (b.image_id, b.object_tags, b.scene_tag, b.edges)
        for x, y in ((a.node_features, b.node_features), (a.edge_features, b.edge_features),
                     (a.scene_edge_features, b.scene_edge_features)):
            assert x.tobytes() == y.tobytes() and x.shape == y.shape
        assert (a.labels is None and b.labels is None) or a.labels.tolist() == b.labels.tolist()
    data = (tmp_path / "i.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(data[:-8])
    with pytest.raises(FormatError):
        load_instances(tmp_path / "t.bin")
    (tmp_path / "m.bin").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        load_instances(tmp_path / "m.bin")
