import functools
import http.server
import json
import logging
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdraw.sketchdata import (
    CATEGORIES,
    TRAIN,
    VAL,
    BezierSegment,
    DrawingError,
    FetchError,
    RawDrawing,
    UnknownCategoryError,
    bezier_eval,
    chord_params,
    encode_dataset,
    fetch_category,
    fit_bezier,
    fit_bezier_breaks,
    fit_residual,
    load_dataset,
    max_residual,
    normalize_strokes,
    parse_drawing,
    point_curve_distance,
    read_drawings,
    save_dataset,
    stratified_split,
    synthetic_drawings,
    to_sequence,
)
from qdraw.sketchdata.bezier import bernstein


def line(word, strokes):
    return json.dumps({"word": word, "countrycode": "GB", "drawing": strokes})


def polyline(pts):
    pts = np.asarray(pts, dtype=int)
    return [pts[:, 0].tolist(), pts[:, 1].tolist()]


# -- parsing ---------------------------------------------------------------------------


def test_parse_single_stroke():
    d = parse_drawing(line("camera", [[[0, 100], [0, 0]]]))
    assert d.category == "camera"
    assert len(d.strokes) == 1
    assert len(d.strokes[0][0]) == 2


def test_parse_rejects_one_point_stroke():
    with pytest.raises(DrawingError, match="at least 2"):
        parse_drawing(line("camera", [[[5], [5]]]))


def test_parse_rejects_ragged_stroke():
    with pytest.raises(DrawingError, match="ragged"):
        parse_drawing(line("camera", [[[0, 1, 2], [0, 1]]]))


@pytest.mark.parametrize("bad", ["{not json", "[1, 2]", json.dumps({"word": "camera", "drawing": []})])
def test_parse_rejects_malformed(bad):
    with pytest.raises(DrawingError):
        parse_drawing(bad)


def test_to_sequence_single_stroke():
    seq = to_sequence(parse_drawing(line("camera", [[[3, 7], [4, 9]]])))
    np.testing.assert_array_equal(seq.points, [[3, 4, 0], [7, 9, 1]])
    assert seq.length == 2


def test_to_sequence_flags_two_strokes():
    d = RawDrawing("camera", (((0, 1, 2), (0, 0, 0)), ((5, 6), (5, 5))))
    seq = to_sequence(d)
    assert seq.points[:, 2].tolist() == [0, 0, 1, 0, 1]
    assert seq.length == 5


stroke_st = st.integers(2, 8).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 255), min_size=n, max_size=n), st.lists(st.integers(0, 255), min_size=n, max_size=n)
    )
)


@given(st.lists(stroke_st, min_size=1, max_size=6))
@settings(max_examples=100, deadline=None)
def test_sequence_flags_partition_strokes(strokes):
    d = RawDrawing("camera", tuple((tuple(x), tuple(y)) for x, y in strokes))
    seq = to_sequence(d)
    flags = seq.points[:, 2]
    assert flags.sum() == len(strokes)
    assert flags[-1] == 1
    assert seq.length == sum(len(x) for x, _ in strokes)
    # cutting after every flag gives back the strokes
    ends = np.nonzero(flags)[0]
    starts = np.concatenate([[0], ends[:-1] + 1])
    for (xs, ys), a, b in zip(strokes, starts, ends):
        np.testing.assert_array_equal(seq.points[a : b + 1, 0], xs)
        np.testing.assert_array_equal(seq.points[a : b + 1, 1], ys)


def test_read_drawings_counts_rejects(tmp_path):
    p = tmp_path / "cell phone.ndjson"
    good = line("cell phone", [[[0, 10], [0, 10]]])
    p.write_text("\n".join([good, "{oops", line("cell phone", [[[1], [1]]]), good, ""]) + "\n")
    drawings, rejected = read_drawings(p, category="cellphone")
    assert rejected == 2
    assert [d.category for d in drawings] == ["cellphone", "cellphone"]
    assert len(read_drawings(p, limit=1)[0]) == 1


# -- fetching --------------------------------------------------------------------------


class _Handler(http.server.SimpleHTTPRequestHandler):
    hits: list = []

    def do_GET(self):
        type(self).hits.append(self.path)
        super().do_GET()

    def log_message(self, *args):
        pass


@pytest.fixture
def ndjson_server(tmp_path):
    root = tmp_path / "srv"
    root.mkdir()
    (root / "camera.ndjson").write_text(line("camera", [[[0, 50, 90], [0, 40, 0]]]) + "\n")
    (root / "cell phone.ndjson").write_text("<html>not it</html>\n")
    _Handler.hits = []
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), functools.partial(_Handler, directory=str(root)))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/", _Handler.hits
    server.shutdown()
    server.server_close()


def test_fetch_cold_then_warm(tmp_path, ndjson_server):
    url, hits = ndjson_server
    cache = tmp_path / "cache"
    path = fetch_category("camera", cache, base_url=url)
    assert path.exists()
    drawings, rejected = read_drawings(path)
    assert len(drawings) >= 1 and rejected == 0
    assert len(hits) == 1
    again = fetch_category("camera", cache, base_url="http://127.0.0.1:9/")  # unreachable
    assert again == path
    assert len(hits) == 1


def test_fetch_rejects_unparseable_payload(tmp_path, ndjson_server):
    url, _ = ndjson_server
    with pytest.raises(FetchError, match="ndjson"):
        fetch_category("cellphone", tmp_path / "cache", base_url=url)
    assert not list((tmp_path / "cache").iterdir())


def test_fetch_network_failure(tmp_path, ndjson_server):
    url, _ = ndjson_server
    with pytest.raises(FetchError):
        fetch_category("calculator", tmp_path / "cache", base_url=url)  # 404


def test_fetch_unknown_category_before_network(tmp_path, ndjson_server):
    url, hits = ndjson_server
    with pytest.raises(UnknownCategoryError):
        fetch_category("notacategory", tmp_path / "cache", base_url=url)
    assert hits == []
    assert not (tmp_path / "cache").exists()


# -- Bezier fitting ---------------------------------------------------------------------


def test_two_point_line_gives_thirds():
    (seg,) = fit_bezier([(0, 0), (3, 0)], tol=0.02)
    np.testing.assert_allclose(seg.control, [[0, 0], [1, 0], [2, 0], [3, 0]], atol=1e-15)
    assert seg.eos == 1 and seg.valid == 1
    fit = fit_bezier_breaks([(0, 0), (3, 0)], tol=0.02)
    assert fit_residual([(0, 0), (3, 0)], fit) == 0.0


CUBIC = np.array([[0, 0], [1, 2], [3, 2], [4, 0]], dtype=float)


@pytest.mark.parametrize("spacing", ["uniform", "random"])
def test_exact_cubic_is_recovered(spacing):
    if spacing == "uniform":
        t = np.linspace(0, 1, 20)
    else:
        t = np.concatenate([[0], np.sort(np.random.default_rng(4).uniform(0, 1, 18)), [1]])
    pts = bezier_eval(CUBIC, t)
    fit = fit_bezier_breaks(pts, tol=1e-10)
    assert len(fit.segments) == 1
    np.testing.assert_allclose(fit.segments[0].control, CUBIC, atol=1e-6)
    assert fit_residual(pts, fit) <= 1e-8
    assert max_residual(pts, fit.segments, fit.breaks) <= 1e-8
    np.testing.assert_allclose(fit.params[0], t, atol=1e-6)


def test_chord_length_is_the_starting_parameterization():
    pts = np.array([[0, 0], [1, 0], [1, 3], [2, 3]], dtype=float)
    np.testing.assert_allclose(chord_params(pts), [0, 0.2, 0.8, 1.0])
    # a stroke the first chord-length fit already meets keeps those parameters
    fit = fit_bezier_breaks(pts, tol=0.5)
    np.testing.assert_array_equal(fit.params[0], chord_params(pts))


def test_point_curve_distance_oracle():
    # points at known offsets along the normal of a straight cubic
    ctrl = np.array([[0, 0], [1, 0], [2, 0], [3, 0]], dtype=float)
    pts = np.array([[0.5, 0.25], [1.5, -0.5], [2.9, 0.0], [-1.0, 0.0]])
    np.testing.assert_allclose(point_curve_distance(pts, ctrl), [0.25, 0.5, 0.0, 1.0], atol=1e-12)


HALF_CIRCLE_SEGMENTS = 2


def test_half_circle_splits():
    a = np.linspace(0, np.pi, 50)
    pts = np.column_stack([np.cos(a), np.sin(a)])
    diag = float(np.hypot(*np.ptp(pts, axis=0)))
    fit = fit_bezier_breaks(pts, tol=0.002)
    assert len(fit.segments) >= 2
    assert len(fit.segments) == HALF_CIRCLE_SEGMENTS
    for seg, (lo, hi), t in zip(*fit):
        sub = pts[lo : hi + 1]
        assert np.hypot(*(bezier_eval(seg.control, t) - sub).T).max() <= 0.002 * diag
        assert max_residual(sub, [seg], [(0, hi - lo)]) <= 0.002 * diag


def test_degenerate_stroke_single_zero_length_segment():
    (seg,) = fit_bezier([(5, 5)] * 4, tol=0.02)
    assert seg.p0 == seg.p1 == seg.p2 == seg.p3 == (5.0, 5.0)
    assert seg.eos == 1


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_bezier([(0, 0)], tol=0.1)
    with pytest.raises(ValueError):
        fit_bezier([(0, 0), (1, 1)], tol=0.0)


def test_bernstein_partition_of_unity():
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(bernstein(t).sum(axis=1), 1.0, atol=1e-15)


def test_segment_row_round_trip():
    s = BezierSegment((0.1, 0.2), (0.3, 0.4), (0.5, 0.6), (0.7, 0.8), eos=1)
    assert BezierSegment.from_row(s.row()) == s
    assert s.row().shape == (10,)


random_stroke = st.integers(2, 40).flatmap(
    lambda n: st.lists(st.tuples(st.integers(0, 255), st.integers(0, 255)), min_size=n, max_size=n)
)


@given(random_stroke, st.sampled_from([0.002, 0.02, 0.1]))
@settings(max_examples=60, deadline=None)
def test_fit_fidelity_and_continuity(stroke, tol):
    pts = np.array(stroke, dtype=float)
    if np.all(pts == pts[0]):
        return
    diag = float(np.hypot(*np.ptp(pts, axis=0)))
    fit = fit_bezier_breaks(pts, tol)
    segs, breaks = fit.segments, fit.breaks
    assert fit_residual(pts, fit) <= tol * diag * (1 + 1e-12)
    assert max_residual(pts, segs, breaks) <= fit_residual(pts, fit) + 1e-9 * diag
    assert [s.eos for s in segs] == [0] * (len(segs) - 1) + [1]
    for a, b in zip(segs[:-1], segs[1:]):
        assert a.p3 == b.p0
    assert segs[0].p0 == tuple(pts[0]) and segs[-1].p3 == tuple(pts[-1])
    assert breaks[0][0] == 0 and breaks[-1][1] == len(pts) - 1
    for (_, hi), (lo, _) in zip(breaks[:-1], breaks[1:]):
        assert hi == lo


# -- dataset encoding -------------------------------------------------------------------


def raw(category, *strokes):
    return RawDrawing(category, tuple((tuple(map(float, s[:, 0])), tuple(map(float, s[:, 1]))) for s in map(np.asarray, strokes)))


def hatch(n_strokes):
    """``n_strokes`` separate 2-point strokes; each fits as exactly one segment."""
    return [np.array([[20.0 * i, 0.0], [20.0 * i + 10.0, 100.0]]) for i in range(n_strokes)]


def test_normalization_box():
    d = raw("camera", [[10, 20], [110, 20]], [[60, 40], [60, 70]])
    (a, b) = normalize_strokes(d)
    np.testing.assert_allclose(a, [[0.0, 0.25], [1.0, 0.25]])
    np.testing.assert_allclose(b, [[0.5, 0.45], [0.5, 0.75]])


def test_zero_extent_sketch_is_dropped(caplog):
    d = [raw("camera", [[5, 5], [5, 5]]), raw("camera", [[0, 0], [10, 10]])]
    with caplog.at_level(logging.WARNING):
        ds = encode_dataset(d, split=0.5)
    assert len(ds.samples) == 1 and ds.meta["dropped"] == 1
    assert "zero extent" in caplog.text


def test_padding_to_global_max():
    small = raw("camera", *hatch(3))
    big = raw("calculator", *hatch(7))
    ds = encode_dataset([small, big, raw("cellphone", *hatch(2))], split=0.5)
    assert ds.n_rows == 7
    assert ds.samples.shape == (3, 7, 10)
    s = ds.samples[0]
    assert s[:, 9].tolist() == [1, 1, 1, 0, 0, 0, 0]
    assert np.all(s[3:] == 0)
    assert ds.n_segments.tolist() == [3, 7, 2]


def test_segment_cap_drops_with_warning(caplog):
    d = [raw("camera", *hatch(3)), raw("camera", *hatch(9))]
    with caplog.at_level(logging.WARNING):
        ds = encode_dataset(d, split=0.5, max_segments=5)
    assert ds.n_rows == 3
    assert ds.meta["dropped"] == 1
    assert "cap 5" in caplog.text


def test_encode_rejects_bad_arguments():
    with pytest.raises(ValueError):
        encode_dataset([])
    with pytest.raises(ValueError):
        encode_dataset([raw("camera", *hatch(2))], split=1.0)
    with pytest.raises(ValueError):
        encode_dataset([raw("dog", *hatch(2))])


@pytest.fixture(scope="module")
def synth():
    drawings = synthetic_drawings(30, seed=3)
    return drawings, encode_dataset(drawings, tol=0.02, split=0.8, seed=5)


def test_encoded_invariants(synth):
    drawings, ds = synth
    assert len(ds.samples) == len(drawings)
    for s, k in zip(ds.samples, ds.n_segments):
        valid = s[:k]
        assert np.all(valid[:, 9] == 1) and np.all(s[k:] == 0)
        coords = valid[:, :8]
        assert coords.min() >= 0.0 and coords.max() <= 1.0
        # the anchors touch the box on the long axis
        anchors = np.vstack([valid[:, 0:2], valid[:, 6:8]])
        assert anchors.min() == 0.0 and anchors.max() == 1.0
        eos = valid[:, 8]
        assert eos[-1] == 1
    assert ds.n_rows == ds.n_segments.max()


def test_round_trip_fidelity_on_normalized_sketches(synth):
    drawings, _ = synth
    tol = 0.02
    for d in drawings[:30]:
        strokes = normalize_strokes(d)
        allpts = np.vstack(strokes)
        diag = float(np.hypot(*np.ptp(allpts, axis=0)))
        for s in strokes:
            fit = fit_bezier_breaks(s, tol, diagonal=diag, bounds=(0.0, 1.0))
            segs = fit.segments
            assert fit_residual(s, fit) <= tol * diag * (1 + 1e-12)
            for a, b in zip(segs[:-1], segs[1:]):
                assert a.p3 == b.p0


def test_eos_count_matches_strokes(synth):
    drawings, ds = synth
    for d, s in zip(drawings, ds.samples):
        assert int(s[:, 8].sum()) == len(d.strokes)


def test_split_deterministic_and_stratified(synth):
    drawings, ds = synth
    again = encode_dataset(drawings, tol=0.02, split=0.8, seed=5)
    np.testing.assert_array_equal(ds.split, again.split)
    np.testing.assert_array_equal(ds.samples, again.samples)
    other = encode_dataset(drawings, tol=0.02, split=0.8, seed=6)
    assert not np.array_equal(ds.split, other.split)
    for c in range(len(CATEGORIES)):
        m = ds.labels == c
        n_train = int(np.sum(ds.split[m] == TRAIN))
        assert abs(n_train - 0.8 * m.sum()) <= 1


@given(st.lists(st.integers(0, 2), min_size=1, max_size=200), st.floats(0.05, 0.95), st.integers(0, 2**31))
@settings(max_examples=100, deadline=None)
def test_stratification_property(labels, split, seed):
    labels = np.array(labels)
    tags = stratified_split(labels, split, seed)
    assert set(np.unique(tags)) <= {TRAIN, VAL}
    for c in np.unique(labels):
        m = labels == c
        assert abs(np.sum(tags[m] == TRAIN) - split * m.sum()) <= 1


def test_workers_match_serial(synth):
    drawings, ds = synth
    par = encode_dataset(drawings, tol=0.02, split=0.8, seed=5, workers=2)
    np.testing.assert_array_equal(par.samples, ds.samples)
    np.testing.assert_array_equal(par.split, ds.split)


def test_dataset_file_round_trip_is_byte_stable(tmp_path, synth):
    _, ds = synth
    a, b = tmp_path / "a.qdd", tmp_path / "b.qdd"
    save_dataset(a, ds)
    save_dataset(b, load_dataset(a))
    assert a.read_bytes() == b.read_bytes()
    back = load_dataset(a)
    np.testing.assert_array_equal(back.samples, ds.samples)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.split, ds.split)
    assert back.meta == ds.meta
    x, y = back.val()
    assert len(x) == np.sum(ds.split == VAL) and len(y) == len(x)


def test_dataset_file_rejects_garbage(tmp_path):
    p = tmp_path / "bad.qdd"
    p.write_bytes(b"hello\n")
    with pytest.raises(ValueError):
        load_dataset(p)


def test_synthetic_is_deterministic_and_balanced():
    a, b = synthetic_drawings(5, seed=1), synthetic_drawings(5, seed=1)
    assert a == b
    assert [d.category for d in a[:3]] == list(CATEGORIES)
    assert synthetic_drawings(5, seed=2) != a
    for d in a:
        for xs, ys in d.strokes:
            assert all(0 <= v <= 255 and float(v).is_integer() for v in xs + ys)
