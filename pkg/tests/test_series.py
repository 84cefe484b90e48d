import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genai_traffic.flows import assemble_biflows
from genai_traffic.series import FlowSeriesExtractor, FlowVector, Metric, aggregate, extract_flow_vector

from .conftest import T0, rec

C = ("10.0.0.2", 50000)
S = ("203.0.113.10", 443)


def vec(pl, dirs=None, iat=None):
    pl = np.asarray(pl, dtype=np.int64)
    return FlowVector(pl, np.zeros_like(pl) if iat is None else np.asarray(iat),
                      -np.ones_like(pl) if dirs is None else np.asarray(dirs))


def test_zero_payload_filtered():
    pkts = [rec(T0, C, S, b""), rec(T0 + 1, C, S, bytes(120)), rec(T0 + 2, S, C, b""), rec(T0 + 3, S, C, bytes(1460))]
    (flow,) = assemble_biflows(pkts)
    assert flow.dirs == (-1, -1, 1, 1)
    v = extract_flow_vector(flow)
    assert v.pl.tolist() == [120, 1460]
    assert v.dir.tolist() == [-1, 1]
    assert v.iat_us.tolist() == [0, 2]


def test_iat_and_n():
    (flow,) = assemble_biflows([rec(T0 + 1_000_000, C, S, b"a"), rec(T0 + 1_020_000, S, C, b"b")])
    assert extract_flow_vector(flow).iat_us.tolist() == [0, 20000]
    assert len(extract_flow_vector(flow, 1)) == 1
    with pytest.raises(ValueError):
        extract_flow_vector(flow, 0)
    (empty,) = assemble_biflows([rec(T0, C, S, b"")])
    assert len(extract_flow_vector(empty)) == 0


def test_negative_iat_clamped():
    (flow,) = assemble_biflows([rec(T0 + 50, C, S, b"a"), rec(T0 + 10, S, C, b"b"), rec(T0 + 30, C, S, b"c")])
    v = extract_flow_vector(flow)
    assert v.iat_us.tolist() == [0, 0, 20]
    assert v.clamped == 1


def test_aggregate_examples():
    agg = aggregate([vec([100]), vec([300, 500])], Metric.PL)
    assert agg.mean_at_index.tolist() == [200, 500]
    assert agg.support_at_index.tolist() == [2, 1]
    dirs = aggregate([vec([1, 2, 3]), vec([4])], "DIR")
    assert dirs.mean_at_index.tolist() == [-1, -1, -1]
    with pytest.raises(ValueError):
        aggregate([vec([])], Metric.PL)


def test_thousand_vectors_against_naive_loop():
    rng = np.random.default_rng(7)
    vectors = [vec(rng.integers(1, 1500, rng.integers(1, 51))) for _ in range(1000)]
    agg = aggregate(vectors, Metric.PL)
    for k in range(50):
        total, count = 0, 0
        for v in vectors:
            if len(v) > k:
                total += int(v.pl[k])
                count += 1
        assert agg.support_at_index[k] == count
        if count:
            assert agg.mean_at_index[k] == pytest.approx(total / count, rel=1e-12)


flows_st = st.lists(
    st.lists(st.tuples(st.integers(0, 1500), st.booleans(), st.integers(0, 10_000)), min_size=1, max_size=60),
    min_size=1, max_size=8,
)


def _build(spec):
    out = []
    for i, pkts in enumerate(spec):
        c = ("10.0.0.2", 40000 + i)
        t = T0
        recs = []
        for pl, up, gap in pkts:
            t += gap
            recs.append(rec(t, c if up else S, S if up else c, bytes(pl)))
        out.extend(assemble_biflows(recs))
    return out


@settings(max_examples=80, deadline=None)
@given(flows_st, st.randoms(use_true_random=False))
def test_series_properties(spec, rnd):
    flows = _build(spec)
    vectors = [extract_flow_vector(f) for f in flows]
    for f, v in zip(flows, vectors):
        assert (v.pl > 0).all() and len(v) <= 50
        # idempotence on an already filtered packet list
        kept = [p for p in f.packets if p.payload_len > 0]
        if kept:
            (again,) = assemble_biflows(kept)
            if again.client == f.client:
                w = extract_flow_vector(again)
                assert w.pl.tolist() == v.pl.tolist() and w.dir.tolist() == v.dir.tolist()
    if not any(len(v) for v in vectors):
        return
    shuffled = list(vectors)
    rnd.shuffle(shuffled)
    for m in Metric:
        a, b = aggregate(vectors, m), aggregate(shuffled, m)
        np.testing.assert_allclose(a.mean_at_index, b.mean_at_index, rtol=1e-12)
        assert (np.diff(a.support_at_index) <= 0).all()
    d = aggregate(vectors, Metric.DIR).mean_at_index
    assert ((d >= -1) & (d <= 1)).all()


def test_extractor_shape():
    flows = _build([[(10, True, 0), (20, False, 5)], [(0, True, 0)]])
    X = FlowSeriesExtractor(n=4).fit_transform(flows)
    assert X.shape == (2, 3, 4)
    assert X[0, 0, :2].tolist() == [10, 20]
    assert np.isnan(X[1]).all()
