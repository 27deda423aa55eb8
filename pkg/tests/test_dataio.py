import datetime as dt
import http.server
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spillover.dataio import (
    ColumnSpec,
    EmptySeriesError,
    EventRangeError,
    FetchError,
    MalformedPayloadError,
    MissingColumnError,
    MissingValueError,
    Month,
    MonthGapError,
    MonthlyPanel,
    NonMonotoneDatesError,
    NonPositiveLogError,
    SeriesNotFoundError,
    aggregate_events_to_monthly,
    build_deterministics,
    fetch_remote_series,
    load_panel,
    load_surprises,
    parse_series_csv,
    write_panel,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_month_arithmetic():
    m = Month(2019, 11)
    assert str(m + 3) == "2020-02"
    assert Month(2020, 2) - m == 3
    assert Month.parse("2021-06") == Month(2021, 6)
    with pytest.raises(ValueError):
        Month(2020, 13)


def test_load_panel_log_transform(tmp_path):
    p = write(tmp_path, "p.csv", "date,GDP\n2000-01,100\n2000-02,101\n2000-03,99\n")
    panel = load_panel(p, [ColumnSpec("GDP", "log_times_100")])
    # 100*ln(x) by hand: 460.517, 461.512, 459.512
    assert np.round(panel.column("GDP"), 3).tolist() == [460.517, 461.512, 459.512]
    assert panel.start == Month(2000, 1) and panel.T == 3


def test_load_panel_level_is_identity(tmp_path):
    p = write(tmp_path, "p.csv", "date,rate\n2000-01,1.25\n2000-02,1.50\n")
    panel = load_panel(p, [ColumnSpec("rate", "level", "policy_rate")])
    assert panel.column("rate").tolist() == [1.25, 1.50]
    assert panel.names_with_role("policy_rate") == ["rate"]


def test_load_panel_selects_and_orders_columns(tmp_path):
    p = write(tmp_path, "p.csv", "date,a,b,c\n2000-01,1,2,3\n2000-02,4,5,6\n")
    panel = load_panel(p, {"c": ("level", "foreign"), "a": ("percent", "domestic")})
    assert panel.names == ["c", "a"]
    assert panel.values.tolist() == [[3, 1], [6, 4]]


@pytest.mark.parametrize(
    "text, err",
    [
        ("date,x\n2020-01,1\n2020-03,2\n", MonthGapError),
        ("date,x\n2020-02,1\n2020-01,2\n", NonMonotoneDatesError),
        ("date,x\n2020-01,1\n2020-01,2\n", NonMonotoneDatesError),
        ("date,y\n2020-01,1\n2020-02,2\n", MissingColumnError),
        ("date,x\n2020-01,1\n2020-02,\n2020-03,2\n", MissingValueError),
        ("date,x\n2020-01,1\n2020-02,0\n", NonPositiveLogError),
    ],
)
def test_load_panel_named_failures(tmp_path, text, err):
    p = write(tmp_path, "p.csv", text)
    with pytest.raises(err):
        load_panel(p, [ColumnSpec("x", "log_times_100")])


def test_error_types_are_distinct():
    errs = {MonthGapError, NonMonotoneDatesError, MissingColumnError, NonPositiveLogError, MissingValueError}
    assert len(errs) == 5
    for a in errs:
        for b in errs - {a}:
            assert not issubclass(a, b)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=2, max_size=2),
        min_size=1,
        max_size=20,
    )
)
def test_canonical_csv_round_trip(tmp_path_factory, rows):
    values = np.array(rows)
    panel = MonthlyPanel(Month(1999, 12), [ColumnSpec("a"), ColumnSpec("b")], values)
    path = tmp_path_factory.mktemp("rt") / "panel.csv"
    write_panel(panel, path)
    back = load_panel(path, [ColumnSpec("a"), ColumnSpec("b")])
    assert back.start == panel.start
    assert np.array_equal(back.values, panel.values)
    assert path.read_bytes().endswith(b"\n")


def test_window_and_select():
    panel = MonthlyPanel(Month(2000, 1), [ColumnSpec("a"), ColumnSpec("b")], np.arange(20.0).reshape(10, 2))
    w = panel.window(Month(2000, 3), Month(2000, 5))
    assert w.start == Month(2000, 3) and w.T == 3
    assert w.column("a").tolist() == [4.0, 6.0, 8.0]
    assert panel.select(["b"]).names == ["b"]


@pytest.mark.parametrize(
    "start, T, covid",
    [
        (Month(2020, 2), 3, [0, 1, 1]),
        (Month(2021, 6), 2, [1, 0]),
        (Month(1999, 1), 4, [0, 0, 0, 0]),
    ],
)
def test_covid_window(start, T, covid):
    d = build_deterministics(start, T)
    assert d.covid.tolist() == covid
    assert d.trend.tolist() == list(range(1, T + 1))


@given(st.integers(0, 60), st.integers(0, 60))
def test_covid_dummy_sums_to_sixteen_when_covering_window(before, after):
    start = Month(2020, 3) + (-before)
    T = before + 16 + after
    d = build_deterministics(start, T)
    assert d.covid.sum() == 16
    assert np.all(np.diff(d.trend) == 1)


def test_build_deterministics_requires_positive_length():
    with pytest.raises(ValueError):
        build_deterministics(Month(2000, 1), 0)


def test_aggregate_sum_rule():
    dates = [dt.date(2004, 6, 5), dt.date(2004, 6, 28), dt.date(2004, 8, 1)]
    out = aggregate_events_to_monthly(dates, np.array([1.0, 0.5, 2.0]), Month(2004, 5), Month(2004, 8))
    assert out.tolist() == [0.0, 1.5, 0.0, 2.0]


def test_aggregate_singleton_and_range_error():
    out = aggregate_events_to_monthly([dt.date(2010, 1, 14)], np.array([-2.0]), Month(2010, 1), Month(2010, 1))
    assert out.tolist() == [-2.0]
    with pytest.raises(EventRangeError):
        aggregate_events_to_monthly([dt.date(2010, 2, 1)], np.array([1.0]), Month(2010, 1), Month(2010, 1))


@given(
    st.lists(st.tuples(st.integers(0, 35), st.floats(-10, 10)), min_size=0, max_size=30),
    st.integers(0, 30),
)
def test_aggregation_is_additive(events, cut):
    start, end = Month(2001, 1), Month(2003, 12)
    dates = [dt.date(2001 + k // 12, k % 12 + 1, 10) for k, _ in events]
    vals = np.array([v for _, v in events])
    full = aggregate_events_to_monthly(dates, vals, start, end)
    a = aggregate_events_to_monthly(dates[:cut], vals[:cut], start, end)
    b = aggregate_events_to_monthly(dates[cut:], vals[cut:], start, end)
    np.testing.assert_allclose(a + b, full, atol=1e-12)


def test_load_surprises(tmp_path):
    p = write(tmp_path, "s.csv", "date,ir,eq\n2004-06-03,5,-0.3\n2004-07-01,-2,0.1\n")
    ev = load_surprises(p)
    assert len(ev) == 2 and ev.ir.tolist() == [5.0, -2.0]
    bad = write(tmp_path, "b.csv", "date,ir,eq\n2004-07-01,5,-0.3\n2004-06-03,-2,0.1\n")
    with pytest.raises(NonMonotoneDatesError):
        load_surprises(bad)


# --- remote fetcher ----------------------------------------------------------

FIXTURE = "observation_date,CPALTT01CAM659N\n2020-01-01,2.4\n2020-02-01,.\n2020-03-01,0.9\n"


def test_parse_recorded_fixture_skips_missing_marker():
    rows, skipped = parse_series_csv(FIXTURE, "fixture")
    assert skipped == 1
    assert rows == [(dt.date(2020, 1, 1), 2.4), (dt.date(2020, 3, 1), 0.9)]


def test_parse_two_rows_and_malformed():
    rows, skipped = parse_series_csv("date,value\n2020-01-01,1\n2020-02-01,2\n", "x")
    assert len(rows) == 2 and skipped == 0
    with pytest.raises(MalformedPayloadError):
        parse_series_csv("date,value\n2020-01-01,abc\n", "x")
    with pytest.raises(MalformedPayloadError):
        parse_series_csv("date,value\n2020-01-01\n", "x")


class _Handler(http.server.BaseHTTPRequestHandler):
    routes = {
        "/series/GOOD": (200, "date,value\n2020-01-01,1.5\n2020-02-01,2.5\n"),
        "/series/MISSING": (200, FIXTURE),
        "/series/EMPTY": (200, "date,value\n"),
        "/series/BROKEN": (200, "date,value\n2020-01-01,oops\n"),
        "/series/FAIL": (500, "boom"),
    }

    def do_GET(self):
        path = self.path.split("?")[0]
        code, body = self.routes.get(path, (404, "not found"))
        self.send_response(code)
        self.send_header("Content-Type", "text/csv")
        self.end_headers()
        self.wfile.write(body.encode())

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def server():
    srv = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    th = threading.Thread(target=srv.serve_forever, daemon=True)
    th.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}/series/{{series_id}}?api_key={{api_key}}"
    srv.shutdown()


def test_fetch_good(server, tmp_path):
    cache = tmp_path / "cache" / "GOOD.csv"
    res = fetch_remote_series(server, "GOOD", "k", cache_path=cache, retries=0)
    assert [v for _, v in res.rows] == [1.5, 2.5]
    assert cache.exists()


def test_fetch_missing_marker_warns(server):
    with pytest.warns(UserWarning, match="skipped 1"):
        res = fetch_remote_series(server, "MISSING", "k", retries=0)
    assert res.skipped == 1 and len(res.rows) == 2


def test_fetch_not_found(server):
    with pytest.raises(SeriesNotFoundError) as ei:
        fetch_remote_series(server, "NOPE", "secret", retries=0)
    assert "endpoint" in str(ei.value) and "secret" not in str(ei.value)


@pytest.mark.parametrize("sid, err", [("EMPTY", EmptySeriesError), ("BROKEN", MalformedPayloadError), ("FAIL", FetchError)])
def test_fetch_failures_leave_no_cache(server, tmp_path, sid, err):
    cache = tmp_path / f"{sid}.csv"
    with pytest.raises(err):
        fetch_remote_series(server, sid, "k", cache_path=cache, retries=0)
    assert not cache.exists()
    assert list(tmp_path.iterdir()) == []


def test_fetch_requires_key(server):
    with pytest.raises(ValueError):
        fetch_remote_series(server, "GOOD", "")


def test_fetch_concurrent_distinct_series(server):
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(4) as ex:
        out = list(ex.map(lambda s: fetch_remote_series(server, s, "k", retries=0), ["GOOD"] * 4))
    assert all(len(r.rows) == 2 for r in out)
