import io
import json
import math

import numpy as np
import pytest

from downturn_lgd import ModelParams
from downturn_lgd.data_io import dumps_report, format_observations, generate_synthetic, load_observations, write_report
from downturn_lgd.errors import DataValidationError

GOOD = """# agency history
year,firms,defaults,avg_recovery
1982, 1000, 15, 0.38

1983,1010,0,
1984,1020,22,0.41
"""


def test_load_text_bytes_and_path(tmp_path):
    a = load_observations(io.StringIO(GOOD))
    b = load_observations(io.BytesIO(("﻿" + GOOD).encode("utf-8")))
    p = tmp_path / "d.csv"
    p.write_text(GOOD)
    c = load_observations(p)
    for s in (b, c):
        assert np.array_equal(s.years, a.years) and np.array_equal(s.defaults, a.defaults)
    assert a.years.tolist() == [1982, 1983, 1984]
    assert math.isnan(a.avg_recovery[1]) and a.avg_recovery[2] == 0.41


def test_roundtrip_is_exact(small_series, tmp_path):
    text = format_observations(small_series.series)
    back = load_observations(io.StringIO(text))
    np.testing.assert_array_equal(back.avg_recovery, small_series.series.avg_recovery)
    assert format_observations(back) == text


@pytest.mark.parametrize(
    "body,line,match",
    [
        ("1982,100,2,0.4\n1982,100,3,0.5\n", 3, "duplicate year 1982"),
        ("1983,100,2,0.4\n1982,100,3,0.5\n", 3, "out of order"),
        ("1982,100,2,\n1983,100,3,0.5\n", 2, "missing"),
        ("1982,100,200,0.4\n1983,100,3,0.5\n", 2, "outside"),
        ("1982,0,0,\n1983,100,3,0.5\n", 2, "positive"),
        ("1982,1e2,2,0.4\n1983,100,3,0.5\n", 2, "integer"),
        ("1982,100,2,abc\n1983,100,3,0.5\n", 2, "decimal"),
        ("1982,100,2,nan\n1983,100,3,0.5\n", 2, "finite"),
        ("1982,100,2\n1983,100,3,0.5\n", 2, "4 fields"),
    ],
)
def test_validation_errors_name_the_line(body, line, match):
    with pytest.raises(DataValidationError, match=match) as info:
        load_observations(io.StringIO("year,firms,defaults,avg_recovery\n" + body))
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_bad_header_and_short_files():
    with pytest.raises(DataValidationError, match="header"):
        load_observations(io.StringIO("yr,n,d,r\n1,2,0,\n"))
    with pytest.raises(DataValidationError, match="empty"):
        load_observations(io.StringIO("# nothing\n\n"))
    with pytest.raises(DataValidationError, match="at least 2"):
        load_observations(io.StringIO("year,firms,defaults,avg_recovery\n1982,100,2,0.4\n"))


def test_synthetic_generation(reference):
    a = generate_synthetic(reference, T=50, J=[1000] * 50, seed=3, start_year=1970)
    b = generate_synthetic(reference, T=50, J=1000, seed=3, start_year=1970)
    assert np.array_equal(a.series.defaults, b.series.defaults)
    assert a.series.years[0] == 1970 and a.series.years[-1] == 2019
    assert a.path.values.shape == (50,)
    has = a.series.has_recovery
    # standardised recovery residuals are standard normal
    z = (a.series.avg_recovery[has] - reference.mu - reference.sigma1 * a.path.values[has]) * np.sqrt(
        a.series.defaults[has]) / reference.sigma2
    assert abs(z.mean()) < 0.5 and 0.6 < z.std() < 1.4


def test_report_json_is_stable():
    doc = {"b": np.float64(1.5), "a": [np.int64(2), float("nan")], "flag": np.bool_(True),
           "params": ModelParams(0.02, 0.1, 0.4, 0.5, 0.1)}
    text = dumps_report(doc)
    back = json.loads(text)
    assert list(back)[0] == "schema_version"
    assert back["a"] == [2, None] and back["flag"] is True and back["params"]["rho"] == 0.1
    assert text == dumps_report(doc)
    sink, tab = io.StringIO(), io.StringIO()
    write_report(doc, sink, table="x\n", table_sink=tab)
    assert sink.getvalue() == text and tab.getvalue() == "x\n"
