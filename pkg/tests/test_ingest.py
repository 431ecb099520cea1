import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from climgp.errors import (
    EmptySeries,
    InputError,
    MisalignedModels,
    MissingYears,
    NoOverlap,
    NonPositiveTemperature,
    UnknownUnit,
    ZeroStride,
)
from climgp.ingest import (
    LogTempSeries,
    RawTemperatureSeries,
    average_series,
    build_aligned_dataset,
    convert_to_log_celsius,
    dataset_from_dict,
    dataset_to_dict,
    load_manifest,
    read_series_csv,
    thin_series,
)


def raw(values, unit="absolute-celsius", start=1900, label="s"):
    return RawTemperatureSeries(start, values, unit, label)


@pytest.mark.parametrize(
    "value, unit, expected",
    [(0.87, "anomaly-celsius", np.log(14.87)), (287.15, "kelvin", np.log(14.0)), (14.0, "absolute-celsius", np.log(14.0))],
)
def test_conversion_examples(value, unit, expected):
    out = convert_to_log_celsius(raw([value], unit))
    assert out.x[0] == pytest.approx(expected, rel=1e-14)


def test_conversion_errors():
    with pytest.raises(NonPositiveTemperature, match="year 1901"):
        convert_to_log_celsius(raw([1.0, -14.5], "anomaly-celsius"))
    with pytest.raises(EmptySeries):
        convert_to_log_celsius(raw([]))
    with pytest.raises(UnknownUnit):
        raw([1.0], "fahrenheit")


@given(st.lists(st.floats(0.01, 60.0), min_size=1, max_size=50))
def test_absolute_round_trip(values):
    back = np.exp(convert_to_log_celsius(raw(values)).x)
    np.testing.assert_allclose(back, values, rtol=1e-12)


def test_thinning_examples():
    s = LogTempSeries(0, np.arange(6.0))
    np.testing.assert_array_equal(thin_series(s, 5).x, [0.0, 5.0])
    np.testing.assert_array_equal(thin_series(s, 1).x, s.x)
    assert len(thin_series(LogTempSeries(0, np.arange(11.0)), 5)) == 3
    with pytest.raises(ZeroStride):
        thin_series(s, 0)


@given(st.integers(1, 200), st.integers(1, 6), st.integers(1, 6))
def test_thinning_composes(n, a, b):
    s = LogTempSeries(0, np.arange(float(n)))
    np.testing.assert_array_equal(thin_series(thin_series(s, a), b).x, thin_series(s, a * b).x)


def test_averaging():
    m = raw([10.0, 12.0], start=1900)
    ds = build_aligned_dataset(raw([9.0, 10.0], start=1899), [m, m])
    np.testing.assert_array_equal(ds.averaged.x, ds.models[0].x)
    a = LogTempSeries(1900, [1.0])
    b = LogTempSeries(1900, [3.0])
    assert average_series([a, b]).x[0] == 2.0


@settings(max_examples=25)
@given(st.integers(1, 8), st.lists(st.floats(-3, 3), min_size=1, max_size=20))
def test_averaging_copies_is_exact(k, values):
    s = LogTempSeries(1950, values)
    np.testing.assert_array_equal(average_series([s] * k).x, s.x)


def test_paper_axis():
    obs = raw(np.full(167, 0.1), "anomaly-celsius", start=1850)
    models = [raw(np.full(200, 14.0), start=1900) for _ in range(2)]
    ds = build_aligned_dataset(obs, models)
    assert (ds.T0, ds.T, ds.origin_year, ds.horizon) == (166, 249, 1850, 250)
    x0, seg = ds.observed_segment()
    assert len(seg) == 166
    xp, fut = ds.future_segment(ds.averaged)
    assert len(fut) == 249 - 166 and xp == pytest.approx(np.log(14.0))


def test_alignment_errors():
    obs = raw([14.0] * 10, start=1850)
    with pytest.raises(MisalignedModels):
        build_aligned_dataset(obs, [raw([14.0] * 5, start=1855), raw([14.0] * 6, start=1855)])
    with pytest.raises(NoOverlap):
        build_aligned_dataset(obs, [raw([14.0] * 5, start=1900)])


def _manifest(tmp_path, unit="anomaly-celsius", body="year,value\n2000,0.1\n2001,0.2\n"):
    (tmp_path / "a.csv").write_text(body)
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"series": [{"path": "a.csv", "unit": unit, "role": "observed", "label": "obs"}]}))
    return m


def test_manifest_and_csv(tmp_path):
    observed, models, origin = load_manifest(_manifest(tmp_path))
    assert observed.values == (0.1, 0.2) and observed.start_year == 2000 and models == [] and origin is None
    with pytest.raises(UnknownUnit, match="celcius"):
        load_manifest(_manifest(tmp_path, unit="celcius"))
    with pytest.raises(InputError, match="not found"):
        load_manifest(tmp_path / "missing.json")


@pytest.mark.parametrize(
    "body, err, where",
    [
        ("year,value\n2000,0.1\n2002,0.3\n", MissingYears, ":3:"),
        ("year,value\n2000,\n", InputError, ":2:"),
        ("yr,val\n2000,1\n", InputError, "header"),
        ("year,value\n", EmptySeries, "no rows"),
    ],
)
def test_csv_errors_name_the_line(tmp_path, body, err, where):
    p = tmp_path / "s.csv"
    p.write_text(body)
    with pytest.raises(err, match=where):
        read_series_csv(p, "absolute-celsius")


def test_dataset_json_round_trip():
    obs = raw(np.linspace(0.1, 0.4, 30), "anomaly-celsius", start=1990)
    ds = build_aligned_dataset(obs, [raw(np.linspace(14, 15, 40), start=2000)] * 2)
    back = dataset_from_dict(json.loads(json.dumps(dataset_to_dict(ds))))
    assert (back.T0, back.T, back.origin_year) == (ds.T0, ds.T, ds.origin_year)
    np.testing.assert_array_equal(back.averaged.x, ds.averaged.x)
