import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavity_biphoton import Histogram, MeasurementConfig
from cavity_biphoton.errors import HistogramFormatError
from cavity_biphoton.io import (histogram_from_csv, histogram_from_json, histogram_to_csv,
                                histogram_to_json, read_histogram, report_to_json,
                                write_histogram)
from cavity_biphoton.rates import expected_histogram_for
from cavity_biphoton.sim import SimRun, run_simulation


def test_sampled_round_trip_csv_and_json(config, tmp_path):
    h = run_simulation(SimRun(config, 3, 60.0), MeasurementConfig.for_basis("hv"))
    for name in ("h.csv", "h.json"):
        write_histogram(h, tmp_path / name)
        back = read_histogram(tmp_path / name)
        assert back == h
        assert back.counts.dtype == np.int64


def test_expected_round_trip_is_bit_exact(config, tmp_path):
    h = expected_histogram_for(config, MeasurementConfig.for_basis("pm45"))
    assert histogram_from_csv(histogram_to_csv(h)) == h
    assert histogram_from_json(histogram_to_json(h)) == h
    write_histogram(h, tmp_path / "e.csv")
    assert read_histogram(tmp_path / "e.csv").counts.tobytes() == h.counts.tobytes()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e9, allow_nan=False), min_size=1, max_size=40),
       st.floats(1.0, 100.0), st.floats(-1e5, 1e5), st.one_of(st.none(), st.integers(0, 2**64 - 1)))
def test_round_trip_property(values, width, origin, seed):
    h = Histogram(width, origin, np.array(values), 12.5, basis="pm45", seed=seed,
                  config_hash="abc")
    assert histogram_from_csv(histogram_to_csv(h)) == h
    assert histogram_from_json(histogram_to_json(h)) == h


def test_csv_columns(config):
    h = expected_histogram_for(config)
    lines = histogram_to_csv(h).splitlines()
    assert lines[0] == "# format: cavity-biphoton-histogram/1"
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0] == "bin_index,left_edge_ps,counts"
    assert len(body) == 1 + h.counts.size
    assert any(ln.startswith(f"# config_hash: {config.config_hash()}") for ln in lines)


def test_truncated_file(config, tmp_path):
    path = tmp_path / "t.csv"
    write_histogram(expected_histogram_for(config), path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2].rsplit("\n", 1)[0] + "\n")
    with pytest.raises(HistogramFormatError, match="truncated"):
        read_histogram(path)


@pytest.mark.parametrize("text", [
    "", "# format: other\n", "# format: cavity-biphoton-histogram/1\n",
    "{not json", '{"header": {}, "counts": []}',
])
def test_malformed_inputs(text):
    with pytest.raises(HistogramFormatError):
        (histogram_from_json if text.startswith("{") else histogram_from_csv)(text)


def test_bad_row(config):
    text = histogram_to_csv(expected_histogram_for(config)).replace("\n5,", "\nx5,", 1)
    with pytest.raises(HistogramFormatError, match="malformed"):
        histogram_from_csv(text)


def test_report_sanitizes_numpy():
    text = report_to_json({"a": np.float64(1.5), "b": np.inf, "c": np.arange(2), "d": np.int32(3)})
    assert '"b": null' in text and '"a": 1.5' in text and '"d": 3' in text
