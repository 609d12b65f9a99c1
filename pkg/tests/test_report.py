import numpy as np
import pytest

from neuralfc.errors import SchemaError
from neuralfc.flight import TELEMETRY_COLUMNS, TelemetryLog
from neuralfc.report import read_telemetry, render_report


def _log(path, n=50, offset=0.0):
    log = TelemetryLog()
    for k in range(n):
        t = k * 0.01
        log.append(t, 1, (offset, 0, -t), (0, 0, -1), (0, 0, -1), (0.8, 0.8, 0.8, 0.8))
    log.write_csv(path)
    return path


def test_single_log_three_figures(tmp_path):
    paths = render_report([_log(tmp_path / "a.csv")], tmp_path / "out")
    assert sorted(p.name for p in paths) == ["motors.svg", "position.svg", "velocity.svg"]
    assert all(p.stat().st_size > 0 for p in paths)


def test_two_logs_side_by_side(tmp_path):
    one = render_report([_log(tmp_path / "a.csv")], tmp_path / "one")
    two = render_report([_log(tmp_path / "a.csv"), _log(tmp_path / "b.csv", offset=1.0)], tmp_path / "two")
    assert len(two) == 3
    # twice the axes, so a bigger drawing
    assert two[0].stat().st_size > one[0].stat().st_size


def test_schema_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(SchemaError):
        read_telemetry(empty)
    bad_header = tmp_path / "h.csv"
    cols = list(TELEMETRY_COLUMNS)
    cols[4] = "altitude"
    bad_header.write_text(",".join(cols) + "\n" + ",".join(["0"] * len(cols)) + "\n")
    with pytest.raises(SchemaError, match="pos_z"):
        read_telemetry(bad_header)
    bad_value = tmp_path / "v.csv"
    row = ["0"] * len(TELEMETRY_COLUMNS)
    row[9] = "fast"
    bad_value.write_text(",".join(TELEMETRY_COLUMNS) + "\n" + ",".join(row) + "\n")
    with pytest.raises(SchemaError, match="vel_y"):
        read_telemetry(bad_value)


def test_read_round_trip(tmp_path):
    data = read_telemetry(_log(tmp_path / "a.csv", n=5))
    assert data.shape == (5, len(TELEMETRY_COLUMNS))
    np.testing.assert_allclose(data[:, 0], np.arange(5) * 0.01)
