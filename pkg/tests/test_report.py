"""Reader, writer, and figure-rendering tests.

Serialization checks assert exact 17-significant-digit round trips since the
CLI's reproducibility contract is byte equality of reruns.
"""

import csv
import json
import math

import numpy as np
import pytest

from rankshrink.core import InputFormatError
from rankshrink.harness import Theorem1Row
from rankshrink.report import (
    format_json,
    read_matrix_file,
    read_z_file,
    render_curves_figure,
    render_shrink_figure,
    render_table_figure,
    render_theorem1_figure,
    write_csv,
)


class TestReadZFile:
    def test_skips_comments_and_blanks(self, tmp_path):
        path = tmp_path / "z.txt"
        path.write_text("# header\n1.0\n\n  2.5 # inline note\n-3e-2\n")
        np.testing.assert_array_equal(read_z_file(str(path)),
                                      [1.0, 2.5, -0.03])

    def test_reports_offending_line(self, tmp_path):
        path = tmp_path / "z.txt"
        path.write_text("1.0\n2.0\nabc\n")
        with pytest.raises(InputFormatError, match="not a number") as info:
            read_z_file(str(path))
        assert info.value.line == 3

    def test_rejects_empty(self, tmp_path):
        path = tmp_path / "z.txt"
        path.write_text("# nothing here\n\n")
        with pytest.raises(InputFormatError, match="no values"):
            read_z_file(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputFormatError, match="cannot read"):
            read_z_file(str(tmp_path / "nope.txt"))


class TestReadMatrixFile:
    def test_labels_then_features(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("# expression matrix\n0,0,1,1\n1.5,2.5,3.5,4.5\n"
                        "\n0.1,0.2,0.3,0.4\n")
        matrix, labels = read_matrix_file(str(path))
        assert matrix.shape == (2, 4)
        assert labels.tolist() == [0, 0, 1, 1]
        assert labels.dtype == np.int64
        assert matrix[1, 3] == 0.4

    def test_rejects_nonbinary_labels(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("0,2,1\n1,2,3\n")
        with pytest.raises(InputFormatError, match="0 or 1"):
            read_matrix_file(str(path))

    def test_rejects_ragged_rows(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("0,0,1,1\n1,2,3\n")
        with pytest.raises(InputFormatError, match="expected 4") as info:
            read_matrix_file(str(path))
        assert info.value.line == 2

    def test_rejects_text_cells(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("0,1\nlow,high\n")
        with pytest.raises(InputFormatError, match="line 2"):
            read_matrix_file(str(path))

    def test_rejects_header_only(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("0,0,1,1\n")
        with pytest.raises(InputFormatError, match="feature row"):
            read_matrix_file(str(path))


class TestFormatJson:
    def test_parses_and_round_trips_floats(self):
        payload = {
            "name": "demo",
            "count": 3,
            "ok": True,
            "missing": None,
            "values": [0.1, 2.0, -3.5e-9],
            "nested": {"se": 1.0 / 3.0},
        }
        parsed = json.loads(format_json(payload))
        assert parsed["name"] == "demo"
        assert parsed["count"] == 3
        assert parsed["ok"] is True
        assert parsed["missing"] is None
        assert parsed["values"] == [0.1, 2.0, -3.5e-9]
        assert parsed["nested"]["se"] == 1.0 / 3.0

    def test_seventeen_digit_rendering(self):
        assert format_json(0.1) == "0.10000000000000001"
        assert format_json([1, 2.5]) == "[1, 2.5]"

    def test_nonfinite_policy(self):
        # NaN stays a bare token, infinities become quoted strings
        parsed = json.loads(format_json({"a": math.nan, "b": math.inf,
                                         "c": -math.inf}))
        assert math.isnan(parsed["a"])
        assert parsed["b"] == "Infinity"
        assert parsed["c"] == "-Infinity"

    def test_string_escaping(self):
        parsed = json.loads(format_json('say "hi"\nagain'))
        assert parsed == 'say "hi"\nagain'

    def test_deterministic(self):
        payload = {"values": list(np.linspace(-1, 1, 7))}
        assert format_json(payload) == format_json(payload)


class TestWriteCsv:
    def test_headers_columns_and_round_trip(self, tmp_path):
        path = tmp_path / "out.csv"
        write_csv(str(path), ["command: shrink", "seed: 0"],
                  ["index", "z", "boot1"],
                  [[1, 0.1, -0.25], [2, 2.0 / 3.0, 1.0]])
        text = path.read_text().splitlines()
        assert text[0] == "# command: shrink"
        assert text[1] == "# seed: 0"
        assert text[2] == "index,z,boot1"
        body = [row for row in csv.reader(text[3:])]
        assert body[0][0] == "1"
        assert float(body[0][1]) == 0.1
        assert float(body[1][1]) == 2.0 / 3.0

    def test_rewrites_identically(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        rows = [[k, math.sin(k)] for k in range(5)]
        write_csv(str(a), ["h"], ["k", "v"], rows)
        write_csv(str(b), ["h"], ["k", "v"], rows)
        assert a.read_bytes() == b.read_bytes()


class TestFigures:
    def test_shrink_figure(self, tmp_path):
        path = tmp_path / "fig.png"
        z = np.linspace(-3, 3, 40)
        render_shrink_figure(str(path), z, {"boot1": 0.5 * z, "js": 0.8 * z})
        assert path.stat().st_size > 0

    def test_table_figure(self, tmp_path):
        path = tmp_path / "fig.png"
        render_table_figure(
            str(path), ["G1", "G2"], ["boot1", "boot2"],
            {"G1": {"boot1": 0.1, "boot2": 0.05},
             "G2": {"boot1": 0.2, "boot2": 0.1}},
            {"G1": {"boot1": 0.01, "boot2": 0.01},
             "G2": {"boot1": 0.02, "boot2": 0.02}})
        assert path.stat().st_size > 0

    def test_theorem1_figure(self, tmp_path):
        path = tmp_path / "fig.png"
        rows = [Theorem1Row(p=100, rank=90, empirical=-0.04, se=0.01,
                            analytic=0.0),
                Theorem1Row(p=2000, rank=1800, empirical=-0.003, se=0.002,
                            analytic=0.0)]
        render_theorem1_figure(str(path), rows)
        assert path.stat().st_size > 0

    def test_curves_figure(self, tmp_path):
        path = tmp_path / "fig.png"
        ranks = np.arange(1, 21)
        z = np.sort(np.linspace(-2, 2, 20))
        render_curves_figure(str(path), ranks, z, {"boot2": z * 0.5})
        assert path.stat().st_size > 0
