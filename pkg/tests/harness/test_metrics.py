import math

import pytest

from augsched.harness.metrics import COLUMNS, CSV_HEADER, MetricsRow, MetricsSink, read_metrics_csv, write_metrics_csv
from augsched.harness.plots import line_chart_svg, write_line_chart
from augsched.utils.errors import NumericalError


def row(env_steps=0, **kw):
    data = dict(env_steps=env_steps, epoch=1, method="ppo", seed=0, train_return=1.0, test_bg_return=0.5, test_lv_return=0.25)
    data.update(kw)
    return MetricsRow(**data)


class TestMetrics:
    """Per-run metrics rows and files"""

    def test_non_finite_value_rejected(self):
        with pytest.raises(NumericalError):
            row(train_return=math.nan)

    def test_csv_round_trip(self, tmp_path):
        path = write_metrics_csv([row(0), row(16, anchor_kl=0.01, da_phase=True)], tmp_path / "metrics.csv")
        assert path.read_text().splitlines()[0] == CSV_HEADER
        frame = read_metrics_csv(path)
        assert list(frame.columns) == COLUMNS
        assert frame["env_steps"].tolist() == [0, 16]
        assert frame["anchor_kl"].iloc[1] == pytest.approx(0.01)

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "metrics.csv"
        path.write_text("env_steps\n1\n")
        with pytest.raises(ValueError):
            read_metrics_csv(path)

    def test_steps_must_not_go_backwards(self):
        sink = MetricsSink("ppo", 0)
        sink.record(row(10))
        with pytest.raises(NumericalError):
            sink.record(row(5))

    def test_close_writes_files(self, tmp_path):
        sink = MetricsSink("inda", 2, tmp_path)
        sink.env_steps.inc(32)
        sink.record(row(32))
        sink.close()
        prom = (tmp_path / "metrics.prom").read_text()
        assert 'augsched_env_steps_total{method="inda",seed="2"} 32.0' in prom
        assert len(read_metrics_csv(tmp_path / "metrics.csv")) == 1


class TestPlots:
    """SVG learning curves"""

    def test_empty_chart(self):
        assert "No data available" in line_chart_svg("empty", {})

    def test_one_polyline_per_series(self):
        svg = line_chart_svg("r", {"ppo": [(0, 1.0), (10, 2.0)], "inda": [(0, 0.5), (10, 3.0)]})
        assert svg.count("<polyline") == 2
        assert ">ppo<" in svg and ">inda<" in svg

    def test_escapes_labels(self):
        assert "a &lt;b&gt;" in line_chart_svg("a <b>", {"x": [(0, 0)]})

    def test_deterministic_file(self, tmp_path):
        series = {"ppo": [(10, 2.0), (0, 1.0)]}
        a = write_line_chart(tmp_path / "a.svg", "t", series).read_bytes()
        b = write_line_chart(tmp_path / "b.svg", "t", series).read_bytes()
        assert a == b
