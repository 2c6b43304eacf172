"""
Test suite for serializers

Tests the run-output formats written for every scenario.
"""

import json

import pytest

from app.core.serializers import (
    CSVSerializer,
    HTMLSerializer,
    JSONSerializer,
    M2MLogSerializer,
    get_serializer,
    write_run_outputs,
)
from app.schemas.scenario import ScenarioResult, TimelineEvent


@pytest.fixture
def result():
    return ScenarioResult(
        scenario_id="wifi-scenario-1",
        timeline=[
            TimelineEvent(t=0.0, event="client_joined", detail={"device_id": "client_2"}),
            TimelineEvent(t=1.0, event="subtask_dispatched", detail={"device_id": "client_1", "subtask_id": 1}),
        ],
        metrics=[
            {"t": 0.0, "round": 1, "device_id": "client_1", "upload_time_s": 14.75},
            {"t": 1.0, "round": 2, "device_id": "client_1", "upload_time_s": 600.0},
        ],
        m2m_lines=["0.000 coordinator polls client_1", "1.000 client_1 1 Start set_contention_window(8, 12)"],
        checks={"converged": True, "violated_after_join": False},
        summary={"final_cw": [2, 4]},
    )


class TestJSONSerializer:
    """Test JSON serialization"""

    def test_json_serialization(self, result):
        parsed = json.loads(JSONSerializer(result).serialize())

        assert parsed["scenario_id"] == "wifi-scenario-1"
        assert [e["event"] for e in parsed["timeline"]] == ["client_joined", "subtask_dispatched"]
        assert parsed["summary"]["final_cw"] == [2, 4]
        assert parsed["checks"] == {"converged": True, "violated_after_join": False}

    def test_json_is_stable(self, result):
        """No wall-clock fields, so two serializations compare equal"""
        assert JSONSerializer(result).serialize() == JSONSerializer(result).serialize()

    def test_json_content_type(self, result):
        assert JSONSerializer(result).get_content_type() == "application/json"


class TestCSVSerializer:
    """Test CSV serialization"""

    def test_csv_metrics(self, result):
        lines = CSVSerializer(result).serialize().splitlines()

        assert lines[0] == "t,round,device_id,upload_time_s"
        assert lines[1] == "0.000000,1,client_1,14.750000"
        assert len(lines) == 3

    def test_csv_empty(self):
        assert CSVSerializer(ScenarioResult(scenario_id="empty")).serialize() == ""


class TestM2MLogSerializer:
    def test_one_line_per_entry(self, result):
        assert M2MLogSerializer(result).serialize() == "\n".join(result.m2m_lines) + "\n"

    def test_empty(self):
        assert M2MLogSerializer(ScenarioResult(scenario_id="empty")).serialize() == ""


class TestHTMLSerializer:
    """Test HTML serialization"""

    def test_html_report(self, result):
        html = HTMLSerializer(result).serialize()

        assert "<!DOCTYPE html>" in html
        assert "<h1>wifi-scenario-1</h1>" in html
        assert 'class="fail">FAIL' in html
        assert "client_joined" in html

    def test_html_content_type(self, result):
        assert HTMLSerializer(result).get_content_type() == "text/html"


class TestSerializerFactory:
    """Test serializer factory function"""

    @pytest.mark.parametrize(
        "format_type, cls",
        [("json", JSONSerializer), ("csv", CSVSerializer), ("m2m", M2MLogSerializer), ("html", HTMLSerializer)],
    )
    def test_get_serializer(self, result, format_type, cls):
        assert isinstance(get_serializer(result, format_type), cls)

    def test_get_serializer_invalid_format(self, result):
        with pytest.raises(ValueError, match="Unsupported format"):
            get_serializer(result, "xml")


class TestWriteRunOutputs:
    def test_default_formats(self, result, tmp_path):
        written = write_run_outputs(result, tmp_path / "run")

        assert sorted(p.name for p in written.values()) == ["m2m.log", "metrics.csv", "timeline.json"]
        assert result.m2m_log_path == str(tmp_path / "run" / "m2m.log")
        assert (tmp_path / "run" / "m2m.log").read_text().splitlines() == result.m2m_lines

    def test_with_html(self, result, tmp_path):
        written = write_run_outputs(result, tmp_path, formats=("json", "html"))
        assert set(written) == {"json", "html"}
        assert result.m2m_log_path is None
        assert (tmp_path / "report.html").exists()
