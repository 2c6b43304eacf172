"""
Serializers for scenario run outputs.

A ScenarioResult is written into a run directory in several formats:
1. JSON - the ordered timeline plus summary and checks (timeline.json)
2. CSV - one metric row per trial or per device and round (metrics.csv)
3. M2M - the natural-language message log, one line per entry (m2m.log)
4. HTML - a short human-readable run report (report.html)
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Union

import pandas as pd
from jinja2 import Template

from app.schemas.scenario import ScenarioResult

logger = logging.getLogger(__name__)


class BaseSerializer:
    """Base serializer class"""

    filename = ""

    def __init__(self, result: ScenarioResult):
        self.result = result
        self.timestamp = datetime.now().isoformat()

    def serialize(self) -> str:
        raise NotImplementedError("Subclasses must implement serialize method")

    def get_content_type(self) -> str:
        raise NotImplementedError("Subclasses must implement get_content_type method")


class JSONSerializer(BaseSerializer):
    """Timeline, summary and checks; no wall-clock fields so reruns compare equal."""

    filename = "timeline.json"

    def serialize(self) -> str:
        data = {
            "scenario_id": self.result.scenario_id,
            "timeline": [event.model_dump(mode="json") for event in self.result.timeline],
            "summary": self.result.summary,
            "checks": self.result.checks,
        }
        return json.dumps(data, indent=2, ensure_ascii=False, default=str) + "\n"

    def get_content_type(self) -> str:
        return "application/json"


class CSVSerializer(BaseSerializer):
    filename = "metrics.csv"

    def serialize(self) -> str:
        df = pd.DataFrame(self.result.metrics)
        if df.empty:
            return ""
        return df.to_csv(index=False, lineterminator="\n", float_format="%.6f")

    def get_content_type(self) -> str:
        return "text/csv"


class M2MLogSerializer(BaseSerializer):
    filename = "m2m.log"

    def serialize(self) -> str:
        lines = self.result.m2m_lines
        return "\n".join(lines) + "\n" if lines else ""

    def get_content_type(self) -> str:
        return "text/plain"


class HTMLSerializer(BaseSerializer):
    filename = "report.html"

    TEMPLATE = Template(
        """<!DOCTYPE html>
<html>
<head>
    <title>{{ result.scenario_id }} run report</title>
    <style>
        body { font-family: Arial, sans-serif; margin: 40px; }
        table { border-collapse: collapse; margin: 10px 0; }
        th, td { border: 1px solid #ddd; padding: 6px; text-align: left; }
        .pass { color: green; font-weight: bold; }
        .fail { color: red; font-weight: bold; }
    </style>
</head>
<body>
    <h1>{{ result.scenario_id }}</h1>
    <p><strong>Generated:</strong> {{ timestamp }}</p>
    <h2>Checks</h2>
    <table>
    {% for name, ok in result.checks.items() %}
        <tr><td>{{ name }}</td><td class="{{ 'pass' if ok else 'fail' }}">{{ 'pass' if ok else 'FAIL' }}</td></tr>
    {% endfor %}
    </table>
    <h2>Summary</h2>
    <table>
    {% for key, value in result.summary.items() %}
        <tr><td>{{ key }}</td><td>{{ value }}</td></tr>
    {% endfor %}
    </table>
    <h2>Timeline</h2>
    <table>
        <tr><th>t</th><th>event</th><th>detail</th></tr>
    {% for event in result.timeline %}
        <tr><td>{{ '%.3f' % event.t }}</td><td>{{ event.event }}</td><td>{{ event.detail }}</td></tr>
    {% endfor %}
    </table>
</body>
</html>
"""
    )

    def serialize(self) -> str:
        return self.TEMPLATE.render(result=self.result, timestamp=self.timestamp)

    def get_content_type(self) -> str:
        return "text/html"


SERIALIZERS = {
    "json": JSONSerializer,
    "csv": CSVSerializer,
    "m2m": M2MLogSerializer,
    "html": HTMLSerializer,
}


def get_serializer(result: ScenarioResult, format_type: str) -> BaseSerializer:
    """Factory function to get the appropriate serializer"""
    if format_type not in SERIALIZERS:
        raise ValueError(f"Unsupported format: {format_type}")
    return SERIALIZERS[format_type](result)


def write_run_outputs(
    result: ScenarioResult,
    out_dir: Union[str, Path],
    formats=("csv", "json", "m2m"),
) -> Dict[str, Path]:
    """Write one file per format into out_dir; returns format -> path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for format_type in formats:
        serializer = get_serializer(result, format_type)
        path = out_dir / serializer.filename
        path.write_text(serializer.serialize(), encoding="utf-8")
        written[format_type] = path
    result.m2m_log_path = str(written["m2m"]) if "m2m" in written else result.m2m_log_path
    logger.info(f"Run outputs for {result.scenario_id} written to {out_dir}")
    return written
