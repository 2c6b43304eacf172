from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class TimelineEvent(BaseModel):
    t: float
    event: str
    detail: Dict[str, Any] = Field(default_factory=dict)


class ScenarioResult(BaseModel):
    """Everything one scenario run produces: timeline, metric rows, M2M trace, checks."""

    scenario_id: str
    timeline: List[TimelineEvent] = Field(default_factory=list)
    metrics: List[Dict[str, Any]] = Field(default_factory=list)
    m2m_lines: List[str] = Field(default_factory=list)
    checks: Dict[str, bool] = Field(default_factory=dict)
    summary: Dict[str, Any] = Field(default_factory=dict)
    m2m_log_path: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failed_checks(self) -> List[str]:
        return [name for name, ok in self.checks.items() if not ok]
