from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.corpus import ApiFunction


class ArgumentSet(BaseModel):
    """Ordered (parameter name, canonical value) bindings."""

    model_config = ConfigDict(frozen=True)

    bindings: List[Tuple[str, str]] = Field(default_factory=list)

    @property
    def values(self) -> List[str]:
        return [value for _, value in self.bindings]

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.bindings]


class CallPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    function: ApiFunction
    args: ArgumentSet
    rendered_call: str


class CodeTemplate(BaseModel):
    model_config = ConfigDict(frozen=True)

    template_text: str
    name: str = "inline"


class RenderedProgram(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str
    call_plan: CallPlan
