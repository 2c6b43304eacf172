from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ValueType(str, Enum):
    INTEGER = "integer"
    DECIMAL = "decimal"
    STRING = "string"
    BOOLEAN = "boolean"

    @property
    def is_numeric(self) -> bool:
        return self in (ValueType.INTEGER, ValueType.DECIMAL)


class RoleHint(str, Enum):
    NORMAL = "normal"
    INIT = "init"
    RELEASE = "release"


class ApiParameter(BaseModel):
    """One input argument of a device API function."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(min_length=1)
    value_type: ValueType
    range: Optional[Tuple[float, float]] = None
    units: Optional[str] = None
    description: str = ""

    @model_validator(mode="after")
    def _check_range(self) -> "ApiParameter":
        if self.range is not None:
            if not self.value_type.is_numeric:
                raise ValueError(
                    f"parameter {self.name}: range given for non-numeric type {self.value_type.value}"
                )
            if self.range[0] > self.range[1]:
                raise ValueError(f"parameter {self.name}: range min > max")
        return self


class ApiReturn(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    value_type: str
    description: str = ""


class ApiFunction(BaseModel):
    """A callable device function; its description is the retrieval text."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(min_length=1)
    description: str = Field(min_length=1)
    parameters: List[ApiParameter] = Field(default_factory=list)
    returns: Optional[ApiReturn] = None
    role_hint: RoleHint = RoleHint.NORMAL
    notes: Optional[str] = None

    @field_validator("description")
    @classmethod
    def _description_not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("description must not be blank")
        return value

    @model_validator(mode="after")
    def _unique_parameters(self) -> "ApiFunction":
        seen = set()
        for param in self.parameters:
            if param.name in seen:
                raise ValueError(
                    f"function {self.name}: duplicate parameter name '{param.name}'"
                )
            seen.add(param.name)
        return self

    @property
    def arity(self) -> int:
        return len(self.parameters)


class DeviceApiProfile(BaseModel):
    """JSON-backed description of everything one device can do."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    device_id: str = Field(min_length=1)
    device_type: str = ""
    functions: List[ApiFunction] = Field(default_factory=list)
    version: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _unique_functions(self) -> "DeviceApiProfile":
        seen = set()
        for function in self.functions:
            if function.name in seen:
                raise ValueError(f"duplicate function name '{function.name}'")
            seen.add(function.name)
        return self

    def function(self, name: str) -> Optional[ApiFunction]:
        return next((f for f in self.functions if f.name == name), None)

    def function_with_role(self, role: RoleHint) -> Optional[ApiFunction]:
        return next((f for f in self.functions if f.role_hint == role), None)


class ApiChunk(BaseModel):
    """Retrieval unit: exactly one function of one device."""

    model_config = ConfigDict(frozen=True)

    function: ApiFunction
    source_device: str
    chunk_text: str
