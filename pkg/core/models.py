from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, model_validator

StudyCommand = Literal[
    "rn-cdf", "rn-quantile", "rn-curve", "rate", "rate-curve", "fidelity", "converge", "locc-plan", "locc-clone"
]


class DistributionFile(BaseModel):
    """Distribution JSON: {"p": [0.6, 0.4]}."""

    p: list[float] = Field(..., min_length=1)


class StateFile(BaseModel):
    """State JSON: row-major real and imaginary parts of the coefficient matrix."""

    rows: int = Field(..., gt=0)
    cols: int = Field(..., gt=0)
    re: list[float]
    im: list[float] = Field(default_factory=list, description="Imaginary parts; empty means a real state")

    @model_validator(mode="after")
    def _check_shape(self) -> "StateFile":
        size = self.rows * self.cols
        if len(self.re) != size or (self.im and len(self.im) != size):
            raise ValueError(f"expected {size} amplitudes for a {self.rows}x{self.cols} state")
        return self


class Step(BaseModel):
    command: StudyCommand
    inputs: dict[str, Path] = Field({}, description="Distribution or state files by role (P, Q, psi, phi)")
    params: dict[str, Any] = Field({}, description="Numeric parameters of the calculator")
    output: Optional[str] = Field(None, description="CSV file name, relative to the output directory")


class Study(BaseModel):
    name: str
    sequence: list[Step]


class ExecutionPlan(BaseModel):
    """Defines a multi-study execution plan."""
    name: str
    mode: Literal["sequential", "parallel", "async"] = "sequential"
    study_files: list[Path] = Field(..., description="List of paths to study YAML files to execute.")
