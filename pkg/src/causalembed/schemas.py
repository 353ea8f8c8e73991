"""Pydantic models for the JSON documents read by the CLI and the HTTP service."""
from __future__ import annotations

from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Entry = Union[float, list[float], str]


def _numeric(v, what: str):
    try:
        np.asarray(v, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValueError(f"{what} must be a nested array of numbers or [re, im] pairs") from e
    return v


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FactorModel(Strict):
    label: str = Field(min_length=1)
    dim: int = Field(ge=1)
    vacuum: bool = False


class ChannelModel(Strict):
    name: str = ""
    input: list[FactorModel]
    output: list[FactorModel]
    choi: Optional[list] = None
    kraus: Optional[list[list]] = None

    @field_validator("choi")
    @classmethod
    def _choi(cls, v):
        return v if v is None else _numeric(v, "choi")

    @field_validator("kraus")
    @classmethod
    def _kraus(cls, v):
        if v is None:
            return v
        for k in v:
            _numeric(k, "each Kraus operator")
        return v

    @model_validator(mode="after")
    def _one_form(self):
        if (self.choi is None) == (self.kraus is None):
            raise ValueError("give exactly one of choi or kraus")
        labels = [f.label for f in self.input + self.output]
        if len(set(labels)) != len(labels):
            raise ValueError("factor labels must be distinct")
        return self


class PartyModel(Strict):
    name: str = Field(min_length=1)
    d_in: int = Field(ge=1)
    d_out: int = Field(ge=1)
    d_setting: int = Field(default=1, ge=1)
    d_outcome: int = Field(default=1, ge=1)
    in_label: Optional[str] = None
    out_label: Optional[str] = None


class ProcessModel(Strict):
    name: str = ""
    parties: list[PartyModel] = Field(min_length=1)
    W: list
    pure: Optional[bool] = None

    @field_validator("W")
    @classmethod
    def _w(cls, v):
        return _numeric(v, "W")

    @model_validator(mode="after")
    def _dims(self):
        names = [p.name for p in self.parties]
        if len(set(names)) != len(names):
            raise ValueError("party names must be distinct")
        dim = 1
        for p in self.parties:
            dim *= p.d_in * p.d_out
        shape = np.asarray(self.W, dtype=float).shape
        if not shape or shape[0] != dim:
            raise ValueError(f"W has leading dimension {shape[0] if shape else 0}, the parties need {dim}")
        return self


class SpacetimeModel(Strict):
    frame: Optional[Literal["minkowski"]] = None
    points: Optional[dict[str, list[float]]] = None
    minkowski: Optional[dict[str, list[float]]] = None
    events: Optional[list[str]] = None
    order: Optional[list[list[str]]] = None
    relations: Optional[list[list[str]]] = None

    @property
    def coordinates(self):
        return self.points if self.frame == "minkowski" else self.minkowski

    @property
    def event_names(self) -> set:
        return set(self.coordinates or {}) | set(self.events or [])

    @model_validator(mode="after")
    def _one(self):
        if (self.frame is None) != (self.points is None):
            raise ValueError("frame 'minkowski' and points go together")
        forms = [self.points is not None, self.minkowski is not None, self.events is not None]
        if sum(forms) != 1:
            raise ValueError("give exactly one of minkowski points or events with an order")
        if self.order is not None and self.relations is not None:
            raise ValueError("give the order once")
        if self.coordinates is not None:
            lens = {len(v) for v in self.coordinates.values()}
            if len(lens) > 1 or 0 in lens or 1 in lens:
                raise ValueError("coordinates need a time and at least one space component, all of equal length")
        ev = set(self.events or [])
        for i, r in enumerate(self.order or self.relations or []):
            if len(r) != 2 or not set(r) <= ev:
                raise ValueError(f"order pair {i} must be a pair of known events")
        return self


class ChartModel(Strict):
    agent: str
    velocity: float = 0.0
    axis: int = 0
    coords: Optional[dict[str, float]] = None


class EmbeddingModel(Strict):
    spacetime: SpacetimeModel
    embedding: dict[str, list[str]]
    charts: list[ChartModel] = []

    @model_validator(mode="after")
    def _points(self):
        events = self.spacetime.event_names
        for k, pts in self.embedding.items():
            if not pts:
                raise ValueError(f"region of {k!r} is empty")
            bad = [p for p in pts if p not in events]
            if bad:
                raise ValueError(f"region of {k!r} uses unknown events {bad}")
        return self


class SignallingModel(Strict):
    systems: list[str]
    edges: list[list[list[str]]]

    @model_validator(mode="after")
    def _edges(self):
        for i, e in enumerate(self.edges):
            if len(e) != 2 or not e[0] or not e[1]:
                raise ValueError(f"edge {i} must be [sources, targets] with both non-empty")
        return self


class GraphModel(Strict):
    nodes: list[str] = []
    edges: list[list[str]] = []
    dot: Optional[str] = None


class DistributionModel(Strict):
    P: list

    @field_validator("P")
    @classmethod
    def _p(cls, v):
        arr = np.asarray(v, dtype=object)
        if arr.ndim != 4:
            raise ValueError("P must be indexed P[x][y][a][b]")
        for x in arr.ravel():
            if isinstance(x, str):
                from fractions import Fraction
                try:
                    Fraction(x)
                except (ValueError, ZeroDivisionError) as e:
                    raise ValueError(f"{x!r} is not a rational number") from e
            elif not isinstance(x, (int, float)):
                raise ValueError("entries must be numbers or rational strings")
        return v


class StepModel(Strict):
    op: Literal["sequential", "parallel", "loop", "link"]
    inputs: list[str] = Field(min_length=1)
    wires: list[list[str]] = []
    name: str

    @model_validator(mode="after")
    def _arity(self):
        if self.op in ("sequential", "parallel") and len(self.inputs) != 2:
            raise ValueError(f"{self.op} takes two inputs")
        if self.op == "loop" and (len(self.inputs) != 1 or len(self.wires) != 1):
            raise ValueError("loop takes one input and one wire")
        for w in self.wires:
            if len(w) != 2:
                raise ValueError("wires are [output label, input label] pairs")
        return self


class ComposeModel(Strict):
    channels: dict[str, ChannelModel]
    steps: list[StepModel] = Field(min_length=1)
    result: str


class RoutingModel(Strict):
    channel: ChannelModel
    embedding: EmbeddingModel
    routing: dict[str, str]


class SwitchModel(Strict):
    alpha: Entry = 0.7071
    beta: Entry = 0.7071
    psi: list = [1, 0]
    U: Union[str, list] = "X"
    V: Union[str, list] = "Z"


class FlagsModel(Strict):
    tol: float = Field(default=1e-9, gt=0)
    seed: int = 0
    max_subset: int = Field(default=2, ge=1)


class RequestModel(Strict):
    """Body of a service request: the command's input documents plus flags."""
    inputs: dict
    flags: FlagsModel = FlagsModel()


DOCUMENTS = {
    "process": ProcessModel, "channel": ChannelModel, "embedding": EmbeddingModel, "signalling": SignallingModel,
    "graph": GraphModel, "routing": RoutingModel, "distribution": DistributionModel, "compose": ComposeModel,
    "switch": SwitchModel, "request": RequestModel,
}


def json_schemas() -> dict:
    """Document name -> JSON Schema of that input document."""
    return {name: m.model_json_schema() for name, m in DOCUMENTS.items()}


if __name__ == "__main__":
    import json
    import sys
    from pathlib import Path

    out = Path(sys.argv[1] if len(sys.argv) > 1 else "docs/schema")
    out.mkdir(parents=True, exist_ok=True)
    for name, schema in json_schemas().items():
        (out / f"{name}.schema.json").write_text(json.dumps(schema, sort_keys=True, indent=2) + "\n")
        print(out / f"{name}.schema.json")
