"""Scenario files: pydantic schemas and conversion to library objects."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .estimator import DescriptorModel
from .reduction import ReductionLimits
from .sets import LineZonotope, Strip, lz_box, lz_realspace, lz_zonotope

Matrix = list[list[float]]
Vector = list[float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SetSpec(_Strict):
    """One set. ``box`` uses ``half_widths``/``center``; ``zonotope`` uses ``G``/``c``;
    ``realspace`` uses ``n``; ``clg`` gives all six blocks."""

    type: Literal["box", "zonotope", "realspace", "clg"]
    half_widths: Vector | None = None
    center: Vector | None = None
    G: Matrix | None = None
    c: Vector | None = None
    n: int | None = None
    M: Matrix | None = None
    S: Matrix | None = None
    A: Matrix | None = None
    b: Vector | None = None

    @model_validator(mode="after")
    def _fields(self):
        need = {"box": ("half_widths",), "zonotope": ("G", "c"), "realspace": ("n",),
                "clg": ("M", "G", "c", "S", "A", "b")}[self.type]
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise ValueError(f"set of type {self.type!r} needs {', '.join(missing)}")
        return self

    def build(self) -> LineZonotope:
        if self.type == "box":
            h = np.asarray(self.half_widths, dtype=float)
            c = np.zeros(h.size) if self.center is None else np.asarray(self.center, dtype=float)
            return lz_box(c - h, c + h)
        if self.type == "zonotope":
            return lz_zonotope(np.asarray(self.G, dtype=float).reshape(len(self.c), -1), self.c)
        if self.type == "realspace":
            return lz_realspace(self.n)
        n = len(self.c)
        nb = len(self.b)

        def mat(a, rows):
            a = np.asarray(a, dtype=float)
            return a.reshape(rows, -1) if a.size else np.zeros((rows, 0))

        M, G = mat(self.M, n), mat(self.G, n)
        S = np.asarray(self.S, dtype=float).reshape(nb, M.shape[1]) if nb else np.zeros((0, M.shape[1]))
        A = np.asarray(self.A, dtype=float).reshape(nb, G.shape[1]) if nb else np.zeros((0, G.shape[1]))
        return LineZonotope(M, G, self.c, S, A, self.b)


class ModelSpec(_Strict):
    E: Matrix
    A: Matrix
    B: Matrix
    Bw: Matrix
    C: Matrix
    D: Matrix
    Dv: Matrix

    def build(self) -> DescriptorModel:
        return DescriptorModel(self.E, self.A, self.B, self.Bw, self.C, self.D, self.Dv)


class SinusoidInputs(_Strict):
    """``u_k[i] = offset[i] + sin_amp[i] sin(omega k) + cos_amp[i] cos(omega k)``."""

    type: Literal["sinusoid"]
    offset: Vector
    sin_amp: Vector
    cos_amp: Vector
    omega: float

    def build(self, K: int) -> list[np.ndarray]:
        o, s, c = (np.asarray(v, dtype=float) for v in (self.offset, self.sin_amp, self.cos_amp))
        return [o + s * np.sin(self.omega * k) + c * np.cos(self.omega * k) for k in range(K)]


class ExplicitInputs(_Strict):
    type: Literal["explicit"]
    values: Matrix

    def build(self, K: int) -> list[np.ndarray]:
        if len(self.values) < K:
            raise ValueError(f"need {K} input vectors, got {len(self.values)}")
        return [np.asarray(v, dtype=float) for v in self.values[:K]]


InputSpec = Annotated[Union[SinusoidInputs, ExplicitInputs], Field(discriminator="type")]


class LimitsSpec(_Strict):
    max_generators: int = Field(ge=0)
    max_constraints: int = Field(ge=0)

    def build(self) -> ReductionLimits:
        return ReductionLimits(self.max_generators, self.max_constraints)


class EstimatePayload(_Strict):
    model: ModelSpec
    x0: Vector
    steps: int = Field(ge=1, description="number of time steps K (k = 0..K-1)")
    inputs: InputSpec
    W: SetSpec
    V: SetSpec
    X0_lz: SetSpec
    X0_cz: SetSpec | None = None
    X_A: SetSpec | None = None
    limits: LimitsSpec
    realizations: int = Field(1, ge=1)


class AfdLimitsSpec(_Strict):
    """Generator cap as a multiple of the input-sequence dimension ``(N+1) n_u``."""

    generator_factor: float | None = Field(None, gt=0)
    max_constraints: int | None = Field(None, ge=0)


class AfdPayload(_Strict):
    models: list[ModelSpec] = Field(min_length=2)
    X0: SetSpec
    W: SetSpec
    V: SetSpec
    U: SetSpec
    u0: Vector
    N: int = Field(ge=0)
    eps: float = Field(gt=0)
    u_ref: Vector | None = None
    R: Vector | None = None
    limits: AfdLimitsSpec | None = None
    X_A: SetSpec | None = None
    n_samples: int = Field(500, ge=1)
    u: Vector | Literal["design", "reference"] = "design"


class StripSpec(_Strict):
    rho: Vector
    d: float
    sigma: float

    def build(self) -> Strip:
        return Strip(np.asarray(self.rho, dtype=float), self.d, self.sigma)


class ZonotopeStripDemo(_Strict):
    type: Literal["zonotope_strip"]
    name: str
    G: Matrix
    c: Vector
    strip: StripSpec
    samples: int = Field(2000, ge=0)


class StripStripDemo(_Strict):
    type: Literal["strip_strip"]
    name: str
    strips: list[StripSpec] = Field(min_length=1)
    samples: int = Field(2000, ge=0)
    sample_box: float = Field(2.0, gt=0)


class FeasibleSetsDemo(_Strict):
    type: Literal["feasible_sets"]
    name: str
    E: Matrix
    A: Matrix
    X0: SetSpec
    steps: int = Field(3, ge=1)
    samples: int = Field(2000, ge=0)


DemoSpec = Annotated[Union[ZonotopeStripDemo, StripStripDemo, FeasibleSetsDemo], Field(discriminator="type")]


class SetsDemoPayload(_Strict):
    demos: list[DemoSpec] = Field(default_factory=list)


class ScenarioFile(_Strict):
    kind: Literal["estimate", "afd-design", "afd-verify", "sets-demo"]
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str | None = None
    method: Literal["lz", "cz"] | None = None
    payload: dict

    def typed_payload(self):
        cls = {"estimate": EstimatePayload, "afd-design": AfdPayload, "afd-verify": AfdPayload,
               "sets-demo": SetsDemoPayload}[self.kind]
        return cls.model_validate(self.payload)


def load_scenario(path: str | Path) -> tuple[ScenarioFile, BaseModel]:
    """Parse and validate a scenario file; raises ``ValueError`` on any schema problem."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc}") from exc
    sc = ScenarioFile.model_validate(raw)
    return sc, sc.typed_payload()


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package (``est_6_1``, ``afd_4model``, ...)."""
    p = Path(__file__).parent / "scenarios" / f"{name}.json"
    if not p.exists():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return p


__all__ = ["ScenarioFile", "EstimatePayload", "AfdPayload", "SetsDemoPayload", "SetSpec",
           "ModelSpec", "load_scenario", "bundled_scenario"]
