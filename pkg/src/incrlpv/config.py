"""Strict configuration files and controller persistence.

Configuration is TOML with the blocks ``[plant]``, ``[weights]``,
``[scheduling]``, ``[synthesis]``, ``[scenario]`` and ``[bode]``. Unknown
keys anywhere are rejected. Controllers are stored as indented JSON with a
format-version field and explicit matrix dimensions; floats are written with
round-trip precision so reloaded controllers are bit-identical.
"""

from __future__ import annotations

import json
import os
import sys
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .duffing import DuffingParams
from .genplant import WeightSet
from .models import ModelError, RationalSiso, SchedulingBox
from .simulation import Scenario
from .synthesis import LpvController, SynthesisOptions

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "Config",
    "load_config",
    "default_config",
    "parse_config",
    "ControllerFile",
    "save_controller",
    "load_controller",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration or controller file (maps to exit code 2)."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PlantBlock(_Strict):
    preset: Literal["duffing"] = "duffing"
    m: float = Field(1.0, gt=0)
    k1: float = 0.5
    k2: float = 5.0
    d: float = 0.2
    v_max: float = Field(10.0, gt=0)
    u_max: float = Field(50.0, gt=0)


class TransferBlock(_Strict):
    num: list[float] = Field(min_length=1)
    den: list[float] = Field(min_length=1)


class WeightsBlock(_Strict):
    W1: TransferBlock
    W2: TransferBlock
    W3: float


class SchedulingBlock(_Strict):
    lower: list[float] = [0.0]
    upper: list[float] = [2.0]


class SynthesisBlock(_Strict):
    mode: Literal["l2", "li2"] = "li2"
    lyapunov: Literal["constant", "x-varying"] = "x-varying"
    backoff: float = Field(1.05, ge=1.0)
    eps: float = Field(1e-8, gt=0)
    solver: str = "CLARABEL"


class ScenarioBlock(_Strict):
    ref_levels: list[float] = [0.0, 0.3]
    ref_times: list[float] = [0.0, 5.0]
    disturbance: float = 0.0
    disturbance_start: float = Field(0.0, ge=0)
    t_end: float = Field(40.0, gt=0)
    dt: float = Field(1e-3, gt=0)
    x0: list[float] = [0.0, 0.0]


class BodeBlock(_Strict):
    omega_min: float = Field(1e-4, gt=0)
    omega_max: float = Field(1e3, gt=0)
    points: int = Field(141, ge=2)
    rho: list[float] = [0.0, 1.0, 2.0]

    @model_validator(mode="after")
    def _range(self):
        if self.omega_max <= self.omega_min:
            raise ValueError("omega_max must exceed omega_min")
        return self


class Config(_Strict):
    """Validated configuration; the ``weights`` block is mandatory."""

    plant: PlantBlock = PlantBlock()
    weights: WeightsBlock
    scheduling: SchedulingBlock = SchedulingBlock()
    synthesis: SynthesisBlock = SynthesisBlock()
    scenario: ScenarioBlock = ScenarioBlock()
    bode: BodeBlock = BodeBlock()

    def duffing_params(self) -> DuffingParams:
        return DuffingParams(**self.plant.model_dump(exclude={"preset"}))

    def weight_set(self) -> WeightSet:
        w = self.weights
        return WeightSet(RationalSiso(w.W1.num, w.W1.den), RationalSiso(w.W2.num, w.W2.den),
                         w.W3)

    def box(self) -> SchedulingBox:
        return SchedulingBox(self.scheduling.lower, self.scheduling.upper)

    def synthesis_options(self) -> SynthesisOptions:
        s = self.synthesis
        return SynthesisOptions(lyapunov=s.lyapunov, backoff=s.backoff, eps=s.eps,
                                solver=s.solver)

    def scenario_obj(self, disturbance: float | None = None) -> Scenario:
        data = self.scenario.model_dump()
        if disturbance is not None:
            data["disturbance"] = disturbance
        return Scenario(**data)

    def omega_grid(self) -> np.ndarray:
        b = self.bode
        return np.logspace(np.log10(b.omega_min), np.log10(b.omega_max), b.points)


def parse_config(data: dict) -> Config:
    """Validate an already parsed mapping; raises :class:`ConfigError`."""
    try:
        cfg = Config.model_validate(data)
        # construct the domain objects once so their checks surface here
        cfg.weight_set(), cfg.box(), cfg.synthesis_options(), cfg.scenario_obj()
        cfg.duffing_params()
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc
    except (ValueError, ModelError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.box().n_rho != 1:
        raise ConfigError("the Duffing preset is scheduled by a single variable")
    return cfg


def _describe(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "invalid configuration:\n  " + "\n  ".join(lines)


def load_config(path: str | os.PathLike) -> Config:
    """Read and validate a TOML configuration file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed configuration {path}: {exc}") from exc
    return parse_config(data)


# --------------------------------------------------------------------------
# Controller persistence
# --------------------------------------------------------------------------


class ControllerFile(_Strict):
    """In-memory view of a stored controller."""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    mode: Literal["l2", "li2"]
    gamma: float
    controller: LpvController


def _matrix(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=float)
    return {"rows": m.shape[0], "cols": m.shape[1], "data": [float(v) for v in m.ravel()]}


def _unmatrix(obj: dict, name: str) -> np.ndarray:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
        if set(obj) != {"rows", "cols", "data"} or len(data) != rows * cols:
            raise ValueError
        return np.array(data, dtype=float).reshape(rows, cols)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed matrix {name!r} in controller file") from exc


def save_controller(path: str | os.PathLike, mode: str, gamma: float,
                    k: LpvController) -> None:
    """Write a controller file (JSON text, explicit dimensions)."""
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "incremental-lpv" if mode == "li2" else "lpv",
        "mode": mode,
        "gamma": float(gamma),
        "box": {"lower": [float(v) for v in k.box.lower],
                "upper": [float(v) for v in k.box.upper]},
        "dims": {"states": k.n_states, "inputs": k.n_inputs, "outputs": k.n_outputs,
                 "vertices": len(k.Ak)},
        "Bk": _matrix(k.Bk),
        "Dk": _matrix(k.Dk),
        "Ak": [_matrix(a) for a in k.Ak],
        "Ck": [_matrix(c) for c in k.Ck],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_controller(path: str | os.PathLike) -> ControllerFile:
    """Read a controller file written by :func:`save_controller`."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read controller file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"controller file {path} is not valid JSON: {exc}") from exc
    expected = {"format_version", "kind", "mode", "gamma", "box", "dims", "Bk", "Dk", "Ak", "Ck"}
    if not isinstance(doc, dict) or set(doc) != expected:
        raise ConfigError(f"controller file must contain exactly the keys {sorted(expected)}")
    if doc["format_version"] != FORMAT_VERSION:
        raise ConfigError(f"unsupported controller format version {doc['format_version']}")
    try:
        box = SchedulingBox(doc["box"]["lower"], doc["box"]["upper"])
        k = LpvController(tuple(_unmatrix(a, "Ak") for a in doc["Ak"]),
                          tuple(_unmatrix(c, "Ck") for c in doc["Ck"]),
                          _unmatrix(doc["Bk"], "Bk"), _unmatrix(doc["Dk"], "Dk"), box)
        dims = doc["dims"]
        if (dims["states"], dims["inputs"], dims["outputs"], dims["vertices"]) != (
                k.n_states, k.n_inputs, k.n_outputs, len(k.Ak)):
            raise ConfigError("controller dimensions do not match the stored matrices")
        return ControllerFile(mode=doc["mode"], gamma=doc["gamma"], controller=k)
    except (KeyError, TypeError, ModelError) as exc:
        raise ConfigError(f"malformed controller file {path}: {exc}") from exc
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc


def default_config() -> Config:
    """Built-in Duffing case-study configuration."""
    return parse_config({
        "weights": {"W1": {"num": [0.5012, 2.506], "den": [1.0, 2.506e-4]},
                    "W2": {"num": [10.0, 800.0], "den": [1.0, 8e4]},
                    "W3": 1.5},
    })
