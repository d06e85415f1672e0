"""Run configuration: TOML in, fully resolved pydantic model out.

Unknown keys anywhere are errors.  ``resolve`` fills every default that
depends on other blocks (tau_neg, exponents, presets) so that the dumped
configuration is complete.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .costs import CostSpecG, CostSpecH, GapG, IndicatorH, JthG, LinearG, PowerH, TableH
from .errors import ConfigError, SpoError
from .grid import (
    GridDomain,
    PotentialField,
    SupportRegion,
    build_domain,
    delta_family,
    random_bump,
    rectangle_potential,
    square_well,
)
from .optimize import AdmissibleSet, OptimizerConfig

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

PRESETS = ("example-E-count", "example-LT", "example-jth", "example-gap")


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainBlock(_Block):
    d: Literal[1, 2, 3] = 1
    R: float = 8.0
    n: int = 1023


class SupportBlock(_Block):
    lower: list[float] = Field(default_factory=lambda: [-1.0])
    upper: list[float] = Field(default_factory=lambda: [1.0])


class PotentialBlock(_Block):
    family: Literal["zero", "square-well", "delta", "random-bump", "constant", "file", "table"] = "zero"
    depth: Optional[float] = None
    half_width: Optional[float] = None
    cell_average: Optional[bool] = None
    eps: Optional[float] = None
    seed: Optional[int] = None
    value: Optional[float] = None
    path: Optional[str] = None
    values: Optional[list[float]] = None


class SpectrumBlock(_Block):
    tau_neg: Optional[float] = None
    k_max: int = 64
    eps_mult: float = 1e-6
    phi_N: Optional[int] = None
    write_eigenvectors: bool = False


class RatiosBlock(_Block):
    p: Optional[float] = None
    q: Optional[float] = None


class CostBlock(_Block):
    family: Optional[Literal["h", "g"]] = None
    form: Optional[Literal["indicator", "power", "table", "jth", "gap"]] = None
    k: Optional[float] = None
    p: Optional[float] = None
    E: Optional[list[float]] = None
    j: Optional[int] = None
    N: Optional[int] = None
    t: Optional[list[float]] = None
    h: Optional[list[float]] = None
    weights: Optional[list[float]] = None
    M: Optional[float] = None
    c: Optional[float] = None


class AdmissibleBlock(_Block):
    lo: Optional[float] = None
    hi: Optional[float] = None
    rho: Optional[float] = None
    p: Optional[float] = None
    nonpositive: Optional[bool] = None


class OptimizerBlock(_Block):
    method: Optional[Literal["projected-descent", "annealing", "brute-force"]] = None
    max_iter: Optional[int] = None
    step0: Optional[float] = None
    backtracks: Optional[int] = None
    tol: Optional[float] = None
    ftol: Optional[float] = None
    patience: Optional[int] = None
    restarts: Optional[int] = None
    seed: Optional[int] = None
    steps: Optional[int] = None
    T0: Optional[float] = None
    T1: Optional[float] = None
    cells: Optional[list[int]] = None
    chains: Optional[int] = None


class VerifyBlock(_Block):
    family: Literal["random-bump"] = "random-bump"
    count: int = 50
    seed: int = 0
    max_bumps: int = 4
    depth_range: list[float] = Field(default_factory=lambda: [0.5, 5.0])
    width_range: list[float] = Field(default_factory=lambda: [0.1, 0.5])
    p: Optional[list[float]] = None
    slack: float = 0.05


class ConvergeBlock(_Block):
    refine_n: Optional[list[int]] = None
    box_R: Optional[list[float]] = None
    frequencies: list[int] = Field(default_factory=lambda: [2, 4, 8, 16, 32])
    amplitude: float = 1.0


class RunConfig(_Block):
    preset: Optional[Literal["example-E-count", "example-LT", "example-jth", "example-gap"]] = None
    output: Optional[str] = None
    seed: Optional[int] = None
    domain: DomainBlock = Field(default_factory=DomainBlock)
    support: SupportBlock = Field(default_factory=SupportBlock)
    potential: PotentialBlock = Field(default_factory=PotentialBlock)
    spectrum: SpectrumBlock = Field(default_factory=SpectrumBlock)
    ratios: RatiosBlock = Field(default_factory=RatiosBlock)
    cost: Optional[CostBlock] = None
    admissible: Optional[AdmissibleBlock] = None
    optimizer: Optional[OptimizerBlock] = None
    verify: Optional[VerifyBlock] = None
    converge: Optional[ConvergeBlock] = None

    @model_validator(mode="after")
    def _dims(self):
        d = self.domain.d
        if len(self.support.lower) != d or len(self.support.upper) != d:
            raise ValueError(f"support bounds must have {d} entries")
        return self


def _preset_blocks(name: str, d: int) -> tuple[dict, dict, dict]:
    p = d / 2 + 1
    if name == "example-E-count":
        return ({"family": "h", "form": "indicator", "E": [-0.6, -0.2], "k": 1e-3, "p": p},
                {"lo": -1.0, "hi": 1.0, "nonpositive": False},
                {"method": "annealing", "cells": [8] * d, "steps": 2000, "chains": 1})
    if name == "example-LT":
        return ({"family": "h", "form": "power", "k": 0.01, "p": p},
                {"rho": 1.0, "p": p, "nonpositive": True},
                {"method": "projected-descent", "restarts": 20})
    if name == "example-jth":
        return ({"family": "g", "form": "jth", "j": 1, "N": 2, "k": 0.01, "p": p},
                {"lo": -1.0, "hi": 0.0, "nonpositive": True},
                {"method": "projected-descent", "restarts": 1})
    if name == "example-gap":
        return ({"family": "g", "form": "gap", "N": 2, "k": 0.01, "p": p},
                {"lo": -1.0, "hi": 0.0, "nonpositive": True},
                {"method": "projected-descent", "restarts": 1})
    raise ConfigError(f"unknown preset {name!r}")


_OPT_DEFAULTS = OptimizerConfig()


def resolve(cfg: RunConfig, seed: int | None = None, output: str | None = None) -> RunConfig:
    """Return a copy with every implicit default written out."""
    data = cfg.model_dump()
    d = cfg.domain.d
    dom = _domain(cfg)
    if output is not None:
        data["output"] = output
    if seed is not None:
        data["seed"] = seed
    if data["seed"] is None:
        data["seed"] = 0

    pot = data["potential"]
    if pot["family"] in ("square-well", "delta") and pot["cell_average"] is None:
        pot["cell_average"] = True
    if pot["family"] == "square-well":
        pot["depth"] = 1.0 if pot["depth"] is None else pot["depth"]
        pot["half_width"] = 1.0 if pot["half_width"] is None else pot["half_width"]
    if pot["family"] == "random-bump" and pot["seed"] is None:
        pot["seed"] = data["seed"]

    sp = data["spectrum"]
    if sp["tau_neg"] is None:
        sp["tau_neg"] = dom.default_tau_neg()

    if cfg.preset is not None:
        cost0, adm0, opt0 = _preset_blocks(cfg.preset, d)
        for key, base in (("cost", cost0), ("admissible", adm0), ("optimizer", opt0)):
            given = {k: v for k, v in (data[key] or {}).items() if v is not None}
            data[key] = {**base, **given}

    if data["cost"] is not None:
        c = data["cost"]
        c["p"] = d / 2 + 1 if c.get("p") is None else c["p"]
        if c.get("family") is None:
            c["family"] = "g" if c.get("form") in ("jth", "gap") else "h"
        if c.get("family") == "g" and c.get("N") is None:
            c["N"] = max(2, c.get("j") or 1)
    if sp["phi_N"] is None:
        sp["phi_N"] = (data["cost"] or {}).get("N") or 4

    r = data["ratios"]
    r["p"] = (data["cost"] or {}).get("p") or d / 2 + 1 if r["p"] is None else r["p"]
    r["q"] = d / 2 if r["q"] is None else r["q"]

    if data["admissible"] is not None:
        a = data["admissible"]
        a["nonpositive"] = bool(a.get("nonpositive"))
        if a.get("rho") is not None and a.get("p") is None:
            a["p"] = (data["cost"] or {}).get("p", d / 2 + 1)

    if data["optimizer"] is not None or data["cost"] is not None:
        o = data["optimizer"] or {}
        for name in ("method", "max_iter", "step0", "backtracks", "tol", "ftol", "patience",
                     "restarts", "steps", "T0", "T1"):
            if o.get(name) is None:
                o[name] = getattr(_OPT_DEFAULTS, name)
        if o.get("seed") is None or seed is not None:
            o["seed"] = data["seed"]
        if o.get("cells") is None:
            o["cells"] = [8] * d
        if o.get("chains") is None:
            o["chains"] = 1
        data["optimizer"] = o
    if data["verify"] is not None and data["verify"]["p"] is None:
        data["verify"]["p"] = [d / 2 + 1]
    if data["converge"] is not None:
        cv = data["converge"]
        if cv["refine_n"] is None:
            n = cfg.domain.n
            cv["refine_n"] = [(n + 1) // 4 - 1, (n + 1) // 2 - 1, n]
        if cv["box_R"] is None:
            cv["box_R"] = [cfg.domain.R, 2 * cfg.domain.R, 4 * cfg.domain.R]
    try:
        out = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    if out.cost is not None and (out.cost.M is None or out.cost.c is None):
        spec = build_cost(out)
        out = out.model_copy(update={"cost": out.cost.model_copy(update={"M": spec.M, "c": spec.c})})
    return out


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw)


def parse_config(raw: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


# ----------------------------------------------------------------------------
# builders: config blocks -> domain objects
# ----------------------------------------------------------------------------

def _domain(cfg: RunConfig) -> GridDomain:
    try:
        return build_domain(cfg.domain.d, cfg.domain.R, cfg.domain.n)
    except SpoError as exc:
        raise ConfigError(f"[domain] {exc}") from exc


def build_setting(cfg: RunConfig) -> tuple[GridDomain, SupportRegion]:
    dom = _domain(cfg)
    try:
        K = SupportRegion(tuple(cfg.support.lower), tuple(cfg.support.upper))
        K.mask(dom)
    except SpoError as exc:
        raise ConfigError(f"[support] {exc}") from exc
    return dom, K


def build_potential(cfg: RunConfig, dom: GridDomain, K: SupportRegion) -> PotentialField:
    from .io import load_potential

    b = cfg.potential
    try:
        if b.family == "zero":
            return PotentialField.zeros(dom, K)
        if b.family == "square-well":
            return square_well(dom, K, b.depth, b.half_width, bool(b.cell_average))
        if b.family == "delta":
            if b.eps is None:
                raise ConfigError("[potential] delta family needs eps")
            return delta_family(dom, K, b.eps)
        if b.family == "random-bump":
            return random_bump(dom, K, int(b.seed))
        if b.family == "constant":
            if b.value is None:
                raise ConfigError("[potential] constant family needs value")
            return rectangle_potential(dom, K, b.value, cell_average=bool(b.cell_average))
        if b.family == "table":
            if b.values is None or len(b.values) != dom.size:
                raise ConfigError(f"[potential] table needs {dom.size} values")
            return PotentialField(b.values, dom, K)
        if b.family == "file":
            V = load_potential(b.path)
            if V.domain != dom:
                raise ConfigError(f"[potential] file grid {V.domain} differs from [domain] {dom}")
            return V
    except ConfigError:
        raise
    except SpoError as exc:
        raise ConfigError(f"[potential] {exc}") from exc
    raise ConfigError(f"[potential] unknown family {b.family}")


def build_cost(cfg: RunConfig) -> CostSpecH | CostSpecG:
    c = cfg.cost
    if c is None:
        raise ConfigError("a [cost] block (or a preset) is required")
    d = cfg.domain.d
    kw = {"M": c.M, "c": c.c}
    try:
        if c.k is None:
            raise ConfigError("[cost] k is required")
        if c.family == "h":
            if c.form == "indicator":
                if not c.E or len(c.E) != 2:
                    raise ConfigError("[cost] indicator form needs E = [lo, hi]")
                h = IndicatorH(*c.E)
            elif c.form == "power":
                h = PowerH(c.p - d / 2)
            elif c.form == "table":
                if c.t is None or c.h is None:
                    raise ConfigError("[cost] table form needs t and h lists")
                h = TableH(tuple(c.t), tuple(c.h))
            else:
                raise ConfigError(f"[cost] form {c.form!r} does not belong to family h")
            return CostSpecH(h, c.k, c.p, d, **kw)
        if c.form == "jth":
            g = JthG(c.j if c.j is not None else 1)
        elif c.form == "gap":
            g = GapG()
        elif c.form == "table":
            if c.weights is None:
                raise ConfigError("[cost] g table form needs weights")
            g = LinearG(tuple(c.weights))
        else:
            raise ConfigError(f"[cost] form {c.form!r} does not belong to family g")
        return CostSpecG(g, c.N, c.k, c.p, d, **kw)
    except ConfigError:
        raise
    except (SpoError, TypeError, ValueError) as exc:
        raise ConfigError(f"[cost] {exc}") from exc


def build_admissible(cfg: RunConfig, K: SupportRegion) -> AdmissibleSet:
    a = cfg.admissible
    if a is None:
        return AdmissibleSet(K)
    try:
        return AdmissibleSet(K, a.lo, a.hi, a.rho, a.p, bool(a.nonpositive))
    except SpoError as exc:
        raise ConfigError(f"[admissible] {exc}") from exc


def build_optimizer(cfg: RunConfig, threads: int = 1) -> OptimizerConfig:
    o = cfg.optimizer
    try:
        return OptimizerConfig(
            method=o.method, max_iter=o.max_iter, step0=o.step0, backtracks=o.backtracks, tol=o.tol,
            ftol=o.ftol, patience=o.patience, restarts=o.restarts, seed=o.seed, steps=o.steps,
            T0=o.T0, T1=o.T1, cells=tuple(o.cells), k_max=cfg.spectrum.k_max,
            eps_mult=cfg.spectrum.eps_mult, tau_neg=cfg.spectrum.tau_neg, threads=threads,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[optimizer] {exc}") from exc
