"""Experiment configuration: a JSON document validated field by field.

Every error names the offending field as a dotted path (``domain.n``) and,
for syntax errors, the line and column of the JSON document.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError, MPLabError
from .functional import EnergyFunctional, Nonlinearity
from .grid import GridDomain, build_domain
from .polarization import HalfSpace

__all__ = ["ExperimentConfig", "load_config", "parse_config"]


class FieldError(ConfigError):
    def __init__(self, path: str, message: str, line: int | None = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.field = path
        self.line = line

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["field"] = self.field
        if self.line is not None:
            d["line"] = self.line
        return d


@dataclass
class DomainBlock:
    shape: str = "interval"
    n: int = 129
    extent: float = 2.0


@dataclass
class NonlinearityBlock:
    kind: str = "power"
    p: float = 4.0
    lam: float = 0.0
    table_s: list | None = None
    table_f: list | None = None


@dataclass
class PathBlock:
    m: int = 32
    iters: int = 200
    stage_iters: int = 50
    step_budget: float | None = None


@dataclass
class ScheduleBlock:
    n0: int | None = None
    n_max: int = 40
    s: float | None = None


@dataclass
class ShadowBlock:
    epsilon: float = 1e-3
    delta: float = 0.1


@dataclass
class ToleranceBlock:
    slope: float = 1e-6
    cauchy: float = 1e-6
    certificate_slack: float = 1e-10


@dataclass
class ExperimentConfig:
    domain: DomainBlock = field(default_factory=DomainBlock)
    nonlinearity: NonlinearityBlock = field(default_factory=NonlinearityBlock)
    halfspace: str = "x<=0"
    path: PathBlock = field(default_factory=PathBlock)
    schedule: ScheduleBlock = field(default_factory=ScheduleBlock)
    shadow: ShadowBlock = field(default_factory=ShadowBlock)
    tolerances: ToleranceBlock = field(default_factory=ToleranceBlock)
    rearrange_k: int = 500
    seed: int = 0
    output_dir: str = "mplab-out"

    def to_dict(self) -> dict:
        d = asdict(self)
        nl = d.pop("nonlinearity")
        nl["lambda"] = nl.pop("lam")
        table = {"s": nl.pop("table_s"), "f": nl.pop("table_f")}
        if table["s"] is not None:
            nl["table"] = table
        d["nonlinearity"] = nl
        d["rearrange"] = {"k": d.pop("rearrange_k")}
        d["output"] = {"dir": d.pop("output_dir")}
        return d

    # builders -------------------------------------------------------------

    def build_domain(self) -> GridDomain:
        return _wrap("domain", lambda: build_domain(self.domain.shape, self.domain.n, self.domain.extent))

    def build_nonlinearity(self) -> Nonlinearity:
        nl = self.nonlinearity
        if nl.kind == "power":
            return _wrap("nonlinearity.p", lambda: Nonlinearity.power(nl.p))
        if nl.kind == "scaled_power":
            return _wrap("nonlinearity", lambda: Nonlinearity.scaled_power(nl.p, nl.lam))
        if nl.kind == "zero":
            return Nonlinearity.zero()
        return _wrap("nonlinearity.table", lambda: Nonlinearity.from_table(nl.table_s, nl.table_f))

    def build_functional(self) -> EnergyFunctional:
        dom = self.build_domain()
        nl = self.build_nonlinearity()
        return _wrap("nonlinearity.lambda", lambda: EnergyFunctional(dom, nl))

    def build_halfspace(self, domain: GridDomain) -> HalfSpace:
        H = _wrap("halfspace", lambda: HalfSpace.parse(self.halfspace, domain.h))
        if domain.dimension == 1 and H.direction != "x":
            raise FieldError("halfspace", f"direction {H.direction!r} needs a 2D domain")
        return H


def _wrap(path: str, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except MPLabError as exc:
        raise FieldError(path, str(exc)) from exc


_TYPES = {
    "int": (int,),
    "float": (int, float),
    "str": (str,),
}

# dotted path -> (type, optional, check, message)
_SCHEMA = {
    "domain.shape": ("str", False, lambda v: v in ("interval", "square", "disk", "disk-mask"), "unknown shape"),
    "domain.n": ("int", False, lambda v: v >= 3 and v % 2 == 1, "must be an odd integer >= 3"),
    "domain.extent": ("float", False, lambda v: v > 0, "must be positive"),
    "nonlinearity.kind": ("str", False, lambda v: v in ("power", "scaled_power", "zero", "table"), "unknown kind"),
    "nonlinearity.p": ("float", False, lambda v: v > 2, "must exceed 2"),
    "nonlinearity.lambda": ("float", False, None, None),
    "halfspace": ("str", False, None, None),
    "path.m": ("int", False, lambda v: v >= 2, "must be at least 2"),
    "path.iters": ("int", False, lambda v: v >= 0, "must be nonnegative"),
    "path.stage_iters": ("int", False, lambda v: v >= 0, "must be nonnegative"),
    "path.step_budget": ("float", True, lambda v: v > 0, "must be positive"),
    "schedule.n0": ("int", True, lambda v: v >= 1, "must be positive"),
    "schedule.n_max": ("int", False, lambda v: v >= 1, "must be positive"),
    "schedule.s": ("float", True, lambda v: v > 0, "must be positive"),
    "shadow.epsilon": ("float", False, lambda v: v > 0, "must be positive"),
    "shadow.delta": ("float", False, lambda v: v > 0, "must be positive"),
    "tolerances.slope": ("float", False, lambda v: v > 0, "must be positive"),
    "tolerances.cauchy": ("float", False, lambda v: v > 0, "must be positive"),
    "tolerances.certificate_slack": ("float", False, lambda v: v >= 0, "must be nonnegative"),
    "rearrange.k": ("int", False, lambda v: v >= 1, "must be positive"),
    "seed": ("int", False, lambda v: 0 <= v < 2**64, "must be an unsigned 64-bit integer"),
    "output.dir": ("str", False, None, None),
}
_BLOCKS = {"domain", "nonlinearity", "path", "schedule", "shadow", "tolerances", "rearrange", "output"}


def _locate(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for k, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return k
    return None


def parse_config(raw: dict, text: str = "") -> ExperimentConfig:
    """Validate a decoded JSON object and build an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise FieldError("", "top level must be a JSON object")
    flat = {}
    for key, val in raw.items():
        if key in _BLOCKS:
            if not isinstance(val, dict):
                raise FieldError(key, "must be an object", _locate(text, key))
            for sub, v in val.items():
                flat[f"{key}.{sub}"] = v
        else:
            flat[key] = val
    table = flat.pop("nonlinearity.table", None)
    for path, val in flat.items():
        leaf = path.rsplit(".", 1)[-1]
        if path not in _SCHEMA:
            raise FieldError(path, "unknown field", _locate(text, leaf))
        typ, optional, check, msg = _SCHEMA[path]
        if val is None and optional:
            continue
        if isinstance(val, bool) or not isinstance(val, _TYPES[typ]):
            raise FieldError(path, f"expected {typ}, got {type(val).__name__}", _locate(text, leaf))
        if check is not None and not check(val):
            raise FieldError(path, f"{msg} (got {val!r})", _locate(text, leaf))

    def get(path, default):
        return flat.get(path, default)

    d = ExperimentConfig()
    cfg = ExperimentConfig(
        domain=DomainBlock(get("domain.shape", d.domain.shape), get("domain.n", d.domain.n),
                           float(get("domain.extent", d.domain.extent))),
        nonlinearity=NonlinearityBlock(get("nonlinearity.kind", "power"), float(get("nonlinearity.p", 4.0)),
                                       float(get("nonlinearity.lambda", 0.0))),
        halfspace=get("halfspace", d.halfspace),
        path=PathBlock(get("path.m", 32), get("path.iters", 200), get("path.stage_iters", 50),
                       get("path.step_budget", None)),
        schedule=ScheduleBlock(get("schedule.n0", None), get("schedule.n_max", 40), get("schedule.s", None)),
        shadow=ShadowBlock(float(get("shadow.epsilon", 1e-3)), float(get("shadow.delta", 0.1))),
        tolerances=ToleranceBlock(float(get("tolerances.slope", 1e-6)), float(get("tolerances.cauchy", 1e-6)),
                                  float(get("tolerances.certificate_slack", 1e-10))),
        rearrange_k=get("rearrange.k", 500),
        seed=get("seed", 0),
        output_dir=get("output.dir", d.output_dir),
    )
    if cfg.nonlinearity.kind == "table":
        if not (isinstance(table, dict) and set(table) == {"s", "f"}):
            raise FieldError("nonlinearity.table", 'needs an object {"s": [...], "f": [...]}', _locate(text, "table"))
        cfg.nonlinearity.table_s = list(table["s"])
        cfg.nonlinearity.table_f = list(table["f"])
    elif table is not None:
        raise FieldError("nonlinearity.table", "only allowed with kind 'table'", _locate(text, "table"))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FieldError("", f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", exc.lineno) from exc
    return parse_config(raw, text)
