"""Surface files, parameter files and run configuration.

A surface file is plain CSV.  Header rows are ``key,value`` pairs, then each
maturity contributes a ``T,r,y`` label row, one row of values, a ``K,vol``
label row and its quotes::

    spot,2311.1
    strikes,percent
    units,percent
    T,r,y
    0.2438,1.4198,1.5620
    K,vol
    80,33.90
    ...

``strikes`` is ``percent`` (of spot) or ``absolute``; ``units`` says whether
rates, dividend yields and vols are printed in percent or as decimals.
Numbers are kept as written (``Decimal``) so a file survives a
parse/serialize round trip character for character.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path

from .annealing import AnnealingSchedule
from .calibration import SurfaceSlice, VolSurface
from .errors import ConfigError, DomainError, ParseError, ValidationError
from .montecarlo import SimulationPlan
from .params import params_from_dict

HEADER_KEYS = ("spot", "currency", "quote_date", "strikes", "units")
STRIKE_MODES = ("percent", "absolute")
UNIT_MODES = ("percent", "decimal")
BUNDLED_PREFIX = "bundled:"
HUNDRED = Decimal(100)


@dataclass
class SliceBlock:
    maturity: Decimal
    rate: Decimal
    dividend: Decimal
    quotes: list = field(default_factory=list)  # (strike, vol) Decimal pairs


@dataclass
class SurfaceFile:
    """A surface file as written: numbers verbatim, conventions as flags."""

    spot: Decimal
    strikes: str = "absolute"
    units: str = "decimal"
    currency: str = ""
    quote_date: str = ""
    blocks: list = field(default_factory=list)

    def to_surface(self, label=""):
        scale = HUNDRED if self.units == "percent" else Decimal(1)
        slices = []
        for b in self.blocks:
            if self.strikes == "percent":
                ks = [float(k / HUNDRED * self.spot) for k, _ in b.quotes]
            else:
                ks = [float(k) for k, _ in b.quotes]
            vols = [float(v / scale) for _, v in b.quotes]
            slices.append(SurfaceSlice(float(b.maturity), float(b.rate / scale), float(b.dividend / scale), ks, vols))
        return VolSurface(float(self.spot), slices, label or self.currency)

    def to_text(self):
        lines = [f"spot,{self.spot}"]
        if self.currency:
            lines.append(f"currency,{self.currency}")
        if self.quote_date:
            lines.append(f"quote_date,{self.quote_date}")
        lines += [f"strikes,{self.strikes}", f"units,{self.units}"]
        for b in self.blocks:
            lines += ["T,r,y", f"{b.maturity},{b.rate},{b.dividend}", "K,vol"]
            lines += [f"{k},{v}" for k, v in b.quotes]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_surface(cls, surface: VolSurface):
        """Decimal, absolute-strike file whose numbers are the shortest exact reprs."""
        blocks = [
            SliceBlock(
                Decimal(repr(s.maturity)),
                Decimal(repr(s.rate)),
                Decimal(repr(s.dividend)),
                [(Decimal(repr(k)), Decimal(repr(v))) for k, v in zip(s.strikes, s.vols)],
            )
            for s in surface.slices
        ]
        return cls(Decimal(repr(surface.spot)), "absolute", "decimal", surface.label, "", blocks)


def _number(text, lineno):
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise ParseError(f"not a number: {text.strip()!r}", lineno) from None
    if not value.is_finite():
        raise ParseError(f"not a finite number: {text.strip()!r}", lineno)
    return value


def read_surface_text(text) -> SurfaceFile:
    """Parse surface-file text; see the module docstring for the grammar."""
    header = {}
    blocks = []
    state = "header"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if cells == ["T", "r", "y"]:
            state = "slice"
            continue
        if cells == ["K", "vol"]:
            if state != "quotes_label":
                raise ParseError("K,vol row must follow a T,r,y value row", lineno)
            state = "quotes"
            continue
        if state == "header":
            if len(cells) != 2 or cells[0] not in HEADER_KEYS:
                raise ParseError(f"expected a header row 'key,value' with key in {HEADER_KEYS}, got {line!r}", lineno)
            if cells[0] in header:
                raise ParseError(f"duplicate header key {cells[0]!r}", lineno)
            header[cells[0]] = (cells[1], lineno)
        elif state == "slice":
            if len(cells) != 3:
                raise ParseError(f"expected 'T,r,y' values, got {line!r}", lineno)
            blocks.append(SliceBlock(*(_number(c, lineno) for c in cells)))
            state = "quotes_label"
        elif state == "quotes_label":
            raise ParseError(f"expected the 'K,vol' label row, got {line!r}", lineno)
        else:
            if len(cells) != 2:
                raise ParseError(f"expected 'K,vol', got {line!r}", lineno)
            blocks[-1].quotes.append((_number(cells[0], lineno), _number(cells[1], lineno)))

    if "spot" not in header:
        raise ParseError("missing 'spot' header row", 1)
    spot = _number(*header["spot"])
    strikes, ln = header.get("strikes", ("absolute", 1))
    if strikes not in STRIKE_MODES:
        raise ParseError(f"strikes must be one of {STRIKE_MODES}, got {strikes!r}", ln)
    units, ln = header.get("units", ("decimal", 1))
    if units not in UNIT_MODES:
        raise ParseError(f"units must be one of {UNIT_MODES}, got {units!r}", ln)
    if not blocks:
        raise ValidationError("surface file contains no maturity blocks")
    for i, b in enumerate(blocks):
        if not b.quotes:
            raise ValidationError(f"slice {i} (T={b.maturity}): empty quote block")
    return SurfaceFile(
        spot=spot,
        strikes=strikes,
        units=units,
        currency=header.get("currency", ("", 0))[0],
        quote_date=header.get("quote_date", ("", 0))[0],
        blocks=blocks,
    )


def bundled_path(name):
    return resources.files("sabrcal") / "data" / name


def _resolve(path, suffix=".csv"):
    path = str(path)
    if path.startswith(BUNDLED_PREFIX):
        name = path[len(BUNDLED_PREFIX):]
        target = bundled_path(name if "." in name else name + suffix)
        if not target.is_file():
            raise ConfigError(f"no bundled file named {name!r}")
        return target
    return Path(path)


def read_surface_file(path) -> SurfaceFile:
    target = _resolve(path)
    try:
        text = target.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read surface file {path}: {exc}") from None
    return read_surface_text(text)


def parse_surface(path) -> VolSurface:
    """Read a surface file into a :class:`VolSurface` (decimal units, absolute strikes).

    ``path`` may be ``bundled:<name>`` for a file shipped with the package,
    e.g. ``bundled:eurostoxx50``.
    """
    return read_surface_file(path).to_surface()


def serialize_surface(surface: VolSurface) -> str:
    return SurfaceFile.from_surface(surface).to_text()


def write_surface(surface: VolSurface, path):
    Path(path).write_text(serialize_surface(surface))


# -- parameter files ------------------------------------------------------------


def params_to_json(params):
    from .params import model_name

    return {"model": model_name(params), "params": params.to_dict()}


def params_from_json(data):
    if not isinstance(data, dict) or set(data) - {"model", "params"} or "model" not in data or "params" not in data:
        raise ConfigError("parameter file must be an object with exactly the keys 'model' and 'params'")
    try:
        return params_from_dict(data["model"], data["params"])
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"invalid parameters: {exc}") from None


def load_params(path):
    target = _resolve(path, ".json")
    try:
        data = json.loads(target.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read parameter file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc.msg}", exc.lineno) from None
    return params_from_json(data)


# -- run configuration ----------------------------------------------------------

CONFIG_SCHEMA_VERSION = 1

CONTRACT_KEYS = {
    "european": {"type", "spot", "strike", "rate", "dividend", "maturity"},
    "cliquet": {
        "type", "spot", "rate", "dividend", "maturity", "resets",
        "local_floor", "local_cap", "global_floor", "global_cap",
    },
}


@dataclass
class RunConfig:
    """Everything a CLI run needs; unknown keys are rejected.

    Defaults (schema version 1): model ``case1``, technique ``T_I``, the
    calibrator's default bounds and schedules, the default simulation plan,
    output directory ``sabrcal-out``.
    """

    surface: str | None = None
    model: str = "case1"
    technique: str = "T_I"
    slice: int | None = None
    fixed: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    start: dict | None = None
    params: dict | None = None
    params_file: str | None = None
    schedule: dict = field(default_factory=dict)
    plan: dict = field(default_factory=dict)
    contract: dict | None = None
    smile: dict = field(default_factory=dict)
    output_dir: str = "sabrcal-out"
    label: str = "run"
    schema_version: int = CONFIG_SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path} (line {exc.lineno}): {exc.msg}") from None
        return cls.from_dict(data)

    def validate(self):
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {CONFIG_SCHEMA_VERSION}")
        if self.model not in ("static", "case1", "case2"):
            raise ConfigError(f"model must be static, case1 or case2, got {self.model!r}")
        if self.technique not in ("T_I", "T_II"):
            raise ConfigError(f"technique must be T_I or T_II, got {self.technique!r}")
        if self.technique == "T_II" and self.model != "case2":
            raise ConfigError("technique T_II calibrates the case2 model only")
        for key, pair in self.bounds.items():
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ConfigError(f"bounds for {key} must be a [lower, upper] pair")
            if not float(pair[0]) < float(pair[1]):
                raise ConfigError(f"bounds for {key}: lower {pair[0]} must be below upper {pair[1]}")
        for name, cls_, section in (("schedule", AnnealingSchedule, self.schedule), ("plan", SimulationPlan, self.plan)):
            allowed = {f.name for f in fields(cls_)}
            unknown = sorted(set(section) - allowed)
            if unknown:
                raise ConfigError(f"unknown {name} keys: {unknown}")
        if self.contract is not None:
            kind = self.contract.get("type")
            if kind not in CONTRACT_KEYS:
                raise ConfigError(f"contract type must be one of {sorted(CONTRACT_KEYS)}, got {kind!r}")
            unknown = sorted(set(self.contract) - CONTRACT_KEYS[kind])
            missing = sorted(CONTRACT_KEYS[kind] - set(self.contract) - {"resets"})
            if unknown or missing:
                raise ConfigError(f"{kind} contract: unknown keys {unknown}, missing keys {missing}")
        unknown = sorted(set(self.smile) - {"strikes", "points", "low", "high", "prices"})
        if unknown:
            raise ConfigError(f"unknown smile keys: {unknown}")
        if self.params is not None and self.params_file is not None:
            raise ConfigError("give either params or params_file, not both")
        try:
            self.annealing_schedule()
            self.simulation_plan()
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    def annealing_schedule(self, **overrides):
        from .calibration import TECHNIQUE_I_SCHEDULE, TECHNIQUE_II_SCHEDULE

        base = TECHNIQUE_II_SCHEDULE if self.technique == "T_II" else TECHNIQUE_I_SCHEDULE
        return base.replace(**{**self.schedule, **overrides})

    def simulation_plan(self, **overrides):
        from .calibration import TECHNIQUE_II_PLAN

        base = TECHNIQUE_II_PLAN if self.technique == "T_II" and self.contract is None else SimulationPlan()
        return base.replace(**{**self.plan, **overrides})

    def model_params(self):
        if self.params_file is not None:
            return load_params(self.params_file)
        if self.params is not None:
            return params_from_json({"model": self.model, "params": self.params})
        return None

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}
