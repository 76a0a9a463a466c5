"""Run configuration and table specifications for the command line."""

from __future__ import annotations

import importlib.resources
import json
import os
from dataclasses import asdict, dataclass, field, fields

from ..ensemble import EnsembleError, EnsembleParams, Side, TailQuery
from ..estimators import Method

DEFAULT_REPS_IS = 10_000
DEFAULT_REPS_DMC = 1_000_000
CLI_METHODS = ("dmc", "is", "is-gamma")
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def resolve_method(method: str, side: Side | str) -> Method:
    """Map a command-line method name and side to an estimator."""
    side = Side(side)
    if method == "dmc":
        return Method.DMC
    if method == "is":
        return Method.IS_MAX if side is Side.MAX else Method.IS_MIN
    if method == "is-gamma":
        if side is Side.MIN:
            raise ConfigError("method is-gamma is only defined for the max side")
        return Method.IS_MAX_GAMMA
    raise ConfigError(f"unknown method {method!r}; choose from {', '.join(CLI_METHODS)}")


@dataclass(frozen=True)
class RunConfig:
    n: int
    p: int
    beta: float
    side: str
    threshold: float
    method: str = "is"
    reps: int | None = None
    seed: int = 0
    rate_j: float | None = None
    format: str = "json"
    tw_table: str | None = None
    workers: int = 1

    def __post_init__(self):
        try:
            side = Side(self.side)
        except ValueError:
            raise ConfigError(f"side must be 'max' or 'min', got {self.side!r}") from None
        object.__setattr__(self, "side", side.value)
        if self.method not in CLI_METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(CLI_METHODS)}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        reps = self.reps
        if reps is None:
            reps = DEFAULT_REPS_DMC if self.method == "dmc" else DEFAULT_REPS_IS
        if isinstance(reps, bool) or int(reps) != reps or reps < 1:
            raise ConfigError(f"reps must be a positive integer, got {self.reps!r}")
        object.__setattr__(self, "reps", int(reps))
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit nonnegative integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")
        object.__setattr__(self, "workers", int(self.workers))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "threshold", float(self.threshold))
        if self.rate_j is not None:
            object.__setattr__(self, "rate_j", float(self.rate_j))
        resolve_method(self.method, side)

    @property
    def params(self) -> EnsembleParams:
        return EnsembleParams(self.n, self.p, self.beta)

    @property
    def query(self) -> TailQuery:
        return TailQuery(Side(self.side), self.threshold)

    @property
    def estimator(self) -> Method:
        return resolve_method(self.method, self.side)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None


@dataclass(frozen=True)
class TableRow:
    n: int
    p: int
    x: float
    reps: int = DEFAULT_REPS_IS
    methods: tuple = ("is", "ta", "tw")
    dmc_reps: int = DEFAULT_REPS_DMC


ROW_METHODS = ("is", "ta", "tw", "dmc")


@dataclass(frozen=True)
class TableSpec:
    """Rows of (n, p, x) with per-row replicate counts and methods to run."""

    name: str = ""
    beta: float = 1.0
    rows: tuple = field(default_factory=tuple)

    def __post_init__(self):
        rows = []
        for i, r in enumerate(self.rows):
            if isinstance(r, dict):
                try:
                    r = TableRow(**{**r, "methods": tuple(r.get("methods", TableRow.methods))})
                except TypeError as exc:
                    raise ConfigError(f"table row {i}: {exc}") from None
            bad = set(r.methods) - set(ROW_METHODS)
            if bad:
                raise ConfigError(f"table row {i}: unknown methods {sorted(bad)}")
            rows.append(r)
        object.__setattr__(self, "rows", tuple(rows))

    def row_violation(self, row: TableRow) -> str | None:
        """Regime check for one row; None when admissible."""
        from ..ensemble import Regime, validate

        try:
            params = EnsembleParams(row.n, row.p, self.beta)
            query = TailQuery(Side.MAX, row.x)
        except EnsembleError as exc:
            return str(exc)
        v = validate(params, query, Regime.P_OVER_N_INFTY)
        return "; ".join(x.message for x in v) or None

    @classmethod
    def from_dict(cls, d: dict) -> "TableSpec":
        return cls(name=d.get("name", ""), beta=float(d.get("beta", 1.0)), rows=tuple(d.get("rows", ())))

    @classmethod
    def load(cls, path_or_name: str | os.PathLike) -> "TableSpec":
        """Load a JSON spec from a path, or a bundled spec by name (table1, table2)."""
        name = str(path_or_name)
        if name in BUNDLED_SPECS:
            res = importlib.resources.files("lagtail") / "data" / f"{name}.json"
            return cls.from_dict(json.loads(res.read_text()))
        with open(name) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{name}: not valid JSON: {exc}") from None


BUNDLED_SPECS = ("table1", "table2")
