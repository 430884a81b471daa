"""TOML run configuration: parsing, validation, and typed access.

Config problems are usage errors (exit 1); problems with the data the
config points at are data errors (exit 2). The two exception classes
here let main() route them to the right exit code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from ..tuning import Domain, grid, int_uniform, log_uniform, uniform


class UsageError(ValueError):
    """Bad invocation or configuration; maps to exit code 1."""


class DataError(ValueError):
    """Unreadable or malformed data; maps to exit code 2."""


@dataclass
class ModelSpec:
    name: str
    family: str
    options: dict = field(default_factory=dict)
    search: dict[str, Domain] = field(default_factory=dict)


@dataclass
class RunConfig:
    data_csv: str | None
    synth: dict
    test_years: list[int]
    seed: int
    out_dir: str
    models: list[ModelSpec]
    tune: dict
    explain: dict
    select: dict

    def model(self, name: str) -> ModelSpec:
        for m in self.models:
            if m.name == name:
                return m
        raise UsageError(f"no model named {name!r} in config")


def _parse_domain(name: str, raw) -> Domain:
    if isinstance(raw, list):
        return grid(*raw)
    if not isinstance(raw, dict):
        raise UsageError(f"search domain {name!r} must be a list or a table")
    if "grid" in raw:
        return grid(*raw["grid"])
    kind = raw.get("kind")
    try:
        if kind == "uniform":
            return uniform(raw["low"], raw["high"])
        if kind == "log_uniform":
            return log_uniform(raw["low"], raw["high"])
        if kind == "int_uniform":
            return int_uniform(raw["low"], raw["high"])
    except (KeyError, ValueError) as exc:
        raise UsageError(f"search domain {name!r}: {exc}") from None
    raise UsageError(f"search domain {name!r} has unknown kind {kind!r}")


def _parse_model(raw: dict, index: int) -> ModelSpec:
    if "family" not in raw:
        raise UsageError(f"models[{index}] is missing 'family'")
    family = raw["family"]
    name = raw.get("name", family)
    search = {k: _parse_domain(k, v) for k, v in raw.get("search", {}).items()}
    options = {k: v for k, v in raw.items() if k not in ("name", "family", "search")}
    return ModelSpec(name=name, family=family, options=options, search=search)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid TOML in {path}: {exc}") from None

    data = raw.get("data", {})
    data_csv = data.get("csv")
    synth = data.get("synth", {})
    if data_csv is None and not synth:
        raise UsageError("config needs [data] with either csv = \"...\" or [data.synth]")

    models = [_parse_model(m, i) for i, m in enumerate(raw.get("models", []))]
    if not models:
        raise UsageError("config needs at least one [[models]] entry")
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise UsageError("model names must be unique")

    test_years = [int(ty) for ty in raw.get("test_years", [])]
    if not test_years:
        raise UsageError("config needs a nonempty test_years list")

    return RunConfig(
        data_csv=data_csv,
        synth=synth,
        test_years=test_years,
        seed=int(raw["seed"]) if "seed" in raw else -1,
        out_dir=raw.get("out", "out"),
        models=models,
        tune=raw.get("tune", {}),
        explain=raw.get("explain", {}),
        select=raw.get("select", {}),
    )
