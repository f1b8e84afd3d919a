"""Experiment configuration: a nested YAML document mapped onto dataclasses.

Schema (every key optional, defaults shown by ``ExperimentConfig().to_dict()``)::

    schema_version: 1
    testbed:  {id, horizon, n_states, n_actions, drift, sigma, degenerate_noise, x0}
    primal:   {basis, K, N, alpha, domain_bound, mc_root}
    dual:     {basis, K, M, grid_size, grid_half_width, lipschitz, exact_inner}
    bounds:   {N_test, lower_paths, node_cap}
    seeds:    {primal, dual, test}
    output:   {dir}

``dual.lipschitz`` is ``"max-slope"``, ``"theory"`` or a positive number.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .testbeds import TESTBEDS

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Validation failure; ``problems`` lists one message per offending field."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


@dataclass
class TestbedConfig:
    __test__ = False

    id: str = "chain"
    horizon: Optional[int] = None
    n_states: int = 3
    n_actions: int = 5
    drift: float = 0.5
    sigma: float = 0.5
    degenerate_noise: bool = False
    x0: float = 0.0


@dataclass
class PrimalConfig:
    basis: str = "indicator"
    K: int = 3
    N: int = 1024
    alpha: Optional[float] = None
    domain_bound: float = 6.0
    mc_root: bool = False


@dataclass
class DualConfig:
    basis: str = "indicator"
    K: int = 1
    M: int = 1024
    grid_size: int = 25
    grid_half_width: float = 3.0
    lipschitz: Union[str, float] = "max-slope"
    exact_inner: bool = False


@dataclass
class BoundsConfig:
    N_test: int = 4096
    lower_paths: int = 4096
    node_cap: int = 10**6


@dataclass
class SeedsConfig:
    primal: int = 1
    dual: int = 2
    test: int = 3


@dataclass
class OutputConfig:
    dir: str = "out"


_SECTIONS = {
    "testbed": TestbedConfig,
    "primal": PrimalConfig,
    "dual": DualConfig,
    "bounds": BoundsConfig,
    "seeds": SeedsConfig,
    "output": OutputConfig,
}


@dataclass
class ExperimentConfig:
    testbed: TestbedConfig = field(default_factory=TestbedConfig)
    primal: PrimalConfig = field(default_factory=PrimalConfig)
    dual: DualConfig = field(default_factory=DualConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    seeds: SeedsConfig = field(default_factory=SeedsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "ExperimentConfig":
        d = dict(d or {})
        problems = []
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            problems.append(f"schema_version: unsupported value {version!r}")
        sections = {}
        for name, body in d.items():
            if name not in _SECTIONS:
                problems.append(f"{name}: unknown section")
                continue
            if body is None:
                body = {}
            if not isinstance(body, dict):
                problems.append(f"{name}: expected a mapping")
                continue
            known = {f.name for f in fields(_SECTIONS[name])}
            for key in body:
                if key not in known:
                    problems.append(f"{name}.{key}: unknown field")
            sections[name] = _SECTIONS[name](**{k: v for k, v in body.items() if k in known})
        if problems:
            raise ConfigError(problems)
        cfg = cls(**sections)
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError([f"<document>: not parseable YAML ({exc})"]) from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(["<document>: top level must be a mapping"])
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        return cls.from_yaml(Path(path).read_text())

    def validate(self) -> None:
        """Raise :class:`ConfigError` naming every field that breaks an invariant."""
        problems: list[str] = []

        def need(cond: bool, name: str, msg: str):
            if not cond:
                problems.append(f"{name}: {msg}")

        def count(value: Any, name: str):
            need(isinstance(value, int) and not isinstance(value, bool) and value >= 1, name,
                 f"must be an integer >= 1, got {value!r}")

        tb, pr, du, bo, se = self.testbed, self.primal, self.dual, self.bounds, self.seeds
        need(tb.id in TESTBEDS, "testbed.id", f"must be one of {TESTBEDS}, got {tb.id!r}")
        if tb.horizon is not None:
            count(tb.horizon, "testbed.horizon")
        count(tb.n_states, "testbed.n_states")
        count(tb.n_actions, "testbed.n_actions")
        need(_is_number(tb.sigma) and tb.sigma > 0, "testbed.sigma", f"must be positive, got {tb.sigma!r}")
        need(_is_number(tb.drift), "testbed.drift", f"must be a number, got {tb.drift!r}")
        need(_is_number(tb.x0), "testbed.x0", f"must be a number, got {tb.x0!r}")

        need(pr.basis in ("hermite", "indicator", "constant"), "primal.basis",
             f"must be hermite, indicator or constant, got {pr.basis!r}")
        count(pr.K, "primal.K")
        count(pr.N, "primal.N")
        need(pr.alpha is None or (_is_number(pr.alpha) and pr.alpha > 0), "primal.alpha",
             f"must be positive, got {pr.alpha!r}")
        need(_is_number(pr.domain_bound) and pr.domain_bound > 0, "primal.domain_bound",
             f"must be positive, got {pr.domain_bound!r}")

        need(du.basis in ("hermite", "indicator"), "dual.basis", f"must be hermite or indicator, got {du.basis!r}")
        count(du.K, "dual.K")
        count(du.M, "dual.M")
        count(du.grid_size, "dual.grid_size")
        need(_is_number(du.grid_half_width) and du.grid_half_width > 0, "dual.grid_half_width",
             f"must be positive, got {du.grid_half_width!r}")
        if isinstance(du.lipschitz, str):
            need(du.lipschitz in ("max-slope", "theory"), "dual.lipschitz",
                 f"must be 'max-slope', 'theory' or a positive number, got {du.lipschitz!r}")
        else:
            need(_is_number(du.lipschitz) and du.lipschitz > 0, "dual.lipschitz",
                 f"must be positive, got {du.lipschitz!r}")

        count(bo.N_test, "bounds.N_test")
        count(bo.lower_paths, "bounds.lower_paths")
        count(bo.node_cap, "bounds.node_cap")
        for name in ("primal", "dual", "test"):
            v = getattr(se, name)
            need(isinstance(v, int) and not isinstance(v, bool) and v >= 0, f"seeds.{name}",
                 f"must be a non-negative integer, got {v!r}")
        need(self.schema_version == SCHEMA_VERSION, "schema_version", f"must be {SCHEMA_VERSION}")
        if problems:
            raise ConfigError(problems)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)
