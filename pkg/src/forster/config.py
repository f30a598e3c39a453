"""Run configuration: defaults < JSON config file < command-line flags.

A config file is a JSON document. Keys may be given flat or grouped in nested
sections (any nesting depth); names match the long CLI flags with dashes
replaced by underscores, e.g.::

    {"simulation": {"i": [2, 3], "realizations": 200, "seed": 7},
     "detection": {"nbar": 1.05, "T": 0.65},
     "output": {"out": "results"}}
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .basis import MAX_ATOMS
from .detection import TAIL_CLOSURES, DetectionChain
from .interaction import CouplingConstants
from .lineshape import StarkMap
from .montecarlo import SpectrumRequest, detuning_grid


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field name."""


@dataclass(frozen=True)
class RunConfig:
    i: tuple[int, ...] = (2,)
    t0: float = 0.515
    L: float = 18.0
    realizations: int = 500
    seed: int = 42
    c3: float = 300.0
    c3_exchange_s: float | None = None  # None follows c3
    c3_exchange_sp: float | None = None
    grid_min: float = -15.0
    grid_max: float = 15.0
    grid_step: float = 0.25
    workers: int = 1
    nbar: float = 1.05
    T: float = 0.65
    p32: float = 0.52
    rho_bg: float = 0.01
    imax: int = 5
    tail_closure: str = "saturate"
    fres: float = 1.79
    slope: float = -118.3
    field_min: float = 1.69
    field_max: float = 1.89
    field_step: float = 0.001
    out: str = "out"
    input: str | None = None
    format: str = "csv"

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}

    def merged(self, overrides: dict) -> "RunConfig":
        unknown = set(overrides) - self.field_names()
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown configuration key")
        values = dict(overrides)
        if "i" in values:
            raw = values["i"]
            values["i"] = tuple(raw) if isinstance(raw, (list, tuple)) else (raw,)
        return replace(self, **values)

    @property
    def constants(self) -> CouplingConstants:
        exch_s = self.c3 if self.c3_exchange_s is None else self.c3_exchange_s
        exch_sp = self.c3 if self.c3_exchange_sp is None else self.c3_exchange_sp
        return CouplingConstants(self.c3, exch_s, exch_sp)

    @property
    def detunings(self) -> np.ndarray:
        return detuning_grid(self.grid_min, self.grid_max, self.grid_step)

    @property
    def fields_vcm(self) -> np.ndarray:
        return detuning_grid(self.field_min, self.field_max, self.field_step)

    def request(self, i: int) -> SpectrumRequest:
        return SpectrumRequest(
            i=i,
            detunings=tuple(self.detunings),
            t0=self.t0,
            L=self.L,
            n_realizations=self.realizations,
            constants=self.constants,
            seed=self.seed,
        )

    @property
    def chain(self) -> DetectionChain:
        return DetectionChain(self.nbar, self.T, self.rho_bg, self.p32, self.imax, self.tail_closure)

    @property
    def stark(self) -> StarkMap:
        return StarkMap(f_res=self.fres, slope=self.slope)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["i"] = list(self.i)
        return out

    def validate(self, needs_fields: bool = False) -> "RunConfig":
        """Check every field up front so a validated run never aborts on a precondition."""

        def check(ok, name, msg):
            if not ok:
                raise ConfigError(f"{name}: {msg}")

        check(len(self.i) > 0, "i", "at least one atom count is required")
        for i in self.i:
            check(
                isinstance(i, int) and 1 <= i <= MAX_ATOMS,
                "i",
                f"atom count must satisfy 1 <= i <= {MAX_ATOMS}, got {i!r}",
            )
        check(np.isfinite(self.t0) and self.t0 >= 0, "t0", f"must be >= 0, got {self.t0}")
        check(np.isfinite(self.L) and self.L > 0, "L", f"must be > 0, got {self.L}")
        check(isinstance(self.realizations, int) and self.realizations >= 1, "realizations", "must be an integer >= 1")
        check(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        for name in ("c3", "c3_exchange_s", "c3_exchange_sp"):
            value = getattr(self, name)
            check(value is None or (np.isfinite(value) and value >= 0), name, f"must be >= 0, got {value}")
        check(self.grid_step > 0, "grid_step", f"must be > 0, got {self.grid_step}")
        check(self.grid_max >= self.grid_min, "grid_max", f"must be >= grid_min ({self.grid_min})")
        check(isinstance(self.workers, int) and self.workers >= 1, "workers", "must be an integer >= 1")
        check(np.isfinite(self.nbar) and self.nbar >= 0, "nbar", f"must be >= 0, got {self.nbar}")
        check(0 < self.T <= 1, "T", f"must lie in (0, 1], got {self.T}")
        check(0 <= self.p32 <= 1, "p32", f"must lie in [0, 1], got {self.p32}")
        check(np.isfinite(self.rho_bg), "rho_bg", "must be finite")
        check(
            isinstance(self.imax, int) and 2 <= self.imax <= MAX_ATOMS,
            "imax",
            f"must satisfy 2 <= imax <= {MAX_ATOMS}, got {self.imax!r}",
        )
        check(self.tail_closure in TAIL_CLOSURES, "tail_closure", f"must be one of {TAIL_CLOSURES}")
        check(np.isfinite(self.slope) and self.slope != 0, "slope", "must be finite and non-zero")
        check(self.format in ("csv", "tsv"), "format", "must be 'csv' or 'tsv'")
        if needs_fields:
            check(self.field_step > 0, "field_step", f"must be > 0, got {self.field_step}")
            check(self.field_max >= self.field_min, "field_max", "field grid is empty (field_max < field_min)")
            stark = self.stark
            for name in ("field_min", "field_max"):
                check(
                    abs(getattr(self, name) - stark.f_res) <= stark.window + 1e-12,
                    name,
                    f"outside the linear Stark window {stark.f_res} ± {stark.window} V/cm",
                )
            reach = np.abs(self.slope) * np.max(np.abs(self.fields_vcm - self.fres))
            check(
                self.grid_min <= -reach + 1e-9 and self.grid_max >= reach - 1e-9,
                "field_max",
                f"field grid needs detunings ±{reach:.4g} MHz, beyond the detuning grid",
            )
        if self.input is not None:
            check(Path(self.input).exists(), "input", f"{self.input} does not exist")
        out = Path(self.out)
        parent = out if out.exists() else out.parent
        while not parent.exists():
            parent = parent.parent
        check(
            (out.is_dir() or not out.exists()) and os.access(parent, os.W_OK),
            "out",
            f"{out} is not a writable directory",
        )
        # build the domain objects too, so their own preconditions run now
        try:
            for i in self.i:
                self.request(i)
            self.chain
            self.stark
        except ValueError as exc:
            raise ConfigError(f"config: {exc}") from exc
        return self


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    return flatten(doc)


def flatten(doc: dict) -> dict:
    """Collapse nested sections into flat keys; duplicated keys are an error."""
    names = RunConfig.field_names()
    flat = {}
    for key, value in doc.items():
        key = key.replace("-", "_")
        items = flatten(value).items() if isinstance(value, dict) and key not in names else [(key, value)]
        for k, v in items:
            if k in flat:
                raise ConfigError(f"{k}: given more than once in config file")
            flat[k] = v
    return flat
