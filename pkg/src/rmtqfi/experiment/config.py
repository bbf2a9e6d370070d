"""YAML run configuration with a fixed schema; unknown keys are errors.

Example::

    scenario: spin-qfi
    seed: 7
    n_realizations: 1
    output_dir: runs/spin12
    model:
      kind: spin
      N: 12
      couplings: [[1, 5]]
    initial_state:
      variant: basis_eigenstate
      index: 2750
    times:
      spacing: geometric
      start: 1.0e-3
      stop: 1.0e5
      num: 120
"""
from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..rmt import RmtModelSpec
from ..spin import InitialStateKind, SpinChainSpec

SCENARIOS = (
    "rmt-microcanonical",
    "rmt-qfi",
    "spin-qfi",
    "spin-regimes",
    "coupling-sweep",
    "two-spin-ratio",
    "correlators",
)
RMT_SCENARIOS = {"rmt-microcanonical", "rmt-qfi", "correlators"}
SPIN_SCENARIOS = {"spin-qfi", "spin-regimes", "coupling-sweep", "two-spin-ratio"}
LARGE_SPIN_N = 12


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e5``-style floats (YAML 1.1 needs a sign)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# key -> (type or tuple of types, required)
_TOP = {
    "scenario": (str, True),
    "seed": (int, False),
    "n_realizations": (int, False),
    "output_dir": (str, False),
    "allow_large": (bool, False),
    "workers": (int, False),
    "emit_plots": (bool, False),
    "model": (dict, True),
    "initial_state": (dict, False),
    "times": (dict, False),
    "options": (dict, False),
    "sweep": (dict, False),
}
_RMT_MODEL = {
    "kind": (str, True),
    "N": (int, True),
    "omega": ((int, float), False),
    "g": ((int, float), False),
    "gamma_ratio": ((int, float), False),
}
_SPIN_MODEL = {
    "kind": (str, True),
    "N": (int, True),
    "B": ((int, float), False),
    "Bx_bath": ((int, float), False),
    "Jx": ((int, float), False),
    "Jz_sb": ((int, float), False),
    "Jx_sb": ((int, float), False),
    "couplings": (list, False),
    "n_system": (int, False),
    "distinct_couplings": (list, False),
}
_INITIAL = {
    "variant": (str, True),
    "index": (int, False),
    "bath_first": (str, False),
    "pattern": (str, False),
}
_TIMES = {
    "spacing": (str, False),
    "start": ((int, float), True),
    "stop": ((int, float), True),
    "num": (int, True),
    "units": (str, False),
    "include_zero": (bool, False),
}
_OPTIONS = {
    "average": (str, False),
    "cfi": (str, False),
    "fidelity_check": (bool, False),
    "fit_window": ((int, float), False),
    "fit_samples": (int, False),
    "probe_states": (int, False),
    "window_fraction": ((int, float), False),
    "profile_window": ((int, float), False),
    "profile_bins": (int, False),
    "pair_offset": (int, False),
    "dos_bin_width": ((int, float), False),
}
_SWEEP = {
    "parameter": (str, True),
    "values": (list, True),
    "probe_time": ((int, float), False),
}


def _check_section(data: Any, schema: dict, where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(where, "must be a mapping")
    for key in data:
        if key not in schema:
            raise ConfigError(f"{where}.{key}" if where else key, "unknown key")
    for key, (typ, required) in schema.items():
        path = f"{where}.{key}" if where else key
        if key not in data:
            if required:
                raise ConfigError(path, "required key missing")
            continue
        val = data[key]
        if isinstance(val, bool) and typ is not bool and not (isinstance(typ, tuple) and bool in typ):
            raise ConfigError(path, f"expected {typ}, got bool")
        if not isinstance(val, typ):
            raise ConfigError(path, f"expected {getattr(typ, '__name__', typ)}, got {type(val).__name__}")
        if isinstance(val, float) and not math.isfinite(val):
            raise ConfigError(path, "must be finite")
    return data


@dataclass(frozen=True)
class TimeGrid:
    """Sampling times; ``units: inverse_gamma`` multiplies them by 1/Gamma."""

    start: float
    stop: float
    num: int
    spacing: str = "geometric"
    units: str = "absolute"
    include_zero: bool = False

    def __post_init__(self):
        if self.spacing not in ("geometric", "linear"):
            raise ConfigError("times.spacing", "must be 'geometric' or 'linear'")
        if self.units not in ("absolute", "inverse_gamma"):
            raise ConfigError("times.units", "must be 'absolute' or 'inverse_gamma'")
        if self.num < 2:
            raise ConfigError("times.num", "must be at least 2")
        if not self.stop > self.start:
            raise ConfigError("times.stop", "must exceed times.start")
        if self.spacing == "geometric" and not self.start > 0:
            raise ConfigError("times.start", "geometric spacing needs start > 0")
        if self.start < 0:
            raise ConfigError("times.start", "must be nonnegative")

    def resolve(self, gamma: float | None = None) -> np.ndarray:
        if self.spacing == "geometric":
            t = np.geomspace(self.start, self.stop, self.num)
        else:
            t = np.linspace(self.start, self.stop, self.num)
        if self.include_zero and t[0] != 0:
            t = np.concatenate([[0.0], t])
        if self.units == "inverse_gamma":
            if gamma is None:
                raise ValueError("inverse_gamma units need a decay rate")
            t = t / gamma
        return t


@dataclass(frozen=True)
class Options:
    average: str = "realizations"
    cfi: str = "exact"
    fidelity_check: bool = False
    fit_window: float = 60.0
    fit_samples: int = 241
    probe_states: int = 25
    window_fraction: float = 0.5
    profile_window: float = 3.0
    profile_bins: int = 13
    pair_offset: int = 3
    dos_bin_width: float | None = None

    def __post_init__(self):
        if self.average not in ("realizations", "terms"):
            raise ConfigError("options.average", "must be 'realizations' or 'terms'")
        if self.cfi not in ("exact", "finite_difference", "none"):
            raise ConfigError("options.cfi", "must be 'exact', 'finite_difference' or 'none'")
        if not self.fit_window > 0:
            raise ConfigError("options.fit_window", "must be positive")
        if self.fit_samples < 20:
            raise ConfigError("options.fit_samples", "must be at least 20")
        if self.probe_states < 1:
            raise ConfigError("options.probe_states", "must be positive")
        if not 0 < self.window_fraction <= 1:
            raise ConfigError("options.window_fraction", "must be in (0, 1]")
        if self.dos_bin_width is not None and not self.dos_bin_width > 0:
            raise ConfigError("options.dos_bin_width", "must be positive")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    probe_time: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    model: RmtModelSpec | SpinChainSpec
    times: TimeGrid | None
    n_realizations: int = 1
    seed: int = 0
    output_dir: str = "runs/out"
    initial_state: InitialStateKind | None = None
    options: Options = field(default_factory=Options)
    sweep: SweepSpec | None = None
    allow_large: bool = False
    workers: int | None = None
    emit_plots: bool = True
    distinct_couplings: tuple | None = None
    sweep_probe_time: float | None = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def is_rmt(self) -> bool:
        return isinstance(self.model, RmtModelSpec)


def _model(data: dict, scenario: str):
    kind = data.get("kind")
    want = "rmt" if scenario in RMT_SCENARIOS else "spin"
    if kind != want:
        raise ConfigError("model.kind", f"scenario {scenario} needs kind '{want}'")
    if kind == "rmt":
        _check_section(data, _RMT_MODEL, "model")
        omega = float(data.get("omega", 1.0))
        if "g" in data and "gamma_ratio" in data:
            raise ConfigError("model.g", "give either g or gamma_ratio, not both")
        try:
            if "gamma_ratio" in data:
                return RmtModelSpec.from_width_ratio(data["N"], float(data["gamma_ratio"]), omega)
            return RmtModelSpec(N=data["N"], omega=omega, g=float(data.get("g", 1.0)))
        except ValueError as exc:
            raise ConfigError("model", str(exc)) from exc
    _check_section(data, _SPIN_MODEL, "model")
    kw = {k: data[k] for k in ("N", "B", "Bx_bath", "Jx", "Jz_sb", "Jx_sb", "n_system") if k in data}
    for k in ("B", "Bx_bath", "Jx", "Jz_sb", "Jx_sb"):
        if k in kw:
            kw[k] = float(kw[k])
    if "couplings" in data:
        kw["couplings"] = _pairs(data["couplings"], "model.couplings")
    try:
        return SpinChainSpec(**kw)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from exc


def _pairs(val, where):
    try:
        out = tuple((int(a), int(b)) for a, b in val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, "must be a list of [system_site, bath_site] pairs") from exc
    if not out:
        raise ConfigError(where, "must not be empty")
    return out


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a config mapping; raise :class:`ConfigError` on the first problem."""
    raw = copy.deepcopy(data)
    _check_section(data, _TOP, "")
    scenario = data["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    model = _model(data["model"], scenario)
    n_real = data.get("n_realizations", 1)
    if n_real < 1:
        raise ConfigError("n_realizations", "must be at least 1")
    if isinstance(model, SpinChainSpec):
        if n_real != 1:
            raise ConfigError("n_realizations", "spin-chain scenarios are deterministic; use 1")
        if model.N > LARGE_SPIN_N and not data.get("allow_large", False):
            raise ConfigError("model.N", f"N > {LARGE_SPIN_N} needs allow_large: true")
    distinct = None
    if "distinct_couplings" in data["model"]:
        if scenario != "two-spin-ratio":
            raise ConfigError("model.distinct_couplings", "only used by two-spin-ratio")
        distinct = _pairs(data["model"]["distinct_couplings"], "model.distinct_couplings")
        try:
            model.with_(couplings=distinct)
        except ValueError as exc:
            raise ConfigError("model.distinct_couplings", str(exc)) from exc
    if scenario == "two-spin-ratio":
        if model.n_system != 2:
            raise ConfigError("model.n_system", "two-spin-ratio needs n_system: 2")
        if distinct is None:
            raise ConfigError("model.distinct_couplings", "required for two-spin-ratio")

    times = None
    if "times" in data:
        t = _check_section(data["times"], _TIMES, "times")
        times = TimeGrid(start=float(t["start"]), stop=float(t["stop"]), num=t["num"],
                         spacing=t.get("spacing", "geometric"), units=t.get("units", "absolute"),
                         include_zero=t.get("include_zero", False))
    elif scenario in ("rmt-qfi", "spin-qfi", "spin-regimes", "coupling-sweep", "two-spin-ratio"):
        raise ConfigError("times", "required for this scenario")

    init = None
    if "initial_state" in data:
        i = _check_section(data["initial_state"], _INITIAL, "initial_state")
        if model.__class__ is RmtModelSpec:
            if i["variant"] != "basis":
                raise ConfigError("initial_state.variant", "RMT scenarios accept only 'basis'")
            idx = i.get("index", model.N // 2 - 1)
            if not 0 <= idx < model.N:
                raise ConfigError("initial_state.index", f"must lie in [0, {model.N})")
            init = InitialStateKind("basis_eigenstate", index=idx)
        else:
            try:
                init = InitialStateKind(i["variant"], index=i.get("index"), bath_first=i.get("bath_first", "d"),
                                        pattern=i.get("pattern"))
                if init.variant == "basis_eigenstate" and not 0 <= init.index < model.dim:
                    raise ValueError(f"index must lie in [0, {model.dim})")
                if init.variant == "product" and len(init.pattern) != model.N:
                    raise ValueError(f"pattern must have {model.N} characters")
            except ValueError as exc:
                raise ConfigError("initial_state", str(exc)) from exc

    try:
        options = Options(**_check_section(data.get("options", {}), _OPTIONS, "options"))
    except TypeError as exc:
        raise ConfigError("options", str(exc)) from exc

    sweep = None
    if "sweep" in data:
        s = _check_section(data["sweep"], _SWEEP, "sweep")
        vals = s["values"]
        if len(vals) < 2:
            raise ConfigError("sweep.values", "a sweep needs at least 2 points")
        for v in vals:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError("sweep.values", f"non-finite or non-numeric value {v!r}")
        param = s["parameter"]
        allowed = set(_RMT_MODEL if isinstance(model, RmtModelSpec) else _SPIN_MODEL) - {"kind", "couplings",
                                                                                          "distinct_couplings"}
        if param not in allowed:
            raise ConfigError("sweep.parameter", f"must be one of {sorted(allowed)}")
        for v in vals:
            try:
                _model({**data["model"], param: v}, scenario)
            except ConfigError as exc:
                raise ConfigError("sweep.values", f"value {v!r} invalid: {exc}") from exc
        sweep = SweepSpec(parameter=param, values=tuple(vals),
                          probe_time=float(s["probe_time"]) if "probe_time" in s else None)
    elif scenario == "coupling-sweep":
        raise ConfigError("sweep", "required for coupling-sweep")

    workers = data.get("workers")
    if workers is not None and workers < 1:
        raise ConfigError("workers", "must be at least 1")
    return ExperimentConfig(
        scenario=scenario, model=model, times=times, n_realizations=n_real, seed=int(data.get("seed", 0)),
        output_dir=data.get("output_dir", f"runs/{scenario}"), initial_state=init, options=options,
        sweep=sweep, allow_large=bool(data.get("allow_large", False)), workers=workers,
        emit_plots=bool(data.get("emit_plots", True)), distinct_couplings=distinct, raw=raw,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from exc
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"YAML parse error: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    return parse_config(data)


def with_model_value(cfg: ExperimentConfig, parameter: str, value, output_dir: str) -> ExperimentConfig:
    """Single-point config for one sweep value."""
    raw = copy.deepcopy(cfg.raw)
    raw["model"][parameter] = value
    raw.pop("sweep", None)
    raw["output_dir"] = output_dir
    if raw["scenario"] == "coupling-sweep":
        raw["scenario"] = "spin-qfi"
    point = parse_config(raw)
    return replace(point, sweep_probe_time=cfg.sweep.probe_time if cfg.sweep else None)
