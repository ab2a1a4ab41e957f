"""Flat key-value run configuration.

Files hold one ``section.key = value`` assignment per line; ``#`` starts
a comment and blank lines are ignored. Every key is optional — an empty
file yields the full paper-default configuration — and unknown keys,
out-of-range values, and malformed numbers (e.g. unit suffixes such as
``4.07us``; units are fixed by the key name) are rejected with the
offending line number.

The effective configuration can be echoed back to text with
``ParsedConfig.echo()``; the echo parses to an identical configuration.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

from .instrument import DRIFT_KINDS, DriftSpec, TruthConfig
from .model import RamseyParams
from .particles import PriorSpec
from .protocols import SettingGrid, TauConfig
from .runner import PROTOCOLS, UNKNOWN_MODES, WORKFLOWS, RunConfig

SEED_ENV_VAR = "RAMSEY_DESIGN_SEED"


class ConfigError(ValueError):
    """Configuration problem, anchored to a file line when possible."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


def _parse_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{raw!r} is not an integer") from None


def _parse_float(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(
            f"{raw!r} is not a number (units are implied by the key name; "
            "do not append a suffix)"
        ) from None
    if math.isnan(value):
        raise ValueError("NaN is not a valid value")
    return value


def _parse_choice(options):
    def parse(raw: str) -> str:
        if raw not in options:
            raise ValueError(f"{raw!r} is not one of {'/'.join(options)}")
        return raw

    return parse


def _positive(x):
    if x <= 0:
        raise ValueError("must be > 0")
    return x


def _non_negative(x):
    if x < 0:
        raise ValueError("must be >= 0")
    return x


def _fraction(x):
    if not 0 < x <= 1:
        raise ValueError("must lie in (0, 1]")
    return x


def _at_least(n):
    def check(x):
        if x < n:
            raise ValueError(f"must be >= {n}")
        return x

    return check


def _identity(x):
    return x


# key -> (parser, validator, default). Defaults reproduce the paper's
# simulation: a=0.8, c=0.13, omega0=9.4 rad/us, T2=10 us, 0.15
# photons/sequence, 4.07 us overhead, tau grid 0.1-20 us at 50 ns.
SCHEMA: dict[str, tuple] = {
    "run.protocol": (_parse_choice(PROTOCOLS), _identity, "bayes"),
    "run.unknowns": (_parse_choice(UNKNOWN_MODES), _identity, "omega-only"),
    "run.epochs": (_parse_int, _at_least(1), None),
    "run.lab_time_s": (_parse_float, _positive, None),
    "run.epoch_time_ms": (_parse_float, _positive, None),
    "run.background_window": (_parse_int, _at_least(1), 20),
    "run.seed": (_parse_int, _identity, None),
    "run.workflow": (_parse_choice(WORKFLOWS), _identity, "concurrent-deterministic"),
    "run.selection": (_parse_choice(("argmax", "softmax")), _identity, "argmax"),
    "run.softmax_scale": (_parse_float, _positive, 1.0),
    "run.background_prior_exponent": (_parse_float, _identity, -1.0),
    "batch.runs": (_parse_int, _at_least(2), 100),
    "batch.workers": (_parse_int, _at_least(1), 1),
    "grid.tau_min_us": (_parse_float, _positive, 0.1),
    "grid.tau_max_us": (_parse_float, _positive, 20.0),
    "grid.step_us": (_parse_float, _positive, 0.05),
    "truth.a": (_parse_float, _positive, 0.8),
    "truth.c": (_parse_float, _non_negative, 0.13),
    "truth.omega0": (_parse_float, _non_negative, 9.4),
    "truth.t2_us": (_parse_float, _positive, 10.0),
    "truth.lambda_b": (_parse_float, _positive, 0.15),
    "truth.overhead_us": (_parse_float, _non_negative, 4.07),
    "truth.drift": (_parse_choice(DRIFT_KINDS), _identity, "none"),
    "truth.drift_amplitude": (_parse_float, _identity, 0.0),
    "truth.drift_period_s": (_parse_float, _positive, 10.0),
    "prior.particles": (_parse_int, _at_least(100), 50_000),
    "prior.resample_threshold": (_parse_float, _fraction, 0.5),
    "prior.shrinkage": (_parse_float, _fraction, 0.98),
    "prior.a_min": (_parse_float, _positive, 0.4),
    "prior.a_max": (_parse_float, _positive, 1.2),
    "prior.c_min": (_parse_float, _non_negative, 0.02),
    "prior.c_max": (_parse_float, _positive, 0.3),
    "prior.omega0_min": (_parse_float, _non_negative, 1.0),
    "prior.omega0_max": (_parse_float, _positive, 60.0),
    "prior.t2_min_us": (_parse_float, _positive, 2.0),
    "prior.t2_max_us": (_parse_float, _positive, 30.0),
    "tau.h": (_parse_float, _positive, 0.5),
    "tau.top_fraction": (_parse_float, _fraction, 0.1),
    "demo.saturation_runs": (_parse_int, _at_least(2), 10),
    "demo.saturation_epochs": (_parse_int, _at_least(1), 220),
    "scaling.repeats": (_parse_int, _at_least(1), 4000),
    "scaling.epochs": (_parse_int, _at_least(5), 50),
    "scaling.runs": (_parse_int, _at_least(1), 10),
    "scaling.grid_max_us": (_parse_float, _positive, 5000.0),
}

# fallback when neither run.epochs nor run.lab_time_s is given
DEFAULT_LAB_TIME_S = 1.0


@dataclass(frozen=True)
class DemoConfig:
    saturation_runs: int
    saturation_epochs: int


@dataclass(frozen=True)
class ScalingConfig:
    repeats: int
    epochs: int
    runs: int
    grid_max_us: float


@dataclass(frozen=True)
class ParsedConfig:
    run: RunConfig
    truth: TruthConfig
    prior: PriorSpec
    tau: TauConfig
    batch_runs: int
    workers: int
    demo: DemoConfig
    scaling: ScalingConfig

    def echo(self) -> str:
        """Text of the effective configuration; parses back identically."""
        r, t, p = self.run, self.truth, self.prior
        values = {
            "run.protocol": r.protocol,
            "run.unknowns": r.unknowns,
            "run.background_window": r.background_window,
            "run.seed": r.seed,
            "run.workflow": r.workflow,
            "run.selection": r.selection,
            "run.softmax_scale": r.softmax_scale,
            "run.background_prior_exponent": r.background_prior_exponent,
            "batch.runs": self.batch_runs,
            "batch.workers": self.workers,
            "grid.tau_min_us": r.grid.tau_min,
            "grid.tau_max_us": r.grid.tau_max,
            "grid.step_us": r.grid.step,
            "truth.a": t.params.a,
            "truth.c": t.params.c,
            "truth.omega0": t.params.omega0,
            "truth.t2_us": t.params.t2,
            "truth.lambda_b": t.lambda_b0,
            "truth.overhead_us": t.overhead_us,
            "truth.drift": t.drift.kind,
            "truth.drift_amplitude": t.drift.amplitude,
            "truth.drift_period_s": t.drift.period_s,
            "prior.particles": p.n_particles,
            "prior.resample_threshold": p.resample_threshold,
            "prior.shrinkage": p.shrinkage,
            "tau.h": self.tau.h,
            "tau.top_fraction": self.tau.top_fraction,
            "demo.saturation_runs": self.demo.saturation_runs,
            "demo.saturation_epochs": self.demo.saturation_epochs,
            "scaling.repeats": self.scaling.repeats,
            "scaling.epochs": self.scaling.epochs,
            "scaling.runs": self.scaling.runs,
            "scaling.grid_max_us": self.scaling.grid_max_us,
        }
        if r.epochs is not None:
            values["run.epochs"] = r.epochs
        else:
            values["run.lab_time_s"] = r.lab_time_s
        if r.epoch_time_ms is not None:
            values["run.epoch_time_ms"] = r.epoch_time_ms
        bounds = dict(DEFAULT_PRIOR_BOUNDS)
        bounds.update(
            {name: p.bounds[name] for name in p.bounds}
        )
        for name, (lo, hi) in bounds.items():
            suffix = "_us" if name == "t2" else ""
            values[f"prior.{name}_min{suffix}"] = lo
            values[f"prior.{name}_max{suffix}"] = hi
        lines = [f"{k} = {values[k]}" for k in sorted(values)]
        return "\n".join(lines) + "\n"


DEFAULT_PRIOR_BOUNDS = {
    "a": (0.4, 1.2),
    "c": (0.02, 0.3),
    "omega0": (1.0, 60.0),
    "t2": (2.0, 30.0),
}


def _read_pairs(path) -> dict[str, tuple[str, int]]:
    pairs: dict[str, tuple[str, int]] = {}
    text = Path(path).read_text()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", path, lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", path, lineno)
        if key in pairs:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        if not raw:
            raise ConfigError(f"missing value for {key!r}", path, lineno)
        pairs[key] = (raw, lineno)
    return pairs


def parse_config(path=None, overrides: dict[str, str] | None = None) -> ParsedConfig:
    """Parse and validate a configuration file.

    ``overrides`` (key -> raw value text) are applied after the file,
    e.g. from command-line flags. With ``path=None`` the defaults are
    used directly.
    """
    pairs = _read_pairs(path) if path is not None else {}
    for key, raw in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r} (override)", path)
        pairs[key] = (str(raw), 0)

    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for key, (parser, validator, default) in SCHEMA.items():
        if key in pairs:
            raw, lineno = pairs[key]
            lines[key] = lineno
            try:
                values[key] = validator(parser(raw))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}", path, lineno) from None
        else:
            values[key] = default

    def anchor(*keys) -> int | None:
        present = [lines[k] for k in keys if k in lines]
        return present[0] if present else None

    # budget: exactly one of epochs / lab_time_s (default: 1 s of lab time)
    if values["run.epochs"] is not None and values["run.lab_time_s"] is not None:
        raise ConfigError(
            "run.epochs and run.lab_time_s are mutually exclusive",
            path,
            anchor("run.epochs", "run.lab_time_s"),
        )
    if values["run.epochs"] is None and values["run.lab_time_s"] is None:
        values["run.lab_time_s"] = DEFAULT_LAB_TIME_S

    if values["run.seed"] is None:
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            try:
                values["run.seed"] = int(env)
            except ValueError:
                raise ConfigError(
                    f"environment variable {SEED_ENV_VAR}={env!r} is not an integer"
                ) from None
        else:
            values["run.seed"] = 1

    try:
        grid = SettingGrid(
            tau_min=values["grid.tau_min_us"],
            tau_max=values["grid.tau_max_us"],
            step=values["grid.step_us"],
        )
    except ValueError as exc:
        raise ConfigError(
            str(exc), path, anchor("grid.tau_min_us", "grid.tau_max_us", "grid.step_us")
        ) from None

    try:
        truth = TruthConfig(
            params=RamseyParams(
                a=values["truth.a"],
                c=values["truth.c"],
                omega0=values["truth.omega0"],
                t2=values["truth.t2_us"],
            ),
            lambda_b0=values["truth.lambda_b"],
            overhead_us=values["truth.overhead_us"],
            drift=DriftSpec(
                kind=values["truth.drift"],
                amplitude=values["truth.drift_amplitude"],
                period_s=values["truth.drift_period_s"],
            ),
        )
    except ValueError as exc:
        raise ConfigError(
            str(exc),
            path,
            anchor("truth.drift_amplitude", "truth.drift", "truth.a", "truth.t2_us"),
        ) from None

    bounds_all = {}
    for name in ("a", "c", "omega0", "t2"):
        suffix = "_us" if name == "t2" else ""
        lo = values[f"prior.{name}_min{suffix}"]
        hi = values[f"prior.{name}_max{suffix}"]
        if not lo < hi:
            raise ConfigError(
                f"prior bounds for {name} need min < max",
                path,
                anchor(f"prior.{name}_min{suffix}", f"prior.{name}_max{suffix}"),
            )
        bounds_all[name] = (lo, hi)

    if values["run.unknowns"] == "omega-only":
        bounds = {"omega0": bounds_all["omega0"]}
        fixed = {
            "a": truth.params.a,
            "c": truth.params.c,
            "t2": truth.params.t2,
        }
    else:
        bounds = bounds_all
        fixed = {}
    prior = PriorSpec(
        bounds=bounds,
        fixed=fixed,
        n_particles=values["prior.particles"],
        resample_threshold=values["prior.resample_threshold"],
        shrinkage=values["prior.shrinkage"],
    )

    run = RunConfig(
        protocol=values["run.protocol"],
        unknowns=values["run.unknowns"],
        epochs=values["run.epochs"],
        lab_time_s=values["run.lab_time_s"],
        epoch_time_ms=values["run.epoch_time_ms"],
        background_window=values["run.background_window"],
        seed=values["run.seed"],
        workflow=values["run.workflow"],
        grid=grid,
        selection=values["run.selection"],
        softmax_scale=values["run.softmax_scale"],
        background_prior_exponent=values["run.background_prior_exponent"],
    )
    epoch_us = run.resolved_epoch_time_ms() * 1000.0
    if epoch_us <= truth.overhead_us:
        raise ConfigError(
            "run.epoch_time_ms must exceed truth.overhead_us",
            path,
            anchor("run.epoch_time_ms", "truth.overhead_us"),
        )

    return ParsedConfig(
        run=run,
        truth=truth,
        prior=prior,
        tau=TauConfig(h=values["tau.h"], top_fraction=values["tau.top_fraction"]),
        batch_runs=values["batch.runs"],
        workers=values["batch.workers"],
        demo=DemoConfig(
            saturation_runs=values["demo.saturation_runs"],
            saturation_epochs=values["demo.saturation_epochs"],
        ),
        scaling=ScalingConfig(
            repeats=values["scaling.repeats"],
            epochs=values["scaling.epochs"],
            runs=values["scaling.runs"],
            grid_max_us=values["scaling.grid_max_us"],
        ),
    )
