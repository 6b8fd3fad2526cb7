"""JSON run configuration.

Keys carry their units (``frequency_ghz``, ``spacing_m``, ...).  The default
configuration reproduces the prototype's link budget and RIS; AoI placement,
noise floor and antenna-pattern exponents are artifact choices.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from adaptris.channel import GaussianDb, PatternModel, ReflectionAlphabet, Scenario, active_alphabet
from adaptris.feedback import Datagram, Transport, parse_transport
from adaptris.geometry import (
    PROTOTYPE_ELEMENT_SIZE_M,
    PROTOTYPE_N_RINGS,
    PROTOTYPE_SPACING_M,
    GroupSchedule,
    RisLayout,
    build_hex_layout,
    line_group_schedule,
    paper_group_schedule,
    read_layout_csv,
    schedule_from_json,
    singleton_schedule,
)
from adaptris.mobility import AoiGrid, ControllerParams, default_schedule

SCHEDULE_NAMES = ("auto", "tables", "lines", "singletons")


class ConfigError(ValueError):
    pass


def _positive(d: dict, key: str, default, cast=float):
    value = cast(d.get(key, default))
    if not value > 0:
        raise ConfigError(f"{key} must be positive, got {value!r}")
    return value


def _known(section: str, d: dict, keys: set) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{section} must be an object")
    unknown = set(d) - keys
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")


@dataclass(frozen=True)
class LayoutSpec:
    n_rings: int = PROTOTYPE_N_RINGS
    spacing_m: float = PROTOTYPE_SPACING_M
    element_dy_m: float = PROTOTYPE_ELEMENT_SIZE_M
    element_dz_m: float = PROTOTYPE_ELEMENT_SIZE_M
    positions_csv: str | None = None

    def build(self) -> RisLayout:
        if self.positions_csv:
            return read_layout_csv(self.positions_csv, self.element_dy_m, self.element_dz_m)
        return build_hex_layout(self.n_rings, self.spacing_m, self.element_dy_m, self.element_dz_m)

    def to_dict(self) -> dict:
        d = {"n_rings": self.n_rings, "spacing_m": self.spacing_m,
             "element_dy_m": self.element_dy_m, "element_dz_m": self.element_dz_m}
        if self.positions_csv:
            d["positions_csv"] = self.positions_csv
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayoutSpec":
        _known("layout", d, {"n_rings", "spacing_m", "element_dy_m", "element_dz_m", "positions_csv"})
        n_rings = int(d.get("n_rings", PROTOTYPE_N_RINGS))
        if n_rings < 0:
            raise ConfigError("n_rings must be >= 0")
        path = d.get("positions_csv")
        if path and not Path(path).is_file():
            raise ConfigError(f"layout file not found: {path}")
        return cls(
            n_rings=n_rings,
            spacing_m=_positive(d, "spacing_m", PROTOTYPE_SPACING_M),
            element_dy_m=_positive(d, "element_dy_m", PROTOTYPE_ELEMENT_SIZE_M),
            element_dz_m=_positive(d, "element_dz_m", PROTOTYPE_ELEMENT_SIZE_M),
            positions_csv=path,
        )


def default_pattern() -> PatternModel:
    return PatternModel("cosine", q_bs=0.0, q_ris=1.0, q_ue=0.0)


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario = field(default_factory=Scenario)
    layout: LayoutSpec = field(default_factory=LayoutSpec)
    schedule: str = "auto"
    pattern: PatternModel = field(default_factory=default_pattern)
    alphabet: ReflectionAlphabet = field(default_factory=active_alphabet)
    grid: AoiGrid = field(default_factory=AoiGrid)
    controller: ControllerParams = field(default_factory=ControllerParams)
    noise_sigma_db: float = 0.0
    n_avg: int = 5
    transport: str = "inproc"
    timeout_ms: float = 1000.0
    feedback_drop_prob: float = 0.0
    feedback_delay_ms: float = 0.0
    mc_iterations: int = 100
    baseline_off_amplitude: float = 0.0
    seeds: tuple[int, ...] = ()
    out_dir: str = "out"

    def noise_model(self) -> GaussianDb | None:
        return GaussianDb(self.noise_sigma_db) if self.noise_sigma_db > 0 else None

    def transport_spec(self) -> Transport:
        t = parse_transport(self.transport, self.timeout_ms)
        if isinstance(t, Datagram):
            return replace(t, drop_prob=self.feedback_drop_prob, delay_ms=self.feedback_delay_ms)
        return replace(t, drop_prob=self.feedback_drop_prob)

    def build_schedule(self, layout: RisLayout) -> GroupSchedule:
        name = self.schedule
        if name == "auto":
            return default_schedule(layout)
        if name == "tables":
            return paper_group_schedule()
        if name == "lines":
            return line_group_schedule(layout)
        if name == "singletons":
            return singleton_schedule(layout.m)
        return schedule_from_json(Path(name).read_text())

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "layout": self.layout.to_dict(),
            "schedule": self.schedule,
            "pattern": self.pattern.to_dict(),
            "alphabet": {"states_amp_deg": self.alphabet.to_polar()},
            "grid": self.grid.to_dict(),
            "controller": {"pts_dbm": self.controller.pts_dbm, "max_iter": self.controller.max_iter,
                           "termination_mode": self.controller.termination_mode},
            "measurement": {"noise_sigma_db": self.noise_sigma_db, "n_avg": self.n_avg},
            "transport": self.transport,
            "timeout_ms": self.timeout_ms,
            "feedback_drop_prob": self.feedback_drop_prob,
            "feedback_delay_ms": self.feedback_delay_ms,
            "mc_iterations": self.mc_iterations,
            "baseline_off_amplitude": self.baseline_off_amplitude,
            "seeds": list(self.seeds),
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        base = cls()
        _known("config", d, set(base.to_dict()))
        try:
            scenario = Scenario.from_dict(d.get("scenario", {}))
            pattern = PatternModel.from_dict(d["pattern"]) if "pattern" in d else base.pattern
            alphabet = base.alphabet
            if "alphabet" in d:
                _known("alphabet", d["alphabet"], {"states_amp_deg"})
                alphabet = ReflectionAlphabet.from_polar([tuple(s) for s in d["alphabet"]["states_amp_deg"]])
            grid = AoiGrid.from_dict(d["grid"]) if "grid" in d else base.grid
            c = d.get("controller", {})
            _known("controller", c, {"pts_dbm", "max_iter", "termination_mode"})
            controller = ControllerParams(
                float(c.get("pts_dbm", base.controller.pts_dbm)),
                int(c.get("max_iter", base.controller.max_iter)),
                c.get("termination_mode", base.controller.termination_mode),
            )
            meas = d.get("measurement", {})
            _known("measurement", meas, {"noise_sigma_db", "n_avg"})
            transport = d.get("transport", base.transport)
            parse_transport(transport)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

        schedule = d.get("schedule", base.schedule)
        if schedule not in SCHEDULE_NAMES and not Path(schedule).is_file():
            raise ConfigError(f"schedule must be one of {SCHEDULE_NAMES} or an existing JSON file")
        noise_sigma = float(meas.get("noise_sigma_db", base.noise_sigma_db))
        if noise_sigma < 0:
            raise ConfigError("noise_sigma_db must be >= 0")
        drop = float(d.get("feedback_drop_prob", base.feedback_drop_prob))
        if not 0.0 <= drop <= 1.0:
            raise ConfigError("feedback_drop_prob must lie in [0, 1]")
        delay = float(d.get("feedback_delay_ms", base.feedback_delay_ms))
        if delay < 0:
            raise ConfigError("feedback_delay_ms must be >= 0")
        return cls(
            scenario=scenario,
            layout=LayoutSpec.from_dict(d.get("layout", {})),
            schedule=schedule,
            pattern=pattern,
            alphabet=alphabet,
            grid=grid,
            controller=controller,
            noise_sigma_db=noise_sigma,
            n_avg=_positive(meas, "n_avg", base.n_avg, int),
            transport=transport,
            timeout_ms=_positive(d, "timeout_ms", base.timeout_ms),
            feedback_drop_prob=drop,
            feedback_delay_ms=delay,
            mc_iterations=_positive(d, "mc_iterations", base.mc_iterations, int),
            baseline_off_amplitude=float(d.get("baseline_off_amplitude", base.baseline_off_amplitude)),
            seeds=tuple(int(s) for s in d.get("seeds", ())),
            out_dir=str(d.get("out_dir", base.out_dir)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        """SHA-256 of the canonical JSON, ignoring ``out_dir`` and ``seeds``."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("seeds")
        return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(data)
