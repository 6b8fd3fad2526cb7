"""Frequency-flat RIS channel and received-power model.

The BS-UE line of sight is blocked, so the only path is the RIS bounce:

    h = sqrt(G_BS G_UE) dy dz / (4 pi)
        * sum_m Gamma_m sqrt(F_m) exp(-j 2 pi (|a-u_m| + |b-u_m|) / lambda)
                / (|a-u_m| |b-u_m|)

    P_UE = P_BS |h|^2 + P_N        (linear, mW)
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from adaptris.geometry import RisLayout

C0 = 299_792_458.0
PROTOTYPE_FREQUENCY_HZ = 23.8e9
PROTOTYPE_BS_POSITION = (1.5, -1.09, 0.0)


def db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


def lin_to_db(lin):
    return 10.0 * np.log10(lin)


dbm_to_mw = db_to_lin
mw_to_dbm = lin_to_db


def _point(p) -> tuple[float, float, float]:
    v = tuple(float(x) for x in p)
    if len(v) != 3:
        raise ValueError(f"expected a 3-D point, got {p!r}")
    return v


@dataclass(frozen=True)
class Scenario:
    """Link budget and BS/UE placement, in the RIS frame (meters, dB, dBm).

    The noise power default of -90 dBm is a placeholder, not a measured value.
    """

    frequency_hz: float = PROTOTYPE_FREQUENCY_HZ
    bs_position: tuple[float, float, float] = PROTOTYPE_BS_POSITION
    ue_position: tuple[float, float, float] = (1.0, 0.5, 0.0)
    bs_power_dbm: float = 10.0
    noise_power_dbm: float = -90.0
    bs_gain_db: float = 19.0
    ue_gain_db: float = 3.2
    wavelength: float = field(init=False, repr=False, compare=False)
    gain_amplitude: float = field(init=False, repr=False, compare=False)
    bs_power_mw: float = field(init=False, repr=False, compare=False)
    noise_power_mw: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.frequency_hz > 0:
            raise ValueError("frequency must be positive")
        object.__setattr__(self, "bs_position", _point(self.bs_position))
        object.__setattr__(self, "ue_position", _point(self.ue_position))
        object.__setattr__(self, "wavelength", C0 / self.frequency_hz)
        object.__setattr__(
            self, "gain_amplitude", math.sqrt(db_to_lin(self.bs_gain_db) * db_to_lin(self.ue_gain_db))
        )
        object.__setattr__(self, "bs_power_mw", dbm_to_mw(self.bs_power_dbm))
        object.__setattr__(self, "noise_power_mw", dbm_to_mw(self.noise_power_dbm))

    def with_ue(self, b) -> "Scenario":
        return Scenario(
            self.frequency_hz, self.bs_position, _point(b), self.bs_power_dbm,
            self.noise_power_dbm, self.bs_gain_db, self.ue_gain_db,
        )

    def to_dict(self) -> dict:
        return {
            "frequency_ghz": self.frequency_hz / 1e9,
            "bs_position_m": list(self.bs_position),
            "ue_position_m": list(self.ue_position),
            "bs_power_dbm": self.bs_power_dbm,
            "noise_power_dbm": self.noise_power_dbm,
            "bs_gain_db": self.bs_gain_db,
            "ue_gain_db": self.ue_gain_db,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {"frequency_ghz", "bs_position_m", "ue_position_m", "bs_power_dbm",
                 "noise_power_dbm", "bs_gain_db", "ue_gain_db"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        base = cls()
        return cls(
            frequency_hz=float(d.get("frequency_ghz", base.frequency_hz / 1e9)) * 1e9,
            bs_position=d.get("bs_position_m", base.bs_position),
            ue_position=d.get("ue_position_m", base.ue_position),
            bs_power_dbm=float(d.get("bs_power_dbm", base.bs_power_dbm)),
            noise_power_dbm=float(d.get("noise_power_dbm", base.noise_power_dbm)),
            bs_gain_db=float(d.get("bs_gain_db", base.bs_gain_db)),
            ue_gain_db=float(d.get("ue_gain_db", base.ue_gain_db)),
        )


def load_scenario(path: str | Path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ReflectionAlphabet:
    """Ordered complex reflection states; configurations index it 1..K."""

    states: tuple[complex, ...]
    values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        states = tuple(complex(s) for s in self.states)
        if len(states) < 2:
            raise ValueError("a reflection alphabet needs at least two states")
        if len(set(states)) != len(states):
            raise ValueError("reflection states must be distinct")
        object.__setattr__(self, "states", states)
        values = np.array(states, dtype=complex)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return len(self.states)

    @classmethod
    def from_polar(cls, pairs: Sequence[tuple[float, float]]) -> "ReflectionAlphabet":
        """Build from ``(amplitude, phase_deg)`` pairs."""
        return cls(tuple(cmath.rect(a, math.radians(p)) for a, p in pairs))

    def to_polar(self) -> list[list[float]]:
        return [[abs(s), math.degrees(cmath.phase(s)) if s != 0 else 0.0] for s in self.states]


def active_alphabet(off_amplitude: float = 0.0) -> ReflectionAlphabet:
    """1-bit active-mode alphabet ``{(1.25, 0 deg), (off_amplitude, 0 deg)}``."""
    return ReflectionAlphabet.from_polar([(1.25, 0.0), (off_amplitude, 0.0)])


ACTIVE_ALPHABET = active_alphabet()


class ReflectionConfig:
    """Per-element state indices (1-based into the alphabet), immutable."""

    __slots__ = ("states",)

    def __init__(self, states):
        arr = np.array(states, dtype=np.int64)
        if arr.ndim != 1 or len(arr) == 0:
            raise ValueError("a configuration is a non-empty 1-D sequence of states")
        if arr.min() < 1:
            raise ValueError("state indices start at 1")
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ReflectionConfig is immutable")

    def __len__(self) -> int:
        return len(self.states)

    def __eq__(self, other) -> bool:
        return isinstance(other, ReflectionConfig) and np.array_equal(self.states, other.states)

    def __hash__(self) -> int:
        return hash(self.states.tobytes())

    def __repr__(self) -> str:
        return f"ReflectionConfig({self.states.tolist()})"

    def check(self, m: int, k: int) -> None:
        if len(self.states) != m:
            raise ValueError(f"configuration has {len(self.states)} entries, layout has {m}")
        if self.states.max() > k:
            raise ValueError(f"state index above alphabet size {k}")

    @classmethod
    def uniform(cls, m: int, state: int = 1) -> "ReflectionConfig":
        return cls(np.full(m, state))


@dataclass(frozen=True)
class PatternModel:
    """Combined BS x RIS(rx) x RIS(tx) x UE power pattern.

    ``cosine`` uses ``max(cos theta, 0) ** q`` per antenna.  BS and UE
    boresights default to pointing at the RIS center; the RIS normal is +x.
    """

    variant: str = "isotropic"
    q_bs: float = 0.0
    q_ris: float = 0.0
    q_ue: float = 0.0
    bs_boresight: tuple[float, float, float] | None = None
    ue_boresight: tuple[float, float, float] | None = None
    ris_normal: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.variant not in ("isotropic", "cosine"):
            raise ValueError(f"unknown pattern variant {self.variant!r}")
        if min(self.q_bs, self.q_ris, self.q_ue) < 0:
            raise ValueError("pattern exponents must be non-negative")

    def to_dict(self) -> dict:
        d = {"variant": self.variant}
        if self.variant == "cosine":
            d.update(q_bs=self.q_bs, q_ris=self.q_ris, q_ue=self.q_ue)
            if self.bs_boresight is not None:
                d["bs_boresight"] = list(self.bs_boresight)
            if self.ue_boresight is not None:
                d["ue_boresight"] = list(self.ue_boresight)
            if self.ris_normal != (1.0, 0.0, 0.0):
                d["ris_normal"] = list(self.ris_normal)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PatternModel":
        kw = dict(d)
        for key in ("bs_boresight", "ue_boresight", "ris_normal"):
            if kw.get(key) is not None:
                kw[key] = _point(kw[key])
        return cls(**kw)


ISOTROPIC = PatternModel()


def _cos_between(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (v * w).sum(axis=-1) / (np.linalg.norm(v, axis=-1) * np.linalg.norm(w, axis=-1))


def _term(cos: np.ndarray, q: float) -> np.ndarray:
    return np.power(np.clip(cos, 0.0, 1.0), q)


def pattern_vector(a, b, u: np.ndarray, model: PatternModel) -> np.ndarray:
    """Combined pattern F for every row of ``u``; geometry assumed valid."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if model.variant == "isotropic":
        return np.ones(len(u))
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    normal = np.asarray(model.ris_normal, dtype=float)
    bs_axis = -a if model.bs_boresight is None else np.asarray(model.bs_boresight, dtype=float)
    ue_axis = -b if model.ue_boresight is None else np.asarray(model.ue_boresight, dtype=float)
    f = _term(_cos_between(u - a, bs_axis), model.q_bs)
    f = f * _term(_cos_between(a - u, normal), model.q_ris)
    f = f * _term(_cos_between(b - u, normal), model.q_ris)
    f = f * _term(_cos_between(u - b, ue_axis), model.q_ue)
    return f


def combined_pattern(a, b, u_m, model: PatternModel = ISOTROPIC) -> float:
    """Combined antenna pattern for one element, in [0, 1]."""
    a, b, u_m = (np.asarray(_point(p)) for p in (a, b, u_m))
    if np.array_equal(a, u_m) or np.array_equal(b, u_m):
        raise ValueError("BS/UE position coincides with a RIS element")
    return float(pattern_vector(a, b, u_m[None, :], model)[0])


def element_terms(scenario: Scenario, layout: RisLayout, pattern: PatternModel = ISOTROPIC):
    """Return ``(prefactor, terms)`` with ``h = prefactor * sum(Gamma * terms)``."""
    a = np.asarray(scenario.bs_position)
    b = np.asarray(scenario.ue_position)
    u = layout.positions
    da = np.linalg.norm(a - u, axis=1)
    db = np.linalg.norm(b - u, axis=1)
    if np.any(da == 0) or np.any(db == 0):
        raise ValueError("BS/UE position coincides with a RIS element")
    f = pattern_vector(a, b, u, pattern)
    terms = np.sqrt(f) * np.exp(-2j * np.pi * (da + db) / scenario.wavelength) / (da * db)
    return prefactor(scenario, layout), terms


def element_terms_batch(
    scenario: Scenario, layout: RisLayout, pattern: PatternModel, ue_positions: np.ndarray
) -> np.ndarray:
    """Per-element terms for many UE positions at once, shape ``(N, M)``."""
    a = np.asarray(scenario.bs_position)
    u = layout.positions
    b = np.asarray(ue_positions, dtype=float).reshape(-1, 3)
    da = np.linalg.norm(a - u, axis=1)
    db = np.linalg.norm(b[:, None, :] - u[None, :, :], axis=2)
    if np.any(da == 0) or np.any(db == 0):
        raise ValueError("BS/UE position coincides with a RIS element")
    if pattern.variant == "isotropic":
        f = np.ones_like(db)
    else:
        f = np.stack([pattern_vector(a, bi, u, pattern) for bi in b])
    return np.sqrt(f) * np.exp(-2j * np.pi * (da[None, :] + db) / scenario.wavelength) / (da[None, :] * db)


def prefactor(scenario: Scenario, layout: RisLayout) -> float:
    return scenario.gain_amplitude * layout.element_dy * layout.element_dz / (4.0 * math.pi)


def _coefficient(pref: float, terms: np.ndarray, gammas: np.ndarray, states: np.ndarray) -> complex:
    # Fixed ascending-index pairwise sum keeps results bit-reproducible.
    return complex(pref * np.sum(gammas[states - 1] * terms))


def channel_coefficient(
    scenario: Scenario,
    layout: RisLayout,
    config: ReflectionConfig,
    alphabet: ReflectionAlphabet = ACTIVE_ALPHABET,
    pattern: PatternModel = ISOTROPIC,
) -> complex:
    config.check(layout.m, alphabet.k)
    pref, terms = element_terms(scenario, layout, pattern)
    return _coefficient(pref, terms, alphabet.values, config.states)


def received_power_dbm(scenario: Scenario, h: complex) -> float:
    return float(mw_to_dbm(scenario.bs_power_mw * abs(h) ** 2 + scenario.noise_power_mw))


@dataclass(frozen=True)
class GaussianDb:
    """Additive zero-mean gaussian error on each dB reading."""

    sigma_db: float

    def __post_init__(self):
        if self.sigma_db < 0:
            raise ValueError("sigma must be non-negative")


def _average(p_dbm: float, noise: GaussianDb | None, n_avg: int, rng) -> float:
    if n_avg < 1:
        raise ValueError("n_avg must be >= 1")
    if noise is None:
        return p_dbm
    return float(p_dbm + rng.normal(0.0, noise.sigma_db, n_avg).mean())


def measure_power(
    scenario: Scenario,
    layout: RisLayout,
    config: ReflectionConfig,
    alphabet: ReflectionAlphabet = ACTIVE_ALPHABET,
    pattern: PatternModel = ISOTROPIC,
    noise_model: GaussianDb | None = None,
    n_avg: int = 5,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean of ``n_avg`` noisy received-power readings, in dBm."""
    if n_avg < 1:
        raise ValueError("n_avg must be >= 1")
    p = received_power_dbm(scenario, channel_coefficient(scenario, layout, config, alphabet, pattern))
    return _average(p, noise_model, n_avg, rng)


class PowerMeter:
    """Simulated UE power reading at one fixed position: ``config -> dBm``.

    Element terms are computed once, so repeated readings cost one
    M-length sum each.  Matches :func:`measure_power` bit for bit.
    """

    def __init__(
        self,
        scenario: Scenario,
        layout: RisLayout,
        alphabet: ReflectionAlphabet = ACTIVE_ALPHABET,
        pattern: PatternModel = ISOTROPIC,
        noise_model: GaussianDb | None = None,
        n_avg: int = 5,
        rng: np.random.Generator | None = None,
        terms: np.ndarray | None = None,
    ):
        if n_avg < 1:
            raise ValueError("n_avg must be >= 1")
        if noise_model is not None and rng is None:
            raise ValueError("a noisy meter needs an rng")
        self.scenario = scenario
        self.m = layout.m
        self.alphabet = alphabet
        self.noise_model = noise_model
        self.n_avg = n_avg
        self.rng = rng
        self.prefactor = prefactor(scenario, layout)
        if terms is None:
            _, terms = element_terms(scenario, layout, pattern)
        self.terms = terms

    def coefficient(self, config: ReflectionConfig) -> complex:
        return _coefficient(self.prefactor, self.terms, self.alphabet.values, config.states)

    def noiseless(self, config: ReflectionConfig) -> float:
        return received_power_dbm(self.scenario, self.coefficient(config))

    def __call__(self, config: ReflectionConfig) -> float:
        return _average(self.noiseless(config), self.noise_model, self.n_avg, self.rng)

    def powers(self, states: np.ndarray) -> np.ndarray:
        """Noiseless dBm for a ``(N, M)`` batch of 1-based state rows."""
        h = self.prefactor * np.sum(self.alphabet.values[states - 1] * self.terms, axis=1)
        return mw_to_dbm(self.scenario.bs_power_mw * np.abs(h) ** 2 + self.scenario.noise_power_mw)
