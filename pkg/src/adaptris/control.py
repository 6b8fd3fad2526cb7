"""Subgroup-flip adaptation driven by a single feedback bit, plus benchmarks.

The controller and the UE are separate endpoints joined by a
:mod:`adaptris.feedback` link.  The controller applies configurations and
only ever sees one decision bit per trial; the UE measures power, compares
it with its last accepted reading, and owns the threshold logic.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from adaptris.channel import (
    ACTIVE_ALPHABET,
    ISOTROPIC,
    PatternModel,
    PowerMeter,
    ReflectionAlphabet,
    ReflectionConfig,
    Scenario,
)
from adaptris.feedback import (
    EndMsg,
    FeedbackMsg,
    FeedbackTimeout,
    FrameError,
    InProcess,
    Link,
    TrialMsg,
    Transport,
    await_reply,
    decode,
    encode,
    run_session,
)
from adaptris.geometry import GroupSchedule, RisLayout

FIXED_BUDGET = "fixed_budget"
EARLY_EXIT = "early_exit"
TERMINATION_MODES = (FIXED_BUDGET, EARLY_EXIT)

ENUMERATION_GUARD = 2 ** 20


def _config(states: np.ndarray) -> ReflectionConfig:
    # Skips validation; callers hand over a fresh array they no longer touch.
    cfg = ReflectionConfig.__new__(ReflectionConfig)
    states.setflags(write=False)
    object.__setattr__(cfg, "states", states)
    return cfg


def random_config(m: int, alphabet: ReflectionAlphabet, rng: np.random.Generator) -> ReflectionConfig:
    """I.i.d. uniform states over the alphabet."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return _config(rng.integers(1, alphabet.k + 1, size=m, dtype=np.int64))


def switch_element(config: ReflectionConfig, m_index: int, k: int = 2) -> ReflectionConfig:
    """Advance one element to the next state (a toggle for K = 2)."""
    if not 1 <= m_index <= len(config):
        raise IndexError(f"element index {m_index} outside 1..{len(config)}")
    states = config.states.copy()
    states[m_index - 1] = states[m_index - 1] % k + 1
    return _config(states)


def flip_subgroup(config: ReflectionConfig, subgroup: Sequence[int], k: int = 2) -> ReflectionConfig:
    idx = np.asarray(subgroup, dtype=np.int64) - 1
    if len(idx) and (idx.min() < 0 or idx.max() >= len(config)):
        raise IndexError(f"subgroup has indices outside 1..{len(config)}")
    states = config.states.copy()
    states[idx] = states[idx] % k + 1
    return _config(states)


@dataclass(frozen=True)
class TrialRecord:
    iteration: int
    group_set: int
    subgroup: int
    trial_power_dbm: float
    accepted: bool


@dataclass(frozen=True)
class AdaptationReport:
    records: tuple[TrialRecord, ...]
    initial_config: ReflectionConfig
    final_config: ReflectionConfig
    initial_power_dbm: float
    final_power_dbm: float
    iterations_used: int
    triggered: bool

    def retained_powers(self) -> list[float]:
        """Accepted power after each iteration, starting with the initial reading."""
        out = [self.initial_power_dbm]
        for r in self.records:
            out.append(r.trial_power_dbm if r.accepted else out[-1])
        return out

    def to_csv(self, path: str | Path | None = None, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "group_set", "subgroup", "trial_power_dbm", "accepted"])
        for r in self.records:
            w.writerow([r.iteration, r.group_set, r.subgroup, repr(r.trial_power_dbm), int(r.accepted)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class _Decision:
    iteration: int
    group_set: int
    subgroup: int
    accepted: bool


class RisSurface:
    """The physical RIS: holds whatever configuration is currently applied."""

    def __init__(self, config: ReflectionConfig):
        self.config = config


class RisController:
    """RIS-controller half of the adaptation loop.

    Knows the schedule and the surface, never the UE position or any power.
    The subgroup cursor restarts at the first subgroup of the first group
    set for every session.
    """

    def __init__(self, surface: RisSurface, schedule: GroupSchedule, max_iter: int, k: int = 2):
        if max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        self.surface = surface
        self.k = k
        self.max_iter = max_iter
        self._steps = [(j, l, np.asarray(sg, dtype=np.int64) - 1) for j, l, sg in schedule]
        if max(int(s.max()) for _, _, s in self._steps) >= len(surface.config):
            raise IndexError("schedule references elements outside the configuration")
        self.accepted = surface.config
        self.decisions: list[_Decision] = []
        self.triggered = False
        self.iteration = 0

    @property
    def cursor(self) -> tuple[int, int]:
        j, l, _ = self._steps[self.iteration % len(self._steps)]
        return j, l

    def run(self, link: Link, timeout_s: float) -> "RisController":
        self.surface.config = self.accepted
        link.send(encode(TrialMsg(0)))
        reply = self._await(link, 0, timeout_s)
        if isinstance(reply, EndMsg):
            return self
        self.triggered = True
        k = self.k
        n_steps = len(self._steps)
        for i in range(1, self.max_iter + 1):
            j, l, idx = self._steps[(i - 1) % n_steps]
            states = self.accepted.states.copy()
            states[idx] = states[idx] % k + 1
            trial = _config(states)
            self.surface.config = trial
            link.send(encode(TrialMsg(i)))
            reply = self._await(link, i, timeout_s)
            accepted = isinstance(reply, EndMsg) or not reply.degraded
            if accepted:
                self.accepted = trial
            else:
                self.surface.config = self.accepted
            self.iteration = i
            self.decisions.append(_Decision(i, j, l, accepted))
            if isinstance(reply, EndMsg):
                break
        return self

    def _await(self, link: Link, seq: int, timeout_s: float):
        try:
            return await_reply(link, seq, timeout_s)
        except FeedbackTimeout as exc:
            self.surface.config = self.accepted
            raise FeedbackTimeout(seq, f"no feedback for trial {seq}", self.accepted) from exc


class UeEndpoint:
    """UE half: measures power on every applied trial and answers with one bit.

    After a degraded trial the reference stays at the last accepted reading.
    Raw readings are kept in ``log`` for analysis only; they never leave the
    UE.
    """

    def __init__(self, measure: Callable[[], float], pts_dbm: float, termination_mode: str = FIXED_BUDGET):
        if termination_mode not in TERMINATION_MODES:
            raise ValueError(f"unknown termination mode {termination_mode!r}")
        self.measure = measure
        self.pts_dbm = pts_dbm
        self.early_exit = termination_mode == EARLY_EXIT
        self.reference: float | None = None
        self.last_seq = -1
        self.log: list[float] = []

    def __call__(self, frame: bytes) -> bytes | None:
        msg = decode(frame)
        if not isinstance(msg, TrialMsg):
            raise FrameError("UE expects TRIAL_APPLIED frames")
        if msg.seq <= self.last_seq:
            return None
        self.last_seq = msg.seq
        p = self.measure()
        self.log.append(p)
        if msg.seq == 0:
            self.reference = p
            return encode(EndMsg(0) if p >= self.pts_dbm else FeedbackMsg(0, False))
        degraded = p < self.reference
        if not degraded:
            self.reference = p
            if self.early_exit and p > self.pts_dbm:
                return encode(EndMsg(msg.seq))
        return encode(FeedbackMsg(msg.seq, degraded))


def iterative_adapt(
    initial: ReflectionConfig,
    power_fn: Callable[[ReflectionConfig], float],
    schedule: GroupSchedule,
    pts_dbm: float,
    max_iter: int = 100,
    termination_mode: str = FIXED_BUDGET,
    transport: Transport | str = InProcess(),
    k: int = 2,
    transcript: list | None = None,
) -> AdaptationReport:
    """Run one adaptation session from ``initial``.

    ``power_fn`` plays the role of the physical channel: it is only ever
    called by the UE endpoint, on the configuration currently applied to the
    surface.  On a feedback timeout the surface is left at the last accepted
    configuration and :class:`FeedbackTimeout` is raised carrying it.
    """
    surface = RisSurface(initial)
    controller = RisController(surface, schedule, max_iter, k)
    ue = UeEndpoint(lambda: power_fn(surface.config), pts_dbm, termination_mode)
    run_session(transport, controller, ue, transcript)

    log = ue.log
    records = tuple(
        TrialRecord(d.iteration, d.group_set, d.subgroup, log[d.iteration], d.accepted)
        for d in controller.decisions
    )
    return AdaptationReport(
        records=records,
        initial_config=initial,
        final_config=controller.accepted,
        initial_power_dbm=log[0],
        final_power_dbm=ue.reference,
        iterations_used=controller.iteration,
        triggered=controller.triggered,
    )


@dataclass(frozen=True)
class SearchResult:
    config: ReflectionConfig
    power_dbm: float
    trace: np.ndarray = field(repr=False)


def _meter(scenario, layout, alphabet, pattern) -> PowerMeter:
    return PowerMeter(scenario, layout, alphabet, pattern)


def mc_search(meter: PowerMeter, iterations: int, rng: np.random.Generator) -> SearchResult:
    """Best of ``iterations`` i.i.d. random configurations under full channel knowledge."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    states = rng.integers(1, meter.alphabet.k + 1, size=(iterations, meter.m), dtype=np.int64)
    powers = meter.powers(states)
    best = int(np.argmax(powers))
    return SearchResult(_config(states[best].copy()), float(powers[best]), np.maximum.accumulate(powers))


def mc_optimize(
    scenario: Scenario,
    layout: RisLayout,
    alphabet: ReflectionAlphabet = ACTIVE_ALPHABET,
    pattern: PatternModel = ISOTROPIC,
    iterations: int = 100,
    rng: np.random.Generator | None = None,
) -> SearchResult:
    if rng is None:
        raise ValueError("mc_optimize needs an explicit rng")
    return mc_search(_meter(scenario, layout, alphabet, pattern), iterations, rng)


class EnumerationGuardError(ValueError):
    pass


def lexicographic_states(m: int, k: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows ``start..stop`` of all K**M configurations in lexicographic order."""
    stop = k ** m if stop is None else stop
    n = np.arange(start, stop, dtype=np.int64)[:, None]
    place = k ** np.arange(m - 1, -1, -1, dtype=np.int64)
    return (n // place) % k + 1


def enumerate_powers(meter: PowerMeter, guard: int = ENUMERATION_GUARD, chunk: int = 1 << 15) -> np.ndarray:
    """Noiseless dBm of every configuration, lexicographic order."""
    k, m = meter.alphabet.k, meter.m
    if m * np.log2(k) > np.log2(guard):
        raise EnumerationGuardError(f"K^M = {k}^{m} exceeds the enumeration guard of {guard}")
    total = k ** m
    out = np.empty(total)
    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        out[lo:hi] = meter.powers(lexicographic_states(m, k, lo, hi))
    return out


def exhaustive_optimize(
    scenario: Scenario,
    layout: RisLayout,
    alphabet: ReflectionAlphabet = ACTIVE_ALPHABET,
    pattern: PatternModel = ISOTROPIC,
    guard: int = ENUMERATION_GUARD,
) -> tuple[ReflectionConfig, float]:
    """Global maximizer of received power; ties go to the lexicographically smallest."""
    meter = _meter(scenario, layout, alphabet, pattern)
    powers = enumerate_powers(meter, guard)
    best = int(np.argmax(powers))
    states = lexicographic_states(meter.m, alphabet.k, best, best + 1)[0]
    return _config(states.copy()), float(powers[best])


def state_index(config: ReflectionConfig, k: int = 2) -> int:
    """Position of ``config`` in the lexicographic enumeration."""
    idx = 0
    for s in config.states:
        idx = idx * k + int(s) - 1
    return idx
