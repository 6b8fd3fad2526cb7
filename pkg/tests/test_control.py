import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptris.channel import (
    ACTIVE_ALPHABET,
    ISOTROPIC,
    PowerMeter,
    ReflectionAlphabet,
    ReflectionConfig,
    Scenario,
    received_power_dbm,
    channel_coefficient,
)
from adaptris.control import (
    EARLY_EXIT,
    FIXED_BUDGET,
    EnumerationGuardError,
    enumerate_powers,
    exhaustive_optimize,
    flip_subgroup,
    iterative_adapt,
    lexicographic_states,
    mc_optimize,
    random_config,
    state_index,
    switch_element,
)
from adaptris.feedback import KIND_FEEDBACK, KIND_TRIAL, decode
from adaptris.geometry import build_hex_layout, singleton_schedule

from conftest import random_scenario


def meter_for(scenario, layout, pattern=ISOTROPIC):
    return PowerMeter(scenario, layout, ACTIVE_ALPHABET, pattern)


def test_random_config_deterministic():
    a = random_config(127, ACTIVE_ALPHABET, np.random.default_rng(42))
    b = random_config(127, ACTIVE_ALPHABET, np.random.default_rng(42))
    assert a == b
    assert set(a.states.tolist()) <= {1, 2}
    with pytest.raises(ValueError):
        random_config(0, ACTIVE_ALPHABET, np.random.default_rng(0))


def test_single_state_alphabet_rejected():
    with pytest.raises(ValueError):
        ReflectionAlphabet((1.25,))


def test_random_config_frequency():
    ones = np.zeros(127)
    for seed in range(10_000):
        ones += random_config(127, ACTIVE_ALPHABET, np.random.default_rng(seed)).states == 1
    freq = ones / 10_000
    assert freq.min() >= 0.47 and freq.max() <= 0.53


def test_switch_element():
    cfg = ReflectionConfig([1, 2, 1])
    assert switch_element(cfg, 1).states.tolist() == [2, 2, 1]
    assert switch_element(switch_element(cfg, 2), 2) == cfg
    assert switch_element(ReflectionConfig([3, 1]), 1, k=3).states.tolist() == [1, 1]
    assert switch_element(ReflectionConfig([2, 1]), 1, k=3).states.tolist() == [3, 1]
    for bad in (0, 4):
        with pytest.raises(IndexError):
            switch_element(cfg, bad)


def test_flip_subgroup(schedule):
    cfg = random_config(127, ACTIVE_ALPHABET, np.random.default_rng(1))
    g11 = schedule.subgroup(1, 1)
    assert flip_subgroup(flip_subgroup(cfg, g11), g11) == cfg
    changed = np.flatnonzero(flip_subgroup(cfg, schedule.subgroup(1, 7)).states != cfg.states)
    assert len(changed) == 13
    assert sorted((changed + 1).tolist()) == sorted(schedule.subgroup(1, 7))
    with pytest.raises(IndexError):
        flip_subgroup(cfg, [128])


def test_flipping_whole_group_set_toggles_all(schedule):
    cfg = random_config(127, ACTIVE_ALPHABET, np.random.default_rng(2))
    toggles = np.zeros(127, dtype=int)
    cur = cfg
    for l in range(1, 14):
        nxt = flip_subgroup(cur, schedule.subgroup(1, l))
        toggles += nxt.states != cur.states
        cur = nxt
    assert toggles.tolist() == [1] * 127
    assert np.all(cur.states != cfg.states)


def _session(seed, schedule, layout, pts=math.inf, max_iter=100, mode=FIXED_BUDGET, **kw):
    rng = np.random.default_rng(seed)
    sc = random_scenario(rng)
    meter = meter_for(sc, layout)
    initial = random_config(layout.m, ACTIVE_ALPHABET, rng)
    return meter, iterative_adapt(initial, meter, schedule, pts, max_iter, mode, **kw)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_noiseless_monotone_and_budget(seed, layout127, schedule):
    meter, rep = _session(seed, schedule, layout127)
    kept = rep.retained_powers()
    assert all(b >= a for a, b in zip(kept, kept[1:]))
    assert rep.iterations_used == 100 and rep.triggered
    assert rep.final_power_dbm == kept[-1] == meter(rep.final_config)
    assert rep.final_power_dbm >= rep.initial_power_dbm


def test_schedule_order_and_cycling(layout127, schedule):
    _, rep = _session(0, schedule, layout127, max_iter=60)
    order = [(r.group_set, r.subgroup) for r in rep.records]
    expected = [(j, l) for j in (1, 2) for l in range(1, 14)]
    assert order == (expected * 3)[:60]


def test_trigger_off(layout127, schedule):
    _, rep = _session(3, schedule, layout127, pts=-math.inf)
    assert not rep.triggered and rep.iterations_used == 0 and rep.records == ()
    assert rep.final_config == rep.initial_config


def test_trigger_boundary_equal_power(layout127, schedule):
    rng = np.random.default_rng(4)
    meter = meter_for(random_scenario(rng), layout127)
    initial = random_config(127, ACTIVE_ALPHABET, rng)
    p0 = meter(initial)
    assert not iterative_adapt(initial, meter, schedule, p0).triggered
    assert iterative_adapt(initial, meter, schedule, np.nextafter(p0, np.inf), max_iter=3).triggered


def test_early_exit(layout127, schedule):
    rng = np.random.default_rng(5)
    meter = meter_for(random_scenario(rng), layout127)
    initial = random_config(127, ACTIVE_ALPHABET, rng)
    pts = meter(initial) + 1e-9
    rep = iterative_adapt(initial, meter, schedule, pts, 100, EARLY_EXIT)
    first = next(r for r in rep.records if r.accepted and r.trial_power_dbm > pts)
    assert rep.iterations_used == first.iteration < 100
    assert rep.final_power_dbm > pts
    fixed = iterative_adapt(initial, meter, schedule, pts, 100, FIXED_BUDGET)
    assert fixed.iterations_used == 100
    assert fixed.records[: rep.iterations_used] == rep.records


def test_bad_arguments(layout127, schedule):
    cfg = random_config(127, ACTIVE_ALPHABET, np.random.default_rng(0))
    with pytest.raises(ValueError):
        iterative_adapt(cfg, lambda c: 0.0, schedule, 0.0, max_iter=0)
    with pytest.raises(ValueError):
        iterative_adapt(cfg, lambda c: 0.0, schedule, 0.0, termination_mode="sometimes")


def test_power_fn_errors_propagate(schedule):
    cfg = random_config(127, ACTIVE_ALPHABET, np.random.default_rng(0))

    def broken(c):
        raise ZeroDivisionError("meter fault")

    with pytest.raises(ZeroDivisionError):
        iterative_adapt(cfg, broken, schedule, 0.0)


def test_tie_is_retained_and_revert_keeps_reference(schedule):
    # power depends only on element 1: G1_x flips not touching it are ties
    def power(c):
        return -60.0 if c.states[0] == 1 else -70.0

    owner = next(l for l in range(1, 14) if 1 in schedule.subgroup(2, l))
    rep = iterative_adapt(ReflectionConfig.uniform(127, 1), power, schedule, 0.0, max_iter=26)
    # the only degrading trials are the ones flipping element 1 off
    rejected = [(r.group_set, r.subgroup) for r in rep.records if not r.accepted]
    assert all(r.trial_power_dbm == -60.0 for r in rep.records if r.accepted)
    g1_owner = next(l for l in range(1, 14) if 1 in schedule.subgroup(1, l))
    assert rejected == [(1, g1_owner), (2, owner)]
    assert rep.final_config.states[0] == 1


def test_information_hygiene(layout127, schedule):
    queries = []
    rng = np.random.default_rng(6)
    meter = meter_for(random_scenario(rng), layout127)

    def spy(c):
        queries.append(c)
        return meter(c)

    transcript = []
    rep = iterative_adapt(random_config(127, ACTIVE_ALPHABET, rng), spy, schedule, math.inf, 50,
                          transcript=transcript)
    assert len(queries) == 51
    tx = [decode(f) for d, f in transcript if d == "tx"]
    rx = [f for d, f in transcript if d == "rx"]
    assert len(tx) == len(rx) == 51
    for seq, (t, frame) in enumerate(zip(tx, rx)):
        assert t.seq == seq and frame[4] == KIND_FEEDBACK
        assert frame[5] in (0, 1)  # a single decision bit
        assert int.from_bytes(frame[:4], "big") == seq
    bits = [f[5] for f in rx[1:]]
    assert bits == [0 if r.accepted else 1 for r in rep.records]
    assert all(len(f) == 6 for _, f in transcript)
    assert bytes([KIND_TRIAL]) == transcript[0][1][4:5]


def run_to_quiescence(meter, layout, initial):
    sched = singleton_schedule(layout.m)
    rep = iterative_adapt(initial, meter, sched, math.inf, max_iter=layout.m * 30)
    accepted = [r.accepted for r in rep.records]
    for i in range(len(accepted) - layout.m + 1):
        if not any(accepted[i:i + layout.m]):
            return rep, rep.records[i].iteration
    return rep, None


def test_quiescence_is_local_optimum(mini_layout):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        sc = random_scenario(rng)
        meter = meter_for(sc, mini_layout)
        rep, quiet_at = run_to_quiescence(meter, mini_layout, random_config(7, ACTIVE_ALPHABET, rng))
        assert quiet_at is not None
        powers = enumerate_powers(meter)
        final = rep.final_config
        here = powers[state_index(final)]
        assert here == pytest.approx(rep.final_power_dbm, abs=1e-9)
        for m in range(1, 8):
            assert powers[state_index(switch_element(final, m))] <= here + 1e-9


def test_mc_optimize_basics(layout127, scenario):
    with pytest.raises(ValueError):
        mc_optimize(scenario, layout127, iterations=0, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        mc_optimize(scenario, layout127, iterations=5)
    res = mc_optimize(scenario, layout127, iterations=1, rng=np.random.default_rng(9))
    single = random_config(127, ACTIVE_ALPHABET, np.random.default_rng(9))
    assert res.config == single
    expected = received_power_dbm(scenario, channel_coefficient(scenario, layout127, single))
    assert res.power_dbm == pytest.approx(expected, abs=1e-9)
    res = mc_optimize(scenario, layout127, iterations=200, rng=np.random.default_rng(9))
    assert np.all(np.diff(res.trace) >= 0) and len(res.trace) == 200
    assert res.trace[-1] == res.power_dbm


def test_mc_deterministic(layout127, scenario):
    a = mc_optimize(scenario, layout127, iterations=50, rng=np.random.default_rng(3))
    b = mc_optimize(scenario, layout127, iterations=50, rng=np.random.default_rng(3))
    assert a.config == b.config and a.power_dbm == b.power_dbm


def test_lexicographic_order():
    rows = lexicographic_states(3, 2)
    assert rows.tolist()[:3] == [[1, 1, 1], [1, 1, 2], [1, 2, 1]]
    assert rows.tolist()[-1] == [2, 2, 2]
    for n, row in enumerate(rows):
        assert state_index(ReflectionConfig(row)) == n


def test_exhaustive_single_element():
    layout = build_hex_layout(0)
    cfg, p = exhaustive_optimize(Scenario(ue_position=(1.0, 0.5, 0.0)), layout)
    assert cfg.states.tolist() == [1]
    assert p > Scenario().noise_power_dbm


def test_exhaustive_tie_break_smallest():
    layout = build_hex_layout(0)
    # both states give the same |h| when amplitudes have equal modulus
    alpha = ReflectionAlphabet((1.0 + 0j, -1.0 + 0j))
    cfg, _ = exhaustive_optimize(Scenario(ue_position=(1.0, 0.5, 0.0)), layout, alpha)
    assert cfg.states.tolist() == [1]


def test_exhaustive_mini_dominates(mini_layout):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        sc = random_scenario(rng)
        cfg, best = exhaustive_optimize(sc, mini_layout)
        meter = meter_for(sc, mini_layout)
        all_p = enumerate_powers(meter)
        assert best == all_p.max()
        assert meter(cfg) == pytest.approx(best, abs=1e-9)
        # brute force over the 128 configs with the scalar-per-config evaluation
        direct = [meter(ReflectionConfig(r)) for r in lexicographic_states(7, 2)]
        np.testing.assert_allclose(all_p, direct, atol=1e-9)
        mc = mc_optimize(sc, mini_layout, iterations=int(rng.integers(1, 300)), rng=rng)
        assert best >= mc.power_dbm - 1e-9
        rep, _ = run_to_quiescence(meter, mini_layout, random_config(7, ACTIVE_ALPHABET, rng))
        assert mc.power_dbm <= best + 1e-9 and rep.final_power_dbm <= best + 1e-9


def test_enumeration_guard(layout127, scenario):
    with pytest.raises(EnumerationGuardError, match="guard"):
        exhaustive_optimize(scenario, layout127)
    with pytest.raises(EnumerationGuardError):
        exhaustive_optimize(scenario, build_hex_layout(1), guard=64)


def test_report_csv(layout127, schedule, tmp_path):
    _, rep = _session(7, schedule, layout127, max_iter=5)
    text = rep.to_csv(tmp_path / "r.csv", header=["seed: 7"])
    lines = text.splitlines()
    assert lines[0] == "# seed: 7"
    assert lines[1] == "iter,group_set,subgroup,trial_power_dbm,accepted"
    assert len(lines) == 7
    assert (tmp_path / "r.csv").read_text() == text
