import math

import numpy as np
import pytest

from adaptris.channel import (
    ACTIVE_ALPHABET,
    GaussianDb,
    PatternModel,
    PowerMeter,
    ReflectionAlphabet,
    ReflectionConfig,
    Scenario,
    channel_coefficient,
    received_power_dbm,
)
from adaptris.control import iterative_adapt, random_config
from adaptris.feedback import Datagram
from adaptris.geometry import build_hex_layout
from adaptris.mobility import (
    AoiGrid,
    ControllerParams,
    SweepError,
    SweepResult,
    analyze,
    baseline_sweep,
    default_schedule,
    build_aoi_grid,
    fraction_below,
    gain_csv,
    grid_terms,
    histogram,
    histogram_csv,
    mc_sweep,
    row_cut,
    run_sweep,
)

PATTERN = PatternModel("cosine", q_ris=1.0)
SMALL = AoiGrid(nx=8, ny=5)


@pytest.fixture(scope="module")
def small_terms(layout127):
    return grid_terms(SMALL, Scenario(), layout127, PATTERN)


def sweep(layout, terms, pts, seed=0, max_iter=100, **kw):
    return run_sweep(SMALL, Scenario(), layout, ACTIVE_ALPHABET, PATTERN, ControllerParams(pts, max_iter),
                     seed, terms=terms, **kw)


def test_default_grid():
    grid = AoiGrid()
    assert len(grid) == 1380 and grid.positions().shape == (1380, 3)
    assert (grid.nx, grid.ny, grid.step) == (46, 30, 0.02)
    extent = grid.positions().max(axis=0) - grid.positions().min(axis=0)
    assert extent[:2] == pytest.approx([0.90, 0.58])


def test_grid_position_formula():
    grid = AoiGrid(origin=(1.0, 0.5, 0.1), x_axis=(0.0, 1.0, 0.0), y_axis=(0.6, 0.0, 0.8), nx=4, ny=3, step=0.05)
    np.testing.assert_allclose(grid.position(2, 1), [1.0 + 0.03, 0.5 + 0.1, 0.1 + 0.04])
    pos = grid.positions()
    for n, (ix, iy) in enumerate(zip(*grid.indices())):
        np.testing.assert_allclose(pos[n], grid.position(ix, iy), atol=1e-15)
    assert grid.indices()[0][:5].tolist() == [0, 1, 2, 3, 0]


def test_degenerate_grid_and_bounds():
    grid = AoiGrid(nx=1, ny=1)
    assert grid.positions().tolist() == [list(grid.origin)]
    with pytest.raises(IndexError):
        AoiGrid().position(46, 0)
    with pytest.raises(ValueError):
        AoiGrid(x_axis=(2.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        AoiGrid(step=0.0)
    with pytest.raises(ValueError):
        AoiGrid(nx=0)


def test_grid_dict_round_trip():
    grid = AoiGrid(nx=3, ny=2, step=0.01)
    assert build_aoi_grid(grid.to_dict()) == grid


def test_never_triggers(layout127, small_terms):
    res = sweep(layout127, small_terms, -math.inf)
    assert not res.triggered.any() and not res.iterations_used.any()
    assert (res.final_states == res.final_states[0]).all()


def test_always_triggers(layout127, small_terms):
    res = sweep(layout127, small_terms, math.inf, max_iter=20)
    assert res.triggered.all() and (res.iterations_used == 20).all()


def test_config_persists_between_untriggered(layout127, small_terms):
    res = sweep(layout127, small_terms, -64.0, seed=3)
    for n in range(1, len(res)):
        if not res.triggered[n]:
            assert np.array_equal(res.final_states[n], res.final_states[n - 1])


def test_sweep_matches_manual_carry(layout127, small_terms):
    res = sweep(layout127, small_terms, -63.0, seed=4, max_iter=30)
    init = np.random.default_rng(np.random.SeedSequence(4).spawn(2)[0])
    cfg = random_config(127, ACTIVE_ALPHABET, init)
    for n, b in enumerate(SMALL.positions()):
        meter = PowerMeter(Scenario(ue_position=b), layout127, pattern=PATTERN)
        rep = iterative_adapt(cfg, meter, default_schedule(layout127), -63.0, 30)
        cfg = rep.final_config
        assert res.p_ue_dbm[n] == pytest.approx(rep.final_power_dbm, abs=1e-9)
        assert res.triggered[n] == rep.triggered


def test_untriggered_positions_are_above_threshold(layout127, small_terms):
    pts = -64.0
    res = sweep(layout127, small_terms, pts, seed=5)
    assert np.all(res.p_ue_dbm[~res.triggered] >= pts)


def test_trigger_count_monotone_in_threshold(layout127, small_terms):
    for seed in range(3):
        counts = [int(sweep(layout127, small_terms, pts, seed=seed, max_iter=40).triggered.sum())
                  for pts in (-75.0, -68.0, -64.0, -60.0)]
        assert counts == sorted(counts)


def test_deterministic(layout127, small_terms):
    a = sweep(layout127, small_terms, -62.0, seed=9)
    b = sweep(layout127, small_terms, -62.0, seed=9)
    assert a.to_csv() == b.to_csv()
    assert np.array_equal(a.final_states, b.final_states)


def test_fresh_start_mode(layout127, small_terms):
    res = sweep(layout127, small_terms, math.inf, seed=1, max_iter=5, carry_config=False)
    carried = sweep(layout127, small_terms, math.inf, seed=1, max_iter=5)
    assert res.p_ue_dbm[0] == carried.p_ue_dbm[0]
    assert res.metadata["carry_config"] is False


def test_sweep_error_carries_position(layout127, small_terms):
    with pytest.raises(SweepError) as info:
        sweep(layout127, small_terms, math.inf, max_iter=2, transport=Datagram(timeout_ms=20, drop_prob=1.0))
    assert (info.value.index, info.value.ix, info.value.iy) == (0, 0, 0)


def test_noisy_sweep_runs(layout127, small_terms):
    res = sweep(layout127, small_terms, -62.0, seed=2, max_iter=10, noise=GaussianDb(0.5))
    assert np.isfinite(res.p_ue_dbm).all()


def test_baseline_off(layout127):
    res = baseline_sweep(SMALL, Scenario(), layout127, PATTERN)
    assert (res.p_ue_dbm == Scenario().noise_power_dbm).all()


def test_baseline_residual(layout127):
    sc = Scenario()
    res = baseline_sweep(SMALL, sc, layout127, PATTERN, off_state=0.1)
    assert (res.p_ue_dbm > sc.noise_power_dbm).all()
    uniform = ReflectionConfig.uniform(127, 1)
    alpha = ReflectionAlphabet((0.1 + 0j, 0j))
    for n in (0, 7, 39):
        s = sc.with_ue(SMALL.positions()[n])
        h = channel_coefficient(s, layout127, uniform, alpha, PATTERN)
        assert res.p_ue_dbm[n] == pytest.approx(received_power_dbm(s, h), abs=1e-9)


def test_mc_sweep(layout127, small_terms):
    res = mc_sweep(SMALL, Scenario(), layout127, ACTIVE_ALPHABET, PATTERN, 50, seed=3, terms=small_terms)
    again = mc_sweep(SMALL, Scenario(), layout127, ACTIVE_ALPHABET, PATTERN, 50, seed=3)
    np.testing.assert_allclose(res.p_ue_dbm, again.p_ue_dbm, atol=1e-9)
    assert (res.iterations_used == 50).all()


def test_analyze_identity(layout127, small_terms):
    res = sweep(layout127, small_terms, -62.0, seed=1, max_iter=10)
    stats = analyze(res, res, pts_dbm=-62.0)
    assert (stats.gain_db == 0).all()
    assert stats.counts.sum() == len(SMALL)
    assert stats.minimum <= stats.median <= stats.maximum


def test_analyze_pools_and_checks_grid(layout127, small_terms):
    a = sweep(layout127, small_terms, -62.0, seed=1, max_iter=10)
    b = sweep(layout127, small_terms, -62.0, seed=2, max_iter=10)
    stats = analyze([a, b], baseline_sweep(SMALL, Scenario(), layout127, PATTERN))
    assert stats.gain_db.shape == (2, len(SMALL)) and stats.counts.sum() == 2 * len(SMALL)
    other = baseline_sweep(AoiGrid(nx=2, ny=2), Scenario(), layout127, PATTERN)
    with pytest.raises(ValueError):
        analyze(a, other)


def test_fraction_below_cdf_monotone(layout127, small_terms):
    res = sweep(layout127, small_terms, -62.0, seed=1, max_iter=10)
    fr = [fraction_below(res, t) for t in np.linspace(-80, -50, 61)]
    assert all(b >= a for a, b in zip(fr, fr[1:]))


def test_histogram_bins():
    left, counts = histogram(np.array([-70.2, -70.0, -69.9, -65.5]))
    assert left.tolist()[0] == -71.0
    assert counts.sum() == 4 and counts.tolist()[:2] == [1, 2]


def test_row_cut(layout127):
    res = baseline_sweep(SMALL, Scenario(), layout127, PATTERN)
    pos, p = row_cut(res, iy=2)
    assert len(p) == SMALL.nx and np.allclose(pos[:, 1], pos[0, 1])
    with pytest.raises(ValueError):
        row_cut(res)
    with pytest.raises(IndexError):
        row_cut(res, ix=99)


def test_csv_round_trip(tmp_path, layout127, small_terms):
    res = sweep(layout127, small_terms, -62.0, seed=1, max_iter=10)
    path = tmp_path / "s.csv"
    res.to_csv(path, header=["seed: 1"])
    back = SweepResult.read_csv(path)
    assert back.same_grid(res)
    assert np.array_equal(back.p_ue_dbm, res.p_ue_dbm)
    assert np.array_equal(back.triggered, res.triggered)
    assert back.metadata["seed"] == "1"
    stats = analyze(res)
    assert histogram_csv(stats).splitlines()[0] == "bin_left_dbm,count"
    assert gain_csv(res, np.zeros(len(res))).splitlines()[0] == "ix,iy,gain_db"
    assert path.read_text().splitlines()[2] == "ix,iy,x_m,y_m,p_ue_dbm,iterations_used,triggered"


def test_small_layout_uses_line_groups():
    layout = build_hex_layout(2)
    grid = AoiGrid(nx=2, ny=2)
    res = run_sweep(grid, Scenario(), layout, params=ControllerParams(math.inf, 7))
    assert (res.iterations_used == 7).all()
