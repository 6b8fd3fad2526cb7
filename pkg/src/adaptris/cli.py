"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error
(feedback timeout, enumeration guard, failed sweep).
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from adaptris import __version__
from adaptris.channel import PowerMeter
from adaptris.config import ConfigError, RunConfig, load_config
from adaptris.control import EnumerationGuardError, exhaustive_optimize, iterative_adapt, random_config
from adaptris.feedback import TransportError, parse_transport
from adaptris.mobility import (
    SweepError,
    SweepResult,
    analyze,
    baseline_sweep,
    gain_csv,
    grid_terms,
    histogram_csv,
    mc_sweep,
    run_sweep,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _provenance(cfg: RunConfig, command: str, seed: int | None = None) -> list[str]:
    lines = [f"adaptris {__version__}", f"command: {command}", f"config_sha256: {cfg.digest()}"]
    if seed is not None:
        lines.append(f"seed: {seed}")
    return lines


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    print(f"wrote {path}")


def _require_seeds(cfg: RunConfig) -> tuple[int, ...]:
    if not cfg.seeds:
        raise ConfigError("stochastic command needs at least one seed (--seed N or \"seeds\" in config)")
    return cfg.seeds


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sweep(cfg: RunConfig) -> None:
    seeds = _require_seeds(cfg)
    out = _out(cfg)
    layout = cfg.layout.build()
    schedule = cfg.build_schedule(layout)
    terms = grid_terms(cfg.grid, cfg.scenario, layout, cfg.pattern)
    base = baseline_sweep(cfg.grid, cfg.scenario, layout, cfg.pattern,
                          complex(cfg.baseline_off_amplitude), terms=terms)
    _write(out / "baseline.csv", base.to_csv(header=_provenance(cfg, "sweep/baseline")))
    pts = cfg.controller.pts_dbm
    for seed in seeds:
        res = run_sweep(cfg.grid, cfg.scenario, layout, cfg.alphabet, cfg.pattern, cfg.controller, seed,
                        schedule, cfg.noise_model(), cfg.n_avg, cfg.transport_spec(), terms=terms)
        header = _provenance(cfg, "sweep", seed)
        stats = analyze(res, base, pts)
        _write(out / f"sweep_seed{seed}.csv", res.to_csv(header=header))
        _write(out / f"hist_seed{seed}.csv", histogram_csv(stats, header))
        _write(out / f"gain_seed{seed}.csv", gain_csv(res, stats.gain_db[0], header))
        print(f"seed {seed}: min {stats.minimum:.2f} / median {stats.median:.2f} / max {stats.maximum:.2f} dBm, "
              f"max gain {stats.gain_db.max():.2f} dB, triggered {int(res.triggered.sum())}/{len(res)}, "
              f"below P_TS {stats.fraction_below:.3f}")


def cmd_adapt(cfg: RunConfig, position=None) -> None:
    seeds = _require_seeds(cfg)
    out = _out(cfg)
    layout = cfg.layout.build()
    schedule = cfg.build_schedule(layout)
    scenario = cfg.scenario.with_ue(position) if position is not None else cfg.scenario
    for seed in seeds:
        init_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
        meter = PowerMeter(scenario, layout, cfg.alphabet, cfg.pattern, cfg.noise_model(), cfg.n_avg,
                           np.random.default_rng(noise_ss))
        initial = random_config(layout.m, cfg.alphabet, np.random.default_rng(init_ss))
        c = cfg.controller
        report = iterative_adapt(initial, meter, schedule, c.pts_dbm, c.max_iter, c.termination_mode,
                                 cfg.transport_spec(), k=cfg.alphabet.k)
        header = _provenance(cfg, "adapt", seed) + [
            f"ue_position_m: {list(scenario.ue_position)}",
            f"initial_power_dbm: {report.initial_power_dbm!r}",
            f"final_power_dbm: {report.final_power_dbm!r}",
            f"triggered: {int(report.triggered)}",
        ]
        _write(out / f"adapt_seed{seed}.csv", report.to_csv(header=header))
        print(f"seed {seed}: {report.initial_power_dbm:.2f} -> {report.final_power_dbm:.2f} dBm "
              f"in {report.iterations_used} iterations")


def cmd_mc(cfg: RunConfig) -> None:
    seeds = _require_seeds(cfg)
    out = _out(cfg)
    layout = cfg.layout.build()
    terms = grid_terms(cfg.grid, cfg.scenario, layout, cfg.pattern)
    for seed in seeds:
        res = mc_sweep(cfg.grid, cfg.scenario, layout, cfg.alphabet, cfg.pattern, cfg.mc_iterations, seed, terms)
        _write(out / f"mc_seed{seed}.csv", res.to_csv(header=_provenance(cfg, "mc", seed)))


def cmd_oracle(cfg: RunConfig) -> None:
    out = _out(cfg)
    layout = cfg.layout.build()
    config, power = exhaustive_optimize(cfg.scenario, layout, cfg.alphabet, cfg.pattern)
    lines = ["# " + s for s in _provenance(cfg, "oracle")]
    lines.append(f"# ue_position_m: {list(cfg.scenario.ue_position)}")
    lines.append(f"# power_dbm: {power!r}")
    lines.append("index,state")
    lines.extend(f"{i},{int(s)}" for i, s in enumerate(config.states, start=1))
    _write(out / "oracle.csv", "\n".join(lines) + "\n")
    print(f"global optimum {power:.4f} dBm")


def cmd_compare(files: list[str], out_dir: str) -> None:
    """Join two result files on (ix, iy); delta = first - second."""
    if len(files) != 2:
        raise ConfigError("compare needs exactly two result files")
    try:
        a, b = (SweepResult.read_csv(f) for f in files)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read result file: {exc}") from exc
    index_b = {(int(x), int(y)): n for n, (x, y) in enumerate(zip(b.ix, b.iy))}
    keys = [(int(x), int(y)) for x, y in zip(a.ix, a.iy)]
    if set(keys) != set(index_b):
        raise ConfigError("result files cover different grid cells")
    delta = np.array([a.p_ue_dbm[n] - b.p_ue_dbm[index_b[k]] for n, k in enumerate(keys)])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = [f"adaptris {__version__}", "command: compare", f"first: {Path(files[0]).name}",
              f"second: {Path(files[1]).name}"]
    _write(out / "compare.csv", gain_csv(a, delta, header, column="delta_db"))
    print(f"first >= second at {np.mean(delta >= 0):.3f} of positions; median delta {np.median(delta):.3f} dB")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adaptris", description="Adaptive 1-bit RIS control simulator")
    p.add_argument("--version", action="version", version=f"adaptris {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seeds=True):
        sp.add_argument("--config", metavar="PATH", help="JSON run configuration (default: built-in)")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        if seeds:
            sp.add_argument("--seed", type=int, action="append", metavar="N", help="repeatable")
            sp.add_argument("--pts-dbm", type=float, metavar="F", help="trigger threshold P_TS")
            sp.add_argument("--iters", type=int, metavar="N", help="iteration budget")
            sp.add_argument("--transport", metavar="T", help="inproc or udp:HOST:PORT")

    common(sub.add_parser("sweep", help="mobility sweep with threshold-triggered adaptation"))
    adapt = sub.add_parser("adapt", help="single-position adaptation session")
    common(adapt)
    adapt.add_argument("--ue-position", type=float, nargs=3, metavar=("X", "Y", "Z"))
    common(sub.add_parser("mc", help="position-aware random search per grid cell"))
    common(sub.add_parser("oracle", help="exhaustive optimum at the scenario UE position"), seeds=False)
    cmp_ = sub.add_parser("compare", help="join two result CSVs on (ix, iy)")
    cmp_.add_argument("files", nargs="+")
    cmp_.add_argument("--out", metavar="DIR", default=".")
    dump = sub.add_parser("default-config", help="print the built-in configuration as JSON")
    dump.add_argument("--out", metavar="PATH")
    return p


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    kw = {}
    if args.out:
        kw["out_dir"] = args.out
    if getattr(args, "seed", None):
        kw["seeds"] = tuple(args.seed)
    ctl = cfg.controller
    if getattr(args, "pts_dbm", None) is not None:
        ctl = replace(ctl, pts_dbm=args.pts_dbm)
    if getattr(args, "iters", None) is not None:
        if args.iters < 1:
            raise ConfigError("--iters must be >= 1")
        ctl = replace(ctl, max_iter=args.iters)
        kw["mc_iterations"] = args.iters
    kw["controller"] = ctl
    if getattr(args, "transport", None):
        try:
            parse_transport(args.transport)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        kw["transport"] = args.transport
    return replace(cfg, **kw)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "default-config":
            text = RunConfig().to_json()
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            return EXIT_OK
        if args.command == "compare":
            cmd_compare(args.files, args.out)
            return EXIT_OK
        cfg = _resolve(args)
        if args.command == "sweep":
            cmd_sweep(cfg)
        elif args.command == "adapt":
            cmd_adapt(cfg, args.ue_position)
        elif args.command == "mc":
            cmd_mc(cfg)
        elif args.command == "oracle":
            cmd_oracle(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EnumerationGuardError, TransportError, SweepError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
