"""Command-line entry point: ``dynmaps <command> ...``.

Settings are layered: built-in defaults, then a dataset profile, then a
YAML/JSON config file, then ``--set key=value`` and dedicated flags. Every
command writes ``manifest.json`` next to its outputs with the effective
configuration, the seed and the sha256 of each input file.

Exit codes: 0 success, 2 configuration error, 3 parse error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from .cliff_map import (
    EMConfig,
    build_cliff_map,
    build_tc_cliff_map,
    load_cliff_map,
    load_tc_cliff_map,
    save_cliff_map,
    save_tc_cliff_map,
)
from .evaluation import (
    EvalCase,
    evaluate_detailed,
    make_eval_cases,
    write_per_case_log,
    write_results,
)
from .ingest import (
    DatasetConfig,
    ParseError,
    RegionConfigError,
    filter_edinburgh,
    generate_synthetic,
    load_regions,
    parse,
    resample_all,
    split_by_day,
    write_generic,
)
from .predictor import CliffSampler, PredictorParams, StefSampler, TCCliffSampler, cvm_predict, predict_ranked
from .stef_map import build_stef_map, load_stef_map, save_stef_map

log = logging.getLogger("dynmaps")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_RUNTIME = 4

MAP_KINDS = ("cliff", "tc_cliff", "stef")
METHODS = MAP_KINDS + ("cvm",)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # dataset
    format: str = "generic_csv"
    unit_scale: float = 1.0
    target_rate: float = 1.0
    min_points: int = 30
    utc_offset: float = 0.0
    frame_rate: float = 9.0
    time_origin: float = 0.0
    regions: str | None = None
    # map building
    resolution: float = 1.0
    interval_length: float = 3600.0
    time_bin: float = 1.0
    max_components: int = 5
    min_observations: int = 10
    stef_k: int = 8
    stef_t_interval: float = 600.0
    stef_m: int = 2
    # prediction
    obs_seconds: float = 3.0
    max_horizon: float = 60.0
    dt: float = 1.0
    r_s: float = 1.0
    beta: float = 1.0
    k: int = 5
    stop_policy: str = "truncate"
    advance_time: bool = False
    sigma: float = 1.5
    # evaluation
    selection: str = "most_likely"
    rerank_per_horizon: bool = False
    # misc
    seed: int = 0
    workers: int | None = None

    @property
    def obs_steps(self) -> int:
        return max(1, int(round(self.obs_seconds / self.dt)))

    @property
    def T_p(self) -> int:
        return max(1, int(round(self.max_horizon / self.dt)))

    def dataset_config(self) -> DatasetConfig:
        regions = load_regions(self.regions) if self.regions else {}
        return DatasetConfig(
            self.format,
            self.unit_scale,
            self.target_rate,
            regions,
            self.min_points,
            self.utc_offset,
            self.frame_rate,
            self.time_origin,
        )

    def em_config(self) -> EMConfig:
        return EMConfig(max_components=self.max_components, min_observations=self.min_observations, seed=self.seed)

    def predictor_params(self) -> PredictorParams:
        return PredictorParams(
            beta=self.beta,
            r_s=self.r_s,
            dt=self.dt,
            T_p=self.T_p,
            k=self.k,
            stop_policy=self.stop_policy,
            sigma=self.sigma,
            advance_time=self.advance_time,
        )

    def validate(self) -> None:
        try:
            self.dataset_config()
            self.em_config()
            self.predictor_params()
        except (ValueError, OSError) as e:
            raise ConfigError(str(e)) from e
        if self.selection not in ("most_likely", "mean_over_k"):
            raise ConfigError(f"unknown selection {self.selection!r}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for name in ("resolution", "interval_length", "time_bin", "stef_t_interval", "obs_seconds", "max_horizon"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")


# Observation and horizon lengths, time step, map resolutions, sampling
# radius and kernel width for the two reference datasets.
PROFILES = {
    "atc": {"format": "atc", "unit_scale": 0.001, "obs_seconds": 3.0, "max_horizon": 60.0},
    "edinburgh": {"format": "edinburgh", "obs_seconds": 3.0, "max_horizon": 20.0},
}
for _p in PROFILES.values():
    _p.update({"dt": 1.0, "target_rate": 1.0, "resolution": 1.0, "r_s": 1.0, "beta": 1.0, "k": 5})


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    typ = _FIELD_TYPES[key]
    if value is None:
        if "None" in typ:
            return None
        raise ConfigError(f"{key} cannot be null")
    try:
        if typ.startswith("bool"):
            if isinstance(value, str):
                value = yaml.safe_load(value)
            if not isinstance(value, bool):
                raise ValueError(f"expected a boolean, got {value!r}")
            return value
        if typ.startswith("int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"expected an integer, got {value!r}")
            return int(value)
        if typ.startswith("float"):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{key}: {e}") from e


def load_config_file(path: str | os.PathLike) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def resolve_config(
    profile: str | None = None,
    config_file: str | None = None,
    overrides: Sequence[str] = (),
    flags: dict | None = None,
) -> RunConfig:
    """Merge defaults < profile < config file < ``key=value`` overrides < flags."""
    values: dict = {}
    if profile:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
        values.update(PROFILES[profile])
    if config_file:
        data = load_config_file(config_file)
        # a relative region file in a config file is relative to that file
        if isinstance(data.get("regions"), str) and not os.path.isabs(data["regions"]):
            data["regions"] = str(Path(config_file).parent / data["regions"])
        values.update(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        values[key.strip()] = yaml.safe_load(raw)
    for key, v in (flags or {}).items():
        if v is not None:
            values[key] = v
    if values.get("workers") is None and os.environ.get("DYNMAPS_WORKERS"):
        values["workers"] = os.environ["DYNMAPS_WORKERS"]
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    cfg.validate()
    return cfg


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_inputs(paths: Sequence[str | os.PathLike]) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(q for q in p.rglob("*") if q.is_file()):
                out[str(f)] = sha256_file(f)
        else:
            out[str(p)] = sha256_file(p)
    return out


def write_manifest(directory: Path, command: str, cfg: RunConfig, inputs: Sequence, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": dataclasses.asdict(cfg),
        "inputs": _hash_inputs(inputs),
    }
    if extra:
        manifest.update(extra)
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- loading ----------------------------------------------------------------


def read_trajectories(path: str, cfg: RunConfig, resample: bool = True):
    try:
        res = parse(path, cfg.dataset_config())
    except RegionConfigError as e:
        raise ConfigError(str(e)) from e
    trajs = res.trajectories
    if res.n_skipped:
        log.warning("%s: %d of %d rows skipped", path, res.n_skipped, res.n_rows)
    if resample:
        trajs = resample_all(trajs, cfg.target_rate)
    return trajs


def _has_no_rows(path: str) -> bool:
    """True for an existing file that holds nothing but blank lines or a header."""
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    return not lines or (len(lines) == 1 and lines[0].replace(" ", "").startswith("timestamp_s"))


def load_map(directory: str | os.PathLike):
    """Load a map directory written by ``build-mod``; returns ``(kind, map)``."""
    d = Path(directory)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"{d}: no readable manifest.json ({e})") from e
    kind = manifest.get("kind")
    try:
        if kind == "cliff":
            return kind, load_cliff_map(d / manifest.get("map_file", "cliff_map.csv"))
        if kind == "tc_cliff":
            return kind, load_tc_cliff_map(d)
        if kind == "stef":
            return kind, load_stef_map(d)
    except (OSError, KeyError, ValueError) as e:
        raise ParseError(f"{d}: cannot load {kind} map: {e}") from e
    raise ParseError(f"{d}: unknown map kind {kind!r}")


def make_sampler(kind: str, mod, r_s: float):
    if kind == "cliff":
        return CliffSampler(mod, r_s)
    if kind == "tc_cliff":
        return TCCliffSampler(mod, r_s)
    if kind == "stef":
        return StefSampler(mod, r_s)
    raise ValueError(kind)


def map_bounds(kind: str, mod):
    if kind == "tc_cliff":
        bs = [m.bounds for m in mod.interval_maps.values() if m.bounds]
        if not bs:
            return None
        return (min(b[0] for b in bs), min(b[1] for b in bs), max(b[2] for b in bs), max(b[3] for b in bs))
    return mod.bounds


def _inside(bounds, x, y) -> bool:
    return bounds is not None and bounds[0] <= x <= bounds[2] and bounds[1] <= y <= bounds[3]


# -- commands ---------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig) -> int:
    params = {}
    for item in args.param or ():
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        params[key.strip()] = yaml.safe_load(raw)
    if args.n is not None:
        params["n"] = args.n
    try:
        trajs = generate_synthetic(args.scenario, params, cfg.seed)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_generic(trajs, out)
    write_manifest(out.parent, "synth", cfg, [], {"scenario": args.scenario, "params": params, "output": out.name})
    print(f"wrote {len(trajs)} trajectories to {out}")
    return EXIT_OK


def cmd_convert(args, cfg: RunConfig) -> int:
    trajs = read_trajectories(args.input, cfg, resample=not args.no_resample)
    counts = {}
    if cfg.format == "edinburgh" or args.filter:
        dcfg = cfg.dataset_config()
        try:
            trajs, counts = filter_edinburgh(trajs, dcfg)
        except RegionConfigError as e:
            raise ConfigError(str(e)) from e
        print("removed: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    else:
        before = len(trajs)
        trajs = [t for t in trajs if len(t) >= cfg.min_points]
        counts = {"too_short": before - len(trajs)}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    extra = {"removed": counts}
    if args.train_days:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            train, test = split_by_day(trajs, args.train_days, args.test_days, cfg.utc_offset)
        for w in caught:
            log.warning("%s", w.message)
        stem = out.with_suffix("")
        paths = {"train": Path(f"{stem}_train.csv"), "test": Path(f"{stem}_test.csv")}
        write_generic(train, paths["train"])
        write_generic(test, paths["test"])
        extra["outputs"] = {k: p.name for k, p in paths.items()}
        print(f"wrote {len(train)} train and {len(test)} test trajectories")
    else:
        write_generic(trajs, out)
        extra["outputs"] = {"all": out.name}
        print(f"wrote {len(trajs)} trajectories to {out}")
    write_manifest(out.parent, "convert", cfg, [args.input], extra)
    return EXIT_OK


def cmd_build_mod(args, cfg: RunConfig) -> int:
    trajs = [] if _has_no_rows(args.input) else read_trajectories(args.input, cfg)
    if not trajs:
        log.warning("no trajectories in %s; the map will be empty", args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = cfg.workers
    if args.kind == "cliff":
        mod = build_cliff_map(trajs, cfg.resolution, cfg.em_config(), cfg.time_bin, workers)
        save_cliff_map(mod, out / "cliff_map.csv")
        stats = _cliff_stats({0: mod})
        extra = {"kind": "cliff", "map_file": "cliff_map.csv"}
    elif args.kind == "tc_cliff":
        mod = build_tc_cliff_map(
            trajs, cfg.resolution, cfg.interval_length, cfg.em_config(), cfg.utc_offset, cfg.time_bin, workers
        )
        save_tc_cliff_map(mod, out)
        stats = _cliff_stats(mod.interval_maps)
        stats["intervals"] = len(mod.interval_maps)
        if trajs and not mod.interval_maps:
            log.warning("no interval holds enough observations for a single cell; try a longer interval_length")
        # merge into the manifest written by save_tc_cliff_map
        extra = json.loads((out / "manifest.json").read_text())
    else:
        mod = build_stef_map(trajs, cfg.resolution, cfg.stef_k, cfg.stef_t_interval, cfg.stef_m)
        save_stef_map(mod, out)
        stats = {"cells": len(mod.cells)}
        extra = json.loads((out / "manifest.json").read_text())
    extra["stats"] = stats
    write_manifest(out, "build-mod", cfg, [args.input], extra)
    print(f"{args.kind}: " + ", ".join(f"{k}={v}" for k, v in stats.items()))
    return EXIT_OK


def _cliff_stats(maps: dict) -> dict:
    cells = sum(len(m) for m in maps.values())
    comps = [len(s.components) for m in maps.values() for s in m.locations.values()]
    return {
        "cells": cells,
        "components": sum(comps),
        "mean_components": round(float(np.mean(comps)), 3) if comps else 0.0,
    }


def _format_states(states) -> str:
    return ";".join(f"{s.x!r} {s.y!r} {s.speed!r} {s.heading!r}" for s in states)


PREDICTION_COLUMNS = ("case_id", "rank", "rollout", "log_fitness", "stopped_early", "stop_step", "n_states", "states")


def _observation_cases(trajs, cfg: RunConfig, window: str = "last") -> list[EvalCase]:
    """The last (or first) ``obs_steps`` samples of every track form one case."""
    cases = []
    n = cfg.obs_steps
    for tr in trajs:
        states = tr.states()
        obs, t0 = (states[-n:], tr.t[-1]) if window == "last" else (states[:n], tr.t[min(n, len(tr)) - 1])
        # ground truth is unused here; EvalCase needs one state
        cases.append(EvalCase(obs, obs[-1:], float(t0), tr.person_id))
    return cases


def cmd_predict(args, cfg: RunConfig) -> int:
    trajs = read_trajectories(args.observations, cfg, resample=not args.no_resample)
    params = cfg.predictor_params()
    if args.map:
        kind, mod = load_map(args.map)
        sampler = make_sampler(kind, mod, cfg.r_s)
        bounds = map_bounds(kind, mod)
    else:
        kind, sampler, bounds = "cvm", None, None
    cases = _observation_cases(trajs, cfg, args.window)
    children = np.random.SeedSequence(cfg.seed).spawn(len(cases))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n_warn = 0
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PREDICTION_COLUMNS)
        for case, ss in zip(cases, children):
            last = case.observation[-1]
            if sampler is not None and not _inside(bounds, last.x, last.y):
                n_warn += 1
                log.warning("case %s starts at (%.3f, %.3f), outside the map bounds", case.case_id, last.x, last.y)
            if sampler is None:
                results = [cvm_predict(case.observation, params.T_p, params.dt, params.sigma)]
            else:
                results = predict_ranked(case.observation, sampler, params, case.start_time, np.random.default_rng(ss))
            for rank, r in enumerate(results):
                w.writerow(
                    [
                        case.case_id,
                        rank,
                        r.rollout,
                        repr(float(r.log_fitness)),
                        int(r.stopped_early),
                        "" if r.stop_step is None else r.stop_step,
                        len(r),
                        _format_states(r.states),
                    ]
                )
    inputs = [args.observations] + ([args.map] if args.map else [])
    write_manifest(out.parent, "predict", cfg, inputs, {"method": kind, "output": out.name, "out_of_bounds_cases": n_warn})
    print(f"predicted {len(cases)} cases with {kind}; wrote {out}")
    return EXIT_OK


def parse_horizons(text: str | None, cfg: RunConfig) -> list[float]:
    """``"1:20"`` (inclusive, step 1), ``"1:60:5"``, or ``"5,10,20"``; default 1..max_horizon."""
    if not text:
        return [float(h) for h in range(1, int(math.floor(cfg.max_horizon)) + 1)]
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError(text)
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1.0
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return [lo + i * step for i in range(n)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as e:
        raise ConfigError(f"bad horizons {text!r}") from e


def write_plot_data(path: Path, blocks) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "dataset", "horizon_s", "ade_mean", "ade_lower", "ade_upper", "fde_mean", "fde_lower", "fde_upper"])
        for method, dataset, rep in blocks:
            for r in rep.rows:
                w.writerow(
                    [method, dataset, f"{r.horizon:g}"]
                    + [f"{v:.3f}" for v in (r.ade_mean, r.ade_mean - r.ade_std, r.ade_mean + r.ade_std)]
                    + [f"{v:.3f}" for v in (r.fde_mean, r.fde_mean - r.fde_std, r.fde_mean + r.fde_std)]
                )


def cmd_evaluate(args, cfg: RunConfig) -> int:
    maps = {}
    for d in args.map or ():
        kind, mod = load_map(d)
        if kind in maps:
            raise ConfigError(f"two maps of kind {kind!r} given")
        maps[kind] = (d, mod)
    methods = args.methods.split(",") if args.methods else list(maps) + ["cvm"]
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
        if m != "cvm" and m not in maps:
            raise ConfigError(f"method {m!r} needs a --map directory of that kind")
    horizons = parse_horizons(args.horizons, cfg)
    params = cfg.predictor_params()
    if max(horizons) > params.T_p * params.dt + 1e-9:
        raise ConfigError(f"horizon {max(horizons)} s exceeds max_horizon {cfg.max_horizon} s")
    trajs = read_trajectories(args.test, cfg, resample=not args.no_resample)
    cases = make_eval_cases(trajs, cfg.obs_steps, cfg.T_p)
    if not cases:
        raise ParseError(f"{args.test}: no trajectory longer than the observation window")
    dataset = args.dataset or Path(args.test).stem
    blocks = []
    for m in methods:
        sampler = None if m == "cvm" else make_sampler(m, maps[m][1], cfg.r_s)
        rep = evaluate_detailed(cases, sampler, params, horizons, cfg.selection, cfg.seed, cfg.rerank_per_horizon)
        blocks.append((m, dataset, rep))
        if rep.skipped:
            log.warning("%s: up to %d cases had no predicted step and were left out", m, max(rep.skipped.values()))
        last = rep.rows[-1] if rep.rows else None
        if last:
            print(
                f"{m}: horizon {last.horizon:g} s ADE {last.ade_mean:.3f} FDE {last.fde_mean:.3f} "
                f"({last.n_cases} cases, {rep.mean_runtime_ms:.3f} ms per trajectory)"
            )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results(out / "results.csv", blocks)
    write_per_case_log(out / "per_case.csv", blocks)
    if not args.no_plot_data:
        write_plot_data(out / "plot_data.csv", blocks)
    inputs = [args.test] + [maps[m][0] for m in methods if m != "cvm"]
    write_manifest(out, "evaluate", cfg, inputs, {"methods": methods, "horizons": horizons, "dataset": dataset})
    return EXIT_OK


# -- argument parsing -------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON file with run settings")
    p.add_argument("--profile", choices=sorted(PROFILES), help="dataset defaults (atc, edinburgh)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override one setting; repeatable")
    p.add_argument("--seed", type=int)
    p.add_argument(
        "--workers", type=int, help="processes for map building (default: $DYNMAPS_WORKERS or 1)"
    )
    p.add_argument("--format", choices=("atc", "edinburgh", "generic_csv"), help="input format")
    p.add_argument("--unit-scale", type=float, help="meters per source unit")
    p.add_argument("--regions", help="region polygon file (label: x y, x y, ...)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynmaps", description="Maps of dynamics for long-term pedestrian motion prediction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic trajectory set")
    p.add_argument("scenario", choices=("corridor", "bend", "bimodal", "time_varying"))
    p.add_argument("--out", required=True, help="output CSV (generic format)")
    p.add_argument("--n", type=int, help="number of trajectories")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="scenario parameter; repeatable")
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="dataset file to the generic CSV (resample, filter, split)")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--no-resample", action="store_true")
    p.add_argument("--filter", action="store_true", help="apply region filtering to non-Edinburgh input too")
    p.add_argument("--train-days", nargs="+", metavar="YYYY-MM-DD", help="write <out>_train.csv and <out>_test.csv")
    p.add_argument("--test-days", nargs="+", metavar="YYYY-MM-DD", help="default: every other day")
    _common(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("build-mod", help="build a map of dynamics")
    p.add_argument("kind", choices=MAP_KINDS)
    p.add_argument("input", help="training trajectories")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resolution", type=float)
    p.add_argument("--interval-length", type=float, help="seconds per time-of-day interval (tc_cliff)")
    _common(p)
    p.set_defaults(func=cmd_build_mod)

    p = sub.add_parser("predict", help="ranked rollouts for observed tracks")
    p.add_argument("observations", help="observed tracks; the last obs_seconds of each are used")
    p.add_argument("--map", help="map directory from build-mod; omit for constant velocity")
    p.add_argument("--out", required=True, help="predictions CSV")
    p.add_argument("--horizon", dest="max_horizon", type=float, help="seconds to predict")
    p.add_argument("--k", type=int, help="rollouts per case")
    p.add_argument(
        "--window", choices=("last", "first"), default="last", help="observe the last (default) or first obs_seconds of each track"
    )
    p.add_argument("--no-resample", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="ADE/FDE over sweeping horizons")
    p.add_argument("test", help="test trajectories")
    p.add_argument("--map", action="append", help="map directory; repeatable, one per kind")
    p.add_argument("--methods", help="comma list from cliff,tc_cliff,stef,cvm (default: given maps + cvm)")
    p.add_argument("--horizons", help="'1:20', '1:60:5' or '5,10,20' seconds (default 1..max_horizon)")
    p.add_argument("--horizon", dest="max_horizon", type=float, help="max prediction horizon in seconds")
    p.add_argument("--dataset", help="dataset label in the results table")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-plot-data", action="store_true")
    p.add_argument("--no-resample", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


_FLAG_KEYS = ("seed", "workers", "format", "unit_scale", "regions", "resolution", "interval_length", "max_horizon", "k")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        flags = {k: getattr(args, k, None) for k in _FLAG_KEYS}
        cfg = resolve_config(args.profile, args.config, args.overrides, flags)
        return args.func(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, RegionConfigError) as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except Exception as e:  # noqa: BLE001 - every other failure maps to one exit code
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
