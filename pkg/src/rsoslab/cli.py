"""Reproducible experiment runner.

Parses flat key=value configs, schedules seeded replications over a
worker pool, aggregates with the stats helpers, and writes CSV/JSONL
reports plus a JSON manifest. Identical configs produce byte-identical
reports; the exit code is 0 only when every check in the invoked
experiment passes and enough replications carry a valid exactness
certificate.
"""

import argparse
import dataclasses
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import stats as spstats

from . import __version__, dual, lattice, minpath, stats, surface
from .lattice import LatticeBox, SpaceTimePoint, replication_seed
from .pyramid import extract_pyramid, max_pyramid_height, pushdown, validate_pyramid
from .surface import InitialCondition

EXPERIMENTS = (
    "minpath-check",
    "duality-check",
    "pyramid-check",
    "variance",
    "growth",
    "interface-stats",
    "coupled-restart",
    "perturbation",
)

MODELS = ("rsos", "krsos", "bd")

# minimum fraction of replications with a valid exactness certificate
CERTIFIED_FRACTION = 0.9

SEED_SCHEME = "numpy SeedSequence(master_seed, spawn_key=(replication,))"

_GAP_CAP = 30  # right-edge gaps pooled per replication


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; None means 'not set'."""

    experiment: str = None
    d: int = 1
    L: int = None  # None resolves by the auto rule
    T: float = None
    t_grid: tuple = ()
    u_grid: tuple = ()
    k: int = 1
    model: str = "rsos"
    replications: int = 1
    master_seed: int = 0
    alpha: float = 0.01
    output_dir: str = "."


_FIELD_PARSERS = {
    "experiment": str,
    "d": int,
    "L": lambda s: None if s == "auto" else int(s),
    "T": float,
    "t_grid": lambda s: tuple(float(v) for v in s.split(",") if v.strip()),
    "u_grid": lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
    "k": int,
    "model": str,
    "replications": int,
    "master_seed": int,
    "alpha": float,
    "output_dir": str,
}

_NEEDS = {
    "minpath-check": ("T",),
    "duality-check": ("T",),
    "pyramid-check": ("T",),
    "variance": ("t_grid",),
    "growth": ("T", "u_grid"),
    "interface-stats": ("T",),
    "coupled-restart": ("T", "u_grid"),
    "perturbation": ("T",),
}

_DIM_ONE_ONLY = ("interface-stats", "coupled-restart")


def parse_config_text(text) -> ExperimentConfig:
    """Flat key=value lines; '#' comments; unknown keys are errors."""
    fields = {}
    for lineno, raw in enumerate(str(text).split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _FIELD_PARSERS:
            raise ValueError(f"unknown config key {key!r}")
        if key in fields:
            raise ValueError(f"duplicate config key {key!r}")
        try:
            fields[key] = _FIELD_PARSERS[key](value)
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: bad value {value!r}") from exc
    return ExperimentConfig(**fields)


def parse_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


def validate_config(config: ExperimentConfig) -> None:
    """Raise ValueError naming the offending field."""
    c = config
    if c.experiment not in EXPERIMENTS:
        raise ValueError(f"experiment: {c.experiment!r} is not one of {EXPERIMENTS}")
    if c.d < 1:
        raise ValueError("d: must be >= 1")
    if c.L is not None and c.L < 1:
        raise ValueError("L: must be >= 1 (or 'auto')")
    for field in _NEEDS[c.experiment]:
        val = getattr(c, field)
        if val is None or (isinstance(val, tuple) and not val):
            raise ValueError(f"{field}: required for {c.experiment}")
    if c.T is not None and not c.T > 0:
        raise ValueError("T: must be > 0")
    if any(not t > 0 for t in c.t_grid):
        raise ValueError("t_grid: entries must be > 0")
    if any(u < 1 for u in c.u_grid):
        raise ValueError("u_grid: entries must be >= 1")
    if c.model not in MODELS:
        raise ValueError(f"model: {c.model!r} is not one of {MODELS}")
    if c.k < 1:
        raise ValueError("k: must be >= 1")
    if c.experiment != "minpath-check" and (c.model != "rsos" or c.k != 1):
        raise ValueError("model/k: only minpath-check accepts model != rsos or k != 1")
    if c.replications < 1:
        raise ValueError("replications: must be >= 1")
    if c.experiment == "variance" and c.replications < 1000:
        raise ValueError("replications: variance needs >= 1000 per grid point")
    if not 0 < c.alpha < 1:
        raise ValueError("alpha: must be in (0, 1)")
    if c.experiment in _DIM_ONE_ONLY and c.d != 1:
        raise ValueError(f"d: {c.experiment} is only implemented in dimension 1")
    if c.experiment == "variance" and max(c.t_grid) <= 0:
        raise ValueError("t_grid: needs a positive maximum")


def _horizon(config: ExperimentConfig) -> float:
    if config.experiment == "variance":
        return float(max(config.t_grid))
    return float(config.T)


def resolve_radius(config: ExperimentConfig) -> int:
    """Configured L, or an auto size keeping truncation effects rare.

    The growing region moves at most one site per accepted update, and
    update counts concentrate near their mean, so a box of order the
    horizon plus a few standard deviations certifies almost every run.
    The bd rule is wider because max-weight paths travel up to a
    constant times d per unit time.
    """
    if config.L is not None:
        return int(config.L)
    horizon = _horizon(config)
    if config.model == "bd":
        reach = 10.0 * config.d * horizon
        return max(1, math.ceil(reach + 6.0 * math.sqrt(reach)))
    return dual.auto_radius(horizon)


def _events_for(config: ExperimentConfig, r: int, L: int):
    box = LatticeBox(config.d, L, _horizon(config))
    return lattice.generate(box, 1.0, replication_seed(config.master_seed, r))


def _origin(d: int) -> tuple:
    return (0,) * d


def _forward_exact(events, t, x, init, value=None) -> bool:
    cert = minpath.exactness_certificate(events, t, x, init, value=value)
    return bool(cert["sharp"] or cert["conservative"])


# --- per-replication workers (module level so the pool can pickle them) ---


def _rep_minpath(config: ExperimentConfig, r: int) -> dict:
    L = resolve_radius(config)
    events = _events_for(config, r, L)
    init = InitialCondition.zero()
    origin = _origin(config.d)
    field, _ = surface.evolve(events, init, model=config.model,
                              until=config.T, k=config.k)
    h = field.height_at(origin)
    w = minpath.min_weight(events, config.T, origin, init,
                           model=config.model, k=config.k)
    if config.model == "bd":
        # a path leaving the box makes >= L moves, so it would only matter
        # if the true value already exceeded L
        exact = h < L
    else:
        exact = _forward_exact(events, config.T, origin, init, value=w)
    return {"replication": r, "evolve_height": h, "path_value": w,
            "agree": h == w, "exact": exact}


def _rep_duality(config: ExperimentConfig, r: int) -> dict:
    L = resolve_radius(config)
    events = _events_for(config, r, L)
    origin = _origin(config.d)
    field, _ = surface.evolve(events, InitialCondition.zero(), until=config.T)
    h = field.height_at(origin)
    traj = dual.run_dual(lattice.reverse(events), until=config.T)
    m = traj.minimum_at(config.T)
    exact = traj.exact and _forward_exact(
        events, config.T, origin, InitialCondition.zero())
    return {"replication": r, "height": h, "dual_minimum": m,
            "agree": h == m, "exact": exact}


def _rep_pyramid(config: ExperimentConfig, r: int) -> dict:
    L = resolve_radius(config)
    events = _events_for(config, r, L)
    origin = _origin(config.d)
    _, log = surface.evolve(events, InitialCondition.zero(), until=config.T)
    p = extract_pyramid(log, origin, t=config.T)
    ok_valid = validate_pyramid(p)
    ok_fixed = pushdown(events, p) == p
    via = max_pyramid_height(events, origin, t=config.T, method="via_rsos")
    exact = _forward_exact(events, config.T, origin, InitialCondition.zero())
    return {"replication": r, "height": p.height, "validated": ok_valid,
            "pushdown_fixed": ok_fixed,
            "agree": ok_valid and ok_fixed and p.height == via,
            "exact": exact}


def _rep_variance(config: ExperimentConfig, r: int) -> dict:
    L = resolve_radius(config)
    events = _events_for(config, r, L)
    origin = _origin(config.d)
    grid = tuple(sorted(config.t_grid))
    field, _ = surface.evolve(events, InitialCondition.zero(),
                              until=grid[-1], snapshot_times=grid)
    row = {"replication": r}
    flat = int(field.box.flat_index(np.asarray([origin]))[0])
    for t in grid:
        row[f"h@{t:g}"] = int(field.snapshots[t][flat])
    row["exact"] = _forward_exact(events, grid[-1], origin,
                                  InitialCondition.zero())
    return row


def _rep_growth(config: ExperimentConfig, r: int) -> dict:
    L = resolve_radius(config)
    events = _events_for(config, r, L)
    traj = dual.run_dual(events, until=config.T)
    row = {"replication": r}
    for u in config.u_grid:
        tu = dual.hitting_time(traj, u)
        row[f"T@{u}"] = math.nan if tu is None else tu
    row["exact"] = traj.exact
    return row


def _rep_interface(config: ExperimentConfig, r: int) -> dict:
    L = resolve_radius(config)
    events = _events_for(config, r, L)
    traj = dual.run_dual(events, until=config.T)
    st = dual.interface_stats(traj)
    return {"replication": r,
            "arrivals": int(traj.total_arrivals),
            "width": int(traj.width_at(config.T)),
            "exact": traj.exact,
            "_gaps": [float(g) for g in st["right_edge_gaps"][:_GAP_CAP]]}


def _rep_coupled(config: ExperimentConfig, r: int) -> dict:
    L = resolve_radius(config)
    events = _events_for(config, r, L)
    u = int(config.u_grid[0])
    v = int(config.u_grid[1]) if len(config.u_grid) > 1 else u
    res = dual.coupled_restart(events, u, v, until=config.T)
    holds = res["inequality_holds"]
    return {"replication": r,
            "T_u": math.nan if res["T_u"] is None else res["T_u"],
            "T_star": math.nan if res["T_star"] is None else res["T_star"],
            "T_uv": math.nan if res["T_uv"] is None else res["T_uv"],
            "observed": holds is not None,
            "violated": holds is False,
            "coupling_ok": bool(res["b_dominates"]),
            "exact": bool(res["exact"])}


def _path_site_at(trace, s: float) -> tuple:
    """Site the backwards path occupies at time s."""
    site = trace.start.site
    for event, move in trace.steps:
        if event.time > s:
            site = tuple(c - m for c, m in zip(site, move))
    return site


def _rep_perturbation(config: ExperimentConfig, r: int) -> dict:
    L = resolve_radius(config)
    box = LatticeBox(config.d, L, config.T)
    seed_events, seed_probe = replication_seed(config.master_seed, r).spawn(2)
    events = lattice.generate(box, 1.0, seed_events)
    rng = lattice.rng_for(seed_probe)
    origin = _origin(config.d)
    init = InitialCondition.zero()
    s = float(rng.uniform(0.0, config.T))
    y = tuple(int(c) for c in rng.integers(-L, L + 1, size=config.d))
    p = SpaceTimePoint(s, y)
    delta = minpath.perturb_height(events, p, config.T, origin, init)
    trace = minpath.argmin_path(events, config.T, origin, init)
    on_path = _path_site_at(trace, s) == y
    ok = delta in (0, 1) and (on_path or delta == 0)
    return {"replication": r, "probe_time": s, "delta": delta,
            "on_path": on_path, "ok": ok,
            "exact": _forward_exact(events, config.T, origin, init)}


_WORKERS = {
    "minpath-check": _rep_minpath,
    "duality-check": _rep_duality,
    "pyramid-check": _rep_pyramid,
    "variance": _rep_variance,
    "growth": _rep_growth,
    "interface-stats": _rep_interface,
    "coupled-restart": _rep_coupled,
    "perturbation": _rep_perturbation,
}


def _run_one(config: ExperimentConfig, r: int) -> dict:
    return _WORKERS[config.experiment](config, r)


# --- aggregation ---


def _certified_check(rows) -> tuple:
    certified = sum(1 for row in rows if row["exact"])
    ok = certified >= CERTIFIED_FRACTION * len(rows)
    return certified, ("certified_fraction", ok)


def _agg_rowwise(config: ExperimentConfig, rows):
    """Experiments whose rows each carry their own pass flag."""
    flag = "agree" if "agree" in rows[0] else "ok"
    certified, cert_check = _certified_check(rows)
    checks = [(flag, all(row[flag] for row in rows)), cert_check]
    summary = {"certified": certified, "checks": checks}
    return rows, summary


def _agg_variance(config: ExperimentConfig, rows):
    grid = tuple(sorted(config.t_grid))
    certified, cert_check = _certified_check(rows)
    samples = {
        t: np.array([row[f"h@{t:g}"] for row in rows if row["exact"]], float)
        for t in grid
    }
    table = stats.variance_summary(samples, level=1.0 - config.alpha,
                                   seed=config.master_seed)
    report = []
    for entry in table:
        report.append(dict(entry, n_certified=certified, n_total=len(rows),
                           bound_ok=entry["ci_hi"] <= entry["t"]))
    checks = [("variance_at_most_t", all(e["bound_ok"] for e in report)),
              cert_check]
    return report, {"certified": certified, "checks": checks}


def _agg_growth(config: ExperimentConfig, rows):
    u = np.array(sorted(config.u_grid), float)
    certified, cert_check = _certified_check(rows)
    times = np.array([[row[f"T@{int(x)}"] for x in u]
                      for row in rows if row["exact"]])
    est = stats.growth_rate_estimate(u, times)
    complete = times[~np.isnan(times).any(axis=1)]
    report = []
    for j, x in enumerate(u):
        col = times[:, j]
        report.append({
            "u": int(x),
            "n_reached": int(np.sum(~np.isnan(col))),
            "mean_T": float(np.nanmean(col)),
            "rho_hat": est["rho_hat"],
            "rho_inv_hat": est["rho_inv_hat"],
            "stderr": est["stderr"],
            "n_used": est["n_used"],
            "n_certified": certified,
            "n_total": len(rows),
        })
    slope_ok = (est["rho_hat"] + 3 * est["stderr"] >= 1.0
                and est["rho_hat"] - 3 * est["stderr"] <= 10.0 * config.d)
    checks = [("slope_in_admissible_band", bool(slope_ok)), cert_check]
    del complete
    return report, {"certified": certified, "checks": checks, **est}


def _agg_interface(config: ExperimentConfig, rows):
    T = float(config.T)
    certified, cert_check = _certified_check(rows)
    kept = [row for row in rows if row["exact"]]
    gaps = np.array([g for row in kept for g in row["_gaps"]])
    for row in rows:
        row.pop("_gaps")
    ks_p = float(spstats.kstest(gaps, "expon").pvalue) if len(gaps) else 0.0
    width_ratio = np.array([(row["width"] + 1) / (2.0 * T) for row in kept])
    count_ratio = np.array([row["arrivals"] / (T * T + T) for row in kept])

    def _within_3se(vals, target):
        if len(vals) < 2:
            return False, math.nan, math.nan
        mean = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
        return abs(mean - target) <= 3 * se, mean, se

    w_ok, w_mean, w_se = _within_3se(width_ratio, 1.0)
    n_ok, n_mean, n_se = _within_3se(count_ratio, 1.0)
    checks = [("edge_gaps_exponential", ks_p > config.alpha),
              ("width_rate", w_ok), ("arrival_rate", n_ok), cert_check]
    summary = {"certified": certified, "checks": checks,
               "ks_p": ks_p, "n_gaps": int(len(gaps)),
               "width_ratio_mean": w_mean, "width_ratio_se": w_se,
               "count_ratio_mean": n_mean, "count_ratio_se": n_se}
    return rows, summary


def _agg_coupled(config: ExperimentConfig, rows):
    certified, cert_check = _certified_check(rows)
    observed = sum(1 for row in rows if row["observed"])
    violations = sum(1 for row in rows if row["violated"])
    coupling = all(row["coupling_ok"] for row in rows)
    checks = [("restart_inequality", violations == 0),
              ("coupling_dominates", coupling),
              ("enough_observed", observed >= max(1, len(rows) // 2)),
              cert_check]
    summary = {"certified": certified, "checks": checks,
               "observed": observed, "violations": violations}
    return rows, summary


_AGGREGATORS = {
    "minpath-check": _agg_rowwise,
    "duality-check": _agg_rowwise,
    "pyramid-check": _agg_rowwise,
    "variance": _agg_variance,
    "growth": _agg_growth,
    "interface-stats": _agg_interface,
    "coupled-restart": _agg_coupled,
    "perturbation": _agg_rowwise,
}


# --- report emission ---


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    text = str(value)
    if "," in text or "\n" in text:
        raise ValueError(f"report cell {text!r} needs quoting; refusing")
    return text


def _json_cell(value):
    if isinstance(value, float):
        return None if math.isnan(value) else value
    if isinstance(value, (bool, int, str)) or value is None:
        return value
    if isinstance(value, np.integer):
        return int(value)
    raise ValueError(f"report cell {value!r} has no JSON form")


def emit_report(results, format, directory=".", name="report") -> Path:
    """Write rows as directory/name.{csv,jsonl}; empty input is an error."""
    rows = list(results)
    if not rows:
        raise ValueError("refusing to emit an empty report")
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unknown report format {format!r}")
    keys = list(rows[0].keys())
    for row in rows[1:]:
        if list(row.keys()) != keys:
            raise ValueError("report rows disagree on columns")
    path = Path(directory) / f"{name}.{format}"
    try:
        if format == "csv":
            lines = [",".join(keys)]
            lines += [",".join(_csv_cell(row[key]) for key in keys)
                      for row in rows]
            path.write_text("\n".join(lines) + "\n")
        else:
            lines = [json.dumps({key: _json_cell(row[key]) for key in keys},
                                sort_keys=False) for row in rows]
            path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"writing report {path}: {exc}") from exc
    return path


@dataclass
class RunManifest:
    """Everything needed to reproduce a report bit-for-bit."""

    experiment: str
    config: dict
    version: str
    seed_scheme: str
    replications: int
    certified: int
    passed: bool
    checks: list
    summary: dict
    wall_clock_s: float
    outputs: dict

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True,
                          default=str)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> RunManifest:
    """Run all replications, aggregate, and write reports + manifest."""
    validate_config(config)
    if jobs < 1:
        raise ValueError("jobs: must be >= 1")
    started = time.monotonic()
    indices = range(config.replications)
    if jobs == 1:
        rows = [_run_one(config, r) for r in indices]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {r: pool.submit(_run_one, config, r) for r in indices}
            rows = [futures[r].result() for r in indices]
    rows.sort(key=lambda row: row["replication"])

    report_rows, summary = _AGGREGATORS[config.experiment](config, rows)
    checks = summary.pop("checks")
    certified = summary.pop("certified")
    passed = all(ok for _, ok in checks)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for fmt in ("csv", "jsonl"):
        path = emit_report(report_rows, fmt, out)
        outputs[path.name] = _digest(path)

    manifest = RunManifest(
        experiment=config.experiment,
        config=dataclasses.asdict(config),
        version=__version__,
        seed_scheme=SEED_SCHEME,
        replications=config.replications,
        certified=certified,
        passed=passed,
        checks=[[name, bool(ok)] for name, ok in checks],
        summary={key: _json_cell(val) if isinstance(val, float) else val
                 for key, val in summary.items()},
        wall_clock_s=time.monotonic() - started,
        outputs=outputs,
    )
    (out / "manifest.json").write_text(manifest.to_json() + "\n")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rsoslab",
        description="Seeded growth-model experiments with written reports.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="key=value config file")
        sp.add_argument("--seed", type=int, default=None,
                        help="override master_seed")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--output", default=None, help="override output_dir")
    args = parser.parse_args(argv)

    try:
        config = parse_config(args.config)
        if config.experiment is not None and config.experiment != args.experiment:
            raise ValueError(
                f"config names experiment {config.experiment!r} but the "
                f"{args.experiment!r} subcommand was invoked")
        config = replace(config, experiment=args.experiment)
        if args.seed is not None:
            config = replace(config, master_seed=args.seed)
        if args.output is not None:
            config = replace(config, output_dir=args.output)
        manifest = run_experiment(config, jobs=args.jobs)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for name, ok in manifest.checks:
        print(f"check {name}: {'PASS' if ok else 'FAIL'}")
    print(f"{manifest.experiment}: certified {manifest.certified}/"
          f"{manifest.replications}, "
          f"{'PASS' if manifest.passed else 'FAIL'}")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
