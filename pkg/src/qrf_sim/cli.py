"""Configuration-driven experiment runner.

Usage:

    qrf-sim <experiment> --config <path> [--out <path>] [--seeds a,b,c]
            [--gamma x] [--threads n]

Experiments: fig1 fig2 fig3 fig4 fig5 scaling custom.  Configs are single
JSON documents; unknown keys are rejected (they are usually typos in physics
parameters).  All angles are radians.  Every output CSV embeds the config
hash, RNG identifier and seed list as '#' header comments and is
byte-reproducible for a fixed config; a JSON summary sidecar is written next
to it.  Exit codes: 0 success, 2 config error, 3 numerical-invariant
violation during the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .channels import selective_channel, average_channel, unitary_channel
from .metrics import mean_angular_momentum, summarize_frame, usable_lifetime
from .predictions import selective_angles_partially_coherent
from .spin import (
    DensityMatrixError,
    QuadraticBlochSpec,
    build_spin_operators,
    coherent_state,
    mixed_dicke_state,
    quadratic_bloch_state,
    rotated_dicke_state,
    thermal_partial_coherent,
)
from .trajectory import (
    RNG_ALGORITHM,
    AlternatingAntipolarized,
    ConditionalTuned,
    LifetimeCapExceeded,
    NumericalInvariantError,
    UnitaryAfterEachPlus,
    UnitaryEveryK,
    ensemble_statistics,
    run_average,
    run_ensemble,
    schedule_measurements,
    schedule_unitaries,
)

PI = float(np.pi)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

DEFAULTS = {
    "fig1": {
        "l": 100, "k1": 10, "k2": 40, "p": 0.2, "z": 0.1,
        "theta_start": 0.05 * PI, "theta_stop": 0.95 * PI, "theta_points": 19,
    },
    "fig2": {"l": 16, "z": 1.0, "theta": 0.5 * PI, "n_steps": 500, "gamma": 0.5 * PI},
    "fig3": {"l": 16, "z": 1.0, "theta": 0.5 * PI, "n_steps": 500, "gammas": [0.5 * PI, PI]},
    "fig4": {"l": 16, "z": 1.0, "theta": 0.5 * PI, "n_measure": 200, "k": 2, "gamma": PI},
    "fig5": {"l": 16, "z": 1.0, "theta": 0.5 * PI, "n_measure": 200, "k": 2, "gamma": PI,
             "seeds": {"base": 0, "count": 500}},
    "scaling": {"l_list": [8, 16, 32, 64], "z_list": [0.0, 1.0],
                "thresholds": [0.85, 0.9], "theta": 0.5 * PI, "step_cap": 10**6},
    "custom": {"l": 16, "z": 1.0, "theta": 0.5 * PI,
               "state": {"family": "coherent"}, "mode": "average",
               "n_steps": 100, "gamma": PI, "record_every": 1,
               "strategy": {"kind": "none"}, "n_measure": 100,
               "seeds": {"base": 0, "count": 100}},
}


def load_config(experiment: str, path: str, overrides: dict) -> dict:
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}; "
                          f"choose from {sorted(DEFAULTS)}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    declared = raw.pop("experiment", experiment)
    if declared != experiment:
        raise ConfigError(f"config declares experiment {declared!r} but {experiment!r} "
                          "was requested")
    allowed = set(DEFAULTS[experiment])
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {experiment}: {sorted(unknown)} "
                          f"(allowed: {sorted(allowed)})")
    config = {**DEFAULTS[experiment], **raw, **{k: v for k, v in overrides.items() if k in allowed}}
    _validate(experiment, config)
    return config


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _valid_l(l):
    _require(isinstance(l, (int, float)) and l >= 0.5 and abs(2 * l - round(2 * l)) < 1e-12,
             f"l must be a positive integer or half-integer, got {l!r}")


def _valid_z(z):
    _require(isinstance(z, (int, float)) and -1.0 <= z <= 1.0,
             f"z must lie in [-1, 1], got {z!r}")


def _validate(experiment: str, cfg: dict):
    if "l" in cfg:
        _valid_l(cfg["l"])
    if "z" in cfg:
        _valid_z(cfg["z"])
    if "theta" in cfg:
        _require(0.0 <= cfg["theta"] <= PI, f"theta must lie in [0, pi], got {cfg['theta']!r}")
    for key in ("n_steps", "n_measure", "theta_points", "k", "record_every", "step_cap"):
        if key in cfg:
            _require(isinstance(cfg[key], int) and cfg[key] >= 1,
                     f"{key} must be a positive integer, got {cfg[key]!r}")
    if experiment == "fig1":
        _require(0.0 <= cfg["p"] <= 1.0, f"p must lie in [0, 1], got {cfg['p']!r}")
        _require(0.0 < cfg["theta_start"] < cfg["theta_stop"] < PI,
                 "theta grid must satisfy 0 < start < stop < pi")
    if experiment == "fig3":
        _require(isinstance(cfg["gammas"], list) and len(cfg["gammas"]) >= 1,
                 "gammas must be a nonempty list")
    if experiment == "scaling":
        for l in cfg["l_list"]:
            _valid_l(l)
        for z in cfg["z_list"]:
            _valid_z(z)
        for t in cfg["thresholds"]:
            _require(0.5 < t < 1.0, f"threshold must lie in (0.5, 1), got {t!r}")


def resolve_seeds(spec) -> list[int]:
    if isinstance(spec, list):
        _require(all(isinstance(s, int) for s in spec), "seeds must be integers")
        return spec
    if isinstance(spec, dict) and set(spec) <= {"base", "count"}:
        return list(range(spec.get("base", 0), spec.get("base", 0) + spec["count"]))
    raise ConfigError(f"seeds must be a list of ints or {{base, count}}, got {spec!r}")


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _pool_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_fig1(cfg: dict, threads: int):
    """Exact selective rotation angles of a mixed-Dicke frame versus the
    closed-form prediction, over an inclination grid."""
    l = cfg["l"]
    ops = build_spin_operators(l)
    thetas = np.linspace(cfg["theta_start"], cfg["theta_stop"], cfg["theta_points"])

    def one(theta: float):
        rho = mixed_dicke_state(l, cfg["k1"], cfg["k2"], cfg["p"], theta)
        frame = summarize_frame(rho, ops)
        exact = []
        for outcome in (+1, -1):
            post = selective_channel(rho, cfg["z"], ops, outcome).post_state
            exact.append(summarize_frame(post, ops).theta - frame.theta)
        formula = selective_angles_partially_coherent(l, frame.r, cfg["z"], theta)
        return (theta, exact[0], exact[1], formula[0], formula[1],
                abs(exact[0] - formula[0]), abs(exact[1] - formula[1])), frame.r

    results = _pool_map(one, list(thetas), threads)
    rows = [r for r, _ in results]
    r_value = results[0][1]
    over = sum(1 for row in rows for e, f in ((row[1], row[3]), (row[2], row[4]))
               if abs(f) >= abs(e))
    gaps = [abs(f - e) / abs(e) for row in rows for e, f in ((row[1], row[3]), (row[2], row[4]))]
    columns = ["theta", "omega_plus_exact", "omega_minus_exact",
               "omega_plus_analytic", "omega_minus_analytic", "abs_err_plus", "abs_err_minus"]
    sidecar = {"r": r_value, "overestimate_fraction": over / (2 * len(rows)),
               "max_relative_gap": max(gaps)}
    return columns, rows, sidecar


def run_fig2(cfg: dict, threads: int):
    """Polarization components of the frame under repeated invariant unitary
    interactions (the axis tilts out of the X-Z plane for generic gamma)."""
    l = cfg["l"]
    ops = build_spin_operators(l)
    rho0 = coherent_state(l, cfg["theta"])
    schedule = schedule_unitaries(cfg["n_steps"], cfg["z"], cfg["gamma"])
    run = run_average(rho0, schedule, ops)
    rows = [(int(step), s.mean_L[0] / l, s.mean_L[1] / l, s.mean_L[2] / l)
            for step, s in zip(run.step_indices, run.summaries)]
    return ["step", "Lx_over_l", "Ly_over_l", "Lz_over_l"], rows, {}


def run_fig3(cfg: dict, threads: int):
    """Success probability under sequential measurements versus unitary
    interactions at the configured kick angles."""
    l = cfg["l"]
    ops = build_spin_operators(l)
    rho0 = coherent_state(l, cfg["theta"])
    n = cfg["n_steps"]

    def series(schedule):
        return run_average(rho0, schedule, ops).p_succ_series

    arms = [("p_succ_measurement", schedule_measurements(n, cfg["z"]))]
    for g in cfg["gammas"]:
        arms.append((f"p_succ_unitary_gamma_{g:.6g}", schedule_unitaries(n, cfg["z"], g)))
    curves = _pool_map(lambda arm: series(arm[1]), arms, threads)
    rows = [tuple([step] + [float(curve[step]) for curve in curves]) for step in range(n + 1)]
    return ["step"] + [name for name, _ in arms], rows, {}


def run_fig4(cfg: dict, threads: int):
    """Frame polarization trace with and without the antipolarized unitary
    kick after every k measurements (average evolution)."""
    l = cfg["l"]
    ops = build_spin_operators(l)
    rho0 = coherent_state(l, cfg["theta"])
    n, k, z = cfg["n_measure"], cfg["k"], cfg["z"]

    def trace(corrected: bool):
        cur = rho0
        pts = [mean_angular_momentum(cur, ops) / l]
        for i in range(1, n + 1):
            cur = average_channel(cur, z, ops)
            if corrected and i % k == 0:
                cur = unitary_channel(cur, -z, ops, cfg["gamma"])
            pts.append(mean_angular_momentum(cur, ops) / l)
        return np.array(pts)

    unc, cor = _pool_map(trace, [False, True], threads)
    rows = [(i, unc[i][0], unc[i][2], cor[i][0], cor[i][2]) for i in range(n + 1)]
    start = cor[0]
    point_dev = np.hypot(cor[:, 0] - start[0], cor[:, 2] - start[2]).max()
    ang = np.arctan2(cor[:, 0], cor[:, 2])
    angle_dev = np.abs(ang - ang[0]).max()
    columns = ["step", "Lx_over_l_uncorrected", "Lz_over_l_uncorrected",
               "Lx_over_l_corrected", "Lz_over_l_corrected"]
    return columns, rows, {"corrected_max_point_deviation": float(point_dev),
                           "corrected_max_direction_deviation": float(angle_dev)}


def run_fig5(cfg: dict, threads: int):
    """Seed-averaged success probability for the uncorrected run and the two
    unitary correction policies; corrective steps are not counted on the
    measurement axis."""
    l = cfg["l"]
    ops = build_spin_operators(l)
    rho0 = coherent_state(l, cfg["theta"])
    seeds = resolve_seeds(cfg["seeds"])
    n = cfg["n_measure"]
    strategies = [("uncorrected", None),
                  (f"unitary_every{cfg['k']}", UnitaryEveryK(cfg["k"], cfg["gamma"])),
                  ("after_each_plus", UnitaryAfterEachPlus(cfg["gamma"]))]
    stats = []
    for _, strat in strategies:
        records = run_ensemble(rho0, n, cfg["z"], strat, seeds, ops, threads=threads)
        stats.append(ensemble_statistics(records))
    columns = ["n_measurements"] + [f"p_succ_{name}" for name, _ in strategies] \
        + [f"p_succ_{name}_stderr" for name, _ in strategies]
    rows = []
    for step in range(n + 1):
        rows.append(tuple([step] + [float(st.p_succ[step]) for st in stats]
                          + [float(st.p_succ_stderr[step]) for st in stats]))
    sidecar = {"n_seeds": len(seeds),
               "final_p_succ": {name: float(st.p_succ[-1])
                                for (name, _), st in zip(strategies, stats)}}
    return columns, rows, sidecar


def run_scaling(cfg: dict, threads: int):
    """Usable lifetime (measurements until p_succ crosses a threshold) as a
    function of l, with a log-log exponent fit per (z, threshold)."""
    combos = [(l, z, thr) for z in cfg["z_list"] for thr in cfg["thresholds"]
              for l in cfg["l_list"]]

    def one(combo):
        l, z, thr = combo
        ops = build_spin_operators(l)
        rho0 = coherent_state(l, cfg["theta"])
        try:
            life = usable_lifetime(rho0, z, ops, thr, None, step_cap=cfg["step_cap"])
        except LifetimeCapExceeded:
            life = cfg["step_cap"]
        return (l, z, thr, life)

    rows = _pool_map(one, combos, threads)
    fits = []
    for z in cfg["z_list"]:
        for thr in cfg["thresholds"]:
            pts = [(l, life) for (l, zz, tt, life) in rows if zz == z and tt == thr]
            fit = {"z": z, "threshold": thr,
                   "lifetimes": {str(l): life for l, life in pts}}
            if len(pts) >= 2:
                ls = np.log([p[0] for p in pts])
                ns = np.log([p[1] for p in pts])
                fit["exponent"] = float(np.polyfit(ls, ns, 1)[0])
            fits.append(fit)
    return ["l", "z", "threshold", "lifetime"], rows, {"fits": fits}


def _build_custom_state(cfg: dict, ops):
    state = dict(cfg["state"])
    family = state.pop("family", "coherent")
    l, theta = cfg["l"], cfg["theta"]
    try:
        if family == "coherent":
            _require(not state, f"unknown state keys {sorted(state)}")
            return coherent_state(l, theta)
        if family == "rotated_dicke":
            return rotated_dicke_state(l, state.pop("k"), theta)
        if family == "mixed_dicke":
            return mixed_dicke_state(l, state.pop("k1"), state.pop("k2"), state.pop("p"), theta)
        if family == "thermal":
            return thermal_partial_coherent(l, state.pop("r"), theta)
        if family == "quadratic_bloch":
            spec = QuadraticBlochSpec(np.asarray(state.pop("R"), dtype=float),
                                      np.asarray(state.pop("T"), dtype=float))
            return quadratic_bloch_state(l, spec)
    except KeyError as exc:
        raise ConfigError(f"state family {family!r} is missing parameter {exc}") from exc
    raise ConfigError(f"unknown state family {family!r}")


def _parse_strategy(spec: dict):
    spec = dict(spec)
    kind = spec.pop("kind", "none")
    if kind == "none":
        return None
    if kind == "alternating":
        return AlternatingAntipolarized()
    if kind == "unitary_every_k":
        return UnitaryEveryK(spec.pop("k", 2), spec.pop("gamma", PI))
    if kind == "unitary_after_each_plus":
        return UnitaryAfterEachPlus(spec.pop("gamma", PI))
    if kind == "conditional":
        return ConditionalTuned(spec.pop("theta_known", None))
    raise ConfigError(f"unknown strategy kind {kind!r}")


def run_custom(cfg: dict, threads: int):
    """Generic run: any state family, average or stochastic evolution."""
    ops = build_spin_operators(cfg["l"])
    rho0 = _build_custom_state(cfg, ops)
    l = cfg["l"]
    if cfg["mode"] == "average":
        schedule = schedule_measurements(cfg["n_steps"], cfg["z"])
        run = run_average(rho0, schedule, ops, record_every=cfg["record_every"])
        rows = [(int(step), s.mean_L[0] / l, s.mean_L[1] / l, s.mean_L[2] / l,
                 s.r, s.theta, float(p))
                for step, s, p in zip(run.step_indices, run.summaries, run.p_succ_series)]
        return ["step", "Lx_over_l", "Ly_over_l", "Lz_over_l", "r", "theta", "p_succ"], rows, {}
    if cfg["mode"] == "stochastic":
        seeds = resolve_seeds(cfg["seeds"])
        strat = _parse_strategy(cfg["strategy"])
        records = run_ensemble(rho0, cfg["n_measure"], cfg["z"], strat, seeds, ops,
                               threads=threads)
        st = ensemble_statistics(records)
        rows = [(step, float(st.theta[step]), float(st.theta_stderr[step]),
                 float(st.p_succ[step]), float(st.p_succ_stderr[step]))
                for step in range(len(st.p_succ))]
        sidecar = {"n_seeds": len(seeds),
                   "plus_fraction_mean": float(st.plus_fraction.mean())}
        return ["step", "theta_mean", "theta_stderr", "p_succ_mean", "p_succ_stderr"], rows, sidecar
    raise ConfigError(f"mode must be 'average' or 'stochastic', got {cfg['mode']!r}")


RUNNERS = {
    "fig1": run_fig1, "fig2": run_fig2, "fig3": run_fig3, "fig4": run_fig4,
    "fig5": run_fig5, "scaling": run_scaling, "custom": run_custom,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def config_hash(cfg: dict) -> str:
    payload = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(payload).hexdigest()


def write_outputs(out_path: str, experiment: str, cfg: dict, columns, rows, sidecar):
    seeds = resolve_seeds(cfg["seeds"]) if "seeds" in cfg else None
    comments = [
        f"# qrf-sim version: {__version__}",
        f"# experiment: {experiment}",
        f"# config-hash: sha256:{config_hash(cfg)}",
        f"# rng: {RNG_ALGORITHM}",
        f"# seeds: {','.join(map(str, seeds)) if seeds else 'none'}",
    ]
    with open(out_path, "w", newline="") as fh:
        for line in comments:
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    side_path = os.path.splitext(out_path)[0] + ".json"
    payload = {
        "experiment": experiment,
        "version": __version__,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "rng": RNG_ALGORITHM,
        "summary": sidecar,
    }
    with open(side_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return side_path


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrf-sim",
        description="Reference-frame dynamics experiments (CSV + JSON sidecar outputs)",
    )
    parser.add_argument("experiment", choices=sorted(DEFAULTS))
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", default=None, help="output CSV path (default <experiment>.csv)")
    parser.add_argument("--seeds", default=None, help="comma-separated seed list override")
    parser.add_argument("--gamma", type=float, default=None, help="kick-angle override (radians)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads (env QRF_SIM_THREADS overrides)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads
    if os.environ.get("QRF_SIM_THREADS"):
        try:
            threads = int(os.environ["QRF_SIM_THREADS"])
        except ValueError:
            print(f"config-error: QRF_SIM_THREADS must be an integer, "
                  f"got {os.environ['QRF_SIM_THREADS']!r}", file=sys.stderr)
            return 2
    overrides: dict = {}
    if args.seeds is not None:
        try:
            overrides["seeds"] = [int(s) for s in args.seeds.split(",") if s]
        except ValueError:
            print(f"config-error: --seeds must be comma-separated integers", file=sys.stderr)
            return 2
    if args.gamma is not None:
        overrides["gamma"] = args.gamma
        overrides["gammas"] = [args.gamma]
    try:
        cfg = load_config(args.experiment, args.config, overrides)
        columns, rows, sidecar = RUNNERS[args.experiment](cfg, max(1, threads))
        out = args.out or f"{args.experiment}.csv"
        side = write_outputs(out, args.experiment, cfg, columns, rows, sidecar)
    except ConfigError as exc:
        print(f"config-error: {exc}", file=sys.stderr)
        return 2
    except (NumericalInvariantError, DensityMatrixError) as exc:
        print(f"numerical-invariant: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out} and {side}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
